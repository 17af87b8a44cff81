"""The .cxm model file.

Layout (little-endian)::

    b"CXM1"                    magic + format version digit
    uint64                     header length in bytes
    header                     compact JSON: metadata, nodes, tensor table, payload sha256
    payload                    raw tensors in table order (float32 or int8)

Quantized tensors carry their scale and zero point in the tensor table.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from edgecompress.engine import Tensor
from edgecompress.errors import ChecksumError, FormatError, TruncatedFileError, VersionMismatchError
from edgecompress.model.ir import LayerNode, Model
from edgecompress.quantization.kernels import QuantizedTensor

MAGIC = b"CXM"
VERSION = b"1"
_PREFIX = struct.Struct("<4sQ")
_DIGEST_LEN = 64


def _tensor_table(model: Model) -> list[dict]:
    table = []
    for name in model.param_names():
        if name in model.params:
            table.append({"name": name, "dtype": "float32", "shape": list(model.params[name].shape)})
        else:
            q = model.quantized_params[name]
            table.append(
                {"name": name, "dtype": "int8", "shape": list(q.shape), "scale": q.scale, "zero_point": q.zero_point}
            )
    return table


def _header_bytes(model: Model, digest: str) -> bytes:
    header = {
        "metadata": model.metadata,
        "nodes": [n.to_dict() for n in model.nodes],
        "tensors": _tensor_table(model),
        "payload_sha256": digest,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _payload_chunks(model: Model):
    for name in model.param_names():
        if name in model.params:
            yield model.params[name].data.astype("<f4", copy=False).tobytes()
        else:
            yield model.quantized_params[name].values.astype(np.int8, copy=False).tobytes()


def _payload_size(model: Model) -> int:
    total = 0
    for name in model.param_names():
        if name in model.params:
            total += 4 * model.params[name].numel
        else:
            total += model.quantized_params[name].numel
    return total


def serialized_size(model: Model) -> int:
    """Exact byte length of ``to_bytes(model)`` without materializing the payload."""
    return _PREFIX.size + len(_header_bytes(model, "0" * _DIGEST_LEN)) + _payload_size(model)


def to_bytes(model: Model) -> bytes:
    digest = hashlib.sha256()
    chunks = list(_payload_chunks(model))
    for c in chunks:
        digest.update(c)
    header = _header_bytes(model, digest.hexdigest())
    return b"".join([_PREFIX.pack(MAGIC + VERSION, len(header)), header, *chunks])


def save(model: Model, path: str | Path) -> int:
    """Write ``model`` to ``path``; returns the number of bytes written."""
    data = to_bytes(model)
    Path(path).write_bytes(data)
    return len(data)


def from_bytes(data: bytes, source: str = "<bytes>") -> Model:
    if len(data) < _PREFIX.size:
        if data[:3] not in (MAGIC, MAGIC[: len(data)]):
            raise FormatError(f"{source}: not a .cxm file")
        raise TruncatedFileError(f"{source}: file ends inside the prefix")
    magic, header_len = _PREFIX.unpack_from(data)
    if magic[:3] != MAGIC:
        raise FormatError(f"{source}: not a .cxm file (magic {magic!r})")
    if magic[3:] != VERSION:
        raise VersionMismatchError(f"{source}: format version {magic[3:]!r}, this reader supports {VERSION!r}")
    start = _PREFIX.size
    if len(data) < start + header_len:
        raise TruncatedFileError(f"{source}: file ends inside the header")
    try:
        header = json.loads(data[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{source}: malformed header ({exc})") from None

    payload = memoryview(data)[start + header_len :]
    expected = 0
    for entry in header["tensors"]:
        expected += int(np.prod(entry["shape"], dtype=np.int64)) * (4 if entry["dtype"] == "float32" else 1)
    if len(payload) < expected:
        raise TruncatedFileError(f"{source}: payload has {len(payload)} bytes, header declares {expected}")
    if len(payload) > expected:
        raise FormatError(f"{source}: {len(payload) - expected} trailing bytes after the payload")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise ChecksumError(f"{source}: payload checksum mismatch")

    params, quantized, offset = {}, {}, 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        if entry["dtype"] == "float32":
            arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(shape)
            params[entry["name"]] = Tensor(arr.astype(np.float32))
            offset += 4 * count
        elif entry["dtype"] == "int8":
            arr = np.frombuffer(payload, dtype=np.int8, count=count, offset=offset).reshape(shape)
            quantized[entry["name"]] = QuantizedTensor(arr.copy(), float(entry["scale"]), int(entry["zero_point"]))
            offset += count
        else:
            raise FormatError(f"{source}: unknown dtype {entry['dtype']!r}")
    model = Model(
        nodes=[LayerNode.from_dict(d) for d in header["nodes"]],
        params=params,
        quantized_params=quantized,
        metadata=header["metadata"],
    )
    return model


def load(path: str | Path) -> Model:
    path = Path(path)
    return from_bytes(path.read_bytes(), str(path))
