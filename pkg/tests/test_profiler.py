import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgecompress.data import Dataset
from edgecompress.engine import Tensor
from edgecompress.errors import InputError, InternalError
from edgecompress.model import build_convnext, preset, save
from edgecompress.profiler import (
    ALL,
    FP32_ONLY,
    Profile,
    count_macs,
    count_nonzero,
    count_params,
    evaluate,
    model_size_bytes,
    profile,
)
from edgecompress.pruning import apply_masks, l1_mask
from edgecompress.quantization import quantize_model

from factories import conv_model, linear_only_model, randomize_biases, random_micro_config, tiny_convnext
from oracles import closed_form_macs, naive_conv2d, naive_graph_macs


def test_linear_4_to_3_has_15_params():
    m = linear_only_model(4, 3)
    assert count_params(m, ALL) == 15 == count_params(m, FP32_ONLY)


def test_conv_example_864_matches_loop_counter():
    counter = {}
    x = np.ones((1, 2, 4, 4))
    naive_conv2d(x, np.ones((3, 2, 3, 3)), stride=1, padding=1, counter=counter)
    m = conv_model(2, 4, 4, 3, 3, 1, 1, 1)
    linear_part = 3 * 3 * 16
    assert counter["mults"] == 864
    assert count_macs(m, (1, 2, 4, 4)) - linear_part == 864


@settings(max_examples=12, deadline=None)
@given(
    st.integers(1, 3),
    st.integers(4, 8),
    st.integers(1, 3),
    st.sampled_from([1, 2, 3]),
    st.integers(1, 2),
    st.integers(0, 1),
    st.booleans(),
)
def test_macs_equal_instrumented_oracle(c, h, mult, k, stride, pad, depthwise):
    groups = c if depthwise else 1
    o = c * mult if depthwise else mult + 1
    m = conv_model(c, h, h + 1, o, k, stride, pad, groups)
    x = np.random.default_rng(0).normal(size=(2, c, h, h + 1))
    _, mults = naive_graph_macs(m, x)
    assert count_macs(m, x.shape) == mults


def test_tiny_convnext_macs_equal_instrumented_oracle():
    m = tiny_convnext(widths=(2, 2, 4, 4))
    x = np.random.default_rng(0).normal(size=(1, 3, 32, 32))
    _, mults = naive_graph_macs(m, x)
    assert count_macs(m) == mults


@pytest.mark.parametrize("name", ["micro", "tiny", "small", "base", "large"])
def test_preset_macs_closed_form(name):
    cfg = preset(name)
    m = build_convnext(cfg, init=False)
    assert count_macs(m) == closed_form_macs(cfg.depths, cfg.widths, cfg.num_classes)


def test_macs_scale_with_batch():
    m = tiny_convnext()
    assert count_macs(m, (5, 3, 32, 32)) == 5 * count_macs(m, (1, 3, 32, 32))


def test_unknown_kind_fails_loud():
    m = tiny_convnext()
    m.nodes[3].kind = "Mystery"
    with pytest.raises(InternalError):
        count_macs(m)


def test_bad_convention():
    with pytest.raises(InputError):
        count_params(tiny_convnext(), "most")


def test_quantized_conventions_and_conservation():
    m = build_convnext(preset("micro"))
    q = quantize_model(m)
    int8 = sum(t.numel for t in q.quantized_params.values())
    assert count_params(q, FP32_ONLY) + int8 == count_params(q, ALL) == count_params(m, ALL)
    assert count_params(q, FP32_ONLY) < count_params(q, ALL)
    assert count_macs(q, convention=FP32_ONLY) < count_macs(q, convention=ALL) == count_macs(m)
    linear_macs = sum(64 // 4**s * 8 * w * w * d for s, (d, w) in enumerate(zip((1, 1, 3, 1), (24, 48, 96, 192)))) + 192 * 10
    assert count_macs(q, convention=FP32_ONLY) == count_macs(m) - linear_macs


def test_size_equals_saved_file(tmp_path):
    for m in (tiny_convnext(), quantize_model(tiny_convnext(seed=1))):
        path = tmp_path / "m.cxm"
        assert model_size_bytes(m) == save(m, path) == path.stat().st_size


def test_size_is_four_bytes_per_float_plus_header():
    m = build_convnext(preset("micro"))
    q = quantize_model(m)
    header_m = model_size_bytes(m) - 4 * count_params(m)
    header_q = model_size_bytes(q) - 4 * count_params(q, FP32_ONLY) - sum(t.numel for t in q.quantized_params.values())
    assert 0 < header_m < 20_000 and 0 < header_q < 20_000


def test_nonzero_counts():
    m = build_convnext(preset("micro"))
    # biases and LayerNorm shifts start at exactly zero, every other tensor is drawn at random
    zero_init = sum(t.numel for k, t in m.params.items() if k.endswith(".bias"))
    assert count_nonzero(m) == count_params(m) - zero_init
    randomize_biases(m, np.random.default_rng(0))
    assert count_nonzero(m) == count_params(m)


def test_nonzero_after_30pct_mask_of_ten_weights():
    m = linear_only_model(10, 1, np.arange(1, 11).reshape(1, 10), [0.5])
    masked = apply_masks(m, l1_mask(m, 0.3, 0.0))
    assert count_nonzero(masked) - 1 == 7


def test_evaluate_constant_model_ties_go_to_class_zero():
    m = linear_only_model(4, 10)  # all-zero weights: every logit ties
    labels = (np.arange(100) % 10).astype(np.uint8)
    ds = Dataset(np.zeros((100, 3, 32, 32), np.uint8), labels)
    m.metadata["input_shape"] = [3, 32, 32]
    m.nodes[1].attrs["in_features"] = 3 * 32 * 32
    m.params["fc.weight"] = Tensor(np.zeros((10, 3072)))
    assert evaluate(m, ds, batch_size=7) == 10.0


def test_evaluate_lookup_model_is_perfect():
    # one-hot images routed through an identity classifier
    imgs = np.zeros((10, 3, 32, 32), np.uint8)
    for i in range(10):
        imgs[i, 0, 0, i] = 255
    m = linear_only_model(3072, 10)
    m.metadata["input_shape"] = [3, 32, 32]
    w = np.zeros((10, 3072), np.float32)
    w[np.arange(10), np.arange(10)] = 1.0
    m.params["fc.weight"] = Tensor(w)
    ds = Dataset(imgs, np.arange(10, dtype=np.uint8))
    assert evaluate(m, ds, batch_size=3) == 100.0


def test_evaluate_empty_dataset():
    with pytest.raises(InputError):
        evaluate(tiny_convnext(), Dataset(np.zeros((0, 3, 32, 32), np.uint8), np.zeros(0, np.uint8)))


def test_trained_micro_beats_half(trained_micro, synthetic_split):
    assert evaluate(trained_micro, synthetic_split[1]) > 50.0


def test_profile_roundtrip_and_invariants(trained_micro, synthetic_split):
    p = profile(trained_micro, synthetic_split[1])
    assert p.nonzero_params_m <= p.params_m and min(p.size_bytes, p.params_m, p.macs_m) > 0
    assert Profile.from_json(p.to_json()) == p
    assert sorted(json.loads(p.to_json())) == sorted(
        ["accuracy_pct", "size_bytes", "params_m", "macs_m", "nonzero_params_m", "counting_convention"]
    )
    assert profile(trained_micro).accuracy_pct is None


def test_profile_unchanged_by_masking_except_accuracy_and_nonzero():
    m = randomize_biases(build_convnext(preset("micro")), np.random.default_rng(0))
    a = profile(m)
    b = profile(apply_masks(m, l1_mask(m, 0.5, 0.5)))
    assert (a.size_bytes, a.params_m, a.macs_m) == (b.size_bytes, b.params_m, b.macs_m)
    assert b.nonzero_params_m < a.nonzero_params_m


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_fp32_only_never_exceeds_all(seed):
    m = build_convnext(random_micro_config(np.random.default_rng(seed)), init=False)
    q = quantize_model(m)
    for model in (m, q):
        assert count_params(model, FP32_ONLY) <= count_params(model, ALL)
        assert count_macs(model, convention=FP32_ONLY) <= count_macs(model, convention=ALL)
        assert count_nonzero(model, FP32_ONLY) <= count_params(model, FP32_ONLY)
