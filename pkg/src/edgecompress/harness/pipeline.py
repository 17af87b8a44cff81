"""Composable compression pipelines: profile, compress stage by stage, re-profile."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from edgecompress.data import Dataset, load_cifar10, synthetic
from edgecompress.errors import ConfigurationError, EdgeCompressError
from edgecompress.harness.report import CompressionReport, StageRecord
from edgecompress.model.convnext import ConvNeXtConfig, build_convnext
from edgecompress.model.ir import Model
from edgecompress.model.serialization import load
from edgecompress.profiler import ALL, FP32_ONLY, profile
from edgecompress.pruning.dependency import analyze_dependencies, partition_pzigs
from edgecompress.pruning.dhspg import DhspgConfig, DhspgTrainer
from edgecompress.pruning.extract import architecture_summary, extract_subnetwork, zero_groups
from edgecompress.pruning.unstructured import apply_masks, l1_mask, random_mask
from edgecompress.quantization.apply import quantize_model
from edgecompress.training import TrainConfig, fit

STAGE_TYPES = ("dhspg_prune", "extract", "l1_unstructured", "random_unstructured", "dynamic_quantize")


@dataclass
class DatasetSpec:
    source: str = "synthetic"  # or "cifar10"
    path: str | None = None
    train_size: int | None = 5000
    test_size: int | None = 1000
    seed: int = 0
    noise: float = 24.0

    def __post_init__(self):
        if self.source not in ("synthetic", "cifar10"):
            raise ConfigurationError(f"dataset source must be 'synthetic' or 'cifar10', got {self.source!r}")
        if self.source == "cifar10" and not self.path:
            raise ConfigurationError("a cifar10 dataset needs a path")

    def load(self) -> tuple[Dataset, Dataset]:
        if self.source == "synthetic":
            train = synthetic(self.train_size or 5000, seed=self.seed, noise=self.noise)
            test = synthetic(self.test_size or 1000, seed=self.seed + 1, split="test", noise=self.noise)
            return train, test
        train, test = load_cifar10(self.path)
        if self.train_size is not None:
            train = train.subset(self.train_size)
        if self.test_size is not None:
            test = test.subset(self.test_size)
        return train, test

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ModelSpec:
    config: dict = field(default_factory=lambda: {"preset": "micro"})
    path: str | None = None
    seed: int = 0
    train_epochs: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PipelineSpec:
    stages: list[dict]
    dataset: DatasetSpec | None = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    seed: int = 0
    eval_batch_size: int = 256
    convention: str = FP32_ONLY

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.stages:
            raise ConfigurationError("a pipeline needs at least one stage")
        pruned, quantized = False, False
        for i, st in enumerate(self.stages):
            kind = st.get("type")
            if kind not in STAGE_TYPES:
                raise ConfigurationError(f"stage {i}: unknown type {kind!r}; expected one of {STAGE_TYPES}")
            if kind == "dhspg_prune":
                pruned = True
            elif kind == "extract" and not pruned:
                raise ConfigurationError(f"stage {i}: extract must follow dhspg_prune")
            elif kind == "dynamic_quantize":
                if quantized:
                    raise ConfigurationError("dynamic_quantize may appear at most once")
                quantized = True
            if kind == "dhspg_prune" and quantized:
                raise ConfigurationError("dhspg_prune cannot run on a quantized model")
            if kind == "dhspg_prune" and self.dataset is None:
                raise ConfigurationError("dhspg_prune needs a dataset")

    def to_dict(self) -> dict:
        return {
            "stages": self.stages,
            "dataset": None if self.dataset is None else self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "seed": self.seed,
            "eval_batch_size": self.eval_batch_size,
            "convention": self.convention,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineSpec":
        ds = d.get("dataset", {})
        return cls(
            stages=[dict(s) for s in d["stages"]],
            dataset=None if ds is None else DatasetSpec(**ds),
            model=ModelSpec(**d.get("model", {})),
            seed=int(d.get("seed", 0)),
            eval_batch_size=int(d.get("eval_batch_size", 256)),
            convention=d.get("convention", FP32_ONLY),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"{path}: invalid pipeline spec ({exc})") from exc


def stage_label(stage: dict) -> str:
    kind = stage["type"]
    if kind == "dhspg_prune":
        return f"dhspg_prune({stage.get('target_group_sparsity', 0.4)})"
    if kind in ("l1_unstructured", "random_unstructured"):
        return f"{kind}({stage.get('frac_linear', 0.0)},{stage.get('frac_conv', 0.0)})"
    return kind


def build_model(spec: ModelSpec, train: Dataset | None) -> Model:
    if spec.path:
        return load(spec.path)
    model = build_convnext(ConvNeXtConfig.from_dict(spec.config), seed=spec.seed)
    if spec.train_epochs:
        if train is None:
            raise ConfigurationError("pre-training needs a dataset")
        fit(model, train, TrainConfig.from_defaults(epochs=spec.train_epochs, seed=spec.seed))
    return model


@dataclass
class PipelineResult:
    report: CompressionReport
    model: Model


class _Runner:
    def __init__(self, spec: PipelineSpec, train: Dataset | None, test: Dataset | None):
        self.spec, self.train, self.test = spec, train, test
        self.groups = None

    def profiles(self, model: Model):
        p = profile(model, self.test, convention=self.spec.convention, batch_size=self.spec.eval_batch_size)
        other = ALL if self.spec.convention == FP32_ONLY else FP32_ONLY
        return p, profile(model, None, convention=other, accuracy=p.accuracy_pct)

    def run_stage(self, model: Model, stage: dict) -> tuple[Model, dict]:
        kind = stage["type"]
        opts = {k: v for k, v in stage.items() if k != "type"}
        if kind == "dhspg_prune":
            cfg = DhspgConfig.from_defaults(**{"seed": self.spec.seed, **opts})
            self.groups = partition_pzigs(analyze_dependencies(model), model)
            trainer = DhspgTrainer(model, self.groups, cfg)
            out = trainer.run(self.train) if self.groups else model.copy()
            zero = len(zero_groups(out, self.groups))
            return out, {"groups": len(self.groups), "zero_groups": zero}
        if kind == "extract":
            out = extract_subnetwork(model, self.groups)
            widths = [r for r in architecture_summary(model, out) if r["before"] != r["after"]]
            return out, {"changed_widths": widths}
        if kind == "l1_unstructured":
            masks = l1_mask(model, opts.get("frac_linear", 0.0), opts.get("frac_conv", 0.0))
            return apply_masks(model, masks), {"masked": sum(masks.zeros().values())}
        if kind == "random_unstructured":
            seed = opts.get("seed", self.spec.seed)
            masks = random_mask(model, opts.get("frac_linear", 0.0), opts.get("frac_conv", 0.0), seed)
            return apply_masks(model, masks), {"masked": sum(masks.zeros().values())}
        if kind == "dynamic_quantize":
            return quantize_model(model), {}
        raise ConfigurationError(f"unknown stage {kind!r}")


def run_pipeline(
    spec: PipelineSpec, model: Model | None = None, train: Dataset | None = None, test: Dataset | None = None
) -> PipelineResult:
    """Run every stage on a working copy and profile after each one.

    A stage that raises stops the run; the report is returned with
    ``complete`` false and the error recorded.
    """
    if (train is None or test is None) and spec.dataset is not None:
        loaded = spec.dataset.load()
        train = train if train is not None else loaded[0]
        test = test if test is not None else loaded[1]
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    model = build_model(spec.model, train) if model is None else model
    working = model.copy()
    runner = _Runner(spec, train, test)
    before, before_all = runner.profiles(working)
    report = CompressionReport(before, before_all, [], spec.to_dict())
    report.timing = {"started": started, "setup_s": time.perf_counter() - t0, "stages_s": []}
    for stage in spec.stages:
        t = time.perf_counter()
        try:
            working, details = runner.run_stage(working, stage)
        except EdgeCompressError as exc:
            report.complete = False
            report.error = f"{stage_label(stage)}: {type(exc).__name__}: {exc}"
            report.timing["stages_s"].append(time.perf_counter() - t)
            break
        p, p_all = runner.profiles(working)
        report.stages.append(StageRecord(stage_label(stage), p, p_all, details))
        report.timing["stages_s"].append(time.perf_counter() - t)
    return PipelineResult(report, working)

