"""Command-line entry point: ``edgecompress <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or model-file
error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from edgecompress.data import Dataset
from edgecompress.errors import (
    ConfigurationError,
    DataError,
    InputError,
    ModelLoadError,
    UsageError,
)
from edgecompress.harness import PipelineSpec, compare, emit_report, measure_latency, run_pipeline
from edgecompress.harness.pipeline import DatasetSpec, ModelSpec
from edgecompress.model import ConvNeXtConfig, build_convnext, load, preset, save
from edgecompress.profiler import CONVENTIONS, FP32_ONLY, Profile, evaluate, profile
from edgecompress.pruning.unstructured import frac_range, sweep
from edgecompress.training import TrainConfig, fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _data_spec(value: str | None, train_size=None, test_size=None) -> DatasetSpec | None:
    """``DIR`` for CIFAR-10 binaries, or ``synthetic[:TRAIN[:TEST]]``."""
    if value is None:
        return None
    if value.startswith("synthetic"):
        parts = value.split(":")
        try:
            n_train = int(parts[1]) if len(parts) > 1 else 5000
            n_test = int(parts[2]) if len(parts) > 2 else 1000
        except ValueError as exc:
            raise UsageError(f"bad synthetic spec {value!r}") from exc
        return DatasetSpec("synthetic", train_size=n_train, test_size=n_test)
    return DatasetSpec("cifar10", path=value, train_size=train_size, test_size=test_size)


def _datasets(value: str | None) -> tuple[Dataset | None, Dataset | None]:
    spec = _data_spec(value)
    return (None, None) if spec is None else spec.load()


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"expected LINEAR,CONV fractions, got {text!r}") from exc
    return a, b


def _write(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ------------------------------------------------------------------ commands
def cmd_train(args) -> int:
    if args.config:
        cfg = ConvNeXtConfig.from_file(args.config)
    else:
        cfg = preset(args.preset)
    train, test = _datasets(args.data)
    model = build_convnext(cfg, seed=args.seed)
    tc = TrainConfig.from_defaults(epochs=args.epochs, seed=args.seed)
    if args.batch_size:
        tc.batch_size = args.batch_size
    if args.lr:
        tc.lr = args.lr
    hist = fit(model, train, tc)
    n = save(model, args.out)
    acc = evaluate(model, test)
    print(json.dumps({"out": args.out, "bytes": n, "steps": hist.steps, "test_accuracy_pct": round(acc, 2)}))
    return EXIT_OK


def cmd_profile(args) -> int:
    model = load(args.model)
    _, test = _datasets(args.data)
    p = profile(model, test, convention=args.convention)
    _write(p.to_json(), args.json)
    return EXIT_OK


def cmd_compress(args) -> int:
    if args.pipeline:
        spec = PipelineSpec.from_file(args.pipeline)
        if args.data:
            spec.dataset = _data_spec(args.data)
    else:
        stages = []
        if args.oto_target is not None:
            stages.append(
                {
                    "type": "dhspg_prune",
                    "target_group_sparsity": args.oto_target,
                    "epochs": args.oto_epochs,
                    "saliency": args.saliency,
                }
            )
            stages.append({"type": "extract"})
        if args.l1:
            fl, fc = _pair(args.l1)
            stages.append({"type": "l1_unstructured", "frac_linear": fl, "frac_conv": fc})
        if args.random:
            fl, fc = _pair(args.random)
            stages.append({"type": "random_unstructured", "frac_linear": fl, "frac_conv": fc, "seed": args.seed})
        if args.quantize:
            stages.append({"type": "dynamic_quantize"})
        if not stages:
            raise UsageError("give --pipeline or at least one of --oto-target, --l1, --random, --quantize")
        spec = PipelineSpec(stages, dataset=_data_spec(args.data), model=ModelSpec(path=args.model), seed=args.seed)
    result = run_pipeline(spec, model=load(args.model))
    if args.out:
        save(result.model, args.out)
    text = emit_report(result.report, args.format, args.report)
    if not args.report:
        _write(text, None)
    return EXIT_OK if result.report.complete else EXIT_INTERNAL


def cmd_sweep(args) -> int:
    model = load(args.model)
    _, test = _datasets(args.data)
    try:
        start, stop, step = (float(v) for v in args.fracs.split(":"))
    except ValueError as exc:
        raise UsageError(f"--fracs expects START:STOP:STEP, got {args.fracs!r}") from exc
    fracs = frac_range(start, stop, step)
    result = sweep(model, test, fracs, fracs, method=args.method, seed=args.seed, convention=args.convention)
    text = result.to_json() if args.out and args.out.endswith(".json") else result.to_csv()
    _write(text, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load(args.model)
    _, test = _datasets(args.data)
    print(f"{evaluate(model, test):.2f}")
    return EXIT_OK


def cmd_latency(args) -> int:
    model = load(args.model)
    print(json.dumps(measure_latency(model, None, args.warmup, args.iters), sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        before = Profile.from_json(Path(args.before).read_text())
        after = Profile.from_json(Path(args.after).read_text())
    except OSError as exc:
        raise DataError(str(exc)) from exc
    except (KeyError, ValueError) as exc:
        raise InputError(f"not a profile JSON: {exc}") from exc
    print(json.dumps(compare(before, after).to_dict(), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="edgecompress", description="Profile and compress ConvNeXt image classifiers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model from scratch")
    t.add_argument("--config", help="ConvNeXtConfig JSON file")
    t.add_argument("--preset", default="micro")
    t.add_argument("--data", required=True, help="CIFAR-10 binary directory or synthetic[:TRAIN[:TEST]]")
    t.add_argument("--epochs", type=int, default=1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("profile", help="print the five metrics of a model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data")
    pr.add_argument("--convention", choices=CONVENTIONS, default=FP32_ONLY)
    pr.add_argument("--json", help="write the profile here instead of stdout")
    pr.set_defaults(func=cmd_profile)

    c = sub.add_parser("compress", help="run a compression pipeline")
    c.add_argument("--model", required=True)
    c.add_argument("--pipeline", help="PipelineSpec JSON file")
    c.add_argument("--data")
    c.add_argument("--oto-target", type=float)
    c.add_argument("--oto-epochs", type=int, default=1)
    c.add_argument("--saliency", default="l2", choices=("l2", "l2_normalized"))
    c.add_argument("--l1")
    c.add_argument("--random")
    c.add_argument("--quantize", action="store_true")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.add_argument("--report")
    c.add_argument("--format", choices=("json", "markdown", "csv"), default="json")
    c.set_defaults(func=cmd_compress)

    s = sub.add_parser("sweep", help="unstructured pruning grid")
    s.add_argument("--model", required=True)
    s.add_argument("--method", choices=("l1", "random"), default="l1")
    s.add_argument("--fracs", default="0.1:0.9:0.1")
    s.add_argument("--data")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--convention", choices=CONVENTIONS, default=FP32_ONLY)
    s.add_argument("--out", help=".csv or .json")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("eval", help="top-1 test accuracy")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=cmd_eval)

    lt = sub.add_parser("latency", help="single-image forward latency")
    lt.add_argument("--model", required=True)
    lt.add_argument("--warmup", type=int, default=10)
    lt.add_argument("--iters", type=int, default=100)
    lt.set_defaults(func=cmd_latency)

    cp = sub.add_parser("compare", help="reductions between two profile JSON files")
    cp.add_argument("--before", required=True)
    cp.add_argument("--after", required=True)
    cp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelLoadError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - anything else is a broken invariant
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
