import csv
import io
import json

import numpy as np
import pytest

from edgecompress.errors import ConfigurationError, InputError, UsageError
from edgecompress.harness import (
    CompressionReport,
    DatasetSpec,
    PipelineSpec,
    compare,
    emit_report,
    measure_latency,
    run_pipeline,
)
from edgecompress.model import build_convnext, preset
from edgecompress.profiler import Profile

from factories import tiny_convnext

SMALL_DATA = {"train_size": 256, "test_size": 200, "seed": 3}
PRUNE = {"type": "dhspg_prune", "target_group_sparsity": 0.4, "epochs": 1, "batch_size": 32, "saliency": "l2_normalized"}


def _profile(size_bytes, params_m=1.0, macs_m=1.0, acc=50.0):
    return Profile(acc, size_bytes, params_m, macs_m, params_m)


# ------------------------------------------------------------------ compare
def test_compare_size_example():
    r = compare(_profile(188_890_000), _profile(19_390_000))
    # exact arithmetic on two-decimal sizes; the reference 89.74 was rounded from unrounded sizes
    assert r.size_pct == pytest.approx(100 * (1 - 19.39 / 188.89), rel=1e-12)
    assert abs(r.size_pct - 89.74) <= 0.01


def test_compare_params_example():
    r = compare(_profile(1, params_m=47.16), _profile(1, params_m=2.15))
    assert round(r.params_pct, 2) == 95.44


def test_compare_identical_is_zero():
    p = _profile(100, 2.0, 3.0)
    r = compare(p, p)
    assert (r.size_pct, r.params_pct, r.macs_pct, r.accuracy_delta_points) == (0.0, 0.0, 0.0, 0.0)


def test_compare_accuracy_in_points_and_missing():
    assert compare(_profile(1, acc=90.0), _profile(1, acc=88.5)).accuracy_delta_points == -1.5
    assert compare(_profile(1, acc=None), _profile(1, acc=88.5)).accuracy_delta_points is None


# --------------------------------------------------------------------- spec
@pytest.mark.parametrize(
    "stages",
    [
        [],
        [{"type": "extract"}],
        [{"type": "dynamic_quantize"}, {"type": "dynamic_quantize"}],
        [{"type": "dynamic_quantize"}, PRUNE],
        [{"type": "prune_everything"}],
    ],
)
def test_invalid_specs(stages):
    with pytest.raises(ConfigurationError):
        PipelineSpec(stages)


def test_spec_file_roundtrip(tmp_path):
    spec = PipelineSpec([PRUNE, {"type": "extract"}], dataset=DatasetSpec(**SMALL_DATA))
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert PipelineSpec.from_file(path).to_dict() == spec.to_dict()
    path.write_text("{not json")
    with pytest.raises(ConfigurationError):
        PipelineSpec.from_file(path)


def test_cifar_spec_needs_path():
    with pytest.raises(ConfigurationError):
        DatasetSpec("cifar10")


# ------------------------------------------------------------------ running
@pytest.fixture(scope="module")
def full_run():
    spec = PipelineSpec([PRUNE, {"type": "extract"}, {"type": "dynamic_quantize"}], dataset=DatasetSpec(**SMALL_DATA))
    return spec, run_pipeline(spec)


def test_three_stage_pipeline(full_run):
    _, result = full_run
    rep = result.report
    assert rep.complete and [s.name for s in rep.stages] == ["dhspg_prune(0.4)", "extract", "dynamic_quantize"]
    pruned, extracted, quantized = (s.profile for s in rep.stages)
    assert extracted.size_bytes < pruned.size_bytes and quantized.size_bytes < extracted.size_bytes
    assert abs(extracted.accuracy_pct - pruned.accuracy_pct) <= 1e-6
    assert rep.stages[0].details["zero_groups"] == int(np.ceil(0.4 * rep.stages[0].details["groups"]))
    assert pruned.nonzero_params_m < pruned.params_m
    # the "all" convention rides along with the fp32_only profiles
    assert rep.stages[2].profile_all.params_m == pytest.approx(extracted.params_m)


def test_report_is_deterministic(full_run):
    spec, result = full_run
    again = run_pipeline(spec)
    assert again.report.to_json(include_timing=False) == result.report.to_json(include_timing=False)
    assert "timing" in json.loads(result.report.to_json())


def test_json_roundtrip_is_byte_identical(full_run):
    text = emit_report(full_run[1].report, "json")
    assert CompressionReport.from_json(text).to_json() == text


def test_embedded_reductions_recompute(full_run):
    d = json.loads(emit_report(full_run[1].report, "json"))
    before, after = Profile.from_dict(d["profile_before"]), Profile.from_dict(d["profile_after"])
    assert compare(before, after).to_dict() == d["reductions"]
    for s in d["stages"]:
        assert compare(before, Profile.from_dict(s["profile"])).to_dict() == s["reductions_vs_before"]


def test_csv_one_row_per_stage(full_run):
    rows = list(csv.DictReader(io.StringIO(emit_report(full_run[1].report, "csv"))))
    assert [r["stage"] for r in rows] == ["dhspg_prune(0.4)", "extract", "dynamic_quantize"]
    before = full_run[1].report.profile_before
    assert float(rows[-1]["size_pct"]) == pytest.approx(100 * (1 - int(rows[-1]["size_bytes"]) / before.size_bytes))


def test_markdown_rows_for_two_stage_run():
    spec = PipelineSpec(
        [{"type": "l1_unstructured", "frac_linear": 0.3, "frac_conv": 0.3}, {"type": "dynamic_quantize"}], dataset=None
    )
    rep = run_pipeline(spec, model=tiny_convnext()).report
    md = emit_report(rep, "markdown")
    profile_rows = [ln for ln in md.splitlines() if ln.startswith(("| Full", "| l1_", "| dynamic_"))]
    assert len(profile_rows) == 3
    assert profile_rows[0].startswith("| Full |")
    assert f"{rep.reductions.size_pct:.2f}%" in md


def test_empty_effect_pipeline(tmp_path):
    spec = PipelineSpec([{"type": "l1_unstructured", "frac_linear": 0.0, "frac_conv": 0.0}], dataset=None)
    rep = run_pipeline(spec, model=tiny_convnext()).report
    assert rep.profile_after == rep.profile_before
    out = tmp_path / "r.md"
    emit_report(rep, "markdown", out)
    assert out.read_text().startswith("Counting convention")


def test_failed_stage_gives_incomplete_report():
    spec = PipelineSpec([{"type": "dynamic_quantize"}, {"type": "l1_unstructured", "frac_linear": 2.0}], dataset=None)
    rep = run_pipeline(spec, model=tiny_convnext()).report
    assert not rep.complete and len(rep.stages) == 1 and "InputError" in rep.error
    assert "INCOMPLETE" in emit_report(rep, "markdown")


def test_original_model_untouched():
    m = tiny_convnext()
    before = {k: t.data.copy() for k, t in m.params.items()}
    run_pipeline(PipelineSpec([{"type": "l1_unstructured", "frac_linear": 0.9, "frac_conv": 0.9}], dataset=None), model=m)
    assert all(np.array_equal(before[k], m.params[k].data) for k in before)


def test_bad_report_format():
    rep = run_pipeline(PipelineSpec([{"type": "dynamic_quantize"}], dataset=None), model=tiny_convnext()).report
    with pytest.raises(InputError):
        emit_report(rep, "xml")


# ------------------------------------------------------------------ latency
def test_latency_report_shape():
    out = measure_latency(build_convnext(preset("micro")), None, warmup_iters=1, timed_iters=3)
    assert set(out) == {"mean_ms", "p50_ms", "p95_ms", "iters"} and out["iters"] == 3
    assert 0 < out["p50_ms"] <= out["p95_ms"]


def test_latency_needs_iterations():
    with pytest.raises(UsageError):
        measure_latency(tiny_convnext(), timed_iters=0)
