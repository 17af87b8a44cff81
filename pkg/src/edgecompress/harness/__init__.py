from edgecompress.harness.latency import measure_latency
from edgecompress.harness.pipeline import (
    STAGE_TYPES,
    DatasetSpec,
    ModelSpec,
    PipelineResult,
    PipelineSpec,
    run_pipeline,
)
from edgecompress.harness.report import CompressionReport, Reductions, compare, emit_report

__all__ = [
    "STAGE_TYPES",
    "CompressionReport",
    "DatasetSpec",
    "ModelSpec",
    "PipelineResult",
    "PipelineSpec",
    "Reductions",
    "compare",
    "emit_report",
    "measure_latency",
    "run_pipeline",
]
