import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edgecompress.data import synthetic  # noqa: E402
from edgecompress.model import build_convnext, preset  # noqa: E402
from edgecompress.training import TrainConfig, fit  # noqa: E402


@pytest.fixture(scope="session")
def synthetic_split():
    return synthetic(2000, seed=11), synthetic(1000, seed=12, split="test")


@pytest.fixture(scope="session")
def trained_micro(synthetic_split):
    """Micro after two epochs on 2,000 synthetic images (about 15 s on one core)."""
    train, _ = synthetic_split
    model = build_convnext(preset("micro"), seed=0)
    fit(model, train, TrainConfig.from_defaults(epochs=2, seed=0))
    return model


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
