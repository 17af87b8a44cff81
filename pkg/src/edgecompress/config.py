"""Package defaults, loaded from ``defaults.json``."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def defaults() -> dict:
    text = resources.files("edgecompress").joinpath("defaults.json").read_text()
    return json.loads(text)
