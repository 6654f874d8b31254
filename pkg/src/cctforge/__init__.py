"""Code-change pre-training pipeline: corpus handling, five pre-training
tasks, a small encoder-decoder, downstream harnesses and metrics."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def fixture_path() -> Path:
    """Path of the bundled 300-record commit corpus."""
    return Path(str(resources.files(__package__) / "data" / "fixture_300.jsonl"))
