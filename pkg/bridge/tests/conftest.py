"""Shared fixture: one toy training run reused across the suite."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import pytest
from toybridge import to_examples, toy_chains, toy_config

from chainbridge.train import TrainResult, train


@dataclass(frozen=True)
class ToyRun:
    """A finished toy training run plus how long it took."""

    result: TrainResult
    elapsed: float

    @property
    def checkpoint_dir(self) -> Path:
        return self.result.checkpoint_dir


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory) -> ToyRun:
    """Train the standard toy model once for the whole session."""
    out_dir = tmp_path_factory.mktemp("toy") / "ckpt"
    start = time.monotonic()
    result = train(
        to_examples(toy_chains(200, seed=13)),
        to_examples(toy_chains(60, seed=14)),
        toy_config(),
        out_dir,
    )
    return ToyRun(result=result, elapsed=time.monotonic() - start)
