from __future__ import annotations

import numpy as np
import pytest

from htm_ear.ann_index import FlatIndex
from htm_ear.memory_tiers import Fact, SystemConfig, TieredMemory
from htm_ear.workload import extract_entities


def unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def make_fact(seq: int, importance: float = 0.5, text: str | None = None) -> Fact:
    text = text or f"item ent-{seq:06d} stored"
    return Fact(f"f{seq}", text, extract_entities(text), importance, seq)


def flat_factory(name, dim, seed):
    return FlatIndex(dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_memory():
    def build(l1=2, l2=2, fraction=0.5, mode="full", index="flat"):
        cfg = SystemConfig(mode=mode, l1_capacity=l1, l2_capacity=l2, evict_fraction=fraction, index=index)
        return TieredMemory(cfg)
    return build


# Acceptance tests append "criterion N: PASS|FAIL|SKIP ..." lines here; they are
# echoed in the terminal summary so a plain `pytest -v` run shows them.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
