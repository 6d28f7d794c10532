"""Shared builders for small hand-made runs and judgments."""

import pytest

from vidmeter.io import (
    RankedRun,
    RunEntry,
    StratifiedJudgments,
    Stratum,
    TopicJudgments,
)


def make_run(tag, topics, team=None, novelty=False, task="adhoc"):
    """``topics`` maps topic id -> ranked shot ids; scores descend with rank."""
    entries = {
        t: tuple(RunEntry(s, k, float(len(shots) - k + 1)) for k, s in enumerate(shots, start=1))
        for t, shots in topics.items()
    }
    return RankedRun(tag, task, entries, novelty_flag=novelty, team=team)


def full_judgments(topics, hi=1000):
    """Fully judged single-stratum qrels; ``topics`` maps topic -> (judged shots, relevant set)."""
    out = {}
    for t, (shots, rel) in topics.items():
        judged = {s: ("1", 1 if s in rel else 0) for s in shots}
        out[t] = TopicJudgments((Stratum("1", 1, hi, len(judged), len(judged)),), judged)
    return StratifiedJudgments(out)


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
