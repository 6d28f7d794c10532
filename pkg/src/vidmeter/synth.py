"""Seeded synthetic benchmark data for smoke tests, benchmarks and demos."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import RankedRun, RunEntry, serialize_judgments, serialize_run
from .pooling import PoolPlan, build_pool, judgments_from_sample, sample_pool


@dataclass(frozen=True)
class AdhocDataset:
    runs: list
    judgments: object  # StratifiedJudgments
    relevant: dict  # topic -> set of truly relevant shots


def generate_adhoc(n_runs=47, n_topics=30, depth=1000, universe=20000, n_relevant=150,
                   candidates=3000, strata=((1, 250, 1.0), (251, 1000, 0.111)), seed=0,
                   runs_per_team=4):
    """Runs of varying quality over a shared shot universe, pooled and sample-judged."""
    rng = np.random.default_rng(seed)
    topics = [str(9000 + t) for t in range(n_topics)]
    shot_ids = np.array([f"shot{i:06d}" for i in range(universe)])
    relevant = {}
    rel_mask = {}
    rel_idx = {}
    for t in topics:
        idx = rng.choice(universe, size=n_relevant, replace=False)
        mask = np.zeros(universe, dtype=bool)
        mask[idx] = True
        rel_mask[t] = mask
        rel_idx[t] = idx
        relevant[t] = set(shot_ids[idx])
    quality = rng.uniform(0.5, 3.0, size=n_runs)
    runs = []
    for r in range(n_runs):
        team = f"team{r // runs_per_team:02d}"
        tag = f"{team}.run{r % runs_per_team + 1}"
        entries, elapsed = {}, {}
        for t in topics:
            # every run sees the relevant shots among its candidates; quality decides their ranks
            others = np.flatnonzero(~rel_mask[t])
            cand = np.concatenate([rel_idx[t], rng.choice(others, size=candidates - n_relevant, replace=False)])
            score = quality[r] * rel_mask[t][cand] + rng.gumbel(size=candidates)
            top = np.argsort(-score, kind="stable")[:depth]
            ranked = cand[top]
            scores = np.round(score[top] + 10.0, 6)
            entries[t] = tuple(RunEntry(str(shot_ids[s]), k + 1, float(v))
                               for k, (s, v) in enumerate(zip(ranked, scores)))
            elapsed[t] = float(np.round(rng.uniform(5, 300), 2))
        runs.append(RankedRun(tag, "adhoc", entries, training_type="D",
                              novelty_flag=(r % runs_per_team == 0 and r % 3 == 0),
                              elapsed_seconds=elapsed, team=team))
    plan = PoolPlan(strata, seed)
    pool = build_pool(runs, plan)
    judgments = judgments_from_sample(pool, sample_pool(pool), lambda t, s: s in relevant[t])
    return AdhocDataset(runs, judgments, relevant)


def write_adhoc(dataset, directory):
    """Write runs, qrels and run metadata in the toolkit's file formats."""
    directory = Path(directory)
    (directory / "runs").mkdir(parents=True, exist_ok=True)
    meta = {}
    for run in dataset.runs:
        (directory / "runs" / f"{run.run_tag}.txt").write_bytes(serialize_run(run))
        meta[run.run_tag] = {"team": run.team, "training_type": run.training_type,
                             "novelty": run.novelty_flag, "elapsed_seconds": run.elapsed_seconds}
    (directory / "qrels.txt").write_bytes(serialize_judgments(dataset.judgments))
    (directory / "run_meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return directory
