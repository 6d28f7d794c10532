"""Judgment pools: stratified pooling, seeded sampling and judging statistics."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRunList
from .io import (
    NONRELEVANT,
    RELEVANT,
    UNJUDGED,
    StratifiedJudgments,
    Stratum,
    TopicJudgments,
    topic_key,
)

STATS_COLUMNS = (
    "Topic number",
    "Total submitted",
    "Unique submitted",
    "total that were unique %",
    "Max. result depth pooled",
    "Number judged",
    "unique that were judged %",
    "Number relevant",
    "judged that were relevant %",
)


@dataclass(frozen=True)
class PoolPlan:
    """Ordered ``(lo, hi, rate)`` rank bands; duplicates are always removed."""

    strata_spec: tuple
    seed: int = 0

    def __post_init__(self):
        spec = tuple((int(lo), int(hi), float(rate)) for lo, hi, rate in self.strata_spec)
        if not spec:
            raise ValueError("pool plan needs at least one stratum")
        prev_hi = 0
        for lo, hi, rate in spec:
            if lo > hi or lo <= prev_hi:
                raise ValueError(f"strata must be disjoint and ascending, got {lo}-{hi} after {prev_hi}")
            if not 0.0 < rate <= 1.0:
                raise ValueError(f"sampling rate {rate} outside (0, 1]")
            prev_hi = hi
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "strata_spec", spec)

    @property
    def stratum_ids(self):
        return tuple(str(i) for i in range(1, len(self.strata_spec) + 1))

    def stratum_of(self, rank):
        for i, (lo, hi, _) in enumerate(self.strata_spec):
            if lo <= rank <= hi:
                return i
        return None


AVS_PLAN = ((1, 250, 1.0), (251, 1000, 0.111))


@dataclass(frozen=True)
class Pool:
    plan: PoolPlan
    topics: dict  # topic -> tuple over strata of sorted shot-id tuples

    def topic_ids(self):
        return sorted(self.topics, key=topic_key)


def build_pool(runs, plan):
    """Deduplicated union of the runs' shots, each in the stratum of its best rank."""
    if not runs:
        raise EmptyRunList("cannot pool an empty run list")
    best = {}
    for run in runs:
        for topic, rows in run.entries.items():
            ranks = best.setdefault(topic, {})
            for e in rows:
                r = ranks.get(e.shot_id)
                if r is None or e.rank < r:
                    ranks[e.shot_id] = e.rank
    topics = {}
    for topic in sorted(best, key=topic_key):
        members = [[] for _ in plan.strata_spec]
        for shot, rank in best[topic].items():
            s = plan.stratum_of(rank)
            if s is not None:
                members[s].append(shot)
        topics[topic] = tuple(tuple(sorted(m)) for m in members)
    return Pool(plan, topics)


def sample_size(rate, pool_size):
    # guard against 0.1 * 30 == 3.0000000000000004
    return min(pool_size, math.ceil(rate * pool_size - 1e-9))


def _stream(seed, topic, stratum_index):
    topic_word = int.from_bytes(hashlib.blake2b(topic.encode("utf-8"), digest_size=8).digest(), "little")
    ss = np.random.SeedSequence([seed, topic_word, stratum_index])
    return np.random.Generator(np.random.Philox(ss))


def sample_pool(pool, plan=None):
    """Seeded uniform sample of ``ceil(rate * size)`` shots from every stratum."""
    plan = plan or pool.plan
    out = {}
    for topic, strata in pool.topics.items():
        picked = []
        for i, shots in enumerate(strata):
            rate = plan.strata_spec[i][2]
            n = sample_size(rate, len(shots))
            if n == len(shots):
                picked.append(shots)
                continue
            idx = _stream(plan.seed, topic, i).choice(len(shots), size=n, replace=False)
            picked.append(tuple(shots[j] for j in sorted(idx)))
        out[topic] = tuple(picked)
    return out


def judgments_from_sample(pool, sample, is_relevant):
    """Assemble stratified judgments, marking unsampled pool members ``-1``.

    ``is_relevant(topic, shot)`` plays the assessor.
    """
    plan = pool.plan
    topics = {}
    for topic, strata in pool.topics.items():
        built, judged = [], {}
        for i, shots in enumerate(strata):
            lo, hi, _ = plan.strata_spec[i]
            sid = plan.stratum_ids[i]
            chosen = set(sample[topic][i])
            for shot in shots:
                if shot in chosen:
                    judged[shot] = (sid, RELEVANT if is_relevant(topic, shot) else NONRELEVANT)
                else:
                    judged[shot] = (sid, UNJUDGED)
            built.append(Stratum(sid, lo, hi, len(shots), len(chosen)))
        topics[topic] = TopicJudgments(tuple(built), judged)
    return StratifiedJudgments(topics)


def serialize_pool(pool, sample=None):
    """``topic stratum shot`` lines; restricted to the sample when one is given."""
    lines = []
    for topic in pool.topic_ids():
        strata = sample[topic] if sample is not None else pool.topics[topic]
        for sid, shots in zip(pool.plan.stratum_ids, strata):
            lines.extend(f"{topic} {sid} {shot}\n" for shot in shots)
    return "".join(lines).encode("utf-8")


def rejudge_candidates(runs, min_runs=10, max_rank=200):
    """Shots submitted by at least ``min_runs`` runs within ranks 1..``max_rank``."""
    counts = {}
    for run in runs:
        for topic, rows in run.entries.items():
            c = counts.setdefault(topic, Counter())
            c.update(e.shot_id for e in rows if e.rank <= max_rank)
    return {t: sorted(s for s, n in counts[t].items() if n >= min_runs)
            for t in sorted(counts, key=topic_key)}


# --- judging statistics ------------------------------------------------------

def pct_half_up(num, den):
    """``100 * num / den`` rounded half-up to 2 decimals, in exact integer arithmetic."""
    if den == 0:
        return 0.0
    hundredths = (20000 * num + den) // (2 * den)
    return hundredths / 100


@dataclass(frozen=True)
class PoolStatsRow:
    topic: str
    total_submitted: int
    unique_submitted: int
    pct_unique: float
    max_depth_pooled: int
    number_judged: int
    pct_unique_judged: float
    number_relevant: int
    pct_judged_relevant: float

    def cells(self):
        return (self.topic, str(self.total_submitted), str(self.unique_submitted),
                f"{self.pct_unique:.2f}", str(self.max_depth_pooled), str(self.number_judged),
                f"{self.pct_unique_judged:.2f}", str(self.number_relevant),
                f"{self.pct_judged_relevant:.2f}")


def pool_stats_row(topic, total, unique, max_depth, judged, relevant):
    if not relevant <= judged <= unique <= total:
        raise ValueError(f"topic {topic}: need relevant <= judged <= unique <= total")
    return PoolStatsRow(topic, total, unique, pct_half_up(unique, total), max_depth,
                        judged, pct_half_up(judged, unique), relevant,
                        pct_half_up(relevant, judged))


def judging_stats(runs, judgments):
    """One :class:`PoolStatsRow` per judged topic, in topic order."""
    rows = []
    for topic in judgments.topic_ids():
        tj = judgments.topics[topic]
        submitted = [e.shot_id for run in runs for e in run.entries.get(topic, ())]
        unique = set(submitted)
        judged = [s for s, (_, rel) in tj.judgments.items() if rel != UNJUDGED and s in unique]
        relevant = [s for s in judged if tj.judgments[s][1] == RELEVANT]
        depth = max((s.hi for s in tj.strata if s.pool_size > 0), default=0)
        rows.append(pool_stats_row(topic, len(submitted), len(unique), depth,
                                   len(judged), len(relevant)))
    return rows


def stats_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()
