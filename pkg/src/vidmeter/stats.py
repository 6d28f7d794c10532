"""Significance testing, metric correlation and Direct Assessment standardisation."""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _core
from .errors import EmptyLog, TopicMismatch, ZeroVariance

DEFAULT_ALPHA = 0.05
EXACT_MAX_TOPICS = 20
GROUP_SYMBOLS = ("*", "#", "!", "@", "$", "%", "&", "+")


def thread_count(threads=None):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("VIDMETER_THREADS")
    return max(1, int(env)) if env else 1


def _paired(a, b):
    if isinstance(a, dict) or isinstance(b, dict):
        if not (isinstance(a, dict) and isinstance(b, dict)) or set(a) != set(b):
            raise TopicMismatch("runs were scored on different topic sets")
        keys = sorted(a)
        a, b = [a[k] for k in keys], [b[k] for k in keys]
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise TopicMismatch("score vectors differ in length")
    if a.size == 0:
        raise TopicMismatch("no topics to compare")
    return a - b


def randomization_test(a, b, iterations=10000, seed=0, method="auto"):
    """Two-sided paired sign-flip test on the mean per-topic difference.

    ``method="auto"`` enumerates all ``2**T`` flips when ``T <= 20`` and
    otherwise draws ``iterations`` random flips, returning
    ``(1 + hits) / (1 + iterations)``.
    """
    d = _paired(a, b)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if method == "auto":
        method = "exact" if d.size <= EXACT_MAX_TOPICS else "monte_carlo"
    # tolerance absorbs summation-order rounding so exact ties stay ties
    threshold = abs(d.sum()) - 1e-9 * max(1.0, float(np.abs(d).sum()))
    if method == "exact":
        if d.size > 30:
            raise ValueError("exact enumeration is limited to 30 topics")
        return _core.signflip_exact_count(d, threshold) / float(2 ** d.size)
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    hits, left = 0, iterations
    while left:
        n = min(left, 16384)
        signs = rng.integers(0, 2, size=(n, d.size), dtype=np.int8) * 2 - 1
        hits += int(np.count_nonzero(np.abs(signs @ d) >= threshold))
        left -= n
    return (1 + hits) / (1 + iterations)


@dataclass(frozen=True)
class SignificanceMatrix:
    runs: tuple  # ordered by mean score, best first
    means: tuple
    p_values: np.ndarray
    alpha: float = DEFAULT_ALPHA

    def significant(self, i, j):
        return self.p_values[i, j] < self.alpha


def significance_matrix(scores, alpha=DEFAULT_ALPHA, iterations=10000, seed=0, threads=None):
    """Pairwise tests for ``scores`` (run -> {topic: value}).

    Pair ``k`` uses seed ``seed ^ k`` so results do not depend on scheduling.
    """
    runs = sorted(scores, key=lambda r: (-np.mean(list(scores[r].values())), r))
    means = tuple(float(np.mean(list(scores[r].values()))) for r in runs)
    n = len(runs)
    pairs = list(combinations(range(n), 2))

    def one(k):
        i, j = pairs[k]
        return randomization_test(scores[runs[i]], scores[runs[j]], iterations, seed ^ k)

    with ThreadPoolExecutor(thread_count(threads)) as pool:
        ps = list(pool.map(one, range(len(pairs))))
    p = np.eye(n)
    for (i, j), v in zip(pairs, ps):
        p[i, j] = p[j, i] = v
    return SignificanceMatrix(tuple(runs), means, p, alpha)


@dataclass(frozen=True)
class SignificanceGroup:
    level: int
    symbol: str
    runs: tuple


def significance_groups(matrix):
    """Greedy grouping down the ranking; a run starts a new, deeper group when it
    differs significantly from any member of the current one."""
    groups, current = [], []
    for i in range(len(matrix.runs)):
        if current and any(matrix.significant(i, j) for j in current):
            groups.append(current)
            current = []
        current.append(i)
    if current:
        groups.append(current)
    return [SignificanceGroup(level, GROUP_SYMBOLS[level % len(GROUP_SYMBOLS)],
                              tuple(matrix.runs[i] for i in members))
            for level, members in enumerate(groups)]


def groups_layout(matrix, groups=None):
    groups = groups if groups is not None else significance_groups(matrix)
    mean = dict(zip(matrix.runs, matrix.means))
    lines = []
    for g in groups:
        lines.extend(f"{'  ' * g.level}{g.symbol} {run} {mean[run]:.4f}\n" for run in g.runs)
    return "".join(lines)


def matrix_csv(matrix):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("row", "col", "p", "significant"))
    for i, a in enumerate(matrix.runs):
        for j, b in enumerate(matrix.runs):
            w.writerow((a, b, f"{matrix.p_values[i, j]:.4f}", int(matrix.significant(i, j))))
    return buf.getvalue()


# --- correlation -------------------------------------------------------------

def pearson_matrix(vectors):
    """Pearson r between every pair of metric score vectors (name -> values)."""
    names = list(vectors)
    x = np.array([np.asarray(vectors[n], dtype=np.float64) for n in names])
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("need equal-length vectors with at least 2 values")
    centred = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centred ** 2, axis=1))
    for n, v in zip(names, norms):
        if v == 0:
            raise ZeroVariance(n)
    r = (centred @ centred.T) / np.outer(norms, norms)
    r = np.clip(r, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return names, r


# --- Direct Assessment -------------------------------------------------------

@dataclass(frozen=True)
class WorkerQC:
    worker_id: str
    mean_good: float | None
    mean_polluted: float | None
    passed: bool
    flags: tuple = ()


def da_worker_qc(log):
    """A worker passes when their unpolluted ratings average strictly above their polluted ones."""
    if not log.ratings:
        raise EmptyLog("no ratings")
    good, bad = {}, {}
    for r in log.ratings:
        (bad if r.polluted else good).setdefault(r.worker_id, []).append(r.rating)
    out = {}
    for w in sorted(set(good) | set(bad)):
        mg = float(np.mean(good[w])) if w in good else None
        mb = float(np.mean(bad[w])) if w in bad else None
        if mb is None:
            out[w] = WorkerQC(w, mg, None, True, ("no_polluted_items",))
        elif mg is None:
            out[w] = WorkerQC(w, None, mb, False, ("no_unpolluted_items",))
        else:
            out[w] = WorkerQC(w, mg, mb, mg > mb)
    return out


@dataclass(frozen=True)
class WorkerStats:
    mean: float
    std: float
    n_ratings: int
    passed_qc: bool
    flags: tuple = ()


@dataclass(frozen=True)
class SystemDa:
    raw_mean: float
    z_mean: float
    n_ratings: int


@dataclass(frozen=True)
class DaScoreboard:
    systems: dict  # system_id -> SystemDa
    workers: dict  # worker_id -> WorkerStats


def da_standardize(log, qc=None):
    """Per-worker z scores (population std) from QC-passing workers.

    Worker mean and spread use all of that worker's ratings; system scores
    use unpolluted ratings only, averaged per caption then over videos.
    """
    qc = qc if qc is not None else da_worker_qc(log)
    per_worker = {}
    for r in log.ratings:
        per_worker.setdefault(r.worker_id, []).append(r.rating)
    workers = {}
    for w in sorted(per_worker):
        vals = np.array(per_worker[w])
        mean, std = float(vals.mean()), float(vals.std())
        flags = list(qc[w].flags) if w in qc else []
        if len(vals) < 2 or std == 0.0:
            flags.append("degenerate_worker")
        workers[w] = WorkerStats(mean, std, len(vals), qc[w].passed if w in qc else False, tuple(flags))

    usable = {w for w, s in workers.items() if s.passed_qc and "degenerate_worker" not in s.flags}
    captions = {}  # system -> video -> [(raw, z)]
    for r in log.ratings:
        if r.polluted or r.worker_id not in usable:
            continue
        s = workers[r.worker_id]
        captions.setdefault(r.system_id, {}).setdefault(r.video_id, []).append(
            (r.rating, (r.rating - s.mean) / s.std))
    systems = {}
    for sys_id in sorted(captions):
        videos = captions[sys_id]
        raw = [np.mean([v[0] for v in videos[vid]]) for vid in sorted(videos)]
        z = [np.mean([v[1] for v in videos[vid]]) for vid in sorted(videos)]
        systems[sys_id] = SystemDa(float(np.mean(raw)), float(np.mean(z)),
                                   sum(len(v) for v in videos.values()))
    return DaScoreboard(systems, workers)
