"""Ranked-retrieval metrics over pooled, possibly sampled, relevance judgments."""

from __future__ import annotations

import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _core
from .errors import EmptyComparisonSet, MetricWarning, MissingVideo, ZeroSamplingRate
from .io import RELEVANT, UNJUDGED, topic_key

DEFAULT_EPSILON = 1e-5
AVS_DIFFICULTY_THRESHOLD = 0.3
INS_DIFFICULTY_THRESHOLD = 0.06

NO_RELEVANT = "no_relevant"
MISSING_TOPIC = "missing_topic"


@dataclass(frozen=True)
class TopicScore:
    topic_id: str
    value: float
    metric: str
    n_relevant_est: float
    flags: tuple = ()


@dataclass(frozen=True)
class RunScore:
    run_tag: str
    metric: str
    value: float
    per_topic: dict  # topic -> TopicScore
    flags: tuple = ()


def _relevant_set(judged):
    """Accept a set of relevant ids or a :class:`TopicJudgments`."""
    if hasattr(judged, "relevant"):
        return judged.relevant()
    return set(judged)


def average_precision(ranked, relevant, topic=None):
    """Exact AP of ``ranked`` shot ids; unretrieved relevant shots count as misses."""
    relevant = _relevant_set(relevant)
    if not relevant:
        warnings.warn(f"topic {topic}: no relevant shots, AP is 0", MetricWarning, stacklevel=2)
        return 0.0
    flags = np.fromiter((s in relevant for s in ranked), dtype=np.int8, count=len(ranked))
    return _core.ap_from_flags(flags, len(relevant))


def mean_average_precision(run, judgments, topics=None):
    """Unweighted mean of per-topic AP over ``topics`` (default: all judged topics).

    ``judgments`` maps topic ids to relevant-shot sets, or is a
    :class:`~vidmeter.io.StratifiedJudgments`.
    """
    table = getattr(judgments, "topics", judgments)
    topics = list(topics) if topics is not None else sorted(table, key=topic_key)
    per_topic, flags = {}, []
    for topic in topics:
        rel = _relevant_set(table[topic])
        tflags = []
        if topic not in run.entries:
            tflags.append(MISSING_TOPIC)
            flags.append(f"{MISSING_TOPIC}:{topic}")
        if not rel:
            tflags.append(NO_RELEVANT)
            flags.append(f"{NO_RELEVANT}:{topic}")
            ap = 0.0
        else:
            ap = average_precision(run.shots(topic), rel, topic)
        per_topic[topic] = TopicScore(topic, ap, "AP", float(len(rel)), tuple(tflags))
    value = float(np.mean([s.value for s in per_topic.values()])) if per_topic else 0.0
    return RunScore(run.run_tag, "MAP", value, per_topic, tuple(flags))


# --- inferred measures -------------------------------------------------------

def _stratum_arrays(ranked, tj):
    index = {s.stratum_id: i for i, s in enumerate(tj.strata)}
    rates = np.array([s.sampling_rate for s in tj.strata], dtype=np.float64)
    if np.any(rates <= 0):
        raise ZeroSamplingRate("a stratum has sampling rate 0")
    stratum = np.full(len(ranked), -1, dtype=np.int32)
    status = np.full(len(ranked), UNJUDGED, dtype=np.int8)
    for k, shot in enumerate(ranked):
        hit = tj.judgments.get(shot)
        if hit is not None:
            stratum[k] = index[hit[0]]
            status[k] = hit[1]
    return stratum, status, rates


def estimated_relevant(tj):
    """Inverse-rate estimate of the topic's total number of relevant shots."""
    counts = Counter(sid for sid, rel in tj.judgments.values() if rel == RELEVANT)
    total = 0.0
    for s in tj.strata:
        if counts[s.stratum_id]:
            if s.sampling_rate <= 0:
                raise ZeroSamplingRate(f"stratum {s.stratum_id} has sampling rate 0")
            total += counts[s.stratum_id] / s.sampling_rate
    return total


def extended_inferred_ap(ranked, tj, epsilon=DEFAULT_EPSILON, topic=None):
    """Extended inferred AP of a ranked shot list under stratified sampled judgments.

    Each judged-relevant shot at rank ``k`` contributes its expected precision
    ``(1 + sum_s pooled_s * (rel_s + eps) / (rel_s + nonrel_s + 2 eps)) / k``,
    counts taken over ranks above ``k``, weighted by the inverse sampling rate
    of its stratum. The sum is divided by the inverse-rate estimate of R.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    r_hat = estimated_relevant(tj)
    if r_hat == 0:
        return TopicScore(topic, 0.0, "xinfAP", 0.0, (NO_RELEVANT,))
    stratum, status, rates = _stratum_arrays(ranked, tj)
    total = _core.xinfap_scan(stratum, status, rates, float(epsilon))
    flags = () if np.any((status == RELEVANT) & (stratum >= 0)) else ("no_judged_relevant_retrieved",)
    return TopicScore(topic, min(1.0, total / r_hat), "xinfAP", r_hat, flags)


def inferred_pr(ranked, tj, cutoff, topic=None):
    """Inferred precision and recall at ``cutoff``; returns ``(precision, recall, flags)``."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    stratum, status, rates = _stratum_arrays(ranked[:cutoff], tj)
    hit = (status == RELEVANT) & (stratum >= 0)
    est = float(np.sum(1.0 / rates[stratum[hit]])) if hit.any() else 0.0
    r_hat = estimated_relevant(tj)
    if r_hat == 0:
        return est / cutoff, 0.0, (NO_RELEVANT,)
    return est / cutoff, est / r_hat, ()


def inferred_measures(ranked, tj, cutoffs=(), epsilon=DEFAULT_EPSILON, topic=None):
    """xinfAP plus inferred ``(precision, recall)`` at each cutoff from one pass over the run."""
    r_hat = estimated_relevant(tj)
    stratum, status, rates = _stratum_arrays(ranked, tj)
    hit = (status == RELEVANT) & (stratum >= 0)
    weight = np.zeros(len(ranked))
    weight[hit] = 1.0 / rates[stratum[hit]]
    est = np.cumsum(weight)
    pr = {}
    for k in cutoffs:
        found = float(est[min(k, len(ranked)) - 1]) if len(ranked) else 0.0
        pr[k] = (found / k, found / r_hat if r_hat else 0.0)
    if r_hat == 0:
        return TopicScore(topic, 0.0, "xinfAP", 0.0, (NO_RELEVANT,)), pr
    total = _core.xinfap_scan(stratum, status, rates, float(epsilon))
    flags = () if hit.any() else ("no_judged_relevant_retrieved",)
    return TopicScore(topic, min(1.0, total / r_hat), "xinfAP", r_hat, flags), pr


def run_xinfap(run, judgments, epsilon=DEFAULT_EPSILON, topics=None):
    topics = list(topics) if topics is not None else judgments.topic_ids()
    per_topic, flags = {}, []
    for topic in topics:
        ts = extended_inferred_ap(run.shots(topic), judgments.topics[topic], epsilon, topic)
        if topic not in run.entries:
            ts = TopicScore(topic, ts.value, ts.metric, ts.n_relevant_est, ts.flags + (MISSING_TOPIC,))
        flags.extend(f"{f}:{topic}" for f in ts.flags)
        per_topic[topic] = ts
    value = float(np.mean([s.value for s in per_topic.values()])) if per_topic else 0.0
    return RunScore(run.run_tag, "mean xinfAP", value, per_topic, tuple(flags))


# --- novelty -----------------------------------------------------------------

@dataclass(frozen=True)
class NoveltyWeightTable:
    n_runs: int
    counts: dict  # (topic, shot) -> number of runs retrieving it

    def weight(self, topic, shot):
        return novelty_weight(self.counts.get((topic, shot), 0), self.n_runs)

    def rows(self):
        for (topic, shot) in sorted(self.counts, key=lambda k: (topic_key(k[0]), k[1])):
            n = self.counts[(topic, shot)]
            yield topic, shot, n, self.n_runs, novelty_weight(n, self.n_runs)


def novelty_weight(n, m):
    """``1 - N/M`` for a shot retrieved by ``n`` of ``m`` runs."""
    if m <= 0:
        raise EmptyComparisonSet("no runs to compare against")
    return 1.0 - n / m


def _shot_counts(runs):
    counts = Counter()
    for run in runs:
        for topic, rows in run.entries.items():
            counts.update((topic, e.shot_id) for e in rows)
    return counts


def novelty_weights(runs):
    if not runs:
        raise EmptyComparisonSet("no runs to compare against")
    return NoveltyWeightTable(len(runs), dict(_shot_counts(runs)))


def comparison_set(run, runs):
    """Runs ``run`` is scored against; a novelty run drops its team's other runs."""
    others = [r for r in runs if r.run_tag != run.run_tag]
    if run.novelty_flag:
        others = [r for r in others if r.team_id != run.team_id]
    return [run] + others


@dataclass(frozen=True)
class NoveltyScore:
    run_tag: str
    value: float
    per_topic: dict  # topic -> summed weight of unique relevant shots
    n_runs: int


def novelty_score(run, runs, judgments, topics=None, _counts=None):
    """Mean over topics of the summed weights of relevant shots only this run found."""
    compared = comparison_set(run, runs)
    if not compared:
        raise EmptyComparisonSet("no runs to compare against")
    m = len(compared)
    counts = _counts if _counts is not None else _shot_counts(compared)
    topics = list(topics) if topics is not None else judgments.topic_ids()
    per_topic = {}
    for topic in topics:
        rel = judgments.topics[topic].relevant()
        per_topic[topic] = sum(novelty_weight(1, m) for s in run.shots(topic)
                               if s in rel and counts[(topic, s)] == 1)
    value = float(np.mean(list(per_topic.values()))) if per_topic else 0.0
    return NoveltyScore(run.run_tag, value, per_topic, m)


def novelty_scores(runs, judgments, topics=None):
    """:func:`novelty_score` for every run from one index of who retrieved each relevant shot."""
    if not runs:
        raise EmptyComparisonSet("no runs to compare against")
    topics = list(topics) if topics is not None else judgments.topic_ids()
    finders = {}  # (topic, relevant shot) -> run tags retrieving it
    for run in runs:
        for topic in topics:
            rel = judgments.topics[topic].relevant()
            for e in run.entries.get(topic, ()):
                if e.shot_id in rel:
                    finders.setdefault((topic, e.shot_id), []).append(run.run_tag)
    team = {r.run_tag: r.team_id for r in runs}
    out = {}
    for run in runs:
        others = [r for r in runs if r.run_tag != run.run_tag]
        if run.novelty_flag:
            others = [r for r in others if r.team_id != run.team_id]
        m = len(others) + 1
        w = novelty_weight(1, m)
        per_topic = {}
        for topic in topics:
            total = 0.0
            for e in run.entries.get(topic, ()):
                tags = finders.get((topic, e.shot_id))
                if tags is None:
                    continue
                if all(t == run.run_tag or (run.novelty_flag and team[t] == run.team_id) for t in tags):
                    total += w
            per_topic[topic] = total
        value = float(np.mean(list(per_topic.values()))) if per_topic else 0.0
        out[run.run_tag] = NoveltyScore(run.run_tag, value, per_topic, m)
    return out


# --- uniqueness and overlap --------------------------------------------------

@dataclass(frozen=True)
class UniqueOverlap:
    per_topic: dict  # topic -> (unique relevant shots, overlapping relevant shots)
    per_team: dict  # team -> number of relevant shots only that team found


def unique_overlap_analysis(runs, judgments):
    per_topic, per_team = {}, Counter({r.team_id: 0 for r in runs})
    for topic in judgments.topic_ids():
        rel = judgments.topics[topic].relevant()
        teams = defaultdict(set)
        for run in runs:
            for s in run.shots(topic):
                if s in rel:
                    teams[s].add(run.team_id)
        unique = [s for s, t in teams.items() if len(t) == 1]
        per_topic[topic] = (len(unique), len(teams) - len(unique))
        for s in unique:
            per_team[next(iter(teams[s]))] += 1
    return UniqueOverlap(per_topic, dict(sorted(per_team.items())))


def _pairs(run):
    return {(t, e.shot_id) for t, rows in run.entries.items() for e in rows}


def run_overlap_pct(a, b):
    """Jaccard overlap, in percent, of the runs' (topic, shot) pairs."""
    pa, pb = _pairs(a), _pairs(b)
    union = len(pa | pb)
    return 100.0 * len(pa & pb) / union if union else 100.0


def pairwise_overlap(runs):
    """Matrix of :func:`run_overlap_pct` for all run pairs, via one sparse product."""
    index, rows, cols = {}, [], []
    for i, run in enumerate(runs):
        before = len(cols)
        for topic, entries in run.entries.items():
            ids = index.setdefault(topic, {})
            cols.extend(ids.setdefault(e.shot_id, len(ids)) for e in entries)
        rows.extend([i] * (len(cols) - before))
    # give each topic its own column block
    offset, base = 0, {}
    for topic, ids in index.items():
        base[topic] = offset
        offset += len(ids)
    shift = np.concatenate([np.full(len(e), base[t], dtype=np.int64)
                            for run in runs for t, e in run.entries.items()] or [np.zeros(0, np.int64)])
    cols = np.asarray(cols, dtype=np.int64) + shift
    x = sparse.csr_matrix((np.ones(len(rows), dtype=np.int64), (rows, cols)),
                          shape=(len(runs), offset))
    inter = (x @ x.T).toarray().astype(np.float64)
    sizes = np.diag(inter)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        pct = np.where(union > 0, 100.0 * inter / union, 100.0)
    return pct


# --- topic difficulty --------------------------------------------------------

@dataclass(frozen=True)
class TopicDifficulty:
    topic_id: str
    runs_above_threshold: int
    n_runs: int
    label: str
    threshold: float


def classify_topics(scores, threshold=AVS_DIFFICULTY_THRESHOLD):
    """Rank topics by how many runs reach ``threshold``.

    ``scores`` maps run tag -> {topic: value}. A topic is ``easy`` when most
    runs scoring it reach the threshold. Ties sort by topic id.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    above, seen = Counter(), Counter()
    for per_topic in scores.values():
        for topic, value in per_topic.items():
            seen[topic] += 1
            above[topic] += value >= threshold
    report = [
        TopicDifficulty(t, above[t], seen[t], "easy" if 2 * above[t] > seen[t] else "hard", threshold)
        for t in seen
    ]
    report.sort(key=lambda d: (-d.runs_above_threshold, topic_key(d.topic_id)))
    return report


# --- caption matching --------------------------------------------------------

@dataclass(frozen=True)
class InvertedRankScore:
    per_set: dict  # set_id -> mean inverted rank
    overall: float
    per_video: dict = field(default_factory=dict)  # (set_id, video) -> 1/rank or 0


def mean_inverted_rank(submission, truth):
    """Mean of ``1/rank`` of the correct caption, per set and averaged over sets."""
    per_set, per_video = {}, {}
    for set_id in sorted(truth):
        ranked = submission.sets.get(set_id, {})
        vals = []
        for video in sorted(truth[set_id]):
            if video not in ranked:
                raise MissingVideo(f"set {set_id}: video {video!r} missing from submission")
            caps = ranked[video]
            correct = truth[set_id][video]
            v = 1.0 / (caps.index(correct) + 1) if correct in caps else 0.0
            per_video[(set_id, video)] = v
            vals.append(v)
        per_set[set_id] = float(np.mean(vals)) if vals else 0.0
    overall = float(np.mean(list(per_set.values()))) if per_set else 0.0
    return InvertedRankScore(per_set, overall, per_video)
