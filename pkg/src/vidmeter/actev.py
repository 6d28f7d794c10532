"""Activity detection scoring: instance alignment, Pmiss, false-alarm measures, DET and nAUDC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    IncompleteMatrix,
    MixedActivityLabels,
    NoNonReferenceDuration,
    NoTrueInstances,
    VidmeterError,
    ZeroDuration,
)

DEFAULT_THETA = 0.2
DEFAULT_NAUDC_LIMIT = 0.2
DEFAULT_RFA_POINT = 0.15

TIME_BASED = "time_based"
RATE_BASED = "rate_based"


def temporal_iou(a, b):
    """IoU of two closed frame spans ``[begin, end]``."""
    inter = min(a.end, b.end) - max(a.begin, b.begin) + 1
    if inter <= 0:
        return 0.0
    union = (a.end - a.begin + 1) + (b.end - b.begin + 1) - inter
    return inter / union


@dataclass(frozen=True)
class AlignmentResult:
    pairs: tuple  # ((reference, system), ...)
    misses: tuple
    false_alarms: tuple
    tau: float | None = None

    @property
    def n_cd(self):
        return len(self.pairs)

    @property
    def n_md(self):
        return len(self.misses)

    @property
    def n_fa(self):
        return len(self.false_alarms)


def _check_single_activity(*groups):
    labels = {i.activity for g in groups for i in g}
    if len(labels) > 1:
        raise MixedActivityLabels(f"alignment needs one activity, got {sorted(labels)}")


def _match_file(refs, syss, theta):
    """Index pairs of a max-cardinality, then max (IoU + conf), matching within one file."""
    if not refs or not syss:
        return []
    n, m = len(refs), len(syss)
    big = 2.0 * min(n, m) + 1.0
    w = np.zeros((n, m))
    eligible = np.zeros((n, m), dtype=bool)
    for i, r in enumerate(refs):
        for j, s in enumerate(syss):
            iou = temporal_iou(r, s)
            if iou > 0.0 and iou >= theta:
                eligible[i, j] = True
                w[i, j] = big + iou + s.conf
    if not eligible.any():
        return []
    rows, cols = linear_sum_assignment(w, maximize=True)
    return [(i, j) for i, j in zip(rows, cols) if eligible[i, j]]


def _by_file(items, instances=None):
    """Group ``items`` by the file of the matching instance (``items`` itself by default)."""
    out = {}
    for item, inst in zip(items, instances if instances is not None else items):
        out.setdefault(inst.file_id, []).append(item)
    return out


def align_instances(reference, system, tau=None, theta=DEFAULT_THETA):
    """One-to-one alignment of system instances (``conf >= tau``) to references.

    Pairs need the same file and temporal IoU ``>= theta``. The matching
    maximises the pair count, then summed IoU plus presence confidence.
    """
    reference = list(getattr(reference, "instances", reference))
    system = list(getattr(system, "instances", system))
    _check_single_activity(reference, system)
    if tau is not None:
        system = [s for s in system if s.conf >= tau]
    refs_by = _by_file(range(len(reference)), reference)
    sys_by = _by_file(range(len(system)), system)
    pairs, matched_r, matched_s = [], set(), set()
    for fid in sorted(set(refs_by) & set(sys_by)):
        ri, si = refs_by[fid], sys_by[fid]
        hits = _match_file([reference[k] for k in ri], [system[k] for k in si], theta)
        for i, j in hits:
            pairs.append((reference[ri[i]], system[si[j]]))
            matched_r.add(ri[i])
            matched_s.add(si[j])
    misses = tuple(r for k, r in enumerate(reference) if k not in matched_r)
    fas = tuple(s for k, s in enumerate(system) if k not in matched_s)
    return AlignmentResult(tuple(pairs), misses, fas, tau)


def pmiss(alignment, n_true):
    if n_true <= 0:
        raise NoTrueInstances("Pmiss needs at least one reference instance")
    return alignment.n_md / n_true


def rate_fa(alignment, video_minutes):
    if video_minutes <= 0:
        raise ZeroDuration("video duration must be positive")
    return alignment.n_fa / video_minutes


# --- time-based false alarms -------------------------------------------------

@dataclass(frozen=True)
class FrameCountHistogram:
    reference: np.ndarray  # per-frame count of reference instances
    system: np.ndarray  # per-frame count of system instances

    @property
    def n_frames(self):
        return self.reference.size

    @property
    def non_reference_frames(self):
        return int(np.count_nonzero(self.reference == 0))

    @property
    def false_alarm_frames(self):
        return int(np.sum(np.maximum(0, self.system - self.reference)))


def paint(instances, n_frames):
    """Per-frame instance counts for 1-based closed spans."""
    diff = np.zeros(n_frames + 1, dtype=np.int64)
    for inst in instances:
        diff[inst.begin - 1] += 1
        diff[inst.end] -= 1
    return np.cumsum(diff[:-1])


def frame_histograms(reference, system, video_meta):
    refs_by, sys_by = _by_file(reference), _by_file(system)
    unknown = set(sys_by) - set(video_meta)
    if unknown:
        raise VidmeterError(f"system output names files absent from the reference: {sorted(unknown)}")
    return {fid: FrameCountHistogram(paint(refs_by.get(fid, ()), m.n_frames),
                                     paint(sys_by.get(fid, ()), m.n_frames))
            for fid, m in sorted(video_meta.items())}


def time_based_fa(histograms):
    """Excess system frames over reference frames, over pooled non-reference frames."""
    hists = list(histograms.values()) if isinstance(histograms, dict) else list(histograms)
    nr = sum(h.non_reference_frames for h in hists)
    if nr == 0:
        raise NoNonReferenceDuration("reference covers every frame")
    return sum(h.false_alarm_frames for h in hists) / nr


# --- DET curves --------------------------------------------------------------

@dataclass(frozen=True)
class DetCurve:
    points: tuple  # ((fa_value, pmiss, tau), ...) sorted by fa_value
    fa_axis: str

    def as_arrays(self):
        pts = np.array([(fa, pm) for fa, pm, _ in self.points], dtype=np.float64).reshape(-1, 2)
        return pts[:, 0], pts[:, 1]


def det_curve(reference, system, video_meta, fa_axis=TIME_BASED, theta=DEFAULT_THETA):
    """Sweep the decision threshold down through every distinct presence confidence.

    Only files whose system set changes at a threshold are re-aligned, and the
    frame histograms are updated incrementally.
    """
    if fa_axis not in (TIME_BASED, RATE_BASED):
        raise ValueError(f"unknown false-alarm axis {fa_axis!r}")
    reference = list(getattr(reference, "instances", reference))
    system = list(getattr(system, "instances", system))
    _check_single_activity(reference, system)
    n_true = len(reference)
    if n_true == 0:
        raise NoTrueInstances("DET curve needs at least one reference instance")
    if not system:
        return DetCurve(((0.0, 1.0, math.inf),), fa_axis)

    refs_by = _by_file(reference)
    minutes = sum(m.n_frames / m.frame_rate for m in video_meta.values()) / 60.0
    hists = frame_histograms(reference, system, video_meta)
    ref_counts = {fid: h.reference for fid, h in hists.items()}
    sys_counts = {fid: np.zeros_like(h.reference) for fid, h in hists.items()}
    nr = sum(h.non_reference_frames for h in hists.values())
    if fa_axis == TIME_BASED and nr == 0:
        raise NoNonReferenceDuration("reference covers every frame")
    if fa_axis == RATE_BASED and minutes <= 0:
        raise ZeroDuration("video duration must be positive")

    order = sorted(system, key=lambda s: -s.conf)
    active = {}
    matched = {}
    excess = 0
    points = []
    i = 0
    while i < len(order):
        tau = order[i].conf
        touched = set()
        while i < len(order) and order[i].conf == tau:
            s = order[i]
            seg = slice(s.begin - 1, s.end)
            excess += int(np.count_nonzero(sys_counts[s.file_id][seg] >= ref_counts[s.file_id][seg]))
            sys_counts[s.file_id][seg] += 1
            active.setdefault(s.file_id, []).append(s)
            touched.add(s.file_id)
            i += 1
        for fid in touched:
            matched[fid] = len(_match_file(refs_by.get(fid, []), active[fid], theta))
        n_cd = sum(matched.values())
        n_sys = i
        fa = excess / nr if fa_axis == TIME_BASED else (n_sys - n_cd) / minutes
        points.append((fa, (n_true - n_cd) / n_true, tau))
    points.sort(key=lambda p: (p[0], -p[2]))
    return DetCurve(tuple(points), fa_axis)


def _step(det):
    """Distinct fa values with the best Pmiss reached at or before each."""
    xs, ys = [], []
    best = 1.0
    for fa, pm, _ in det.points:
        best = min(best, pm)
        if xs and fa == xs[-1]:
            ys[-1] = best
        else:
            xs.append(fa)
            ys.append(best)
    return xs, ys


def naudc(det, a=DEFAULT_NAUDC_LIMIT):
    """Normalised area under the stepwise DET curve for false alarms in ``[0, a]``.

    Pmiss is 1 left of the first operating point and each point's Pmiss
    holds until the next one.
    """
    if a <= 0:
        raise ValueError("nAUDC limit must be positive")
    if det.fa_axis != TIME_BASED:
        raise ValueError("nAUDC is defined on the time-based false-alarm axis")
    xs, ys = _step(det)
    area, x_prev, y_prev = 0.0, 0.0, 1.0
    for x, y in zip(xs, ys):
        if x >= a:
            break
        area += (x - x_prev) * y_prev
        x_prev, y_prev = x, y
    area += (a - x_prev) * y_prev
    return area / a


def pmiss_at_fa(det, target=DEFAULT_RFA_POINT):
    """Pmiss at a false-alarm value by linear interpolation; PR.15 on a rate-based curve."""
    xs, ys = _step(det)
    if xs[0] > 0.0:
        xs, ys = [0.0] + xs, [1.0] + ys
    return float(np.interp(target, xs, ys))


@dataclass(frozen=True)
class ActivityScore:
    activity: str
    n_true: int
    naudc: float
    pr15: float
    det_time: DetCurve
    det_rate: DetCurve


def score_activity(reference, system, activity, theta=DEFAULT_THETA, limit=DEFAULT_NAUDC_LIMIT,
                   rfa_point=DEFAULT_RFA_POINT):
    ref = reference.for_activity(activity)
    sys = system.for_activity(activity)
    det_t = det_curve(ref, sys, reference.video_meta, TIME_BASED, theta)
    det_r = det_curve(ref, sys, reference.video_meta, RATE_BASED, theta)
    return ActivityScore(activity, len(ref.instances), naudc(det_t, limit),
                         pmiss_at_fa(det_r, rfa_point), det_t, det_r)


# --- cross-system summaries --------------------------------------------------

@dataclass(frozen=True)
class ActivityRanking:
    ranks: dict  # system -> {activity: rank}, 1 = lowest nAUDC
    avg_rank: dict  # activity -> mean rank across systems
    system_mean: dict
    system_std: dict


def activity_ranking(matrix):
    """Rank activities per system by nAUDC; ``matrix`` is system -> {activity: nAUDC}."""
    if not matrix:
        raise IncompleteMatrix("no systems")
    activities = sorted({a for row in matrix.values() for a in row})
    ranks, means, stds = {}, {}, {}
    for system in sorted(matrix):
        row = matrix[system]
        missing = [a for a in activities if a not in row]
        if missing:
            raise IncompleteMatrix(f"system {system!r} lacks {missing}")
        ordered = sorted(activities, key=lambda a: (row[a], a))
        ranks[system] = {a: r for r, a in enumerate(ordered, start=1)}
        vals = np.array([row[a] for a in activities])
        means[system] = float(vals.mean())
        stds[system] = float(vals.std())
    avg = {a: float(np.mean([ranks[s][a] for s in ranks])) for a in activities}
    return ActivityRanking(ranks, avg, means, stds)
