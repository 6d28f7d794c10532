"""Parsing, validation and canonical serialization of evaluation input files.

Every parser takes ``bytes``, ``str`` or a binary/text file object and
returns an immutable value that satisfies its type invariants, or raises a
:class:`~vidmeter.errors.ParseError` subclass naming the offending line.
Nothing is repaired.

File layouts (whitespace separated, UTF-8, LF line endings, ``#`` comments):

ranked run
    ``topic_id Q0 shot_id rank score run_tag``
stratified judgments
    ``#stratum topic_id stratum_id lo hi pool_size`` headers, then
    ``topic_id stratum_id shot_id relevance`` with relevance ``1``/``0``,
    or ``-1`` for a pooled shot that was not sampled for judging
activity instances
    ``#video file_id n_frames frame_rate`` headers, then
    ``kind activity file_id begin end [conf]``
caption rankings
    ``set_id video_id rank caption_id``
caption ground truth
    ``set_id video_id caption_id``
direct-assessment log
    ``worker_id system_id video_id rating polluted``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, partial
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    DuplicateCaption,
    DuplicateShot,
    EmptyTopic,
    FrameSpanOutOfBounds,
    MalformedLine,
    MissingConfidence,
    NonContiguousRanks,
    RankOverflow,
    RatingOutOfRange,
    ScoreOrderError,
    ShotJudgedTwice,
    UnexpectedConfidence,
    UnknownStratum,
)

MAX_RUN_DEPTH = 1000
TASKS = ("adhoc", "instance", "vtt_matching")
TRAINING_TYPES = ("A", "D", "E", "F", "other")
CAPTION_SETS = ("A", "B", "C", "D", "E")

RELEVANT = 1
NONRELEVANT = 0
UNJUDGED = -1


def topic_key(topic):
    """Sort key putting numeric ids in numeric order ahead of other ids."""
    return (0, int(topic), topic) if topic.isdigit() else (1, 0, topic)


def _as_text(data, source=None):
    if isinstance(data, Path):
        data = data.read_bytes()
    elif hasattr(data, "read"):
        data = data.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedLine(f"not valid UTF-8 ({exc})", source=source) from None
    return data


def _text_lines(data, source=None):
    data = _as_text(data, source)
    if "\r" in data:
        raise MalformedLine("CR line ending", data.count("\n", 0, data.index("\r")) + 1, source)
    yield from enumerate(data.split("\n"), start=1)


def _records(data, source=None, directives=()):
    """Yield ``(line_no, fields, directive)`` skipping blanks and comments."""
    for no, line in _text_lines(data, source):
        fields = line.split()
        if not fields:
            continue
        if fields[0].startswith("#"):
            if fields[0] in directives:
                yield no, fields[1:], fields[0]
            continue
        yield no, fields, None


def _int(tok, no, what, source=None):
    try:
        return int(tok)
    except ValueError:
        raise MalformedLine(f"{what} {tok!r} is not an integer", no, source) from None


def _float(tok, no, what, source=None):
    try:
        val = float(tok)
    except ValueError:
        raise MalformedLine(f"{what} {tok!r} is not a number", no, source) from None
    if not math.isfinite(val):
        raise MalformedLine(f"{what} {tok!r} is not finite", no, source)
    return val


def _fmt(x):
    return repr(float(x))


# --- ranked runs -------------------------------------------------------------

class RunEntry(NamedTuple):
    shot_id: str
    rank: int
    score: float


@dataclass(frozen=True)
class RankedRun:
    run_tag: str
    task: str
    entries: dict  # topic_id -> tuple[RunEntry, ...] ordered by rank
    training_type: str = "other"
    novelty_flag: bool = False
    elapsed_seconds: dict = field(default_factory=dict)
    team: str | None = None

    @property
    def team_id(self):
        return self.team if self.team is not None else self.run_tag

    def topics(self):
        return sorted(self.entries, key=topic_key)

    def shots(self, topic):
        return [e.shot_id for e in self.entries.get(topic, ())]

    def n_entries(self):
        return sum(len(v) for v in self.entries.values())


def _fast_run_rows(text, max_depth):
    """Vectorised parse of a clean run file; ``None`` sends it to the line-by-line validator."""
    if "#" in text or "\r" in text:
        return None
    tok = text.split()
    n = len(tok) // 6
    if n == 0 or len(tok) % 6 or sum(1 for ln in text.split("\n") if ln and not ln.isspace()) != n:
        return None
    tags = set(tok[5::6])
    if len(tags) != 1 or not set(tok[1::6]) <= {"Q0", "0"}:
        return None
    try:
        ranks = np.array(tok[3::6], dtype=np.int64)
        scores = np.array(tok[4::6], dtype=np.float64)
    except (ValueError, OverflowError):
        return None
    if not np.isfinite(scores).all():
        return None
    topics = tok[0::6]
    shots = tok[2::6]
    code_of = {t: i for i, t in enumerate(dict.fromkeys(topics))}
    codes = np.fromiter(map(code_of.__getitem__, topics), dtype=np.int64, count=n)
    make = partial(tuple.__new__, RunEntry)  # C-level constructor, skips the namedtuple __new__
    entries = {}
    for t, code in code_of.items():
        idx = np.flatnonzero(codes == code)
        if len(idx) > max_depth:
            return None
        idx = idx[np.argsort(ranks[idx], kind="stable")]
        r, sc = ranks[idx], scores[idx]
        if not np.array_equal(r, np.arange(1, len(idx) + 1)) or np.any(sc[1:] > sc[:-1]):
            return None
        ids = [shots[i] for i in idx]
        if len(set(ids)) != len(ids):
            return None
        entries[t] = tuple(map(make, zip(ids, r.tolist(), sc.tolist())))
    return tags.pop(), entries


def parse_run(data, task="adhoc", *, training_type="other", novelty_flag=False,
              elapsed_seconds=None, team=None, source=None, max_depth=MAX_RUN_DEPTH):
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if training_type not in TRAINING_TYPES:
        raise ValueError(f"unknown training type {training_type!r}")
    text = _as_text(data, source)
    fast = _fast_run_rows(text, max_depth)
    if fast is not None:
        run_tag, entries = fast
        return RankedRun(run_tag=run_tag, task=task, entries=entries,
                         training_type=training_type, novelty_flag=bool(novelty_flag),
                         elapsed_seconds=dict(elapsed_seconds or {}), team=team)
    run_tag = None
    by_topic = {}
    seen = {}
    isfinite = math.isfinite
    for no, line in _text_lines(text, source):
        f = line.split()
        if not f or f[0][0] == "#":
            continue
        if len(f) != 6:
            raise MalformedLine(f"expected 6 fields, got {len(f)}", no, source)
        topic, q0, shot, rank_tok, score_tok, tag = f
        if q0 != "Q0" and q0 != "0":
            raise MalformedLine(f"second field must be Q0, got {q0!r}", no, source)
        try:
            rank, score = int(rank_tok), float(score_tok)
        except ValueError:
            rank = _int(rank_tok, no, "rank", source)
            score = _float(score_tok, no, "score", source)
        if not isfinite(score):
            _float(score_tok, no, "score", source)
        if rank < 1:
            raise MalformedLine(f"rank {rank} is not positive", no, source)
        if tag != run_tag:
            if run_tag is not None:
                raise MalformedLine(f"run tag {tag!r} differs from {run_tag!r}", no, source)
            run_tag = tag
        shots = seen.get(topic)
        if shots is None:
            shots = seen[topic] = set()
            by_topic[topic] = []
        if shot in shots:
            raise DuplicateShot(topic, shot, no)
        shots.add(shot)
        by_topic[topic].append(RunEntry(shot, rank, score))
    if run_tag is None:
        raise MalformedLine("run contains no entries", source=source)

    entries = {}
    for topic, rows in by_topic.items():
        if len(rows) > max_depth:
            raise RankOverflow(topic, len(rows), max_depth)
        rows.sort(key=lambda e: e.rank)
        for i, e in enumerate(rows, start=1):
            if e.rank != i:
                raise NonContiguousRanks(topic, f"expected rank {i}, found {e.rank}")
        for prev, cur in zip(rows, rows[1:]):
            if cur.score > prev.score:
                raise ScoreOrderError(topic, cur.rank)
        entries[topic] = tuple(rows)
    return RankedRun(run_tag=run_tag, task=task, entries=entries,
                     training_type=training_type, novelty_flag=bool(novelty_flag),
                     elapsed_seconds=dict(elapsed_seconds or {}), team=team)


def serialize_run(run):
    out = []
    for topic, rows in run.entries.items():
        for e in rows:
            out.append(f"{topic} Q0 {e.shot_id} {e.rank} {_fmt(e.score)} {run.run_tag}\n")
    return "".join(out).encode("utf-8")


# --- stratified judgments ----------------------------------------------------

@dataclass(frozen=True)
class Stratum:
    stratum_id: str
    lo: int
    hi: int
    pool_size: int
    judged_count: int

    @property
    def rank_range(self):
        return (self.lo, self.hi)

    @property
    def sampling_rate(self):
        if self.pool_size == 0:
            return 1.0
        return self.judged_count / self.pool_size


@dataclass(frozen=True)
class TopicJudgments:
    strata: tuple  # tuple[Stratum, ...]
    judgments: dict  # shot_id -> (stratum_id, relevance); relevance in {1, 0, -1}

    def stratum(self, stratum_id):
        for s in self.strata:
            if s.stratum_id == stratum_id:
                return s
        raise KeyError(stratum_id)

    @cached_property
    def _relevant(self):
        return frozenset(shot for shot, (_, rel) in self.judgments.items() if rel == RELEVANT)

    def relevant(self):
        return self._relevant

    def n_judged(self):
        return sum(1 for _, rel in self.judgments.values() if rel != UNJUDGED)


@dataclass(frozen=True)
class StratifiedJudgments:
    topics: dict  # topic_id -> TopicJudgments

    def topic_ids(self):
        return sorted(self.topics, key=topic_key)


def parse_judgments(data, *, source=None):
    headers = {}  # topic -> {stratum_id: [lo, hi, pool, header_line]}
    order = {}
    rows = []
    for no, f, directive in _records(data, source, ("#stratum",)):
        if directive:
            if len(f) != 5:
                raise MalformedLine("#stratum needs: topic stratum lo hi pool_size", no, source)
            topic, sid = f[0], f[1]
            lo, hi, pool = (_int(t, no, "stratum field", source) for t in f[2:])
            if lo < 1 or lo > hi:
                raise MalformedLine(f"bad rank range {lo}-{hi}", no, source)
            if pool < 0:
                raise MalformedLine("pool_size is negative", no, source)
            strata = headers.setdefault(topic, {})
            if sid in strata:
                raise MalformedLine(f"stratum {sid!r} declared twice for topic {topic!r}", no, source)
            strata[sid] = [lo, hi, pool, no]
            order.setdefault(topic, []).append(sid)
            continue
        if len(f) != 4:
            raise MalformedLine(f"expected 4 fields, got {len(f)}", no, source)
        rows.append((no, f))

    judged = {t: {} for t in headers}
    counts = {}
    listed = {}
    for no, (topic, sid, shot, rel_tok) in rows:
        if topic not in headers or sid not in headers[topic]:
            raise UnknownStratum(f"stratum {sid!r} of topic {topic!r} has no #stratum header", no, source)
        if rel_tok not in ("0", "1", "-1"):
            raise MalformedLine(f"relevance must be 1, 0 or -1 (binary), got {rel_tok!r}", no, source)
        rel = int(rel_tok)
        if shot in judged[topic]:
            raise ShotJudgedTwice(topic, shot, no)
        judged[topic][shot] = (sid, rel)
        listed[(topic, sid)] = listed.get((topic, sid), 0) + 1
        if rel != UNJUDGED:
            counts[(topic, sid)] = counts.get((topic, sid), 0) + 1

    topics = {}
    for topic, strata in headers.items():
        if not any(rel != UNJUDGED for _, rel in judged[topic].values()):
            raise EmptyTopic(f"topic {topic!r} has no judged shots", source=source)
        built = []
        for sid in order[topic]:
            lo, hi, pool, hno = strata[sid]
            n = counts.get((topic, sid), 0)
            if listed.get((topic, sid), 0) > pool:
                raise MalformedLine(f"stratum {sid!r} lists more shots than pool_size {pool}", hno, source)
            if pool > 0 and n == 0:
                raise MalformedLine(f"stratum {sid!r} of topic {topic!r} has no judged shots", hno, source)
            built.append(Stratum(sid, lo, hi, pool, n))
        topics[topic] = TopicJudgments(tuple(built), judged[topic])
    return StratifiedJudgments(topics)


def serialize_judgments(qrels):
    out = []
    for topic, tj in qrels.topics.items():
        for s in tj.strata:
            out.append(f"#stratum {topic} {s.stratum_id} {s.lo} {s.hi} {s.pool_size}\n")
        for shot, (sid, rel) in tj.judgments.items():
            out.append(f"{topic} {sid} {shot} {rel}\n")
    return "".join(out).encode("utf-8")


# --- activity instances ------------------------------------------------------

class VideoMeta(NamedTuple):
    n_frames: int
    frame_rate: float


class ActivityInstance(NamedTuple):
    activity: str
    file_id: str
    begin: int
    end: int
    conf: float | None = None


@dataclass(frozen=True)
class ActivityInstanceSet:
    kind: str  # "reference" | "system"
    instances: tuple
    video_meta: dict  # file_id -> VideoMeta

    def activities(self):
        return sorted({i.activity for i in self.instances})

    def for_activity(self, activity):
        return ActivityInstanceSet(
            self.kind, tuple(i for i in self.instances if i.activity == activity), self.video_meta)

    def total_minutes(self):
        return sum(m.n_frames / m.frame_rate for m in self.video_meta.values()) / 60.0


def parse_activity_set(data, kind, *, source=None):
    if kind not in ("reference", "system"):
        raise ValueError(f"kind must be 'reference' or 'system', got {kind!r}")
    meta = {}
    rows = []
    for no, f, directive in _records(data, source, ("#video",)):
        if directive:
            if len(f) != 3:
                raise MalformedLine("#video needs: file_id n_frames frame_rate", no, source)
            n = _int(f[1], no, "n_frames", source)
            fps = _float(f[2], no, "frame_rate", source)
            if n < 1 or fps <= 0:
                raise MalformedLine("n_frames and frame_rate must be positive", no, source)
            if f[0] in meta:
                raise MalformedLine(f"video {f[0]!r} declared twice", no, source)
            meta[f[0]] = VideoMeta(n, fps)
        else:
            rows.append((no, f))

    instances = []
    for no, f in rows:
        if len(f) not in (5, 6):
            raise MalformedLine(f"expected 5 or 6 fields, got {len(f)}", no, source)
        if f[0] != kind:
            raise MalformedLine(f"record kind {f[0]!r} in a {kind} set", no, source)
        activity, file_id = f[1], f[2]
        begin = _int(f[3], no, "begin frame", source)
        end = _int(f[4], no, "end frame", source)
        if file_id not in meta:
            raise MalformedLine(f"file {file_id!r} has no #video header", no, source)
        if not 1 <= begin <= end <= meta[file_id].n_frames:
            raise FrameSpanOutOfBounds(
                f"span {begin}-{end} outside 1..{meta[file_id].n_frames} of {file_id!r}", no, source)
        conf = None
        if len(f) == 6:
            if kind == "reference":
                raise UnexpectedConfidence("reference instance carries a confidence", no, source)
            conf = _float(f[5], no, "presence confidence", source)
            if not 0.0 <= conf <= 1.0:
                raise MalformedLine(f"presence confidence {conf} outside [0, 1]", no, source)
        elif kind == "system":
            raise MissingConfidence("system instance without presence confidence", no, source)
        instances.append(ActivityInstance(activity, file_id, begin, end, conf))
    return ActivityInstanceSet(kind, tuple(instances), meta)


def serialize_activity_set(aset):
    out = [f"#video {fid} {m.n_frames} {_fmt(m.frame_rate)}\n" for fid, m in aset.video_meta.items()]
    for i in aset.instances:
        tail = "" if i.conf is None else f" {_fmt(i.conf)}"
        out.append(f"{aset.kind} {i.activity} {i.file_id} {i.begin} {i.end}{tail}\n")
    return "".join(out).encode("utf-8")


# --- caption matching --------------------------------------------------------

@dataclass(frozen=True)
class CaptionRankSubmission:
    sets: dict  # set_id -> {video_id: tuple[caption_id, ...]}


def parse_caption_ranks(data, *, source=None):
    raw = {}
    for no, f, _ in _records(data, source):
        if len(f) != 4:
            raise MalformedLine(f"expected 4 fields, got {len(f)}", no, source)
        set_id, video, rank_tok, caption = f
        if set_id not in CAPTION_SETS:
            raise MalformedLine(f"set id {set_id!r} not in A..E", no, source)
        rank = _int(rank_tok, no, "rank", source)
        slot = raw.setdefault(set_id, {}).setdefault(video, {})
        if caption in slot.values():
            raise DuplicateCaption(f"caption {caption!r} listed twice for video {video!r} in set {set_id}",
                                   no, source)
        if rank in slot:
            raise MalformedLine(f"rank {rank} repeated for video {video!r}", no, source)
        slot[rank] = caption
    sets = {}
    for set_id, videos in raw.items():
        sets[set_id] = {}
        for video, ranks in videos.items():
            if sorted(ranks) != list(range(1, len(ranks) + 1)):
                raise NonContiguousRanks(f"{set_id}/{video}")
            sets[set_id][video] = tuple(ranks[r] for r in range(1, len(ranks) + 1))
    return CaptionRankSubmission(sets)


def serialize_caption_ranks(sub):
    out = []
    for set_id, videos in sub.sets.items():
        for video, caps in videos.items():
            out.extend(f"{set_id} {video} {r} {c}\n" for r, c in enumerate(caps, start=1))
    return "".join(out).encode("utf-8")


def parse_caption_truth(data, *, source=None):
    """Return ``{set_id: {video_id: caption_id}}``."""
    truth = {}
    for no, f, _ in _records(data, source):
        if len(f) != 3:
            raise MalformedLine(f"expected 3 fields, got {len(f)}", no, source)
        set_id, video, caption = f
        if set_id not in CAPTION_SETS:
            raise MalformedLine(f"set id {set_id!r} not in A..E", no, source)
        videos = truth.setdefault(set_id, {})
        if video in videos:
            raise MalformedLine(f"video {video!r} has two correct captions in set {set_id}", no, source)
        videos[video] = caption
    return truth


# --- direct assessment -------------------------------------------------------

class DaRating(NamedTuple):
    worker_id: str
    system_id: str
    video_id: str
    rating: float
    polluted: bool


@dataclass(frozen=True)
class DaRatingLog:
    ratings: tuple


def parse_da_log(data, *, source=None):
    ratings = []
    for no, f, _ in _records(data, source):
        if len(f) != 5:
            raise MalformedLine(f"expected 5 fields, got {len(f)}", no, source)
        rating = _float(f[3], no, "rating", source)
        if not 0.0 <= rating <= 100.0:
            raise RatingOutOfRange(f"rating {rating} outside [0, 100]", no, source)
        if f[4] not in ("0", "1"):
            raise MalformedLine(f"polluted flag must be 0 or 1, got {f[4]!r}", no, source)
        ratings.append(DaRating(f[0], f[1], f[2], rating, f[4] == "1"))
    return DaRatingLog(tuple(ratings))


def serialize_da_log(log):
    return "".join(
        f"{r.worker_id} {r.system_id} {r.video_id} {_fmt(r.rating)} {int(r.polluted)}\n"
        for r in log.ratings
    ).encode("utf-8")
