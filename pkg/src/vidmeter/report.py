"""Scoring pipelines behind the command line.

Each ``cmd_*`` function takes an :class:`~vidmeter.config.EvalConfig` and
returns a :class:`MetricReport` holding every output file as text, so the
bytes written to disk depend only on inputs and configuration.
"""

from __future__ import annotations

import csv
import gc
import io
import json
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, actev, pooling, retrieval, stats
from .config import format_strata
from .errors import ConfigError, NoNonReferenceDuration, NoTrueInstances
from .io import (
    parse_activity_set,
    parse_caption_ranks,
    parse_caption_truth,
    parse_da_log,
    parse_judgments,
    parse_run,
    topic_key,
)


def f4(x):
    return f"{x:.4f}"


def f2(x):
    return f"{x:.2f}"


@dataclass
class MetricReport:
    header: dict
    files: dict = field(default_factory=dict)  # relative name -> text
    warnings: list = field(default_factory=list)

    def header_line(self):
        return f"# vidmeter {self.header['version']} config={self.header['config_hash']} seed={self.header['seed']}\n"

    def add_csv(self, name, columns, rows):
        buf = io.StringIO()
        buf.write(self.header_line())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
        self.files[name] = buf.getvalue()

    def add_text(self, name, text, header=True):
        self.files[name] = (self.header_line() if header else "") + text

    def add_json(self, name, payload):
        doc = {"header": self.header, **payload, "warnings": self.warnings}
        self.files[name] = json.dumps(doc, indent=1, sort_keys=False, allow_nan=False) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        for name in sorted(self.files):
            path = out / name
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(self.files[name])
        return out


def new_report(cfg):
    return MetricReport({"tool": "vidmeter", "version": __version__, "task": cfg.task,
                         "config_hash": cfg.digest(), "seed": int(cfg.seed),
                         "config": cfg.as_dict()})


def _map(cfg, fn, items):
    with ThreadPoolExecutor(stats.thread_count(cfg.threads)) as pool:
        return list(pool.map(fn, items))


# --- loading -----------------------------------------------------------------

def expand_paths(paths):
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.is_file()))
        elif p.exists():
            out.append(p)
        else:
            raise ConfigError(f"no such file or directory: {p}")
    if not out:
        raise ConfigError("no input files given")
    return out


def _need(path, what):
    if not path:
        raise ConfigError(f"missing required input: {what}")
    if not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return Path(path)


@contextmanager
def _bulk_load():
    # parsed runs are millions of acyclic tuples; generational GC would rescan them repeatedly
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


def load_run_meta(path):
    if not path:
        return {}
    return json.loads(_need(path, "--run-meta").read_text(encoding="utf-8"))


def load_runs(cfg, task):
    meta = load_run_meta(cfg.run_meta)
    runs = []
    for path in expand_paths(cfg.runs):
        with _bulk_load():
            run = parse_run(path.read_bytes(), task, source=str(path))
        m = meta.get(run.run_tag, {})
        run = replace(run, team=m.get("team"), training_type=m.get("training_type", "other"),
                      novelty_flag=bool(m.get("novelty", False)),
                      elapsed_seconds={str(k): float(v) for k, v in m.get("elapsed_seconds", {}).items()})
        runs.append(run)
    tags = [r.run_tag for r in runs]
    if len(set(tags)) != len(tags):
        raise ConfigError("two run files share a run tag")
    return sorted(runs, key=lambda r: r.run_tag)


def load_judgments(cfg):
    path = _need(cfg.qrels, "--qrels")
    with _bulk_load():
        return parse_judgments(path.read_bytes(), source=str(path))


def _mean_elapsed(run):
    vals = list(run.elapsed_seconds.values())
    return float(np.mean(vals)) if vals else None


def _difficulty_rows(report):
    return [(d.topic_id, d.runs_above_threshold, d.n_runs, d.label, f4(d.threshold)) for d in report]


# --- ad-hoc search -----------------------------------------------------------

def cmd_score_adhoc(cfg):
    rep = new_report(cfg)
    qrels = load_judgments(cfg)
    runs = load_runs(cfg, "adhoc")
    topics = qrels.topic_ids()
    cutoffs = cfg.cutoff_list()

    def score(run):
        per_topic = {}
        for t in topics:
            ts, pr = retrieval.inferred_measures(run.shots(t), qrels.topics[t], cutoffs, cfg.epsilon, t)
            if t not in run.entries:
                ts = replace(ts, flags=ts.flags + (retrieval.MISSING_TOPIC,))
            per_topic[t] = (ts, pr)
        return per_topic

    scored = dict(zip((r.run_tag for r in runs), _map(cfg, score, runs)))
    novelty = retrieval.novelty_scores(runs, qrels, topics)
    uo = retrieval.unique_overlap_analysis(runs, qrels)
    overlap = retrieval.pairwise_overlap(runs)
    xinf = {tag: {t: ts.value for t, (ts, _) in pt.items()} for tag, pt in scored.items()}
    difficulty = retrieval.classify_topics(xinf, cfg.threshold())

    detail, summary, scatter = [], [], []
    aggregate = {}
    for run in runs:
        pt = scored[run.run_tag]
        mean_x = float(np.mean([ts.value for ts, _ in pt.values()]))
        agg = {"mean_xinfAP": round(mean_x, 4), "novelty": round(novelty[run.run_tag].value, 4)}
        for t in topics:
            ts, pr = pt[t]
            detail.append((run.run_tag, t, "xinfAP", f4(ts.value)))
            for k in cutoffs:
                detail.append((run.run_tag, t, f"infP@{k}", f4(pr[k][0])))
                detail.append((run.run_tag, t, f"infR@{k}", f4(pr[k][1])))
            rep.warnings.extend(f"{run.run_tag}:{t}:{f}" for f in ts.flags)
        for k in cutoffs:
            agg[f"infP@{k}"] = round(float(np.mean([pt[t][1][k][0] for t in topics])), 4)
        aggregate[run.run_tag] = agg
        elapsed = _mean_elapsed(run)
        summary.append((run.run_tag, run.team_id, run.training_type, int(run.novelty_flag),
                        f4(mean_x), f4(novelty[run.run_tag].value),
                        "" if elapsed is None else f2(elapsed)))
        if elapsed is not None:
            scatter.append((run.run_tag, f2(elapsed), f4(mean_x)))

    rep.add_csv("summary.csv", ("run_tag", "team", "training_type", "novelty_flag", "mean_xinfAP",
                                "novelty_score", "mean_elapsed_seconds"), summary)
    rep.add_csv("per_topic.csv", ("run_tag", "topic", "metric", "value"), detail)
    rep.add_csv("novelty.csv", ("run_tag", "topic", "novelty_sum"),
                [(tag, t, f4(v)) for tag, ns in novelty.items() for t, v in ns.per_topic.items()])
    rep.add_csv("difficulty.csv", ("topic", "runs_above_threshold", "n_runs", "label", "threshold"),
                _difficulty_rows(difficulty))
    rep.add_csv("unique_overlap.csv", ("topic", "unique_relevant", "overlapping_relevant"),
                [(t, u, o) for t, (u, o) in uo.per_topic.items()])
    rep.add_csv("team_unique.csv", ("team", "unique_relevant"), sorted(uo.per_team.items()))
    rep.add_csv("run_overlap.csv", ("run_a", "run_b", "overlap_pct"),
                [(a.run_tag, b.run_tag, f2(overlap[i, j]))
                 for i, a in enumerate(runs) for j, b in enumerate(runs) if i < j])
    rep.add_csv("time_vs_score.csv", ("run_tag", "mean_elapsed_seconds", "mean_xinfAP"), scatter)
    if cfg.novelty_table:
        table = retrieval.novelty_weights(runs)
        rep.add_csv("novelty_weights.csv", ("topic", "shot", "N", "M", "weight"),
                    [(t, s, n, m, f4(w)) for t, s, n, m, w in table.rows()])
    off = overlap[~np.eye(len(runs), dtype=bool)]
    rep.add_json("report.json", {
        "runs": aggregate,
        "difficulty": [{"topic": d.topic_id, "runs_above": d.runs_above_threshold, "label": d.label}
                       for d in difficulty],
        "unique_relevant_total": sum(u for u, _ in uo.per_topic.values()),
        "overlapping_relevant_total": sum(o for _, o in uo.per_topic.values()),
        "run_overlap_pct": ({"mean": round(float(off.mean()), 2), "min": round(float(off.min()), 2),
                             "max": round(float(off.max()), 2)} if off.size else None),
    })
    return rep


# --- instance search ---------------------------------------------------------

def cmd_score_instance(cfg):
    rep = new_report(cfg)
    qrels = load_judgments(cfg)
    runs = load_runs(cfg, "instance")
    scores = _map(cfg, lambda r: retrieval.mean_average_precision(r, qrels), runs)
    detail, summary, scatter, aggregate = [], [], [], {}
    for run, rs in zip(runs, scores):
        detail.extend((run.run_tag, t, "AP", f4(ts.value)) for t, ts in rs.per_topic.items())
        rep.warnings.extend(f"{run.run_tag}:{f}" for f in rs.flags)
        elapsed = _mean_elapsed(run)
        summary.append((run.run_tag, run.team_id, run.training_type, f4(rs.value),
                        "" if elapsed is None else f2(elapsed)))
        if elapsed is not None:
            scatter.append((run.run_tag, f2(elapsed), f4(rs.value)))
        aggregate[run.run_tag] = {"MAP": round(rs.value, 4)}
    difficulty = retrieval.classify_topics(
        {rs.run_tag: {t: ts.value for t, ts in rs.per_topic.items()} for rs in scores}, cfg.threshold())
    stats_rows = pooling.judging_stats(runs, qrels)
    rep.add_csv("summary.csv", ("run_tag", "team", "training_type", "MAP", "mean_elapsed_seconds"), summary)
    rep.add_csv("per_topic.csv", ("run_tag", "topic", "metric", "value"), detail)
    rep.add_csv("judging_stats.csv", pooling.STATS_COLUMNS, [r.cells() for r in stats_rows])
    rep.add_csv("difficulty.csv", ("topic", "runs_above_threshold", "n_runs", "label", "threshold"),
                _difficulty_rows(difficulty))
    rep.add_csv("time_vs_score.csv", ("run_tag", "mean_elapsed_seconds", "MAP"), scatter)
    rep.add_json("report.json", {"runs": aggregate,
                                 "easy_topics": [d.topic_id for d in difficulty if d.label == "easy"],
                                 "hard_topics": [d.topic_id for d in difficulty if d.label == "hard"]})
    return rep


# --- activity detection ------------------------------------------------------

def cmd_score_actev(cfg):
    rep = new_report(cfg)
    ref_path = _need(cfg.ref, "--ref")
    reference = parse_activity_set(ref_path.read_bytes(), "reference", source=str(ref_path))
    systems = {}
    for path in expand_paths(cfg.sys):
        systems[path.stem] = parse_activity_set(path.read_bytes(), "system", source=str(path))
    activities = reference.activities()
    for name, s in systems.items():
        for extra in sorted(set(s.activities()) - set(activities)):
            rep.warnings.append(f"{name}:{extra}:no_reference_instances_excluded")

    def score(item):
        name, sysset = item
        out = {}
        for act in activities:
            try:
                out[act] = actev.score_activity(reference, sysset, act, cfg.theta, cfg.naudc_limit,
                                                cfg.rfa_point)
            except (NoTrueInstances, NoNonReferenceDuration) as exc:
                out[act] = exc
        return name, out

    results = dict(_map(cfg, score, sorted(systems.items())))
    rows, matrix = [], {}
    for name in sorted(results):
        matrix[name] = {}
        for act, sc in results[name].items():
            if isinstance(sc, Exception):
                rep.warnings.append(f"{name}:{act}:{type(sc).__name__}")
                continue
            matrix[name][act] = sc.naudc
            rows.append((name, act, sc.n_true, f4(sc.naudc), f4(sc.pr15)))
            rep.add_csv(f"det/{name}/{act}.time.csv", ("tau", "fa", "pmiss"),
                        [(repr(t), f"{fa:.6f}", f4(pm)) for fa, pm, t in sc.det_time.points])
            rep.add_csv(f"det/{name}/{act}.rate.csv", ("tau", "fa", "pmiss"),
                        [(repr(t), f"{fa:.6f}", f4(pm)) for fa, pm, t in sc.det_rate.points])
    rep.add_csv("naudc.csv", ("system", "activity", "n_true", "nAUDC", "PR.15"), rows)
    summary = {}
    if matrix and all(matrix.values()):
        ranking = actev.activity_ranking(matrix)
        systems_sorted = sorted(ranking.ranks, key=lambda s: (ranking.system_mean[s], s))
        rep.add_csv("system_summary.csv", ("system", "mean_nAUDC", "std_nAUDC", "mean_PR.15"),
                    [(s, f4(ranking.system_mean[s]), f4(ranking.system_std[s]),
                      f4(float(np.mean([results[s][a].pr15 for a in matrix[s]]))))
                     for s in systems_sorted])
        acts = sorted(ranking.avg_rank)
        rep.add_csv("activity_ranking.csv", ("activity", *systems_sorted, "AVG"),
                    [(a, *(ranking.ranks[s][a] for s in systems_sorted), f2(ranking.avg_rank[a]))
                     for a in acts])
        summary = {s: {"mean_nAUDC": round(ranking.system_mean[s], 4),
                       "std_nAUDC": round(ranking.system_std[s], 4)} for s in systems_sorted}
    rep.add_json("report.json", {"systems": summary, "activities": activities})
    return rep


# --- video to text -----------------------------------------------------------

def cmd_score_vtt(cfg):
    rep = new_report(cfg)
    truth_path = _need(cfg.truth, "--truth")
    truth = parse_caption_truth(truth_path.read_bytes(), source=str(truth_path))
    rows, overall = [], {}
    for path in expand_paths(cfg.runs):
        sub = parse_caption_ranks(path.read_bytes(), source=str(path))
        score = retrieval.mean_inverted_rank(sub, truth)
        rows.extend((path.stem, s, f4(v)) for s, v in score.per_set.items())
        rows.append((path.stem, "mean", f4(score.overall)))
        overall[path.stem] = round(score.overall, 4)
    rep.add_csv("mean_inverted_rank.csv", ("run", "set", "mean_inverted_rank"), rows)
    rep.add_json("report.json", {"runs": overall})
    return rep


def cmd_score_da(cfg):
    rep = new_report(cfg)
    path = _need(cfg.da_log, "--da-log")
    log = parse_da_log(path.read_bytes(), source=str(path))
    qc = stats.da_worker_qc(log)
    board = stats.da_standardize(log, qc)
    order = sorted(board.systems, key=lambda s: (-board.systems[s].z_mean, s))
    rep.add_csv("da_systems.csv", ("system", "raw_mean", "z_mean", "n_ratings"),
                [(s, f4(board.systems[s].raw_mean), f4(board.systems[s].z_mean),
                  board.systems[s].n_ratings) for s in order])
    rep.add_csv("da_workers.csv", ("worker", "mean", "std", "n_ratings", "passed_qc", "flags"),
                [(w, f4(s.mean), f4(s.std), s.n_ratings, int(s.passed_qc), ";".join(s.flags))
                 for w, s in board.workers.items()])
    rep.warnings.extend(f"worker:{w}:{f}" for w, s in board.workers.items() for f in s.flags)
    rep.add_json("report.json", {
        "std_convention": "population (divisor N)",
        "systems": {s: {"raw_mean": round(board.systems[s].raw_mean, 4),
                        "z_mean": round(board.systems[s].z_mean, 4)} for s in order},
        "workers_passed": sum(1 for s in board.workers.values() if s.passed_qc),
        "workers_total": len(board.workers),
    })
    return rep


# --- pooling, significance, correlation --------------------------------------

def cmd_pool(cfg):
    rep = new_report(cfg)
    runs = load_runs(cfg, "adhoc" if cfg.task == "adhoc" else "instance")
    plan = pooling.PoolPlan(cfg.strata_spec, int(cfg.seed))
    pool = pooling.build_pool(runs, plan)
    sample = pooling.sample_pool(pool)
    headers = []
    for t in pool.topic_ids():
        for sid, (lo, hi, _), shots in zip(plan.stratum_ids, plan.strata_spec, pool.topics[t]):
            headers.append(f"#stratum {t} {sid} {lo} {hi} {len(shots)}\n")
    rep.add_text("strata.txt", "".join(headers))
    rep.add_text("pool.txt", pooling.serialize_pool(pool).decode("utf-8"))
    rep.add_text("sample.txt", pooling.serialize_pool(pool, sample).decode("utf-8"))
    rejudge = pooling.rejudge_candidates(runs)
    rep.add_text("rejudge.txt", "".join(f"{t} {s}\n" for t, shots in rejudge.items() for s in shots))
    sizes = {t: {sid: [len(a), len(b)] for sid, a, b in zip(plan.stratum_ids, pool.topics[t], sample[t])}
             for t in pool.topic_ids()}
    if cfg.qrels:
        rows = pooling.judging_stats(runs, load_judgments(cfg))
        rep.add_csv("judging_stats.csv", pooling.STATS_COLUMNS, [r.cells() for r in rows])
    rep.add_json("report.json", {"strata": format_strata(plan.strata_spec),
                                 "pooled_and_sampled": sizes})
    return rep


def read_scores(path, metric=None):
    """Long-form ``run_tag,topic,metric,value`` CSV -> {metric: {run: {topic: value}}}."""
    path = _need(path, "--scores")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if not ln.startswith("#")]
    out = {}
    for row in csv.DictReader(lines):
        m = row["metric"]
        if metric is None or m == metric:
            out.setdefault(m, {}).setdefault(row["run_tag"], {})[row["topic"]] = float(row["value"])
    if not out:
        raise ConfigError(f"no scores for metric {metric!r} in {path}")
    return out


def cmd_significance(cfg):
    rep = new_report(cfg)
    by_metric = read_scores(cfg.scores, cfg.metric)
    if len(by_metric) > 1:
        raise ConfigError(f"--metric required; file holds {sorted(by_metric)}")
    (metric, scores), = by_metric.items()
    matrix = stats.significance_matrix(scores, cfg.alpha, cfg.iterations, int(cfg.seed), cfg.threads)
    groups = stats.significance_groups(matrix)
    rep.add_text("significance.csv", stats.matrix_csv(matrix))
    rep.add_text("layout.txt", stats.groups_layout(matrix, groups))
    rep.add_json("report.json", {"metric": metric, "alpha": cfg.alpha,
                                 "groups": [{"level": g.level, "symbol": g.symbol, "runs": list(g.runs)}
                                            for g in groups]})
    return rep


def cmd_correlate(cfg):
    rep = new_report(cfg)
    by_metric = read_scores(cfg.scores)
    keys = None
    for scores in by_metric.values():
        ks = {(r, t) for r, pt in scores.items() for t in pt}
        keys = ks if keys is None else keys & ks
    keys = sorted(keys, key=lambda k: (k[0], topic_key(k[1])))
    names = sorted(by_metric)
    vectors = {m: [by_metric[m][r][t] for r, t in keys] for m in names}
    names, r = stats.pearson_matrix(vectors)
    rep.add_csv("correlation.csv", ("metric", *names),
                [(a, *(f4(r[i, j]) for j in range(len(names)))) for i, a in enumerate(names)])
    rep.add_json("report.json", {"n_points": len(keys), "metrics": names})
    return rep


COMMANDS = {
    "adhoc": cmd_score_adhoc,
    "instance": cmd_score_instance,
    "actev": cmd_score_actev,
    "vtt_matching": cmd_score_vtt,
    "da": cmd_score_da,
}
