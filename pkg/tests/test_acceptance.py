"""Acceptance criteria, one test each, at their stated tolerances and time budgets.

Every criterion prints a single ``[PASS]``/``[FAIL]`` line; the lines are
repeated in the pytest terminal summary. Run directly with
``python3 tests/test_acceptance.py`` for the lines alone.
"""

import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from vidmeter import actev, cli, pooling, retrieval, stats
from vidmeter.io import (
    ActivityInstance,
    CaptionRankSubmission,
    DaRating,
    DaRatingLog,
    VideoMeta,
)
from vidmeter.synth import generate_adhoc, write_adhoc

from conftest import full_judgments, make_run
from oracles import ap_oracle, best_matching, signflip_oracle

RESULTS = []

# Integer columns and printed percentages of the instance search judging table:
# topic, total, unique, unique%, depth, judged, judged%, relevant, relevant%
INS_TABLE = """\
9249 27122 7343 27.07 520 4360 59.38 439 10.07
9250 27225 8100 29.75 520 4827 59.59 367 7.60
9251 27029 7324 27.10 520 4178 57.05 241 5.77
9252 27228 7225 26.54 520 4332 59.96 352 8.13
9253 27031 7144 26.43 520 4086 57.19 575 14.07
9254 27092 7615 28.11 520 4461 58.58 524 11.75
9255 27278 8835 32.39 520 5153 58.32 275 5.34
9256 27220 9359 34.38 520 5309 56.73 250 4.71
9257 27073 8456 31.23 520 4979 58.88 178 3.58
9258 27418 8169 29.79 520 4894 59.91 41 0.84
9259 27344 8483 31.02 520 5322 62.74 91 1.71
9260 27212 7102 26.10 520 4350 61.25 56 1.29
9261 27162 6627 24.40 520 4185 63.15 234 5.59
9262 27543 8174 29.68 520 4766 58.31 229 4.80
9263 28000 9524 34.01 520 5801 60.91 46 0.79
9264 28000 7964 28.44 520 4895 61.46 91 1.86
9265 27759 7471 26.91 520 4677 62.60 196 4.19
9266 27964 7627 27.27 520 4565 59.85 499 10.93
9267 27122 7701 28.39 520 4697 60.99 35 0.75
9268 27140 8661 31.91 520 4924 56.85 39 0.79
9269 25085 8122 32.38 520 4505 55.47 139 3.09
9270 25070 7454 29.73 520 4543 60.95 273 6.01
9271 25040 9929 39.65 520 5478 55.17 101 1.84
9272 26000 9073 34.90 520 5268 58.06 115 2.18
9273 25905 8515 32.87 520 4816 56.56 139 2.89
9274 25167 6410 25.47 520 3847 60.02 487 12.66
9275 25641 7192 28.05 520 4550 63.28 471 10.35
9276 25940 8995 34.68 520 4905 54.53 29 0.59
9277 25068 7749 30.91 520 4589 59.22 40 0.87
9278 25059 7242 28.90 520 4337 59.89 40 0.92
"""


def record(n, title, ok, elapsed, budget, detail=""):
    ok = bool(ok) and elapsed < budget
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {title} ({elapsed:.2f}s / {budget:g}s){' - ' + detail if detail else ''}"
    RESULTS.append(line)
    print(line, flush=True)
    return ok


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


# 1 ---------------------------------------------------------------------------

def test_c01_novelty_weight():
    with Timer() as t:
        w = retrieval.novelty_weight(1, 47)
    ok = abs(w - 0.9787) <= 0.0005 and abs(w - 0.978) < 0.001
    assert record(1, "novelty weight 1 - 1/47", ok, t.elapsed, 1.0, f"w={w:.6f}")


# 2 ---------------------------------------------------------------------------

def test_c02_judging_stats_table():
    mismatches = []
    with Timer() as t:
        for line in INS_TABLE.splitlines():
            f = line.split()
            topic, total, unique, depth, judged, relevant = f[0], int(f[1]), int(f[2]), int(f[4]), int(f[5]), int(f[7])
            cells = pooling.pool_stats_row(topic, total, unique, depth, judged, relevant).cells()
            for col in (3, 6, 8):
                if cells[col] != f[col]:
                    mismatches.append(f"{topic} col {col}: computed {cells[col]} printed {f[col]}")
    n_cells = 3 * len(INS_TABLE.splitlines())
    assert record(2, "judging statistics percentages (30 rows)", not mismatches, t.elapsed, 1.0,
                  f"{n_cells - len(mismatches)}/{n_cells} cells match" + ("; " + "; ".join(mismatches) if mismatches else "")), mismatches


# 3 ---------------------------------------------------------------------------

def test_c03_xinfap_degeneracy():
    rng = np.random.default_rng(2019)
    worst = 0.0
    with Timer() as t:
        for _ in range(100):
            shots = [f"s{k:04d}" for k in range(1000)]
            rel = set(rng.choice(shots, size=int(rng.integers(20, 301)), replace=False))
            ranked = list(rng.permutation(shots))
            tj = full_judgments({"1": (shots, rel)}).topics["1"]
            assert all(s.sampling_rate == 1.0 for s in tj.strata)
            x = retrieval.extended_inferred_ap(ranked, tj).value
            worst = max(worst, abs(x - retrieval.average_precision(ranked, rel)))
    assert record(3, "xinfAP equals AP at sampling rate 1.0", worst <= 1e-6, t.elapsed, 5.0,
                  f"max |diff|={worst:.2e}")


# 4 ---------------------------------------------------------------------------

def test_c04_xinfap_unbiased():
    rng = np.random.default_rng(4)
    shots = [f"s{k:04d}" for k in range(1000)]
    rel = set(rng.choice(shots, size=50, replace=False))
    ranked = list(rng.permutation(shots))
    run = make_run("r", {"1": ranked})
    true_ap = retrieval.average_precision(ranked, rel)
    vals = []
    with Timer() as t:
        base = pooling.build_pool([run], pooling.PoolPlan(pooling.AVS_PLAN, 0))
        for seed in range(10000):
            plan = pooling.PoolPlan(pooling.AVS_PLAN, seed)
            pool = pooling.Pool(plan, base.topics)
            q = pooling.judgments_from_sample(pool, pooling.sample_pool(pool), lambda _t, s: s in rel)
            vals.append(retrieval.extended_inferred_ap(ranked, q.topics["1"]).value)
    mean = float(np.mean(vals))
    assert record(4, "xinfAP mean over 10000 stratified re-samples", abs(mean - true_ap) <= 0.02, t.elapsed,
                  60.0, f"true AP={true_ap:.5f} mean xinfAP={mean:.5f}")


# 5 ---------------------------------------------------------------------------

def test_c05_ap_brute_force():
    rng = np.random.default_rng(5)
    worst = 0.0
    with Timer() as t:
        for _ in range(1000):
            n = int(rng.integers(1, 51))
            ranked = [f"s{k}" for k in range(n)]
            rel = {s for s in ranked if rng.random() < 0.4} | {f"m{k}" for k in range(int(rng.integers(0, 3)))}
            if not rel:
                rel = {ranked[0]}
            got = retrieval.average_precision(ranked, rel)
            worst = max(worst, abs(Fraction(got) - ap_oracle(ranked, rel)))
    assert record(5, "AP equals prefix-precision oracle", worst <= Fraction(1, 10**12), t.elapsed, 5.0,
                  f"max |diff|={float(worst):.1e}")


# 6 ---------------------------------------------------------------------------

def test_c06_alignment_optimal():
    rng = np.random.default_rng(6)
    cases = bad = 0
    with Timer() as t:
        for n_ref in range(7):
            for n_sys in range(7):
                for _ in range(12):
                    refs, syss = [], []
                    for _k in range(n_ref):
                        b = int(rng.integers(1, 40))
                        refs.append(ActivityInstance("A", "f", b, int(rng.integers(b, b + 15))))
                    for _k in range(n_sys):
                        b = int(rng.integers(1, 40))
                        syss.append(ActivityInstance("A", "f", b, int(rng.integers(b, b + 15)),
                                                     float(rng.integers(0, 11)) / 10))
                    al = actev.align_instances(refs, syss)
                    n_best, _ = best_matching(refs, syss, actev.DEFAULT_THETA)
                    if (al.n_cd, al.n_md, al.n_fa) != (n_best, n_ref - n_best, n_sys - n_best):
                        bad += 1
                    cases += 1
    assert record(6, "alignment equals exhaustive optimum", bad == 0 and cases >= 500, t.elapsed, 30.0,
                  f"{cases} cases, {bad} mismatches")


# 7 ---------------------------------------------------------------------------

def test_c07_tfa_hand_cases():
    with Timer() as t:
        meta = {"f1": VideoMeta(10, 30.0)}
        worked = actev.time_based_fa(actev.frame_histograms(
            [ActivityInstance("A", "f1", 3, 6)], [ActivityInstance("A", "f1", 5, 9, 1.0)], meta))
        inside = actev.time_based_fa(actev.frame_histograms(
            [ActivityInstance("A", "f1", 2, 8)], [ActivityInstance("A", "f1", 3, 6, 1.0)], meta))
    assert record(7, "Tfa worked example and S' <= R'", worked == 0.5 and inside == 0.0, t.elapsed, 1.0,
                  f"worked={worked} contained={inside}")


# 8 ---------------------------------------------------------------------------

def test_c08_naudc_and_det_monotonicity():
    rng = np.random.default_rng(8)
    meta = {"f1": VideoMeta(80, 30.0), "f2": VideoMeta(80, 30.0)}
    violations = 0
    with Timer() as t:
        refs = [ActivityInstance("A", "f1", 1, 10), ActivityInstance("A", "f2", 30, 40)]
        perfect = [r._replace(conf=0.9) for r in refs]
        far = [ActivityInstance("A", "f1", 50, 60, 0.7), ActivityInstance("A", "f2", 1, 5, 0.4)]
        p0 = actev.naudc(actev.det_curve(refs, perfect, meta), 0.2)
        p1 = actev.naudc(actev.det_curve(refs, far, meta), 0.2)
        step = actev.naudc(actev.DetCurve(((0.0, 1.0, 0.9), (0.1, 0.5, 0.5)), actev.TIME_BASED), 0.2)
        for _ in range(1000):
            rs, ss = [], []
            for _k in range(int(rng.integers(1, 5))):
                b = int(rng.integers(1, 70))
                rs.append(ActivityInstance("A", str(rng.choice(["f1", "f2"])), b, int(rng.integers(b, min(80, b + 15) + 1))))
            for _k in range(int(rng.integers(0, 9))):
                b = int(rng.integers(1, 70))
                ss.append(ActivityInstance("A", str(rng.choice(["f1", "f2"])), b, int(rng.integers(b, min(80, b + 15) + 1)),
                                           float(rng.integers(0, 11)) / 10))
            for axis in (actev.TIME_BASED, actev.RATE_BASED):
                pts = sorted(actev.det_curve(rs, ss, meta, axis).points, key=lambda p: -p[2])
                fa, pm = [p[0] for p in pts], [p[1] for p in pts]
                if any(a > b for a, b in zip(fa, fa[1:])) or any(a < b for a, b in zip(pm, pm[1:])):
                    violations += 1
    ok = p0 == 0.0 and p1 == 1.0 and abs(step - 0.75) <= 1e-12 and violations == 0
    assert record(8, "nAUDC bounds, hand integral, DET monotonicity", ok, t.elapsed, 10.0,
                  f"perfect={p0} miss={p1} step={step!r} violations={violations}/2000 curves")


# 9 ---------------------------------------------------------------------------

def test_c09_randomization_exactness():
    rng = np.random.default_rng(9)
    worst_mc = worst_exact = 0.0
    with Timer() as t:
        for case in range(20):
            a, b = rng.random(10), rng.random(10)
            oracle = float(signflip_oracle(a, b))
            worst_exact = max(worst_exact, abs(stats.randomization_test(a, b, method="exact") - oracle))
            mc = stats.randomization_test(a, b, iterations=100000, seed=case, method="monte_carlo")
            worst_mc = max(worst_mc, abs(mc - oracle))
        same = stats.randomization_test([0.3, 0.1, 0.7], [0.3, 0.1, 0.7])
    ok = worst_mc <= 0.01 and worst_exact <= 1e-12 and same == 1.0
    assert record(9, "randomization test vs enumeration", ok, t.elapsed, 30.0,
                  f"max MC err={worst_mc:.4f} max exact err={worst_exact:.1e} identical p={same}")


# 10 --------------------------------------------------------------------------

def test_c10_mean_inverted_rank():
    rng = np.random.default_rng(10)
    with Timer() as t:
        caps = ("c1", "c2", "c3", "c4")
        first = retrieval.mean_inverted_rank(
            CaptionRankSubmission({"A": {"v1": caps, "v2": ("c2", "c1", "c3", "c4")}}),
            {"A": {"v1": "c1", "v2": "c2"}}).overall
        mixed = retrieval.mean_inverted_rank(
            CaptionRankSubmission({"A": {"v1": caps, "v2": caps, "v3": caps}}),
            {"A": {"v1": "c1", "v2": "c2", "v3": "c4"}}).overall
        videos = [f"v{k}" for k in range(30)]
        sub = {v: tuple(rng.permutation([f"c{j}" for j in range(8)])) for v in videos}
        truth = {v: f"c{int(rng.integers(0, 8))}" for v in videos}
        base = retrieval.mean_inverted_rank(CaptionRankSubmission({"A": sub}), {"A": truth}).overall
        drift = 0.0
        for _ in range(100):
            order = list(rng.permutation(videos))
            s2 = CaptionRankSubmission({"A": {v: sub[v] for v in order}})
            t2 = {"A": {v: truth[v] for v in reversed(order)}}
            drift = max(drift, abs(retrieval.mean_inverted_rank(s2, t2).overall - base))
    ok = first == 1.0 and abs(mixed - 0.5833) <= 1e-4 and drift == 0.0
    assert record(10, "mean inverted rank", ok, t.elapsed, 1.0,
                  f"all-first={first} ranks(1,2,4)={mixed:.4f} permutation drift={drift}")


# 11 --------------------------------------------------------------------------

def test_c11_da_standardization():
    rng = np.random.default_rng(11)
    drift = 0.0
    with Timer() as t:
        two = stats.da_standardize(DaRatingLog((DaRating("w", "s1", "v", 60.0, False),
                                                DaRating("w", "s2", "v", 40.0, False))))
        z = two.systems["s1"].z_mean
        for _ in range(100):
            ratings = [DaRating(f"w{w}", f"s{k % 4}", f"v{k}", float(rng.integers(0, 101)), False)
                       for w in range(5) for k in range(8)]
            log = DaRatingLog(tuple(ratings))
            aff = {f"w{w}": (float(rng.uniform(0.2, 0.9)), float(rng.uniform(0, 10))) for w in range(5)}
            moved = DaRatingLog(tuple(r._replace(rating=r.rating * aff[r.worker_id][0] + aff[r.worker_id][1])
                                      for r in ratings))
            a, b = stats.da_standardize(log), stats.da_standardize(moved)
            drift = max(drift, max(abs(a.systems[s].z_mean - b.systems[s].z_mean) for s in a.systems))
        tie = stats.da_worker_qc(DaRatingLog((DaRating("w", "s", "v1", 50.0, False),
                                              DaRating("w", "s", "v2", 50.0, True))))["w"].passed
    ok = z == 1.0 and drift <= 1e-9 and tie is False
    assert record(11, "DA z-scores, affine invariance, QC boundary", ok, t.elapsed, 5.0,
                  f"z={z} affine drift={drift:.1e} equal-means passes={tie}")


# 12 --------------------------------------------------------------------------

def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


def test_c12_scale_and_determinism(tmp_path):
    data = write_adhoc(generate_adhoc(n_runs=47, n_topics=30, depth=1000, seed=12), tmp_path / "data")
    args = ["adhoc", "--runs", str(data / "runs"), "--qrels", str(data / "qrels.txt"),
            "--run-meta", str(data / "run_meta.json")]
    with Timer() as t1:
        rc1 = cli.main(args + ["--out", str(tmp_path / "one"), "--threads", "1"])
    with Timer() as tn:
        rc4 = cli.main(args + ["--out", str(tmp_path / "four"), "--threads", "4"])
    one, four = _tree(tmp_path / "one"), _tree(tmp_path / "four")
    rows = one["per_topic.csv"].count(b"\n") - 2
    ok = rc1 == rc4 == 0 and one == four and rows == 47 * 30 * 7
    assert record(12, "47 runs x 30 topics x 1000 end to end, 1 vs 4 threads", ok, max(t1.elapsed, tn.elapsed),
                  10.0, f"1 thread {t1.elapsed:.2f}s, 4 threads {tn.elapsed:.2f}s, "
                        f"{len(one)} files byte-identical={one == four}")


if __name__ == "__main__":
    import sys
    import tempfile

    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_c")]
    failed = 0
    for fn in tests:
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
