from decimal import ROUND_HALF_UP, Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidmeter import pooling
from vidmeter.errors import EmptyRunList
from vidmeter.io import UNJUDGED, parse_judgments, serialize_judgments

from conftest import make_run

AVS = pooling.PoolPlan(pooling.AVS_PLAN, seed=7)


def pct_oracle(num, den):
    return float((Decimal(100 * num) / Decimal(den)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def test_single_run_single_stratum():
    plan = pooling.PoolPlan(((1, 250, 1.0),))
    pool = pooling.build_pool([make_run("r", {"1": [f"s{k}" for k in range(10)]})], plan)
    assert len(pool.topics["1"][0]) == 10


def test_union_of_two_runs():
    a = make_run("a", {"1": [f"s{k}" for k in range(10)]})
    b = make_run("b", {"1": [f"s{k}" for k in range(5, 15)]})
    pool = pooling.build_pool([a, b], pooling.PoolPlan(((1, 250, 1.0),)))
    assert len(pool.topics["1"][0]) == 15


def test_best_rank_decides_stratum():
    a_shots = [f"a{k}" for k in range(199)] + ["x"] + [f"a{k}" for k in range(199, 300)]
    b_shots = [f"b{k}" for k in range(299)] + ["x"] + [f"b{k}" for k in range(299, 400)]
    a, b = make_run("a", {"1": a_shots}), make_run("b", {"1": b_shots})
    assert a.shots("1").index("x") + 1 == 200 and b.shots("1").index("x") + 1 == 300
    pool = pooling.build_pool([a, b], AVS)
    assert "x" in pool.topics["1"][0] and "x" not in pool.topics["1"][1]
    # every shot appears in exactly one stratum
    s1, s2 = map(set, pool.topics["1"])
    assert not s1 & s2


def test_shots_beyond_last_stratum_are_not_pooled():
    plan = pooling.PoolPlan(((1, 5, 1.0),))
    pool = pooling.build_pool([make_run("r", {"1": [f"s{k}" for k in range(8)]})], plan)
    assert len(pool.topics["1"][0]) == 5


def test_empty_run_list():
    with pytest.raises(EmptyRunList):
        pooling.build_pool([], AVS)


@pytest.mark.parametrize("spec", [(), ((1, 10, 1.0), (5, 20, 0.5)), ((1, 10, 0.0),), ((1, 10, 1.5),)])
def test_bad_plans(spec):
    with pytest.raises(ValueError):
        pooling.PoolPlan(spec)


def test_sample_sizes():
    assert pooling.sample_size(1.0, 40) == 40
    assert pooling.sample_size(0.111, 900) == 100
    assert pooling.sample_size(0.1, 30) == 3


def _pool_of(n, rate, seed):
    plan = pooling.PoolPlan(((1, 1000, rate),), seed)
    return pooling.build_pool([make_run("r", {"9": [f"s{k:03d}" for k in range(n)]})], plan)


def test_sampling_is_reproducible_and_seed_dependent():
    p = _pool_of(900, 0.111, 3)
    a, b = pooling.sample_pool(p), pooling.sample_pool(p)
    assert a == b
    assert len(a["9"][0]) == 100
    assert set(a["9"][0]) <= set(p.topics["9"][0])
    p0, p1 = _pool_of(100, 0.5, 0), _pool_of(100, 0.5, 1)
    assert pooling.sample_pool(p0) != pooling.sample_pool(p1)


def test_sampling_is_roughly_uniform():
    # each of 20 shots sampled at rate 0.25 over 400 seeds: expected 100 hits
    hits = np.zeros(20)
    for seed in range(400):
        p = _pool_of(20, 0.25, seed)
        for s in pooling.sample_pool(p)["9"][0]:
            hits[int(s[1:])] += 1
    assert hits.sum() == 400 * 5
    assert np.all(np.abs(hits - 100) < 40)


def test_judgments_from_sample_marks_unsampled():
    p = _pool_of(30, 0.5, 2)
    sample = pooling.sample_pool(p)
    q = pooling.judgments_from_sample(p, sample, lambda t, s: int(s[1:]) % 3 == 0)
    tj = q.topics["9"]
    picked = set(sample["9"][0])
    assert tj.strata[0].pool_size == 30 and tj.strata[0].judged_count == 15
    for shot, (_, rel) in tj.judgments.items():
        if shot in picked:
            assert rel == int(int(shot[1:]) % 3 == 0)
        else:
            assert rel == UNJUDGED
    assert parse_judgments(serialize_judgments(q)) == q


def test_serialize_pool_lines():
    p = _pool_of(4, 1.0, 0)
    assert pooling.serialize_pool(p).decode().splitlines() == [f"9 1 s00{k}" for k in range(4)]


def test_rejudge_candidates():
    runs = [make_run(f"r{i}", {"1": ["common"] + [f"u{i}_{k}" for k in range(5)]}) for i in range(10)]
    assert pooling.rejudge_candidates(runs) == {"1": ["common"]}
    assert pooling.rejudge_candidates(runs[:9]) == {"1": []}


# --- judging statistics ------------------------------------------------------

@pytest.mark.parametrize("num, den, expect", [(7343, 27122, 27.07), (439, 4360, 10.07),
                                              (4827, 8100, 59.59), (1, 8, 12.5), (0, 5, 0.0)])
def test_pct_examples(num, den, expect):
    assert pooling.pct_half_up(num, den) == expect


@settings(max_examples=500, deadline=None)
@given(st.integers(1, 10**6).flatmap(lambda d: st.tuples(st.integers(0, d), st.just(d))))
def test_pct_matches_decimal_oracle(nd):
    num, den = nd
    assert pooling.pct_half_up(num, den) == pct_oracle(num, den)


def test_pct_exact_halves_round_up():
    # 1/800 = 0.125 % exactly -> 0.13 under half-up
    assert pooling.pct_half_up(1, 800) == 0.13
    assert pooling.pct_half_up(0, 0) == 0.0


def test_pool_stats_row_cells():
    row = pooling.pool_stats_row("9249", 27122, 7343, 520, 4360, 439)
    assert row.cells() == ("9249", "27122", "7343", "27.07", "520", "4360", "59.38", "439", "10.07")
    with pytest.raises(ValueError):
        pooling.pool_stats_row("x", 10, 11, 1, 1, 1)


def test_judging_stats_on_constructed_pool():
    a = make_run("a", {"1": ["s1", "s2", "s3", "s4"]})
    b = make_run("b", {"1": ["s3", "s4", "s5", "s6"]})
    plan = pooling.PoolPlan(((1, 2, 1.0), (3, 4, 0.5)), seed=1)
    pool = pooling.build_pool([a, b], plan)
    sample = pooling.sample_pool(pool)
    q = pooling.judgments_from_sample(pool, sample, lambda t, s: s in {"s1", "s3"})
    (row,) = pooling.judging_stats([a, b], q)
    n_judged = sum(len(x) for x in sample["1"])
    assert (row.total_submitted, row.unique_submitted, row.max_depth_pooled) == (8, 6, 4)
    assert row.number_judged == n_judged
    assert row.number_relevant == len({"s1", "s3"} & {s for x in sample["1"] for s in x})
    text = pooling.stats_csv([row])
    assert text.splitlines()[0] == ",".join(pooling.STATS_COLUMNS)
