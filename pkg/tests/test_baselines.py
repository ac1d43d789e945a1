import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_partition, mp_energy, mp_log_marginal_posterior
from segwave.baselines import (CostModel, PenaltySpec, binseg, optimal_partition_bruteforce,
                               pelt, penalized_objective, pruning_bound, segment_cost)
from segwave.energy import build_prefix
from segwave.errors import DegenerateSegmentError, InvalidInputError


def _mixed_signal(rng, n):
    k = rng.integers(0, 4)
    cps = np.sort(rng.choice(np.arange(5, n - 5), size=k, replace=False))
    sd = np.ones(n)
    for c in cps:
        sd[c:] *= rng.choice([0.4, 2.5])
    return rng.standard_normal(n) * sd


def _oracle_cost(y):
    def cost(a, b):
        s = mp_energy(y, a, b)
        return 0.5 * (b - a) * math.log(s) - math.lgamma(0.5 * (b - a))
    return cost


def test_segment_cost_examples():
    p = build_prefix([1.0, -1.0])
    assert segment_cost(p, 0, 2) == pytest.approx(math.log(2), abs=1e-15)
    p = build_prefix([1.0, 0.0])
    assert segment_cost(p, 0, 2) == 0.0


def test_segment_cost_errors():
    p = build_prefix([0.0, 0.0, 1.0])
    with pytest.raises(DegenerateSegmentError):
        segment_cost(p, 0, 2)
    with pytest.raises(InvalidInputError):
        segment_cost(p, 2, 2)


def test_split_cost_matches_marginal_posterior():
    rng = np.random.default_rng(3)
    y = rng.standard_normal(50) * np.r_[np.ones(20), 2 * np.ones(30)]
    p = build_prefix(y)
    for t in (5, 20, 37):
        split = segment_cost(p, 0, t) + segment_cost(p, t, 50)
        assert split == pytest.approx(-mp_log_marginal_posterior(y, t), rel=1e-9)


def test_penalty_spec():
    assert PenaltySpec().per_changepoint(100) == pytest.approx(1.5 * math.log(100))
    assert PenaltySpec("bic").per_changepoint(100) == pytest.approx(math.log(100))
    assert PenaltySpec.manual(3.0).per_changepoint(7) == 3.0
    assert PenaltySpec().length_term and not PenaltySpec.manual(1).length_term
    with pytest.raises(InvalidInputError):
        PenaltySpec("manual")
    with pytest.raises(InvalidInputError):
        PenaltySpec.manual(-1)
    with pytest.raises(InvalidInputError):
        PenaltySpec("aic")


def test_tiny_exhaustive_example():
    p = build_prefix([1.0, -1.0, 10.0, -10.0])
    assert optimal_partition_bruteforce(p, PenaltySpec.manual(0.1), min_seg_len=2) == [2]
    assert pelt(p, PenaltySpec.manual(0.1), min_seg_len=2) == [2]


def test_tiny_example_unit_min_length_matches_enumeration():
    y = np.array([1.0, -1.0, 10.0, -10.0])
    p = build_prefix(y)
    want, _ = brute_force_partition(_oracle_cost(y), 4, 1, 0.1)
    assert want == [1, 2, 3]
    assert optimal_partition_bruteforce(p, PenaltySpec.manual(0.1), min_seg_len=1) == want
    assert pelt(p, PenaltySpec.manual(0.1), min_seg_len=1) == want


def test_huge_penalty_gives_no_changepoints():
    rng = np.random.default_rng(0)
    p = build_prefix(_mixed_signal(rng, 200))
    assert pelt(p, PenaltySpec.manual(1e12)) == []
    assert optimal_partition_bruteforce(p, PenaltySpec.manual(1e12)) == []


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("min_len", [2, 3])
def test_dp_matches_enumeration(seed, min_len):
    rng = np.random.default_rng(seed)
    y = _mixed_signal(rng, 14)
    pen = float(rng.choice([0.0, 0.5, 2.0, 1.5 * math.log(14)]))
    want, _ = brute_force_partition(_oracle_cost(y), 14, min_len, pen)
    p = build_prefix(y)
    assert optimal_partition_bruteforce(p, PenaltySpec.manual(pen), min_len) == want
    assert pelt(p, PenaltySpec.manual(pen), min_len) == want


@pytest.mark.parametrize("seed", range(6))
def test_mbic_matches_enumeration(seed):
    rng = np.random.default_rng(100 + seed)
    y = _mixed_signal(rng, 14)
    want, _ = brute_force_partition(_oracle_cost(y), 14, 2, 1.5 * math.log(14), length_term=True)
    assert pelt(build_prefix(y), PenaltySpec(), 2) == want


def test_pruning_bound_holds_on_random_splits():
    rng = np.random.default_rng(7)
    n = 5000
    y = rng.standard_normal(n) * np.where(rng.random(n) < 0.5, 1.0, 3.0)
    p = build_prefix(y)
    k = pruning_bound(n)
    for _ in range(2000):
        a, t, b = np.sort(rng.choice(n + 1, 3, replace=False))
        if t - a < 1 or b - t < 1:
            continue
        gain = segment_cost(p, a, t) + segment_cost(p, t, b) - segment_cost(p, a, b)
        assert gain <= k + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(20, 150), st.floats(0.0, 30.0))
def test_pelt_exact_property(seed, n, pen):
    rng = np.random.default_rng(seed)
    p = build_prefix(_mixed_signal(rng, n))
    spec = PenaltySpec.manual(pen)
    assert pelt(p, spec, 2) == optimal_partition_bruteforce(p, spec, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(20, 150))
def test_pelt_never_worse_than_binseg(seed, n):
    rng = np.random.default_rng(seed)
    p = build_prefix(_mixed_signal(rng, n))
    for spec in (PenaltySpec(), PenaltySpec.manual(2.0)):
        a = penalized_objective(p, pelt(p, spec, 2), spec)
        b = penalized_objective(p, binseg(p, spec, 2), spec)
        assert a <= b + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 20.0), st.floats(0.0, 20.0))
def test_penalty_monotonicity(seed, p1, p2):
    rng = np.random.default_rng(seed)
    p = build_prefix(_mixed_signal(rng, 120))
    lo, hi = sorted((p1, p2))
    assert len(pelt(p, PenaltySpec.manual(hi))) <= len(pelt(p, PenaltySpec.manual(lo)))


def test_binseg_single_change_agrees_with_pelt():
    rng = np.random.default_rng(11)
    y = rng.standard_normal(3000)
    y[1700:] *= 2.0
    p = build_prefix(y)
    assert binseg(p) == pelt(p)
    assert len(pelt(p)) == 1 and abs(pelt(p)[0] - 1700) < 60


def test_binseg_white_noise_empty():
    rng = np.random.default_rng(5)
    assert binseg(build_prefix(rng.standard_normal(4000))) == []


def test_binseg_cap():
    rng = np.random.default_rng(2)
    y = rng.standard_normal(4000) * np.repeat([1, 3, 1, 3], 1000)
    p = build_prefix(y)
    full = binseg(p)
    capped = binseg(p, max_changepoints=2)
    assert len(full) >= 3 and len(capped) == 2
    assert set(capped) <= set(full)


@pytest.mark.slow
def test_pelt_white_noise_null_rate():
    hits = 0
    for seed in range(100):
        y = np.random.default_rng(seed).standard_normal(10_000)
        hits += pelt(build_prefix(y)) == []
    assert hits >= 90


def test_bruteforce_refuses_long_input():
    with pytest.raises(InvalidInputError):
        optimal_partition_bruteforce(build_prefix(np.ones(6000)))


def test_short_signal_rejected():
    with pytest.raises(InvalidInputError):
        pelt(build_prefix([1.0, 2.0, 3.0]), min_seg_len=2)


def test_cost_model_vector_matches_scalar():
    rng = np.random.default_rng(4)
    p = build_prefix(rng.standard_normal(100))
    m = CostModel(p, length_term=True)
    ts = np.arange(5, 90)
    vec = m.costs_to(3, ts)
    for t, v in zip(ts, vec):
        assert v == pytest.approx(m.cost(3, int(t)), rel=1e-12)
