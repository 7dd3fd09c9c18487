import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoslim.levy import pareto_tail_inverse, rademacher_measure
from chaoslim.multilinear import (
    AnConvention,
    Normalization,
    Representation,
    build_frame,
    elementary_symmetric,
    normalizer_value,
    partial_sums,
    x_sequence,
)
from chaoslim.renewal import make_return_law, rate_b, return_mass_sequence, wandering_sequence
from chaoslim.streams import stream


def test_elementary_symmetric_examples():
    assert elementary_symmetric([1, 2, 3], 1) == 6.0
    assert elementary_symmetric([1, 2, 3], 2) == 11.0
    assert elementary_symmetric([], 0) == 1.0
    assert elementary_symmetric([], 3) == 0.0
    assert elementary_symmetric([5.0], 2) == 0.0


@settings(max_examples=60, deadline=None)
@given(
    values=st.lists(st.floats(min_value=-3.0, max_value=3.0), max_size=7),
    p=st.integers(min_value=0, max_value=4),
)
def test_elementary_symmetric_matches_brute_force(values, p):
    brute = (1.0 if p == 0 else
             sum(math.prod(c) for c in itertools.combinations(values, p)))
    got = elementary_symmetric(values, p)
    assert abs(got - brute) < 1e-9 * max(1.0, abs(brute))


def test_window_edge_cases():
    law = make_return_law(0.5)
    fr = build_frame(law, rademacher_measure(), 1, "cp", stream(99, 0))
    assert fr.n == 1
    x = x_sequence(fr, 2)
    assert x.shape == (1,)
    # every sampled path must renew inside the single-slot window
    if fr.n_paths:
        assert np.all(fr.event_time == 1)


def test_poisson_count_mean():
    law = make_return_law(0.8)
    n = 256
    w_n = wandering_sequence(law, n)[n]
    rad = rademacher_measure()
    reps = 10**4
    counts = np.array([
        build_frame(law, rad, n, "cp", stream(11, r)).n_paths for r in range(reps)
    ])
    target = rad.total_mass * w_n
    se = math.sqrt(target / reps)  # Poisson variance = mean
    assert abs(counts.mean() - target) < 5 * se


def test_bucket_mean_is_total_mass():
    law = make_return_law(0.6)
    n = 128
    rad = rademacher_measure()
    reps = 4000
    acc = np.zeros(n)
    for r in range(reps):
        acc += build_frame(law, rad, n, "cp", stream(12, r)).bucket_counts()
    means = acc / reps
    se = means.std() / math.sqrt(n)  # crude scale; per-k fluctuation band
    for k in (1, 16, 64, 128):
        assert abs(means[k - 1] - 1.0) < 6 * max(se, math.sqrt(1.0 / reps))


def test_bucket_bookkeeping():
    law = make_return_law(0.5)
    fr = build_frame(law, rademacher_measure(), 64, "cp", stream(13, 0))
    assert fr.bucket_counts().sum() == fr.event_time.size
    total = sum(fr.renewal_times(i).size for i in range(fr.n_paths))
    assert total == fr.event_time.size


def test_cp_requires_finite_measure():
    law = make_return_law(0.5)
    with pytest.raises(TypeError):
        build_frame(law, pareto_tail_inverse(5.0), 32, "cp", stream(1, 0))


def test_series_rademacher_structure():
    law = make_return_law(0.8)
    fr = build_frame(law, rademacher_measure(), 512, Representation.SERIES, stream(14, 0))
    assert fr.truncation_l2_err == 0.0
    assert set(np.unique(fr.marks)) <= {-1.0, 1.0}


def test_series_pareto_marks():
    law = make_return_law(0.8)
    fr = build_frame(law, pareto_tail_inverse(5.0), 512, "series", stream(15, 0))
    p5 = pareto_tail_inverse(5.0)
    assert np.all(np.abs(fr.marks) >= p5.x0)  # magnitudes bounded below by x0


def test_x_sequence_matches_direct_recurrence():
    law = make_return_law(0.7)
    fr = build_frame(law, pareto_tail_inverse(5.0), 256, "series", stream(16, 3))
    for p in (1, 2, 3):
        x = x_sequence(fr, p, theta=0.7)
        for k in (1, 5, 50, 200):
            direct = math.factorial(p) * 0.7 * elementary_symmetric(
                fr.marks[fr.active_bucket(k)], p)
            assert abs(x[k - 1] - direct) < 1e-10 * max(1.0, abs(direct))


def test_x_moments():
    # E[X_k] = 0 and E[X_k^2] = p! theta^2 via the isometry
    law = make_return_law(0.8)
    n, reps, theta = 128, 3000, 1.3
    m1 = np.zeros(reps)
    m2 = np.zeros(reps)
    for r in range(reps):
        fr = build_frame(law, rademacher_measure(), n, "cp", stream(17, r))
        x = x_sequence(fr, 2, theta)
        m1[r] = x.mean()
        m2[r] = np.mean(x * x)
    target = 2.0 * theta * theta
    assert abs(m1.mean()) < 5 * m1.std() / math.sqrt(reps)
    assert abs(m2.mean() - target) < 5 * m2.std() / math.sqrt(reps)


def test_exact_covariance_small():
    # Cov(X_k, X_j) = p! theta^2 u_{|k-j|}^p at finite n
    law = make_return_law(0.6)
    n, reps, p, lag = 64, 4000, 2, 3
    u = return_mass_sequence(law, n)
    vals = np.zeros(reps)
    for r in range(reps):
        fr = build_frame(law, rademacher_measure(), n, "cp", stream(18, r))
        x = x_sequence(fr, p)
        vals[r] = np.mean(x[:-lag] * x[lag:])
    oracle = 2.0 * u[lag] ** p
    assert abs(vals.mean() - oracle) < 5 * vals.std() / math.sqrt(reps)


def test_representation_equivalence_small():
    law = make_return_law(0.8)
    n, reps, p = 1024, 2000, 2
    stats = {}
    for tag, rep_kind in (("cp", "cp"), ("series", "series")):
        mean_ = np.zeros(reps)
        var_ = np.zeros(reps)
        cov_ = np.zeros(reps)
        for r in range(reps):
            fr = build_frame(law, rademacher_measure(), n, rep_kind, stream(19, r, context=hash(tag) % 1000))
            x = x_sequence(fr, p)
            mean_[r] = x.mean()
            var_[r] = np.mean(x * x)
            cov_[r] = np.mean(x[:-4] * x[4:])
        stats[tag] = (mean_, var_, cov_)
    for i in range(3):
        a, b = stats["cp"][i], stats["series"][i]
        se = math.sqrt(a.var() / reps + b.var() / reps)
        assert abs(a.mean() - b.mean()) < 5 * se, f"stat {i}"


def test_partial_sums_grid_consistency():
    law = make_return_law(0.3)
    x = np.arange(1.0, 101.0)
    ps = partial_sums(x, law, 2, [0.0, 0.25, 0.5, 1.0], Normalization.SQRT_N)
    assert ps.values[0] == 0.0
    assert abs(ps.values[3] - x.sum() / math.sqrt(100)) < 1e-12
    assert abs(ps.values[1] - x[:25].sum() / math.sqrt(100)) < 1e-12
    # supplied sigma2 rescales the sqrt(n) normalization
    ps2 = partial_sums(x, law, 2, [1.0], Normalization.SQRT_N, sigma2=4.0)
    assert abs(ps2.values[0] - x.sum() / math.sqrt(100) / 2.0) < 1e-12


def test_an_conventions():
    law = make_return_law(0.6)
    n = 4096
    # p = 1: the two conventions coincide
    a_vm = normalizer_value(law, 1, n, Normalization.AN, AnConvention.VARIANCE_MATCHED)
    a_pe = normalizer_value(law, 1, n, Normalization.AN, AnConvention.FACTORIAL_INSIDE)
    assert abs(a_vm - a_pe) < 1e-12 * a_vm
    # spec closed form at p=1
    b_n = rate_b(law, n)
    expected = math.sqrt(1.0 / (((1 + 0.6) / 2.0) * 0.6)) * n / math.sqrt(b_n)
    assert abs(a_vm - expected) < 1e-12 * expected
    # p = 2: factorial-inside differs from variance-matched by exactly p!
    law8 = make_return_law(0.8)
    a_vm2 = normalizer_value(law8, 2, n, "an", "variance-matched")
    a_pe2 = normalizer_value(law8, 2, n, "an", "factorial-inside")
    assert abs(a_vm2 / a_pe2 - 2.0) < 1e-12


def test_regime_guards():
    law = make_return_law(0.8)  # p(beta-1) = -0.2 for p=1
    with pytest.raises(ValueError, match="p\\(beta-1\\)"):
        normalizer_value(law, 1, 100, Normalization.SQRT_N)
    law_clt = make_return_law(0.3)
    with pytest.raises(ValueError, match="-1,0"):
        normalizer_value(law_clt, 2, 100, Normalization.AN)


def test_frame_determinism():
    law = make_return_law(0.6)
    rad = rademacher_measure()
    f1 = build_frame(law, rad, 200, "cp", stream(77, 4))
    f2 = build_frame(law, rad, 200, "cp", stream(77, 4))
    assert np.array_equal(f1.marks, f2.marks)
    assert np.array_equal(f1.event_time, f2.event_time)
    assert np.array_equal(f1.event_path, f2.event_path)
