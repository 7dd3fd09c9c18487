import math

import numpy as np
import pytest
from scipy.special import ndtr

from chaoslim.harness import (
    ExperimentSpec,
    empirical_cov,
    empirical_moments,
    exact_cov,
    exact_L_product,
    exact_prop_second_moment,
    fit_ladder_limit,
    jackknife_variance_stderr,
    ks_distance,
    oracle_gamma,
    run_experiment,
    scaling_slope,
    sigma2,
    sigma2_partial,
)
from chaoslim.levy import rademacher_measure
from chaoslim.limits import hermite_joint_moment
from chaoslim.multilinear import build_frame
from chaoslim.renewal import make_return_law, wandering_sequence
from chaoslim.streams import stream


def test_exact_cov_base_values():
    law = make_return_law(0.5)
    assert exact_cov(law, 2, 1.0, 0) == 2.0
    assert abs(exact_cov(law, 2, 1.0, 1) - 2.0 * law.pmf(1) ** 2) < 1e-14
    assert abs(exact_cov(law, 3, 0.5, 0) - 6 * 0.25) < 1e-14


def test_exact_cov_slope():
    law = make_return_law(0.6)
    ks = np.unique(np.round(np.logspace(3, 5, 25)).astype(int))
    vals = exact_cov(law, 2, 1.0, ks)
    slope = np.polyfit(np.log(ks), np.log(vals), 1)[0]
    assert abs(slope - 2 * (0.6 - 1.0)) < 0.05


def test_sigma2_properties():
    law = make_return_law(0.3)
    v1 = sigma2(law, 2, 1.0, tol=1e-4)
    v2 = sigma2(law, 2, 1.0, tol=5e-5)
    assert abs(v1 - v2) < 1e-4
    assert v1 > 2.0  # p! theta^2 plus positive correlations
    with pytest.raises(ValueError, match="p\\(beta-1\\)"):
        sigma2(make_return_law(0.8), 1, 1.0)


def test_sigma2_self_consistency():
    # tail-extrapolated truncation at 1e4 vs direct summation to 1e6
    law = make_return_law(0.3)
    tol = 5e-3
    a = sigma2_partial(law, 2, 1.0, 10**4, tail_extrapolated=True)
    b = sigma2_partial(law, 2, 1.0, 10**6, tail_extrapolated=False)
    assert abs(a - b) < 2 * tol


def test_exact_L_product_values():
    law = make_return_law(0.3)
    n = 100
    w = wandering_sequence(law, n)[n]
    single = exact_L_product(law, 2, 1.0, n, 1.0 / n, 1.0 / n)
    assert abs(single - w**-2) < 1e-15
    assert exact_L_product(law, 2, 1.0, n, 0.4, 0.9) == exact_L_product(
        law, 2, 1.0, n, 0.9, 0.4)


def test_L_product_monte_carlo_matches_oracle():
    # one fixed index set of p i.i.d. mu_n paths
    law = make_return_law(0.8)
    n, p, reps = 512, 2, 3000
    oracle = exact_L_product(law, p, 1.0, n, 1.0, 0.5)
    vals = np.empty(reps)
    from chaoslim.renewal import sample_renewal_batch

    for r in range(reps):
        rng = stream(31, r)
        _, pidx, times = sample_renewal_batch(law, n, rng, p)
        xi = np.zeros((p, n + 1))
        xi[pidx, times] = 1.0
        joint = xi.prod(axis=0)
        vals[r] = joint[1:].sum() * joint[1 : n // 2 + 1].sum()
    se = vals.std(ddof=1) / math.sqrt(reps)
    assert abs(vals.mean() - oracle) < 5 * se


def test_empirical_helpers():
    est, se = empirical_cov(np.ones((40, 16)), 2)
    assert est == 1.0 and se == 0.0
    moms = empirical_moments(np.full(100, 2.0), [1, 2])
    assert moms[1] == (2.0, 0.0)
    assert moms[2] == (4.0, 0.0)
    assert jackknife_variance_stderr(np.ones(30)) == 0.0


def test_ks_distance_own_empirical_cdf():
    rng = np.random.default_rng(5)
    x = rng.random(100)
    sx = np.sort(x)

    def emp(v):
        return np.searchsorted(sx, v, side="right") / sx.size

    assert ks_distance(x, emp) == 0.0


def test_ks_distance_gaussian():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(4000)
    assert ks_distance(x, ndtr) < 0.05
    assert ks_distance(x + 3.0, ndtr) > 0.5


def test_scaling_slope_exact_loglinear():
    h = 0.8
    ns = [2**k for k in range(8, 14)]
    pairs = [(n, 3.7 * n ** (2 * h)) for n in ns]
    slope, se = scaling_slope(pairs)
    assert abs(slope - 2 * h) < 1e-12
    assert se < 1e-12


def test_fit_ladder_limit_recovers_exact_model():
    ns = [2**10, 2**12, 2**14, 2**16]
    gamma = 0.3
    vals = [5.0 + 2.0 * n**-gamma for n in ns]
    limit, se = fit_ladder_limit(ns, vals, [1e-6] * 4, gamma)
    assert abs(limit - 5.0) < 1e-9


def test_oracle_gamma_in_range():
    law = make_return_law(0.8)
    f2 = hermite_joint_moment(2, 0.8, 1.0, [1.0, 1.0]).value
    g = oracle_gamma(law, 2, 1.0, [2**10, 2**12, 2**14], f2)
    assert 0.1 < g < 0.4  # close to 1 - beta for the power-law return time


def test_conditional_moment_estimator_unbiased():
    # the mark-averaged second moment must agree with the exact oracle
    law = make_return_law(0.8)
    n, reps = 2**12, 500
    spec = ExperimentSpec(regime="nclt", p=2, beta=0.8, n=n, replications=reps,
                          seed=404, workers=1)
    from chaoslim.harness import _simulate

    out = _simulate(spec, n, context=0, want_cond=True)
    oracle = exact_prop_second_moment(law, 2, 1.0, n)
    se = out["cond2"].std(ddof=1) / math.sqrt(reps)
    assert abs(out["cond2"].mean() - oracle) < 5 * se
    # raw second moment agrees too (same frames, marks included)
    from chaoslim.multilinear import Normalization, normalizer_value

    c = normalizer_value(law, 2, n, Normalization.PROP)
    raw = (out["raw_sum"] / c) ** 2
    se_r = raw.std(ddof=1) / math.sqrt(reps)
    assert abs(raw.mean() - oracle) < 5 * se_r


def test_conditional_moment_estimator_series_pareto():
    # the isometry makes the exact oracle model-free; the mark-averaged
    # estimator must hit it in series mode with a non-atomic model too
    law = make_return_law(0.8)
    n, reps = 2**10, 600
    spec = ExperimentSpec(regime="nclt", p=2, beta=0.8, n=n, replications=reps,
                          levy="pareto:5", representation="series", seed=505,
                          workers=1)
    from chaoslim.harness import _simulate

    out = _simulate(spec, n, context=0, want_cond=True)
    oracle = exact_prop_second_moment(law, 2, 1.0, n)
    se = out["cond2"].std(ddof=1) / math.sqrt(reps)
    assert abs(out["cond2"].mean() - oracle) < 5 * se


def test_spec_validation():
    with pytest.raises(ValueError, match="CLT requires"):
        ExperimentSpec(regime="clt", p=1, beta=0.6, n=128)
    with pytest.raises(ValueError, match="nCLT requires"):
        ExperimentSpec(regime="nclt", p=2, beta=0.3, n=128)
    with pytest.raises(ValueError, match="exploratory"):
        ExperimentSpec(regime="nclt", p=3, beta=0.9, n=128)
    ExperimentSpec(regime="nclt", p=3, beta=0.9, n=128, exploratory=True)
    with pytest.raises(ValueError, match="ladder"):
        ExperimentSpec(regime="clt", p=2, beta=0.3)


def test_run_experiment_deterministic(tmp_path):
    kw = dict(regime="clt", p=2, beta=0.3, n=256, replications=150, lags=(0, 1),
              seed=12, workers=1)
    a = run_experiment(ExperimentSpec(**kw))
    b = run_experiment(ExperimentSpec(**kw))
    assert [r.estimate for r in a.rows] == [r.estimate for r in b.rows]


def test_run_experiment_forced_failure():
    spec = ExperimentSpec(regime="clt", p=2, beta=0.3, n=256, replications=150,
                          lags=(1,), seed=12, workers=1, tolerance_scale=1e-9)
    table = run_experiment(spec)
    assert not table.all_pass
    assert table.first_failure() is not None


def test_moment_method_chain_clt():
    # second and fourth moments of the normalized sum track the Gaussian
    # pairing values within 5 se plus a ladder-estimated bias band
    law = make_return_law(0.3)
    s2 = sigma2(law, 2, 1.0, tol=1e-4)
    ests = {}
    for n in (1024, 4096):
        sums = []
        for r in range(400):
            rng = stream(22, r, context=n)
            fr = build_frame(law, rademacher_measure(), n, "cp", rng)
            from chaoslim.multilinear import x_sequence

            sums.append(np.sum(x_sequence(fr, 2)) / math.sqrt(n))
        ests[n] = np.asarray(sums)
    top = ests[4096]
    band2 = abs(np.mean(ests[1024] ** 2) - np.mean(top**2))
    se2 = np.std(top**2, ddof=1) / 20.0
    assert abs(np.mean(top**2) - s2) < 5 * se2 + band2
    band4 = abs(np.mean(ests[1024] ** 4) - np.mean(top**4))
    se4 = np.std(top**4, ddof=1) / 20.0
    assert abs(np.mean(top**4) - 3 * s2**2) < 5 * se4 + band4
