"""Exact oracles, estimators, and experiment drivers.

Every verdict row produced here compares a Monte Carlo estimate against an
oracle that is reproducible from the experiment spec alone: renewal-mass
sequences, summed-covariance constants, or the limit moment formulas.
Finite-n bias in the long-range regime is handled by extrapolating along the
n-ladder with a rate calibrated on the exact second-moment oracle curve.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import ndtr

from . import __version__
from .levy import FiniteLevyMeasure, moment as levy_moment, parse_levy_model
from .limits import gaussian_joint_moment, hermite_joint_moment, hurst
from .multilinear import (
    AnConvention,
    Normalization,
    build_frame,
    normalizer_value,
    x_sequence,
)
from .renewal import ReturnLaw, make_return_law, rate_b_prefactor, return_mass_sequence, wandering_sequence
from .streams import stream

__all__ = [
    "ExperimentSpec",
    "ResultRow",
    "ResultTable",
    "exact_cov",
    "sigma2",
    "exact_L_product",
    "empirical_cov",
    "empirical_moments",
    "ks_distance",
    "scaling_slope",
    "fit_ladder_limit",
    "oracle_gamma",
    "run_experiment",
    "write_csv",
]


# -- exact oracles -----------------------------------------------------------


def exact_cov(law: ReturnLaw, p: int, theta: float, k) -> np.ndarray | float:
    """Cov(X_j, X_{j+k}) = p! theta^2 u_k^p, exact at every finite n."""
    kmax = int(np.max(k))
    u = return_mass_sequence(law, kmax)
    out = math.factorial(p) * theta**2 * u[np.asarray(k, dtype=np.int64)] ** p
    return float(out) if np.isscalar(k) else out


def sigma2(law: ReturnLaw, p: int, theta: float, tol: float = 1e-6) -> float:
    """Summed covariance p! theta^2 (1 + 2 sum u_k^p) in the short-range
    regime, Karamata tail added, truncation doubled until the result moves
    by less than tol."""
    decay = p * (law.beta - 1.0)
    if decay >= -1.0:
        raise ValueError(f"sigma2 requires p(beta-1) < -1; got p(beta-1)={decay}")
    kcap = 4096
    prev = None
    while kcap <= 2**22:
        u = return_mass_sequence(law, kcap)
        up = u**p
        tail = kcap * up[kcap] / (-decay - 1.0)
        val = math.factorial(p) * theta**2 * (1.0 + 2.0 * (np.sum(up[1:]) + tail))
        if prev is not None and abs(val - prev) < tol:
            return float(val)
        prev = val
        kcap *= 2
    return float(prev)


def sigma2_partial(law: ReturnLaw, p: int, theta: float, kcap: int,
                   tail_extrapolated: bool = True) -> float:
    """Truncated summed covariance; used by the self-consistency tests."""
    u = return_mass_sequence(law, kcap)
    up = u**p
    decay = p * (law.beta - 1.0)
    tail = kcap * up[kcap] / (-decay - 1.0) if tail_extrapolated else 0.0
    return float(math.factorial(p) * theta**2 * (1.0 + 2.0 * (np.sum(up[1:]) + tail)))


def _lag_counts_double_sum(up: np.ndarray, m1: int, m2: int) -> float:
    """sum_{k1<=m1, k2<=m2} up[|k1-k2|] in O(n) via pair counts per lag."""
    if m1 == 0 or m2 == 0:
        return 0.0
    d = np.arange(1, max(m1, m2))
    cpos = np.clip(np.minimum(m1, m2 - d), 0, None)
    cneg = np.clip(np.minimum(m2, m1 - d), 0, None)
    return float(min(m1, m2) * up[0] + np.sum((cpos + cneg) * up[1 : max(m1, m2)]))


def exact_L_product(law: ReturnLaw, p: int, theta: float, n: int,
                    t1: float, t2: float) -> float:
    """E[L_{n,I,t1} L_{n,I,t2}] = theta^2 w_n^-p sum sum u^p, exact."""
    u = return_mass_sequence(law, n)
    w_n = wandering_sequence(law, n)[n]
    m1, m2 = int(n * t1), int(n * t2)
    return theta**2 * w_n ** (-p) * _lag_counts_double_sum(u**p, m1, m2)


def exact_prop_second_moment(law: ReturnLaw, p: int, theta: float, n: int) -> float:
    """E[S*_n(1)^2] under the product normalization, exact from u."""
    u = return_mass_sequence(law, n)
    w_n = wandering_sequence(law, n)[n]
    g = rate_b_prefactor(law)
    return (math.factorial(p) * theta**2 * g ** (2 * p) * w_n**p / n**2
            * _lag_counts_double_sum(u**p, n, n))


# -- estimators ---------------------------------------------------------------


def empirical_cov(samples: np.ndarray, lag: int):
    """Replication-level lag products of mean-zero sequences: (estimate, stderr)."""
    samples = np.atleast_2d(samples)
    if samples.shape[0] < 2:
        return float(np.mean(samples)), float("nan")
    if lag == 0:
        per = np.mean(samples * samples, axis=1)
    else:
        per = np.mean(samples[:, :-lag] * samples[:, lag:], axis=1)
    return float(per.mean()), float(per.std(ddof=1) / math.sqrt(per.size))


def empirical_moments(values: np.ndarray, orders) -> dict[int, tuple[float, float]]:
    """Mean of value^order with stderr, per requested order."""
    values = np.asarray(values, dtype=np.float64)
    out = {}
    for o in orders:
        per = values**o
        se = float(per.std(ddof=1) / math.sqrt(per.size)) if per.size >= 30 else float("nan")
        out[int(o)] = (float(per.mean()), se)
    return out


def ks_distance(values: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov sup distance of a sample against a cdf callable.

    The lower gap uses the cdf's left limit so that a sample measured
    against its own (right-continuous) empirical cdf scores exactly zero.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    c = np.asarray(cdf(x), dtype=np.float64)
    c_left = np.asarray(cdf(np.nextafter(x, -np.inf)), dtype=np.float64)
    if np.any(np.diff(c) < -1e-12):
        raise ValueError("cdf must be monotone")
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(np.abs(c - hi)), np.max(np.abs(c_left - lo))))


def scaling_slope(pairs) -> tuple[float, float]:
    """Least-squares slope of log(var) against log(n), with its OLS stderr."""
    pairs = [(float(a), float(b)) for a, b in pairs]
    x = np.log([a for a, _ in pairs])
    y = np.log([b for _, b in pairs])
    if x.size < 2:
        raise ValueError("need at least two ladder points")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(x.size - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    se = math.sqrt(float(np.sum(resid**2)) / dof / sxx) if sxx > 0 else float("nan")
    return float(slope), se


def jackknife_variance_stderr(values: np.ndarray) -> float:
    """Jackknife stderr of the sample variance (mean-zero second moment)."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    total = np.sum(v * v)
    loo = (total - v * v) / (n - 1)
    return float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def fit_ladder_limit(ns, vals, ses, gamma: float) -> tuple[float, float]:
    """Weighted least squares of val = L + c n^-gamma; returns (L, stderr_L)."""
    ns = np.asarray(ns, dtype=np.float64)
    vals = np.asarray(vals, dtype=np.float64)
    ses = np.asarray(ses, dtype=np.float64)
    if ns.size < 3:
        return float(vals[-1]), float(ses[-1])
    w = 1.0 / np.clip(ses, 1e-12, None) ** 2
    x = ns ** (-gamma)
    X = np.stack([np.ones_like(x), x], axis=1)
    wx = X * w[:, None]
    cov = np.linalg.inv(X.T @ wx)
    coef = cov @ (wx.T @ vals)
    return float(coef[0]), float(math.sqrt(cov[0, 0]))


def oracle_gamma(law: ReturnLaw, p: int, theta: float, ns, limit: float) -> float:
    """Finite-size decay rate of the exact second-moment oracle toward its
    limit, fitted on the ladder; falls back to 1-beta when degenerate."""
    devs = [exact_prop_second_moment(law, p, theta, int(n)) - limit for n in ns]
    if all(d > 0 for d in devs) or all(d < 0 for d in devs):
        slope = -np.polyfit(np.log(ns), np.log(np.abs(devs)), 1)[0]
        if 0.02 < slope < 2.0:
            return float(slope)
    return 1.0 - law.beta


# -- experiment spec and result table ----------------------------------------


VALID_REGIMES = ("clt", "nclt", "cov")  # cov: covariance-only, no limit claims


@dataclass
class ExperimentSpec:
    regime: str
    p: int
    beta: float
    levy: str = "rademacher"
    representation: str = "cp"
    n: int | None = None
    ladder: tuple[int, ...] | None = None
    replications: int = 2000
    lags: tuple[int, ...] = ()
    tgrid: tuple[float, ...] = (1.0,)
    seed: int = 20240601
    convention: str = "variance-matched"
    theta: float = 1.0
    outdir: str | None = None
    workers: int = 1
    exploratory: bool = False
    tolerance_scale: float = 1.0
    sigma2_tol: float = 1e-4
    moment_orders: tuple[int, ...] = (2, 3, 4)

    def __post_init__(self):
        if self.regime not in VALID_REGIMES:
            raise ValueError(f"regime must be one of {VALID_REGIMES}")
        decay = self.p * (self.beta - 1.0)
        if self.regime == "clt" and decay >= -1.0:
            raise ValueError(f"CLT requires p(beta-1) < -1; got p(beta-1)={decay:g}")
        if self.regime == "nclt":
            if not -1.0 < decay < 0.0:
                raise ValueError(
                    f"nCLT requires p(beta-1) in (-1,0); got p(beta-1)={decay:g}")
            if self.p > 2 and not self.exploratory:
                raise ValueError("nCLT with p >= 3 is exploratory only; pass exploratory")
        if self.n is None and not self.ladder:
            raise ValueError("either n or a ladder is required")
        if self.ladder:
            self.ladder = tuple(int(v) for v in self.ladder)
        self.lags = tuple(int(v) for v in self.lags)

    @property
    def ladder_or_n(self) -> tuple[int, ...]:
        return self.ladder if self.ladder else (int(self.n),)


@dataclass
class ResultRow:
    row_id: str
    estimate: float
    stderr: float
    oracle: float
    tol: float
    verdict: str  # pass | fail | info
    provenance: str

    def as_dict(self):
        return asdict(self)


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    def add(self, row_id, estimate, stderr, oracle, tol, provenance, info=False):
        if info:
            verdict = "info"
        else:
            verdict = "pass" if abs(estimate - oracle) <= tol else "fail"
        self.rows.append(ResultRow(row_id, float(estimate), float(stderr),
                                   float(oracle), float(tol), verdict, provenance))

    @property
    def all_pass(self) -> bool:
        return all(r.verdict != "fail" for r in self.rows)

    def first_failure(self) -> ResultRow | None:
        for r in self.rows:
            if r.verdict == "fail":
                return r
        return None


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(__file__))
        if out.returncode == 0:
            return out.stdout.strip()
    except Exception:
        pass
    return f"chaoslim-{__version__}"


# -- per-replication worker ----------------------------------------------------


_WORKER_CACHE: dict = {}


def _get_models(beta: float, levy_str: str):
    key = (beta, levy_str)
    if key not in _WORKER_CACHE:
        _WORKER_CACHE[key] = (make_return_law(beta), parse_levy_model(levy_str))
    return _WORKER_CACHE[key]


def _run_chunk(cfg: dict, rep_lo: int, rep_hi: int) -> dict:
    """Simulate replications [rep_lo, rep_hi) and return per-rep statistics."""
    law, levy = _get_models(cfg["beta"], cfg["levy"])
    p, theta, n = cfg["p"], cfg["theta"], cfg["n"]
    lags = cfg["lags"]
    want_cond = cfg["want_cond"]
    context = cfg["context"]
    seed = cfg["seed"]
    w_n = wandering_sequence(law, n)[n]
    bn_p = (rate_b_prefactor(law) * w_n) ** p
    count = rep_hi - rep_lo
    out = {f"lag{l}": np.empty(count) for l in lags}
    out["raw_sum"] = np.empty(count)
    if want_cond:
        out["cond2"] = np.empty(count)
        out["cond3"] = np.empty(count)
        # marks are exchangeable given the count with E[mark^2] = m2 / Q,
        # in compound-Poisson and series mode alike
        q_total = levy.total_mass if isinstance(levy, FiniteLevyMeasure) else levy.mass
        ez2 = levy_moment(levy, 2.0) / q_total
    for idx in range(count):
        rng = stream(seed, rep_lo + idx, context)
        frame = build_frame(law, levy, n, cfg["representation"], rng)
        x = x_sequence(frame, p, theta)
        for l in lags:
            out[f"lag{l}"][idx] = float(np.mean(x * x)) if l == 0 else float(
                np.mean(x[:-l] * x[l:]))
        out["raw_sum"][idx] = float(x.sum())
        if want_cond:
            c2, c3 = _conditional_moments(frame, p, theta, w_n, bn_p, n, ez2)
            out["cond2"][idx] = c2
            out["cond3"][idx] = c3
    return out


def _conditional_moments(frame, p: int, theta: float, w_n: float, bn_p: float,
                         n: int, ez2: float):
    """E[S*(1)^2 | paths] and E[S*(1)^3 | paths] for p <= 2, marks averaged
    out exactly (symmetric standardized marks)."""
    scale = bn_p / n
    if frame.n_paths < p:
        return 0.0, 0.0
    counts = np.bincount(frame.event_path, minlength=frame.n_paths).astype(np.float64)
    if p == 1:
        lstar = scale * counts
        c2 = theta**2 * ez2 / w_n * float(np.sum(lstar**2))
        return c2, 0.0
    if p != 2:
        raise ValueError("conditional moments implemented for p in {1, 2}")
    # overlap counts are small integers, exact in float32 up to 2^24
    xi = np.zeros((frame.n_paths, n + 1), dtype=np.float32)
    xi[frame.event_path, frame.event_time] = 1.0
    ov = (xi @ xi.T).astype(np.float64) * scale
    np.fill_diagonal(ov, 0.0)
    c2 = 4.0 * theta**2 * ez2**2 / w_n**2 * float(np.sum(ov * ov)) / 2.0
    c3 = 8.0 * theta**3 * ez2**3 / w_n**3 * float(np.trace(ov @ ov @ ov))
    return c2, c3


def _simulate(spec: ExperimentSpec, n: int, context: int, want_cond: bool) -> dict:
    cfg = dict(beta=spec.beta, levy=spec.levy, p=spec.p, theta=spec.theta, n=n,
               lags=spec.lags, want_cond=want_cond, context=context,
               representation=spec.representation, seed=spec.seed)
    reps = spec.replications
    if spec.workers <= 1:
        return _run_chunk(cfg, 0, reps)
    chunks = []
    step = max(1, reps // (spec.workers * 4))
    with ProcessPoolExecutor(max_workers=spec.workers) as pool:
        futures = [(lo, pool.submit(_run_chunk, cfg, lo, min(lo + step, reps)))
                   for lo in range(0, reps, step)]
        chunks = [(lo, f.result()) for lo, f in futures]
    keys = chunks[0][1].keys()
    out = {k: np.empty(reps) for k in keys}
    for lo, ch in chunks:
        span = len(next(iter(ch.values())))
        for k in keys:
            out[k][lo : lo + span] = ch[k]
    return out


# -- experiment drivers ---------------------------------------------------------


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Execute the experiment and assemble verdict rows plus CSV outputs."""
    t_start = time.time()
    table = ResultTable(metadata={
        "spec": asdict(spec),
        "seed": spec.seed,
        "build": _git_describe(),
    })
    law, _ = _get_models(spec.beta, spec.levy)
    ladder = spec.ladder_or_n
    n_top = ladder[-1]
    want_cond = spec.regime == "nclt" and spec.p <= 2
    per_n = {}
    for i, n in enumerate(ladder):
        per_n[n] = _simulate(spec, n, context=i, want_cond=want_cond)
    top = per_n[n_top]

    if spec.lags:
        _covariance_rows(spec, law, table, top, n_top)
    if spec.regime == "clt":
        _clt_rows(spec, law, table, top, n_top)
    elif spec.regime == "nclt":
        _nclt_rows(spec, law, table, per_n, ladder)
    if len(ladder) > 1 and spec.regime != "cov":
        _scaling_rows(spec, law, table, per_n, ladder)

    table.metadata["wall_time_s"] = time.time() - t_start
    if spec.outdir:
        _write_outputs(spec, table, per_n, ladder)
    return table


def _covariance_rows(spec, law, table, top, n):
    oracles = exact_cov(law, spec.p, spec.theta, np.asarray(spec.lags))
    for l, oracle in zip(spec.lags, oracles):
        per = top[f"lag{l}"]
        est = float(per.mean())
        se = float(per.std(ddof=1) / math.sqrt(per.size))
        table.add(f"cov_lag{l}", est, se, float(oracle),
                  spec.tolerance_scale * 5.0 * se,
                  provenance=f"p! theta^2 u_{l}^p from the renewal recursion")


def _clt_rows(spec, law, table, top, n):
    s2 = sigma2(law, spec.p, spec.theta, tol=spec.sigma2_tol)
    s_norm = top["raw_sum"] / math.sqrt(n)
    var_est = float(np.mean(s_norm**2))
    var_se = float(np.std(s_norm**2, ddof=1) / math.sqrt(s_norm.size))
    table.add("clt_variance", var_est, var_se, s2, spec.tolerance_scale * 0.10 * s2,
              provenance="summed covariance sigma2 with Karamata tail")
    ks = ks_distance(s_norm / math.sqrt(s2), ndtr)
    table.add("clt_ks_gauss", ks, float("nan"), 0.0, spec.tolerance_scale * 0.08,
              provenance="KS distance to the standard normal cdf")
    moms = empirical_moments(s_norm, spec.moment_orders)
    for o, (est, se) in moms.items():
        oracle = gaussian_joint_moment(s2, [1.0] * o)
        tol = spec.tolerance_scale * max(5.0 * se, 0.10 * abs(oracle))
        table.add(f"moment{o}", est, se, oracle, tol,
                  provenance="Gaussian pairing moment at sigma2")


def _nclt_rows(spec, law, table, per_n, ladder):
    p, theta = spec.p, spec.theta
    n_top = ladder[-1]
    mu_f = theta  # f = theta 1_{A^p}, mu(A) = 1
    f2 = hermite_joint_moment(p, spec.beta, mu_f, [1.0, 1.0]).value
    gamma = oracle_gamma(law, p, theta, ladder, f2) if len(ladder) >= 3 else 1 - spec.beta

    # variance under the variance-matched a_n vs mu^p(f)^2 (plus the
    # informational column under the equation-as-printed convention)
    ratio = {}
    for n in ladder:
        c_prop = normalizer_value(law, p, n, Normalization.PROP)
        c_an = normalizer_value(law, p, n, Normalization.AN, AnConvention.VARIANCE_MATCHED)
        ratio[n] = (c_prop / c_an) ** 2
    if spec.p <= 2:
        vals = np.array([per_n[n]["cond2"].mean() * ratio[n] for n in ladder])
        ses = np.array([per_n[n]["cond2"].std(ddof=1) / math.sqrt(spec.replications)
                        * ratio[n] for n in ladder])
    else:
        vals, ses = [], []
        for n in ladder:
            c_an = normalizer_value(law, p, n, Normalization.AN, AnConvention.VARIANCE_MATCHED)
            s = per_n[n]["raw_sum"] / c_an
            vals.append(np.mean(s**2))
            ses.append(np.std(s**2, ddof=1) / math.sqrt(s.size))
        vals, ses = np.array(vals), np.array(ses)
    target = mu_f**2
    est, se = fit_ladder_limit(ladder, vals, ses, gamma)
    table.add("an_variance_matched", est, se, target,
              spec.tolerance_scale * 0.10 * target,
              provenance=f"ladder-extrapolated (gamma={gamma:.3f}) vs mu^p(f)^2")
    table.add("an_variance_matched_top", float(vals[-1]), float(ses[-1]), target,
              0.0, provenance="top-of-ladder value, informational", info=True)
    alt_ratio = math.factorial(p) ** 2
    table.add("an_factorial_inside", est * alt_ratio, se * alt_ratio,
              target * alt_ratio, 0.0,
              provenance="factorial-inside a_n spelling rescales the limit by (p!)^2",
              info=True)

    # product-normalized moment rows vs the joint moment formula
    if spec.p <= 2:
        for order in (2, 3):
            formula = (f2 if order == 2 else
                       hermite_joint_moment(p, spec.beta, mu_f, [1.0] * order,
                                            seed=spec.seed))
            fval = formula if order == 2 else formula.value
            fse = 0.0 if order == 2 else formula.stderr
            key = "cond2" if order == 2 else "cond3"
            vals = np.array([per_n[n][key].mean() for n in ladder])
            ses = np.array([per_n[n][key].std(ddof=1) / math.sqrt(spec.replications)
                            for n in ladder])
            if abs(fval) < 1e-12:
                est, se = float(vals[-1]), float(ses[-1])
                table.add(f"prop_moment{order}", est, se, fval,
                          spec.tolerance_scale * 5.0 * se,
                          provenance="odd-order moment vanishes by symmetry")
                continue
            est, se = fit_ladder_limit(ladder, vals, ses, gamma)
            table.add(f"prop_moment{order}", est, se, fval,
                      spec.tolerance_scale * 0.10 * abs(fval),
                      provenance=(f"ladder-extrapolated (gamma={gamma:.3f}) vs joint "
                                  f"moment formula (formula stderr {fse:.2e})"))
            table.add(f"prop_moment{order}_top", float(vals[-1]), float(ses[-1]),
                      fval, 0.0, provenance="top-of-ladder value, informational",
                      info=True)

    # order-4 raw product-normalized moment, informational band
    c_prop = normalizer_value(law, p, n_top, Normalization.PROP)
    s_prop = per_n[n_top]["raw_sum"] / c_prop
    m4, m4se = empirical_moments(s_prop, [4])[4]
    f4 = hermite_joint_moment(p, spec.beta, mu_f, [1.0] * 4, seed=spec.seed + 1)
    band = abs(exact_prop_second_moment(law, p, theta, n_top) - f2) / f2
    table.add("prop_moment4_top", m4, m4se, f4.value,
              spec.tolerance_scale * (5.0 * m4se + 2.0 * band * abs(f4.value)),
              provenance="raw fourth moment, 5 se plus finite-n bias band")

    # Gaussian marginal in the first-order case
    if p == 1:
        c_an = normalizer_value(law, p, n_top, Normalization.AN,
                                AnConvention.VARIANCE_MATCHED)
        s = per_n[n_top]["raw_sum"] / c_an
        sd = float(np.std(s, ddof=1))
        ks = ks_distance(s / sd, ndtr)
        table.add("nclt_ks_gauss", ks, float("nan"), 0.0,
                  spec.tolerance_scale * 0.08,
                  provenance="KS to N(0, fitted variance); first-order limit is Gaussian")


def _scaling_rows(spec, law, table, per_n, ladder):
    h = hurst(spec.p, spec.beta) if spec.regime == "nclt" else 0.5
    pairs = []
    for n in ladder:
        raw = per_n[n]["raw_sum"]
        pairs.append((n, float(np.mean(raw**2))))
    slope, se = scaling_slope(pairs)
    table.add("scaling_slope", slope, se, 2.0 * h, spec.tolerance_scale * 0.10,
              provenance="log-log fit of raw-sum variance over the ladder vs 2H")


# -- file output -----------------------------------------------------------------


# execution-environment fields: results never depend on them, and leaving
# them out keeps equal-seed CSVs byte-identical across machines and paths
_NON_STATISTICAL_FIELDS = ("outdir", "workers")


def _header_lines(spec: ExperimentSpec, extra: dict | None = None) -> list[str]:
    lines = [f"# chaoslim {__version__}"]
    payload = asdict(spec)
    for k in _NON_STATISTICAL_FIELDS:
        payload.pop(k, None)
    payload.update(extra or {})
    for k in sorted(payload):
        lines.append(f"# {k} = {payload[k]}")
    return lines


def write_csv(path: str, spec: ExperimentSpec, columns: list[str], rows,
              extra_header: dict | None = None) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(_header_lines(spec, extra_header)) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))  # exact round-trip, plain spelling for np floats
    return str(v)


def _write_outputs(spec: ExperimentSpec, table: ResultTable, per_n, ladder) -> None:
    outdir = spec.outdir
    os.makedirs(outdir, exist_ok=True)
    n_top = ladder[-1]
    top = per_n[n_top]
    if spec.lags:
        rows = []
        by_id = {r.row_id: r for r in table.rows}
        for l in spec.lags:
            r = by_id[f"cov_lag{l}"]
            rows.append((l, r.estimate, r.stderr, r.oracle, r.verdict))
        path = os.path.join(outdir, "covariance.csv")
        write_csv(path, spec, ["lag", "estimate", "stderr", "oracle", "verdict"], rows)
        table.files["covariance"] = path

    if len(ladder) > 1:
        rows = []
        for n in ladder:
            raw = per_n[n]["raw_sum"]
            rows.append((n, float(np.mean(raw**2)),
                         float(np.std(raw**2, ddof=1) / math.sqrt(raw.size))))
        slope_row = next((r for r in table.rows if r.row_id == "scaling_slope"), None)
        extra = {"fitted_slope": slope_row.estimate if slope_row else float("nan"),
                 "reference_slope": slope_row.oracle if slope_row else float("nan")}
        path = os.path.join(outdir, "scaling.csv")
        write_csv(path, spec, ["n", "variance", "stderr"], rows, extra)
        table.files["scaling"] = path

    # marginal: normalized partial sum at t = 1 for the top ladder point
    if spec.regime != "cov":
        if spec.regime == "clt":
            s2 = sigma2(law_of(spec), spec.p, spec.theta, tol=spec.sigma2_tol)
            marg = top["raw_sum"] / math.sqrt(n_top) / math.sqrt(s2)
        else:
            c = normalizer_value(law_of(spec), spec.p, n_top, Normalization.AN,
                                 AnConvention(spec.convention)) if spec.p == 1 else \
                normalizer_value(law_of(spec), spec.p, n_top, Normalization.PROP)
            marg = top["raw_sum"] / c
        path = os.path.join(outdir, "marginal.csv")
        write_csv(path, spec, ["replication", "value"],
                  [(i, float(v)) for i, v in enumerate(marg)])
        table.files["marginal"] = path

    rows = []
    for r in table.rows:
        if r.row_id.startswith(("moment", "prop_moment", "an_")):
            order = r.row_id.replace("prop_moment", "").replace("moment", "") or r.row_id
            rows.append((order if not r.row_id.startswith("an_") else r.row_id,
                         r.estimate, r.stderr, r.oracle, r.verdict))
    if rows:
        path = os.path.join(outdir, "moments.csv")
        write_csv(path, spec, ["order", "estimate", "stderr", "formula", "verdict"], rows)
        table.files["moments"] = path

    summary = {
        "rows": [r.as_dict() for r in table.rows],
        "metadata": table.metadata,
        "files": table.files,
        "all_pass": table.all_pass,
    }
    spath = os.path.join(outdir, "summary.json")
    with open(spath, "w") as fh:
        json.dump(summary, fh, indent=2, default=str)
    table.files["summary"] = spath


def law_of(spec: ExperimentSpec) -> ReturnLaw:
    return _get_models(spec.beta, spec.levy)[0]
