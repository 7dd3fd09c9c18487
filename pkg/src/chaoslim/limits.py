"""Limit objects and moment formulas: Hermite constants, fBm and Rosenblatt
generators, ordered-gap kernels, Gaussian pairing moments, and the joint
moment integrals of the long-range-dependent limit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln
from scipy.stats import qmc

from .levy import ResolutionError

logger = logging.getLogger(__name__)

__all__ = [
    "HermiteSpec",
    "Matching",
    "hurst",
    "a_const",
    "gamma_pair",
    "fbm_path",
    "fbm_paths",
    "fbm_covariance",
    "RosenblattGenerator",
    "rosenblatt_value",
    "h_kernel",
    "pairings",
    "gaussian_joint_moment",
    "matchings",
    "hermite_joint_moment",
    "lrd_limit_moment",
    "QmcResult",
]


def hurst(p: int, beta: float) -> float:
    """Self-similarity index 1 - p(1-beta)/2 of the order-p limit."""
    _check_beta(p, beta)
    return 1.0 - p * (1.0 - beta) / 2.0


def _check_beta(p: int, beta: float) -> None:
    if p < 1:
        raise ValueError("p must be >= 1")
    if not 1.0 - 1.0 / p < beta < 1.0:
        raise ValueError(f"beta must lie in (1-1/p, 1) = ({1-1/p}, 1); got {beta}")


def _beta_fn(x: float, y: float) -> float:
    return math.exp(gammaln(x) + gammaln(y) - gammaln(x + y))


def gamma_pair(beta: float) -> float:
    """Gamma(beta) Gamma(2-beta), the constant attached to every gap kernel."""
    return math.gamma(beta) * math.gamma(2.0 - beta)


def a_const(p: int, beta: float) -> float:
    """Standardizing constant of the order-p limit process (unit variance
    at t = 1), via log-gamma differences."""
    _check_beta(p, beta)
    g = p * (1.0 - beta)
    num = (1.0 - g / 2.0) * (1.0 - g)
    den = math.factorial(p) * _beta_fn(beta / 2.0, 1.0 - beta) ** p
    return math.sqrt(num / den)


@dataclass(frozen=True)
class HermiteSpec:
    """Order, memory parameter, and discretization grid of a limit process."""

    p: int
    beta: float
    x_cells: int = 2000
    s_nodes: int = 12
    x_range: float | None = None  # None: adaptive from the tail budget

    def __post_init__(self):
        _check_beta(self.p, self.beta)

    @property
    def hurst(self) -> float:
        return hurst(self.p, self.beta)

    @property
    def a_const(self) -> float:
        return a_const(self.p, self.beta)


# -- fractional Brownian motion via circulant embedding ----------------------


def _fgn_eigenvalues(hurst_idx: float, n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=np.float64)
    g = 0.5 * ((k + 1) ** (2 * hurst_idx) - 2 * k ** (2 * hurst_idx)
               + np.abs(k - 1) ** (2 * hurst_idx))
    c = np.concatenate((g[:-1], [0.0], g[-2:0:-1]))
    lam = np.fft.fft(c).real
    return lam


def fbm_paths(hurst_idx: float, n: int, rng, count: int = 1) -> np.ndarray:
    """Exact fBm sample paths on {0, 1/n, ..., 1}, shape (count, n+1).

    Davies-Harte circulant embedding of the fractional Gaussian noise
    covariance; falls back to a Cholesky factorization if the embedding has
    a negative eigenvalue (not expected for H in (1/2,1) up to n = 2^18).
    """
    if not 0.0 < hurst_idx < 1.0:
        raise ValueError("hurst index must lie in (0,1)")
    lam = _fgn_eigenvalues(hurst_idx, n)
    m = lam.size  # 2n
    if lam.min() < -1e-9 * lam.max():
        logger.warning("circulant embedding not nonnegative at H=%g, n=%d; "
                       "falling back to Cholesky", hurst_idx, n)
        fgn = _fgn_cholesky(hurst_idx, n, rng, count)
    else:
        lam = np.clip(lam, 0.0, None)
        z = np.empty((count, m), dtype=np.complex128)
        z[:, 0] = rng.standard_normal(count)
        z[:, n] = rng.standard_normal(count)
        v = rng.standard_normal((count, n - 1, 2))
        inner = (v[:, :, 0] + 1j * v[:, :, 1]) / math.sqrt(2.0)
        z[:, 1:n] = inner
        z[:, n + 1:] = np.conj(inner[:, ::-1])
        fgn = math.sqrt(m) * np.fft.ifft(np.sqrt(lam)[None, :] * z, axis=1).real[:, :n]
    path = np.zeros((count, n + 1))
    path[:, 1:] = np.cumsum(fgn, axis=1) * n ** (-hurst_idx)
    return path


def _fgn_cholesky(hurst_idx: float, n: int, rng, count: int) -> np.ndarray:
    k = np.arange(n, dtype=np.float64)
    g = 0.5 * ((k + 1) ** (2 * hurst_idx) - 2 * k ** (2 * hurst_idx)
               + np.abs(k - 1) ** (2 * hurst_idx))
    cov = g[np.abs(np.subtract.outer(np.arange(n), np.arange(n)))]
    chol = np.linalg.cholesky(cov + 1e-12 * np.eye(n))
    return rng.standard_normal((count, n)) @ chol.T


def fbm_path(hurst_idx: float, n: int, rng) -> np.ndarray:
    return fbm_paths(hurst_idx, n, rng, 1)[0]


def fbm_covariance(hurst_idx: float, s: float, t: float) -> float:
    """E[B_H(s) B_H(t)] for the standardized fBm."""
    return 0.5 * (s ** (2 * hurst_idx) + t ** (2 * hurst_idx)
                  - abs(t - s) ** (2 * hurst_idx))


# -- Rosenblatt generator ----------------------------------------------------


class RosenblattGenerator:
    """Second-chaos limit process at a fixed time t, discretized in space.

    The generating kernel K(t; x1, x2) = int_0^t (s-x1)_+^(b/2-1)
    (s-x2)_+^(b/2-1) ds is tabulated over a graded grid: a uniform core
    around [0, t] resolved by a lattice cumulative rule (endpoint
    singularities absorbed by the v = (s-x)^(b/2) substitution), and a
    geometric tail reaching out to where the closed-form tail variance
    drops below 1% of the total.  Values are a * W^T K W with independent
    cell masses W_i ~ N(0, cell width) and the diagonal left out.
    """

    def __init__(self, beta: float, t: float = 1.0, cells: int = 2000,
                 s_nodes: int = 12, x_range: float | None = None,
                 core_halo: float = 4.0, tail_frac: float = 0.2,
                 tail_budget: float = 0.01, var_tol: float | None = None):
        if not 0.5 < beta < 1.0:
            raise ValueError("Rosenblatt generator requires beta in (1/2, 1)")
        if t <= 0:
            raise ValueError("t must be positive")
        self.beta = beta
        self.t = t
        self.a = beta / 2.0
        self.a2b = a_const(2, beta)
        core_cells = int(cells * (1.0 - tail_frac))
        if x_range is None:
            x_range = self._adaptive_range(tail_budget)
        self.x_range = x_range
        # uniform core on [-halo, t] with 0 and t on cell boundaries
        halo = core_halo * t
        below = int(round(core_cells * halo / (halo + t)))
        above = core_cells - below
        dx = t / above
        halo = below * dx
        self.dx = dx
        core_mid = -halo + (np.arange(core_cells) + 0.5) * dx
        core_w = np.full(core_cells, dx)
        tail_cells = cells - core_cells
        if x_range > halo and tail_cells > 0:
            bnd = np.geomspace(halo, x_range, tail_cells + 1)
            tail_mid = -0.5 * (bnd[1:] + bnd[:-1])
            tail_w = np.diff(bnd)
            self.x = np.concatenate((tail_mid[::-1], core_mid))
            self.widths = np.concatenate((tail_w[::-1], core_w))
            self.n_tail = tail_cells
        else:
            self.x = core_mid
            self.widths = core_w
            self.n_tail = 0
        self.n_core = core_cells
        self.below = below
        self.kernel = self._build_kernel(s_nodes)
        if var_tol is not None:
            bias = self.discrete_variance() / t ** (2.0 * hurst(2, beta)) - 1.0
            if abs(bias) > var_tol:
                raise ResolutionError(
                    f"grid too coarse: discretization bias {bias:+.3%} exceeds "
                    f"var_tol={var_tol:.3%} at cells={cells}")

    def _adaptive_range(self, budget: float) -> float:
        """Closed-form x-extent so the neglected tail variance stays under
        budget * t^(2H); kernel column decays like |x|^(beta-2)."""
        a, t = self.a, self.t
        b_fn = _beta_fn(a, 1.0 - 2.0 * a)
        dint = 2.0 * t ** (2 * a + 1) / ((2 * a) * (2 * a + 1))
        coef = 4.0 * self.a2b**2 * b_fn / (1.0 - 2.0 * a) * dint
        target = budget * t ** (2.0 * hurst(2, self.beta))
        return max((coef / target) ** (1.0 / (1.0 - 2.0 * a)), 8.0 * t)

    # kernel assembly ------------------------------------------------------

    def _build_kernel(self, s_nodes: int) -> np.ndarray:
        a, dx, t = self.a, self.dx, self.t
        nc, nt = self.n_core, self.n_tail
        total = nc + nt
        K = np.zeros((total, total))
        # core-core pairs through the lattice table
        psi = self._psi_table(s_nodes)  # psi[zi, k-1] = Psi(zi + 0.5; k)
        scale = dx ** (2 * a - 1.0)
        for k in range(1, nc):
            j = np.arange(k + 1, nc + 1)  # 1-based upper index
            hi = psi[nc - j, k - 1]
            lo = np.zeros(j.size)
            low_mask = j <= self.below  # upper midpoint x_j < 0: lower limit 0
            jm = j[low_mask]
            lo[low_mask] = psi[self.below - jm, k - 1]
            vals = scale * (hi - lo)
            rows = nt + j - k - 1
            cols = nt + j - 1
            K[rows, cols] = vals
            K[cols, rows] = vals
        # pairs with a tail cell: v-substituted Gauss, integrand smooth
        if nt:
            nodes, wts = np.polynomial.legendre.leggauss(24)
            xi = self.x[:nt]  # tail midpoints (most negative first)
            for jj in range(1, total):
                imax = min(jj, nt)
                x_j = self.x[jj]
                v_lo = (max(0.0, x_j) - x_j) ** a
                v_hi = (t - x_j) ** a
                mid, half = 0.5 * (v_hi + v_lo), 0.5 * (v_hi - v_lo)
                v = mid + half * nodes
                s_val = x_j + v ** (1.0 / a)
                base = (s_val[None, :] - xi[:imax, None]) ** (a - 1.0)
                vals = (half / a) * (base @ wts)
                K[:imax, jj] = vals
                K[jj, :imax] = vals
        return K

    def _psi_table(self, s_nodes: int) -> np.ndarray:
        """Psi(z; k) = int_0^z w^(a-1) (w+k)^(a-1) dw at half-integer z."""
        a, nc = self.a, self.n_core
        ks = np.arange(1, nc, dtype=np.float64)
        nodes, wts = np.polynomial.legendre.leggauss(s_nodes)
        incr = np.zeros((nc, nc - 1))
        # head segment [0, 1/2] with v = w^a
        vh = 0.5**a
        v = 0.5 * vh * (nodes + 1.0)
        w_head = v ** (1.0 / a)
        for g in range(s_nodes):
            incr[0] += (0.5 * vh / a) * wts[g] * (w_head[g] + ks) ** (a - 1.0)
        # unit segments [m-1/2, m+1/2]
        m = np.arange(1, nc, dtype=np.float64)
        for g in range(s_nodes):
            w = m + 0.5 * nodes[g]
            incr[1:] += 0.5 * wts[g] * (w[:, None] ** (a - 1.0)
                                        * (w[:, None] + ks[None, :]) ** (a - 1.0))
        return np.cumsum(incr, axis=0)

    # outputs ---------------------------------------------------------------

    def discrete_variance(self) -> float:
        """Deterministic second moment 2 sum_{i != j} K^2 dx_i dx_j (times a^2)."""
        wk = self.kernel * self.widths[None, :]
        wk *= self.widths[:, None]
        return 2.0 * self.a2b**2 * float(np.sum(wk * self.kernel))

    def sample(self, rng, size: int = 1) -> np.ndarray:
        w = rng.standard_normal((self.kernel.shape[0], size)) * np.sqrt(self.widths)[:, None]
        return self.a2b * np.einsum("is,is->s", w, self.kernel @ w)


@lru_cache(maxsize=8)
def _cached_generator(beta: float, t: float, cells: int) -> RosenblattGenerator:
    return RosenblattGenerator(beta=beta, t=t, cells=cells)


def rosenblatt_value(spec: HermiteSpec, t: float, rng, size: int = 1) -> np.ndarray:
    """Sample the standardized second-order limit at time t."""
    if spec.p != 2:
        raise ValueError("rosenblatt_value requires p = 2")
    gen = _cached_generator(spec.beta, t, spec.x_cells)
    return gen.sample(rng, size)


# -- ordered-gap kernel ------------------------------------------------------


def h_kernel(beta: float, xs) -> float:
    """Gap-product kernel: Gamma(beta)Gamma(2-beta) * prod of consecutive
    sorted-gap powers; 1 for no arguments, the constant alone for one."""
    xs = np.sort(np.asarray(xs, dtype=np.float64))
    if xs.size == 0:
        return 1.0
    g = gamma_pair(beta)
    if xs.size == 1:
        return g
    gaps = np.diff(xs)
    if np.any(gaps == 0.0):
        raise ValueError("coincident points make the kernel singular")
    return g * float(np.prod(gaps ** (beta - 1.0)))


# -- pairings and Gaussian moments ------------------------------------------


def pairings(r: int) -> list[tuple[tuple[int, int], ...]]:
    """All partitions of {0..r-1} into disjoint pairs; empty list if r odd."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r % 2 == 1:
        return []
    items = list(range(r))

    def rec(rest):
        if not rest:
            return [()]
        first, tail = rest[0], rest[1:]
        out = []
        for i, other in enumerate(tail):
            sub = tail[:i] + tail[i + 1:]
            for comb in rec(sub):
                out.append(((first, other),) + comb)
        return out

    return rec(items)


def gaussian_joint_moment(sigma2: float, ts) -> float:
    """E[prod sigma B(t_l)] = sigma^r sum over pairings of prod min(t_u, t_v)."""
    ts = np.asarray(ts, dtype=np.float64)
    r = ts.size
    if r % 2 == 1:
        return 0.0
    total = 0.0
    for pp in pairings(r):
        term = 1.0
        for u, v in pp:
            term *= min(ts[u], ts[v])
        total += term
    return sigma2 ** (r // 2) * total


# -- matchings ---------------------------------------------------------------


Matching = tuple[tuple[int, int], ...]


@lru_cache(maxsize=32)
def matchings(p: int, r: int) -> tuple[Matching, ...]:
    """All sequences of pr/2 ordered pairs over {0..r-1} with u != v and
    every index appearing exactly p times; empty when pr is odd."""
    if p < 1 or r < 1:
        raise ValueError("p and r must be >= 1")
    if p >= 3 and r > 4:
        raise ValueError("third- and higher-order matchings are capped at r <= 4 "
                         "(counts grow too fast beyond the exploratory range)")
    if (p * r) % 2 == 1:
        return ()
    npairs = p * r // 2
    out: list[Matching] = []
    counts = [p] * r

    def rec_ordered(acc):
        if len(acc) == npairs:
            out.append(tuple(acc))
            return
        for u in range(r):
            if counts[u] == 0:
                continue
            for v in range(r):
                if v == u or counts[v] == 0:
                    continue
                counts[u] -= 1
                counts[v] -= 1
                acc.append((u, v))
                rec_ordered(acc)
                acc.pop()
                counts[u] += 1
                counts[v] += 1
        return

    rec_ordered([])
    return tuple(out)


def _grouped_matchings(p: int, r: int):
    """Distinct unordered-pair multisets with their ordered multiplicities."""
    groups: dict[tuple, int] = {}
    for mt in matchings(p, r):
        key = tuple(sorted(tuple(sorted(pr)) for pr in mt))
        groups[key] = groups.get(key, 0) + 1
    return groups


# -- joint moment integrals --------------------------------------------------


@dataclass
class QmcResult:
    value: float
    stderr: float

    def __iter__(self):
        yield self.value
        yield self.stderr


def _qmc_integrate(fn, dim: int, ts, seed: int, points: int, shifts: int) -> QmcResult:
    """Randomized-Sobol mean of fn over prod [0, t_l], with shift stderr."""
    ts = np.asarray(ts, dtype=np.float64)
    vol = float(np.prod(ts))
    ests = np.empty(shifts)
    m = int(math.ceil(math.log2(points)))
    for s in range(shifts):
        eng = qmc.Sobol(d=dim, scramble=True, seed=seed + s)
        pts = eng.random_base2(m) * ts[None, :]
        ests[s] = float(np.mean(fn(pts))) * vol
    return QmcResult(float(np.mean(ests)), float(np.std(ests, ddof=1) / math.sqrt(shifts)))


def hermite_joint_moment(p: int, beta: float, mu_f: float, ts, seed: int = 0,
                         points: int = 4096, shifts: int = 64) -> QmcResult:
    """Joint moment E[prod_l H(t_l)] of the long-range limit under the
    order-compensated normalization.

    Exactly zero when pr is odd; closed form at r <= 2; randomized
    quasi-Monte Carlo over the grouped pair matchings otherwise.
    """
    _check_beta(p, beta)
    ts = np.asarray(ts, dtype=np.float64)
    r = ts.size
    if (p * r) % 2 == 1:
        return QmcResult(0.0, 0.0)
    g = gamma_pair(beta)
    pr2 = p * r // 2
    pref = (mu_f * math.factorial(p)) ** r * g**pr2 / (2.0**pr2 * math.factorial(pr2))
    if r == 1:
        return QmcResult(0.0, 0.0)
    if r == 2:
        # all 2^p matchings share one closed-form integral
        gam = p * (1.0 - beta)
        t1, t2 = float(ts[0]), float(ts[1])
        integral = (t1 ** (2 - gam) + t2 ** (2 - gam) - abs(t1 - t2) ** (2 - gam))
        integral /= (1.0 - gam) * (2.0 - gam)
        return QmcResult(pref * 2.0**p * integral, 0.0)

    groups = _grouped_matchings(p, r)

    def integrand(pts):
        acc = np.zeros(pts.shape[0])
        for key, mult in groups.items():
            term = np.ones(pts.shape[0])
            for u, v in key:
                term = term * np.maximum(np.abs(pts[:, u] - pts[:, v]), 1e-300) ** (beta - 1.0)
            acc += mult * term
        return acc

    est = _qmc_integrate(integrand, r, ts, seed, points, shifts)
    return QmcResult(pref * est.value, pref * est.stderr)


def lrd_limit_moment(beta: float, mu_f: float, index_sets, ts, p: int | None = None,
                     seed: int = 0, points: int = 4096, shifts: int = 64) -> QmcResult:
    """Limit of E[prod_l (scaled window sums over the set I_l)]: the gap-kernel
    integral over prod (0, t_l), one kernel factor per spatial index."""
    ts = np.asarray(ts, dtype=np.float64)
    r = ts.size
    sets = [tuple(sorted(int(i) for i in s)) for s in index_sets]
    if len(sets) != r:
        raise ValueError("one index set per time point required")
    if p is None:
        p = len(sets[0])
    _check_beta(p, beta)
    kmax = max(max(s) for s in sets)
    occupants = [tuple(l for l, s in enumerate(sets) if i in s) for i in range(1, kmax + 1)]
    g = gamma_pair(beta)

    # constant factors (|I(i)| <= 1) split off exactly
    const = 1.0
    heavy = []
    for occ in occupants:
        if len(occ) == 0:
            continue
        if len(occ) == 1:
            const *= g
        else:
            heavy.append(occ)

    if not heavy:
        return QmcResult(mu_f**r * const * float(np.prod(ts)), 0.0)

    def integrand(pts):
        term = np.ones(pts.shape[0])
        for occ in heavy:
            sub = np.sort(pts[:, occ], axis=1)
            gaps = np.maximum(np.diff(sub, axis=1), 1e-300)
            term = term * g * np.prod(gaps ** (beta - 1.0), axis=1)
        return term

    est = _qmc_integrate(integrand, r, ts, seed, points, shifts)
    scale = mu_f**r * const
    return QmcResult(scale * est.value, scale * est.stderr)
