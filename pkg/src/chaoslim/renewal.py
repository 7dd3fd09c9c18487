"""Null-recurrent renewal shift: return law, renewal masses, wandering sequence.

The driving dynamical system is realized concretely as the shift on renewal
indicator paths with return-time distribution ``f_j = j^(-(1+beta)) / zeta(1+beta)``.
The distinguished set A is "renewal at time 0" and carries measure 1; all
quantities below (u_k, w_n, b_n, the restricted measure mu_n) are exact for
this system, which makes them usable as oracles against Monte Carlo output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "ReturnLaw",
    "RenewalPath",
    "make_return_law",
    "return_mass_sequence",
    "return_mass_sequence_naive",
    "wandering_sequence",
    "rate_b",
    "sample_mu_n_path",
    "sample_renewal_batch",
]

# Cache cap for tabulated pmf/survival values; beyond it the analytic tail
# expansion is used instead of storage.
MAX_CACHE = 2**24


def _zeta_em(s: float, terms: int = 10_000) -> float:
    """Riemann zeta for s > 1 by direct summation plus Euler-Maclaurin tail."""
    j = np.arange(1, terms, dtype=np.float64)
    head = float(np.sum(j ** (-s)))
    n = float(terms)
    tail = (
        n ** (1.0 - s) / (s - 1.0)
        + 0.5 * n ** (-s)
        + s * n ** (-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * n ** (-s - 3.0) / 720.0
    )
    return head + tail


def _power_tail(s: float, n: float) -> float:
    """Euler-Maclaurin value of sum_{j>n} j^(-s)."""
    a = n + 1.0
    return (
        a ** (1.0 - s) / (s - 1.0)
        + 0.5 * a ** (-s)
        + s * a ** (-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * a ** (-s - 3.0) / 720.0
    )


@dataclass
class ReturnLaw:
    """Return-time distribution f_j proportional to j^(-(1+beta)), j >= 1.

    Immutable in the mutation sense: the internal arrays only ever extend,
    and every extension is a deterministic function of (beta, tol), so
    instances are safe to share across worker processes.
    """

    beta: float
    tol: float = 1e-12
    normalizer: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0,1), got {self.beta}")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        self.normalizer = 1.0 / _zeta_em(1.0 + self.beta)
        # cached arrays, 1-based quantities stored from index 1
        self._f = np.zeros(1)  # f[j] = P(R = j)
        self._q = np.zeros(1)  # q[j] = P(R > j)
        self._w = np.zeros(1)  # w[n] = mu(union of first n preimages of A)

    # -- tabulation ---------------------------------------------------------

    def _ensure(self, n: int) -> None:
        if n >= MAX_CACHE:
            raise ValueError(f"n={n} exceeds cache cap {MAX_CACHE}")
        if len(self._f) > n:
            return
        s = 1.0 + self.beta
        # minimum table size keeps the Euler-Maclaurin survival tail below 1e-14
        m = max(2 * len(self._f), n + 1, 4097)
        j = np.arange(1, m, dtype=np.float64)
        raw = j ** (-s)
        f = np.concatenate(([0.0], raw * self.normalizer))
        # survival by reverse cumulative sum plus analytic tail: no 1-x
        # cancellation even where q_j is small
        tail = _power_tail(s, float(m - 1))
        q = np.concatenate(([0.0], (np.cumsum(raw[::-1])[::-1] - raw + tail)))
        q *= self.normalizer
        q[0] = 1.0
        # w[n] = 1 + sum_{j=1}^{n-1} q_j ; w[1] = 1
        w = np.empty(m)
        w[0] = 0.0
        w[1] = 1.0
        if m > 2:
            w[2:] = 1.0 + np.cumsum(q[1:-1])
        self._f, self._q, self._w = f, q, w

    # -- exact quantities ---------------------------------------------------

    def pmf(self, j):
        """P(R = j) for integer j >= 1 (scalar or array)."""
        j = np.asarray(j)
        if np.any(j < 1):
            raise ValueError("pmf defined for j >= 1")
        return self.normalizer * j ** -(1.0 + self.beta)

    def survival(self, j):
        """P(R > j) for integer j >= 0 (scalar or array)."""
        jmax = int(np.max(j))
        if jmax < MAX_CACHE:
            self._ensure(jmax)
            return self._q[np.asarray(j, dtype=np.int64)]
        return self.normalizer * _power_tail(1.0 + self.beta, np.asarray(j, float))

    def wandering(self, n: int) -> np.ndarray:
        """w_1..w_n as an array indexed so result[k] = w_k (result[0] unused)."""
        self._ensure(n)
        return self._w[: n + 1].copy()

    def gap_cdf(self, n: int) -> np.ndarray:
        """cdf[j] = P(R <= j) for j = 0..n (cdf[0] = 0)."""
        self._ensure(n)
        return 1.0 - self._q[: n + 1]


def make_return_law(beta: float, tol: float = 1e-12) -> ReturnLaw:
    """Build the canonical power-law return distribution for a given beta."""
    return ReturnLaw(beta=beta, tol=tol)


# -- renewal mass sequence u_k ---------------------------------------------


def return_mass_sequence(law: ReturnLaw, n: int) -> np.ndarray:
    """u_0..u_n with u_k = mu(A intersect T^-k A), via the power-series
    reciprocal U(z) = 1/(1 - F(z)) computed by Newton doubling with FFT
    convolution; O(n log n), handles n = 10^6 in seconds."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return np.ones(1)
    law._ensure(n)
    a = np.zeros(n + 1)
    a[0] = 1.0
    a[1:] = -law._f[1 : n + 1]  # series 1 - F(z)
    b = np.ones(1)
    m = 1
    while m < n + 1:
        m2 = min(2 * m, n + 1)
        t = fftconvolve(a[:m2], b)[:m2]
        t = -t
        t[0] += 2.0
        b = fftconvolve(b, t)[:m2]
        m = m2
    # one correction pass: b += b * (1 - a b), kills accumulated FFT error
    r = -fftconvolve(a, b)[: n + 1]
    r[0] += 1.0
    b = b + fftconvolve(b, r)[: n + 1]
    return b


def return_mass_sequence_naive(law: ReturnLaw, n: int) -> np.ndarray:
    """O(n^2) direct renewal recursion u_k = sum_j f_j u_{k-j}; oracle for
    the fast path."""
    law._ensure(max(n, 1))
    f = law._f
    u = np.zeros(n + 1)
    u[0] = 1.0
    for k in range(1, n + 1):
        u[k] = np.dot(f[1 : k + 1], u[k - 1 :: -1])
    return u


def wandering_sequence(law: ReturnLaw, n: int) -> np.ndarray:
    """w_1..w_n (index 0 unused), w_n = P(R<=n) + sum_{j<=n} P(R>j)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return law.wandering(n)


def rate_b(law: ReturnLaw, n: int) -> float:
    """b_n, adopted exactly as Gamma(beta) Gamma(2-beta) w_n."""
    g = math.gamma(law.beta) * math.gamma(2.0 - law.beta)
    return g * float(law.wandering(n)[n])


def rate_b_prefactor(law: ReturnLaw) -> float:
    return math.gamma(law.beta) * math.gamma(2.0 - law.beta)


# -- sampling from the normalized restricted measure mu_n -------------------


@dataclass
class RenewalPath:
    """One draw from mu_n: origin plus renewal times within 1..n."""

    n: int
    origin: int  # 0 for AtOrigin, j >= 1 for InteriorDelay(j)
    times: np.ndarray  # sorted renewal times, all in 1..n, nonempty

    @property
    def indicators(self) -> np.ndarray:
        """xi_1..xi_n as a 0/1 array (index 0 unused)."""
        xi = np.zeros(self.n + 1, dtype=np.int8)
        xi[self.times] = 1
        return xi


def sample_renewal_batch(law: ReturnLaw, n: int, rng, count: int):
    """Sample `count` i.i.d. mu_n paths, vectorized.

    Returns (origins, path_index, times): flat arrays where times[k] is a
    renewal epoch of path path_index[k]. Every path has at least one time.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    law._ensure(n)
    cdf = 1.0 - law._q[: n + 1]  # cdf[j] = P(R <= j)
    q = law._q[: n + 1]
    cumq = np.cumsum(q[1:])  # cumq[j-1] = q_1 + .. + q_j
    p_at_origin = cdf[n]
    w_n = p_at_origin + cumq[-1]

    u = rng.random(count) * w_n
    at_origin = u < p_at_origin
    origins = np.empty(count, dtype=np.int64)
    first = np.empty(count, dtype=np.int64)
    # AtOrigin: first gap is R conditioned on R <= n; the same uniform
    # restricted to [0, P(R<=n)) is exactly that conditional draw
    first[at_origin] = np.searchsorted(cdf[1:], u[at_origin], side="right") + 1
    origins[at_origin] = 0
    j = np.searchsorted(cumq, u[~at_origin] - p_at_origin, side="right") + 1
    first[~at_origin] = j
    origins[~at_origin] = j

    times_chunks = [first]
    idx_chunks = [np.arange(count, dtype=np.int64)]
    cur = first.copy()
    active = np.arange(count, dtype=np.int64)
    # mean gaps per path is n/w_n; draw in blocks until all paths leave 1..n
    block = max(4, int(n / w_n + 4.0 * math.sqrt(n / w_n) + 8))
    while active.size:
        draws = rng.random((active.size, block))
        # gap > n maps to sentinel n+1 which necessarily ends the path
        gaps = np.searchsorted(cdf[1:], draws, side="right") + 1
        pos = cur[active, None] + np.cumsum(gaps, axis=1)
        keep = pos <= n
        rows, cols = np.nonzero(keep)
        times_chunks.append(pos[rows, cols])
        idx_chunks.append(active[rows])
        alive = keep[:, -1]
        cur[active[alive]] = pos[alive, -1]
        active = active[alive]
        block = max(4, block // 2)
    return origins, np.concatenate(idx_chunks), np.concatenate(times_chunks)


def sample_mu_n_path(law: ReturnLaw, n: int, rng) -> RenewalPath:
    """One path from mu_n (origin weight q_j for InteriorDelay(j), weight
    P(R<=n) for AtOrigin with truncated first gap)."""
    origins, _, times = sample_renewal_batch(law, n, rng, 1)
    return RenewalPath(n=n, origin=int(origins[0]), times=np.sort(times))
