"""Simulation of the stationary sequence X_k and its normalized partial sums.

X_k is the order-p off-diagonal multilinear form in the random-measure atoms
whose spatial components hit A at time k.  Two constructions are provided:
the compound-Poisson frame (Poisson count of marked paths) and the series
frame (exponential arrivals transformed through the tail inverse); for a
finite Levy measure the two are equal in law at every fixed n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .levy import FiniteLevyMeasure, ResolutionError, TailInverse
from .renewal import ReturnLaw, rate_b_prefactor, sample_renewal_batch

__all__ = [
    "Representation",
    "Normalization",
    "AnConvention",
    "ChaosFrame",
    "PartialSumPath",
    "build_frame",
    "elementary_symmetric",
    "x_sequence",
    "partial_sums",
    "normalizer_value",
]


class Representation(str, Enum):
    COMPOUND_POISSON = "cp"
    SERIES = "series"


class Normalization(str, Enum):
    SQRT_N = "sqrtn"
    AN = "an"
    PROP = "prop"


class AnConvention(str, Enum):
    VARIANCE_MATCHED = "variance-matched"
    FACTORIAL_INSIDE = "factorial-inside"


@dataclass
class ChaosFrame:
    """One replication's randomness: marked paths over the window 1..n."""

    n: int
    representation: Representation
    w_n: float
    n_paths: int  # Poisson count N_n, or series truncation index
    marks: np.ndarray  # mark of each path (atom value, signed)
    origins: np.ndarray  # mu_n origin per path (0 = AtOrigin)
    event_path: np.ndarray  # flat: path index of each renewal event
    event_time: np.ndarray  # flat: time in 1..n of each renewal event
    truncation_l2_err: float = 0.0

    @property
    def poisson_count(self) -> int:
        return self.n_paths

    def renewal_times(self, i: int) -> np.ndarray:
        """Sorted renewal epochs of path i."""
        return np.sort(self.event_time[self.event_path == i])

    def active_bucket(self, k: int) -> np.ndarray:
        """Indices i with a renewal of path i at time k."""
        return self.event_path[self.event_time == k]

    def bucket_counts(self) -> np.ndarray:
        """|active_bucket(k)| for k = 1..n."""
        return np.bincount(self.event_time, minlength=self.n + 1)[1:]


def build_frame(law: ReturnLaw, levy, n: int, representation: Representation,
                rng, series_tol: float = 1e-3, max_series_index: int = 10**7) -> ChaosFrame:
    """Draw one frame: marks and renewal paths for a window of length n."""
    representation = Representation(representation)
    w_n = float(law.wandering(n)[n])
    trunc_err = 0.0
    if representation is Representation.COMPOUND_POISSON:
        if not isinstance(levy, FiniteLevyMeasure):
            raise TypeError("compound-Poisson mode requires a FiniteLevyMeasure")
        count = int(rng.poisson(levy.total_mass * w_n))
        marks = levy.sample_marks(count, rng) if count else np.zeros(0)
    else:
        ti = levy.tail_inverse() if isinstance(levy, FiniteLevyMeasure) else levy
        if not isinstance(ti, TailInverse):
            raise TypeError("series mode requires a tail inverse or finite measure")
        mags, trunc_err = _series_magnitudes(ti, w_n, rng, series_tol, max_series_index)
        signs = rng.integers(0, 2, size=mags.size) * 2 - 1
        marks = mags * signs
        count = marks.size
    if count == 0:
        return ChaosFrame(n=n, representation=representation, w_n=w_n, n_paths=0,
                          marks=np.zeros(0), origins=np.zeros(0, dtype=np.int64),
                          event_path=np.zeros(0, dtype=np.int64),
                          event_time=np.zeros(0, dtype=np.int64),
                          truncation_l2_err=trunc_err)
    origins, event_path, event_time = sample_renewal_batch(law, n, rng, count)
    return ChaosFrame(n=n, representation=representation, w_n=w_n, n_paths=count,
                      marks=marks, origins=origins, event_path=event_path,
                      event_time=event_time, truncation_l2_err=trunc_err)


def _series_magnitudes(ti: TailInverse, w_n: float, rng, tol: float, cap: int):
    """Arrival magnitudes rho_inv(Gamma_i / w_n), truncated where they hit
    zero (finite mass) or where the tail L2 bound drops below tol."""
    horizon = ti.mass * w_n  # beyond this arrival epoch all magnitudes vanish
    if math.isfinite(horizon):
        mags = []
        gamma = 0.0
        block = max(16, int(horizon) + 4 * int(math.sqrt(horizon) + 1))
        while gamma < horizon:
            es = rng.standard_exponential(block)
            g = gamma + np.cumsum(es)
            mags.append(np.asarray(ti.evaluate(np.minimum(g, horizon) / w_n)))
            gamma = float(g[-1])
            block = max(16, block // 2)
        m = np.concatenate(mags)
        # rho_inv is nonincreasing, so zero magnitudes form a suffix
        return m[m > 0.0], 0.0
    # infinite total mass: stop once the remaining tail L2 mass is below tol
    mags = []
    gamma = 0.0
    from scipy.integrate import quad
    while True:
        es = rng.standard_exponential(4096)
        g = gamma + np.cumsum(es)
        mags.append(np.asarray(ti.evaluate(g / w_n)))
        gamma = float(g[-1])
        tail_sq, _ = quad(lambda y: float(np.asarray(ti.evaluate(y))) ** 2,
                          gamma / w_n, gamma / w_n * 16.0, limit=100)
        if w_n * tail_sq < tol * tol:
            return np.concatenate(mags), math.sqrt(max(w_n * tail_sq, 0.0))
        if sum(x.size for x in mags) > cap:
            raise ResolutionError("series truncation tolerance unattainable within cap")


def elementary_symmetric(values, p: int) -> float:
    """e_p of a list by the stable one-pass recurrence."""
    if p < 0:
        raise ValueError("p must be nonnegative")
    if p == 0:
        return 1.0
    e = np.zeros(p + 1)
    e[0] = 1.0
    for m, v in enumerate(values, start=1):
        for j in range(min(p, m), 0, -1):  # downward pass keeps it one-shot
            e[j] += v * e[j - 1]
    return float(e[p])


def x_sequence(frame: ChaosFrame, p: int, theta: float = 1.0) -> np.ndarray:
    """X_1..X_n with X_k = p! theta e_p(marks in active bucket k).

    Elementary symmetric values are accumulated through bucketed power sums
    (Newton's identities), which agrees with the direct recurrence and costs
    O(total renewals * p).
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    n = frame.n
    if frame.n_paths == 0:
        return np.zeros(n)
    vals = frame.marks[frame.event_path]
    power_sums = []
    vp = np.ones_like(vals)
    for _ in range(p):
        vp = vp * vals
        power_sums.append(np.bincount(frame.event_time, weights=vp, minlength=n + 1)[1:])
    # Newton: m e_m = sum_{i=1}^m (-1)^{i-1} e_{m-i} S_i
    e = [np.ones(n)]
    for m in range(1, p + 1):
        acc = np.zeros(n)
        sign = 1.0
        for i in range(1, m + 1):
            acc += sign * e[m - i] * power_sums[i - 1]
            sign = -sign
        e.append(acc / m)
    return math.factorial(p) * theta * e[p]


@dataclass
class PartialSumPath:
    """Normalized partial sums of an X-sequence on a time grid in [0,1]."""

    tgrid: np.ndarray
    values: np.ndarray
    normalization: Normalization
    normalizer: float
    n: int
    convention: AnConvention | None = None
    seed_info: dict = field(default_factory=dict)


def normalizer_value(law: ReturnLaw, p: int, n: int, norm: Normalization,
                     convention: AnConvention = AnConvention.VARIANCE_MATCHED) -> float:
    """The dividing constant for each normalization mode."""
    norm = Normalization(norm)
    beta = law.beta
    if norm is Normalization.SQRT_N:
        if p * (beta - 1.0) >= -1.0:
            raise ValueError(
                f"sqrt(n) normalization requires p(beta-1) < -1; got p(beta-1)={p*(beta-1.0)}")
        return math.sqrt(n)
    if p * (beta - 1.0) <= -1.0 or p * (beta - 1.0) >= 0.0:
        raise ValueError(
            f"{norm.value} normalization requires p(beta-1) in (-1,0); got {p*(beta-1.0)}")
    w_n = float(law.wandering(n)[n])
    b_n = rate_b_prefactor(law) * w_n
    if norm is Normalization.PROP:
        return w_n ** (p / 2.0) * n / b_n**p
    gamma = p * (1.0 - beta)
    core = (1.0 - gamma / 2.0) * (1.0 - gamma)
    convention = AnConvention(convention)
    if convention is AnConvention.VARIANCE_MATCHED:
        scale = math.sqrt(math.factorial(p) / core)
    else:
        scale = math.sqrt(1.0 / (core * math.factorial(p)))
    return scale * n / b_n ** (p / 2.0)


def partial_sums(x: np.ndarray, law: ReturnLaw, p: int, tgrid, norm: Normalization,
                 sigma2: float | None = None,
                 convention: AnConvention = AnConvention.VARIANCE_MATCHED) -> PartialSumPath:
    """S(t_j) = normalizer^-1 sum_{k <= floor(n t_j)} X_k."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    tgrid = np.asarray(tgrid, dtype=np.float64)
    if np.any(tgrid < 0) or np.any(tgrid > 1) or np.any(np.diff(tgrid) < 0):
        raise ValueError("tgrid must be nondecreasing within [0,1]")
    norm = Normalization(norm)
    c = normalizer_value(law, p, n, norm, convention)
    if norm is Normalization.SQRT_N and sigma2 is not None:
        c *= math.sqrt(sigma2)
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.floor(n * tgrid).astype(np.int64)
    return PartialSumPath(tgrid=tgrid, values=csum[idx] / c, normalization=norm,
                          normalizer=c, n=n,
                          convention=AnConvention(convention) if norm is Normalization.AN else None)
