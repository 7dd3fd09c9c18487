"""Symmetric Levy measures with unit second moment.

Two descriptions are supported: a finite atomic measure (drives the
compound-Poisson simulation) and a tail-inverse function (drives the series
representation and the moment identities).  The moment identity
``int |x|^r rho(dx) = int_0^inf rho_inv(y)^r dy`` links the two and is the
main cross-check between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

__all__ = [
    "FiniteLevyMeasure",
    "TailInverse",
    "ParetoTail",
    "StepTail",
    "DivergentMomentError",
    "ResolutionError",
    "rademacher_measure",
    "pareto_tail_inverse",
    "moment",
    "discretize",
    "standardize",
    "parse_levy_model",
]


class DivergentMomentError(ValueError):
    pass


class ResolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class FiniteLevyMeasure:
    """Finite symmetric atomic measure; atoms stored for x > 0 and mirrored."""

    xs: np.ndarray  # positive atom locations, strictly decreasing
    masses: np.ndarray  # per-side masses, same length

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ms = np.asarray(self.masses, dtype=np.float64)
        if xs.ndim != 1 or xs.shape != ms.shape:
            raise ValueError("xs and masses must be 1-d arrays of equal length")
        if np.any(xs <= 0) or np.any(ms <= 0):
            raise ValueError("atom locations and masses must be positive")
        order = np.argsort(-xs)
        object.__setattr__(self, "xs", xs[order])
        object.__setattr__(self, "masses", ms[order])
        if np.any(np.diff(self.xs) == 0):
            raise ValueError("atom locations must be distinct")

    @property
    def total_mass(self) -> float:
        """Q = rho(R), counting both signs."""
        return 2.0 * float(np.sum(self.masses))

    def moment(self, r: float) -> float:
        """int |x|^r rho(dx) = 2 sum m x^r (symmetrized)."""
        return 2.0 * float(np.sum(self.masses * self.xs**r))

    def signed_moment(self, r: int) -> float:
        """int x^r rho(dx): identically zero for odd r by the mirror symmetry."""
        if r % 2 == 1:
            return 0.0
        return self.moment(float(r))

    def second_moment(self) -> float:
        return self.moment(2.0)

    def tail_inverse(self) -> "StepTail":
        """Exact generalized inverse of the symmetric tail, a right-continuous
        nonincreasing step function."""
        breaks = 2.0 * np.cumsum(self.masses)
        return StepTail(breaks=breaks, values=self.xs.copy())

    def sample_marks(self, count: int, rng) -> np.ndarray:
        """i.i.d. draws from rho/Q (atom by mass, then a fair sign)."""
        probs = self.masses / np.sum(self.masses)
        idx = rng.choice(len(self.xs), size=count, p=probs)
        signs = rng.integers(0, 2, size=count) * 2 - 1
        return self.xs[idx] * signs


class TailInverse:
    """Nonincreasing right-continuous y -> rho_inv(y); zero for y >= mass."""

    tag = "generic"

    def evaluate(self, y):
        raise NotImplementedError

    def __call__(self, y):
        return self.evaluate(y)

    @property
    def mass(self) -> float:
        """Total mass Q of the underlying measure (support of rho_inv is [0, Q))."""
        raise NotImplementedError


@dataclass(frozen=True)
class ParetoTail(TailInverse):
    """rho with density (alpha x0^alpha / 2) |x|^(-alpha-1) on |x| > x0, with
    x0 = sqrt((alpha-2)/alpha) so the second moment is 1."""

    alpha: float
    x0: float = field(init=False)
    tag = "pareto"

    def __post_init__(self):
        if self.alpha <= 2.0:
            raise ValueError(f"alpha must exceed 2 (finite variance), got {self.alpha}")
        object.__setattr__(self, "x0", math.sqrt((self.alpha - 2.0) / self.alpha))

    @property
    def mass(self) -> float:
        return 1.0

    def evaluate(self, y):
        y = np.asarray(y, dtype=np.float64)
        out = np.where(y < 1.0, self.x0 * np.maximum(y, 1e-300) ** (-1.0 / self.alpha), 0.0)
        return out if out.ndim else float(out)

    def moment_closed_form(self, r: float) -> float:
        if r >= self.alpha:
            raise DivergentMomentError(f"moment of order {r} diverges for alpha={self.alpha}")
        return self.alpha * self.x0**r / (self.alpha - r)


@dataclass(frozen=True)
class StepTail(TailInverse):
    """rho_inv(y) = values[i] on [breaks[i-1], breaks[i]), zero beyond."""

    breaks: np.ndarray  # increasing positive cut points
    values: np.ndarray  # strictly decreasing positive levels
    tag = "step"

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if b.shape != v.shape or b.ndim != 1:
            raise ValueError("breaks and values must be 1-d of equal length")
        if np.any(np.diff(b) <= 0) or b[0] <= 0:
            raise ValueError("breaks must be positive increasing")
        if np.any(np.diff(v) >= 0) or np.any(v <= 0):
            raise ValueError("values must be positive strictly decreasing")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)

    @property
    def mass(self) -> float:
        return float(self.breaks[-1])

    def evaluate(self, y):
        y = np.asarray(y, dtype=np.float64)
        idx = np.searchsorted(self.breaks, y, side="right")
        padded = np.concatenate((self.values, [0.0]))
        out = np.where(y < 0, np.nan, padded[idx])
        return out if out.ndim else float(out)

    def to_measure(self) -> FiniteLevyMeasure:
        widths = np.diff(np.concatenate(([0.0], self.breaks)))
        return FiniteLevyMeasure(xs=self.values.copy(), masses=widths / 2.0)


def rademacher_measure() -> FiniteLevyMeasure:
    """Unit masses at +-1: the simplest standardized finite Levy measure."""
    return FiniteLevyMeasure(xs=np.array([1.0]), masses=np.array([0.5]))


def pareto_tail_inverse(alpha: float) -> ParetoTail:
    """Standardized symmetric Pareto tail; alpha > 2 required, alpha > 4 for
    callers that need finite fourth moments."""
    return ParetoTail(alpha=alpha)


def _quad_tail_power(ti: TailInverse, r: float, lo: float, hi: float) -> float:
    """int_lo^hi rho_inv(y)^r dy with the y -> hi*t^4 substitution absorbing
    the possible blow-up at y = 0."""
    if lo > 0:
        val, _ = quad(lambda y: float(np.asarray(ti.evaluate(y))) ** r, lo, hi, limit=200)
        return val
    k = 4.0

    def g(t):
        y = hi * t**k
        return float(np.asarray(ti.evaluate(y))) ** r * hi * k * t ** (k - 1.0)

    val, _ = quad(g, 0.0, 1.0, limit=400)
    return val


def moment(model, r: float) -> float:
    """int |x|^r rho(dx), by atom sums or by tail-inverse quadrature."""
    if r <= 0:
        raise ValueError("moment order must be positive")
    if isinstance(model, FiniteLevyMeasure):
        return model.moment(r)
    if isinstance(model, ParetoTail) and r >= model.alpha:
        raise DivergentMomentError(f"moment of order {r} diverges for alpha={model.alpha}")
    if isinstance(model, StepTail):
        # exact: piecewise constant
        widths = np.diff(np.concatenate(([0.0], model.breaks)))
        return float(np.sum(widths * model.values**r))
    return _quad_tail_power(model, r, 0.0, model.mass)


def standardize(m: FiniteLevyMeasure) -> FiniteLevyMeasure:
    """Scale atoms x -> x/s so the second moment is exactly 1; Q unchanged."""
    s2 = m.second_moment()
    if s2 <= 0:
        raise ValueError("measure must have positive second moment")
    s = math.sqrt(s2)
    return FiniteLevyMeasure(xs=m.xs / s, masses=m.masses.copy())


def _l2_distance(ti: TailInverse, step: StepTail) -> float:
    """||rho_inv - step||_{L2(R+)} by per-cell quadrature."""
    cuts = np.unique(np.concatenate(([0.0], step.breaks, [ti.mass], [step.mass])))
    cuts = cuts[cuts <= max(ti.mass, step.mass) + 0.0]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        sv = step.evaluate(0.5 * (lo + hi))

        def g(y):
            return (float(np.asarray(ti.evaluate(y))) - sv) ** 2

        if lo == 0.0:
            # possible blow-up of rho_inv at 0; substitute y = hi t^4
            k = 4.0
            val, _ = quad(
                lambda t: (float(np.asarray(ti.evaluate(hi * t**k))) - sv) ** 2
                * hi * k * t ** (k - 1.0),
                0.0, 1.0, limit=400,
            )
        else:
            val, _ = quad(g, lo, hi, limit=200)
        total += val
    return math.sqrt(total)


def discretize(ti: TailInverse, eps: float, max_cells: int = 2**15):
    """Approximate a tail inverse by a finite atomic measure.

    Builds a right-continuous nonincreasing step function on a geometric
    y-grid whose L2 distance to rho_inv is at most eps, converts it to a
    symmetric atomic measure, re-standardizes to unit second moment, and
    reports the combined L2 error actually achieved.

    Returns (measure, achieved_err).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0,1)")
    if isinstance(ti, StepTail):
        m = ti.to_measure()
        ms = standardize(m)
        err = _l2_distance(ti, ms.tail_inverse())
        return ms, err

    y_max = ti.mass
    # cell count scales with 1/eps so achieved_err decreases with eps
    cells = min(max(64, int(8.0 / eps)), max_cells)
    while cells <= max_cells:
        # head cut: truncated-head L2 mass below (eps/2)^2 in squared norm
        y_min = _head_cut(ti, y_max, (0.5 * eps) ** 2)
        grid = np.geomspace(y_min, y_max, cells + 1)
        lefts = np.concatenate(([0.0], grid[:-1]))
        rights = np.concatenate(([y_min], grid[1:]))
        # cap the head cell at rho_inv(y_min); left-edge value elsewhere
        vals = np.asarray(ti.evaluate(lefts))
        vals[0] = float(np.asarray(ti.evaluate(y_min)))
        keep = vals > 0
        vals, rights = vals[keep], rights[keep]
        # enforce strict decrease by merging equal-value cells
        vals_u, last_right = [], []
        for v, rgt in zip(vals, rights):
            if vals_u and v >= vals_u[-1] - 0.0:
                if v == vals_u[-1]:
                    last_right[-1] = rgt
                    continue
                v = np.nextafter(vals_u[-1], 0.0)
            vals_u.append(v)
            last_right.append(rgt)
        step = StepTail(breaks=np.asarray(last_right), values=np.asarray(vals_u))
        measure = standardize(step.to_measure())
        err = _l2_distance(ti, measure.tail_inverse())
        if err <= eps:
            return measure, err
        cells *= 2
    raise ResolutionError(f"cannot reach eps={eps} within {max_cells} cells")


def _head_cut(ti: TailInverse, y_max: float, budget: float) -> float:
    """Largest geometric-grid y below which the squared-L2 head mass of
    rho_inv is under budget."""
    lo, hi = 1e-12 * y_max, 0.25 * y_max
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if _quad_tail_power(ti, 2.0, 0.0, mid) > budget:
            hi = mid
        else:
            lo = mid
    return lo


def parse_levy_model(text: str):
    """CLI spelling: rademacher | pareto:ALPHA | discretized:ALPHA:EPS."""
    parts = text.strip().lower().split(":")
    if parts[0] == "rademacher" and len(parts) == 1:
        return rademacher_measure()
    if parts[0] == "pareto" and len(parts) == 2:
        return pareto_tail_inverse(float(parts[1]))
    if parts[0] == "discretized" and len(parts) == 3:
        measure, _ = discretize(pareto_tail_inverse(float(parts[1])), float(parts[2]))
        return measure
    raise ValueError(f"unknown levy model spelling: {text!r}")
