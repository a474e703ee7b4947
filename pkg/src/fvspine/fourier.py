"""Separation-of-variables series for the harmonic function h on the square.

h is harmonic on (0, pi)^2, vanishes on the sides x = 0 and x = pi and equals
1 on y = 0 and y = pi.  With n = 2k + 1,

    h(x, y)   = (4/pi) sum_k sin(n x)/n * Y_n(y),
    h_x(x, y) = (4/pi) sum_k cos(n x)   * Y_n(y),

where Y_n(y) = F_n(y) - coth(n pi) G_n(y) = cosh(n(y - pi/2)) / cosh(n pi/2).
The last form is evaluated as (e^{-nd} + e^{-n(pi-d)}) / (1 + e^{-n pi}),
d = min(y, pi - y), which never overflows.  Since Y_n(y) <= 2 e^{-nd}, every
partial sum comes with an explicit geometric tail bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PrecisionError

PI = math.pi
MAX_TERMS = 10_000


@dataclass(frozen=True)
class SquarePoint:
    x: float
    y: float

    def __post_init__(self):
        if not (0.0 < self.x < PI and 0.0 < self.y < PI):
            raise DomainError(f"({self.x}, {self.y}) is not inside the open square (0, pi)^2")

    @classmethod
    def of(cls, p) -> "SquarePoint":
        if isinstance(p, cls):
            return p
        if isinstance(p, complex):
            return cls(p.real, p.imag)
        x, y = p
        return cls(float(x), float(y))

    def swapped(self) -> "SquarePoint":
        return SquarePoint(self.y, self.x)


@dataclass(frozen=True)
class SeriesEvaluation:
    value: float
    tail_bound: float
    terms_used: int


@dataclass(frozen=True)
class SeriesTerm:
    """The k-th term data at height y (raw hyperbolic form, for small n only)."""

    n: int
    F: float
    G: float
    a: float
    gamma: float

    @classmethod
    def at(cls, k: int, y: float) -> "SeriesTerm":
        n = 2 * k + 1
        return cls(
            n=n,
            F=math.cosh(n * y) + math.cosh(n * (PI - y)),
            G=math.sinh(n * y) + math.sinh(n * (PI - y)),
            a=4.0 / (PI * n),
            gamma=1.0 / math.tanh(n * PI),
        )

    @property
    def Y(self) -> float:
        return self.F - self.gamma * self.G


def y_profile(n, y):
    """Y_n(y) in overflow-free form; ``n`` may be an array."""
    d = min(y, PI - y)
    n = np.asarray(n, dtype=float)
    return (np.exp(-n * d) + np.exp(-n * (PI - d))) / (1.0 + np.exp(-n * PI))


def _tail_h(K: int, d: float) -> float:
    n = 2 * K + 1
    return 8.0 / (PI * n) * math.exp(-n * d) / -math.expm1(-2.0 * d)


def _tail_hx(K: int, d: float) -> float:
    n = 2 * K + 1
    return 8.0 / PI * math.exp(-n * d) / -math.expm1(-2.0 * d)


def _terms_needed(tail, d: float, tol: float) -> int:
    # tail(K) is decreasing in K; find the least K with tail(K) <= tol
    if tail(MAX_TERMS, d) > tol:
        raise PrecisionError(
            f"series cannot certify tol={tol:g} within {MAX_TERMS} terms at distance {d:.3g} "
            "from the horizontal sides; use the conformal evaluation"
        )
    lo, hi = 0, MAX_TERMS
    while lo < hi:
        mid = (lo + hi) // 2
        if tail(mid, d) <= tol:
            hi = mid
        else:
            lo = mid + 1
    return max(lo, 1)


def h_terms(p, K: int) -> np.ndarray:
    """First K terms of the h series at p."""
    p = SquarePoint.of(p)
    n = 2.0 * np.arange(K) + 1.0
    return 4.0 / PI * np.sin(n * p.x) / n * y_profile(n, p.y)


def hx_terms(p, K: int) -> np.ndarray:
    """First K terms of the h_x series at p."""
    p = SquarePoint.of(p)
    n = 2.0 * np.arange(K) + 1.0
    return 4.0 / PI * np.cos(n * p.x) * y_profile(n, p.y)


def _evaluate(terms_fn, tail, p, tol, terms):
    if not tol > 0:
        raise DomainError("tol must be positive")
    p = SquarePoint.of(p)
    d = min(p.y, PI - p.y)
    K = _terms_needed(tail, d, tol) if terms is None else int(terms)
    if K < 1:
        raise DomainError("need at least one term")
    vals = terms_fn(p, K)
    return SeriesEvaluation(math.fsum(vals[::-1]), tail(K, d), K)


def eval_h(p, tol: float = 1e-12, terms: int | None = None) -> SeriesEvaluation:
    """h(p) with certified truncation bound.

    With ``terms`` given, that many terms are summed and the bound reported
    for them instead of meeting ``tol``.
    """
    return _evaluate(h_terms, _tail_h, p, tol, terms)


def eval_hx(p, tol: float = 1e-12, terms: int | None = None) -> SeriesEvaluation:
    """h_x(p) with certified truncation bound."""
    return _evaluate(hx_terms, _tail_hx, p, tol, terms)


def drift_gap_evaluation(p, tol: float = 1e-10) -> SeriesEvaluation:
    """cot(x) - h_x/h at p, with a rigorous bound on the series error."""
    p = SquarePoint.of(p)
    h = eval_h(p, tol * 1e-2)
    for _ in range(4):
        if h.value <= 10.0 * h.tail_bound:
            raise PrecisionError(f"h({p.x}, {p.y}) is too small to divide by reliably")
        hx = eval_hx(p, tol * 1e-2 * max(h.value, 1e-300))
        ratio = hx.value / h.value
        err = (hx.tail_bound + abs(ratio) * h.tail_bound) / (h.value - h.tail_bound)
        if err <= tol:
            break
        h = eval_h(p, h.tail_bound * 1e-2)
    else:
        raise PrecisionError(f"drift gap at ({p.x}, {p.y}) cannot be certified to {tol:g}")
    return SeriesEvaluation(1.0 / math.tan(p.x) - ratio, err, max(h.terms_used, hx.terms_used))


def drift_gap(p, tol: float = 1e-10) -> float:
    """cot(x) - h_x(x, y)/h(x, y); the relevant region is the lower-left quarter."""
    return drift_gap_evaluation(p, tol).value


def c_profile(t: float) -> float:
    """c_t = F_t(pi/4) - coth(t pi) G_t(pi/4) = cosh(pi t/4) / cosh(pi t/2)."""
    if not t > 0:
        raise DomainError("t must be positive")
    a = PI * t / 4.0
    # cosh(a)/cosh(2a) written with decaying exponentials
    return math.exp(-a) * (1.0 + math.exp(-2 * a)) / (1.0 + math.exp(-4 * a))


def c_profile_deriv(t: float) -> float:
    """-(pi/4) sinh(pi t/4) (cosh(pi t/2) + 2) sech^2(pi t/2)."""
    if not t > 0:
        raise DomainError("t must be positive")
    a = PI * t / 4.0
    if a > 300:
        return 0.0
    return -0.25 * PI * math.sinh(a) * (math.cosh(2 * a) + 2.0) / math.cosh(2 * a) ** 2


def first_term_bound() -> float:
    """The leading term (4/pi) cos(pi/4) c_1 of the h_x series at (pi/4, pi/4)."""
    return 4.0 / PI * math.cos(PI / 4) * c_profile(1.0)


@dataclass
class GridReport:
    """Drift gap over a lattice in the lower-left quarter of the square."""

    grid_step: float
    tol: float
    min_gap: float
    argmin: tuple[float, float] | None
    n_points: int
    failures: list = field(default_factory=list)
    xs: np.ndarray = field(default_factory=lambda: np.empty(0))
    gaps: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    @property
    def passed(self) -> bool:
        return self.n_points > 0 and not self.failures and self.min_gap > self.tol


def quarter_lattice(grid_step: float) -> np.ndarray:
    """Multiples of grid_step strictly inside (0, pi/2)."""
    if not 0 < grid_step < PI / 2:
        raise DomainError("grid_step must lie in (0, pi/2)")
    k = np.arange(1, int(PI / 2 / grid_step) + 2)
    xs = k * grid_step
    # a rounded step can land a hair short of the midline, where the gap is zero
    return xs[xs < PI / 2 - 1e-6 * grid_step]


def verify_thm23(grid_step: float = PI / 64, tol: float = 1e-6,
                 series_tol: float = 1e-10) -> GridReport:
    """Minimum of cot(x) - h_x/h over the lattice in (0, pi/2)^2.

    Points whose gap cannot be certified are listed in ``failures`` and
    skipped (their grid entry is NaN).
    """
    xs = quarter_lattice(grid_step)
    gaps = np.full((len(xs), len(xs)), np.nan)
    failures = []
    for i, x in enumerate(xs):
        for j, y in enumerate(xs):
            try:
                gaps[i, j] = drift_gap((x, y), series_tol)
            except PrecisionError as exc:
                failures.append((float(x), float(y), str(exc)))
    ok = ~np.isnan(gaps)
    if ok.any():
        flat = np.where(ok, gaps, np.inf)
        i, j = np.unravel_index(int(np.argmin(flat)), flat.shape)
        min_gap, argmin = float(flat[i, j]), (float(xs[i]), float(xs[j]))
    else:
        min_gap, argmin = float("nan"), None
    return GridReport(grid_step, tol, min_gap, argmin, int(ok.sum()), failures, xs, gaps)
