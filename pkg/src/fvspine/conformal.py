"""Closed-form evaluation of h through the conformal map of the disk onto the square.

The Schwarz-Christoffel integral phi(z) = int_0^z dw / sqrt(1 + w^4) maps the
unit disk onto a square; scaled by c and shifted it becomes

    psi^{-1}(z) = c phi(z) + pi (1 + i)/2,    c = 4 pi^{3/2} / Gamma(1/4)^2,

a map of the disk onto (0, pi)^2 sending 0 to the centre.  In the disk h is
the harmonic function u(z) = arg((i + z^2)/(i - z^2))/pi + 1/2, so h = u o psi,
and h_x - i h_y = -(4/(c pi)) z / sqrt(1 + z^4) at psi^{-1}(z).

The coordinates (t, alpha) are defined by w = t e^{i alpha} = (i + z^2)/(i - z^2);
in them h = alpha/pi + 1/2.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import BoundaryError, ConvergenceError, DomainError, FVSpineError
from .fourier import SquarePoint
from .numerics import agm, gamma_quarter, integrate_line, newton_complex

PI = math.pi
CENTER = complex(PI / 2, PI / 2)
DISK_MARGIN = 1e-9


@dataclass(frozen=True)
class MapConstants:
    c: float
    quarter_period: float  # int_0^1 dt / sqrt(1 - t^4)

    def diagonal_identity(self) -> float:
        """2 c int_0^1 dt/sqrt(1 - t^4); equals sqrt(2) pi."""
        return 2.0 * self.c * self.quarter_period


@lru_cache(maxsize=1)
def map_constants() -> MapConstants:
    c = 4.0 * PI ** 1.5 / gamma_quarter() ** 2
    quarter = integrate_line(lambda t: 1.0 / np.sqrt(1.0 - t ** 4), 0.0, 1.0,
                             tol=1e-13, singular="end").value.real
    return MapConstants(c=c, quarter_period=quarter)


def _consts(consts):
    return map_constants() if consts is None else consts


@dataclass(frozen=True)
class DiskPoint:
    z: complex

    def __post_init__(self):
        if not abs(self.z) < 1.0:
            raise DomainError(f"{self.z!r} is not inside the unit disk")


@dataclass(frozen=True)
class HalfPlaneCoord:
    t: float
    alpha: float

    def __post_init__(self):
        if not (self.t > 1.0 and -PI / 2 < self.alpha < PI / 2):
            raise DomainError(f"need t > 1 and |alpha| < pi/2, got ({self.t}, {self.alpha})")

    @property
    def w(self) -> complex:
        return cmath.rect(self.t, self.alpha)


def _disk(z) -> complex:
    z = z.z if isinstance(z, DiskPoint) else complex(z)
    if not abs(z) <= 1.0 - DISK_MARGIN:
        raise DomainError(f"{z!r} is too close to or outside the unit circle")
    return z


def _square(q) -> complex:
    if isinstance(q, complex):
        SquarePoint(q.real, q.imag)
        return q
    p = SquarePoint.of(q)
    return complex(p.x, p.y)


def _sc_integrand(w):
    return 1.0 / np.sqrt(1.0 + w ** 4)


def phi(z, tol: float = 1e-13) -> complex:
    """int_0^z dw / sqrt(1 + w^4) along the segment, principal square root."""
    z = _disk(z)
    if z == 0:
        return 0j
    return integrate_line(_sc_integrand, 0j, z, tol=tol).value


def phi_prime(z) -> complex:
    return 1.0 / cmath.sqrt(1.0 + complex(z) ** 4)


def psi_inverse(z, consts: MapConstants | None = None, tol: float = 1e-13) -> complex:
    """Square point (as x + iy) of the disk point z."""
    k = _consts(consts)
    q = k.c * phi(z, tol) + CENTER
    if min(q.real, q.imag, PI - q.real, PI - q.imag) < 1e-12:
        raise BoundaryError(f"psi^-1({z!r}) = {q!r} is on the boundary of the square")
    return q


def psi(q, consts: MapConstants | None = None, tol: float = 1e-11) -> complex:
    """Disk point mapped onto the square point q, by Newton inversion of psi^{-1}."""
    k = _consts(consts)
    q = _square(q)
    qtol = max(min(tol * 1e-2 / k.c, 1e-13), 1e-15)

    def f(z):
        return k.c * phi(z, qtol) + CENTER - q

    def fp(z):
        return k.c * phi_prime(z)

    def inside(z):
        return abs(z) < 1.0 - DISK_MARGIN

    start = (q - CENTER) / k.c
    if not inside(start):
        start *= 0.9 / abs(start)
    seeds = [start] + sorted(
        (0.6 * cmath.exp(1j * j * PI / 4) for j in range(8)),
        key=lambda s: abs(s - start),
    )
    errors = []
    for z0 in seeds:
        try:
            return newton_complex(f, fp, z0, tol=tol * 0.5, max_iter=60, inside=inside)
        except ConvergenceError as exc:
            errors.append((z0, exc.last))
    raise ConvergenceError(f"psi({q!r}) failed from every start", last=errors[-1][1],
                           history=errors)


def u_disk(z) -> float:
    """The harmonic function on the disk equal to 1 on the arcs around +-i and 0 elsewhere."""
    z = z.z if isinstance(z, DiskPoint) else complex(z)
    if not abs(z) < 1.0:
        raise DomainError(f"{z!r} is not inside the unit disk")
    z2 = z * z
    return cmath.phase((1j + z2) / (1j - z2)) / PI + 0.5


def h_conformal(q, consts: MapConstants | None = None, tol: float = 1e-11) -> float:
    return u_disk(psi(q, consts, tol))


def grad_h_conformal(z, consts: MapConstants | None = None) -> tuple[float, float]:
    """(h_x, h_y) at the square point psi^{-1}(z)."""
    k = _consts(consts)
    z = _disk(z)
    g = -4.0 / (k.c * PI) * z / cmath.sqrt(1.0 + z ** 4)
    return g.real, -g.imag


def grad_h_at(q, consts: MapConstants | None = None, tol: float = 1e-11) -> tuple[float, float, float]:
    """(h, h_x, h_y) at the square point q."""
    z = psi(q, consts, tol)
    hx, hy = grad_h_conformal(z, consts)
    return u_disk(z), hx, hy


def drift_gap_conformal(q, consts: MapConstants | None = None, tol: float = 1e-11) -> float:
    """cot(x) - h_x/h at q from the closed forms."""
    q = _square(q)
    h, hx, _ = grad_h_at(q, consts, tol)
    return 1.0 / math.tan(q.real) - hx / h


# ---------------------------------------------------------------- (t, alpha) chain


def half_plane_to_disk(hp: HalfPlaneCoord) -> complex:
    """w -> rho = i(w - 1)/(w + 1) -> z = sqrt(rho), the root in the lower-left quarter."""
    w = hp.w
    rho = 1j * (w - 1.0) / (w + 1.0)
    return -cmath.sqrt(rho)


def disk_to_half_plane(z) -> HalfPlaneCoord:
    z = _disk(z)
    z2 = z * z
    w = (1j + z2) / (1j - z2)
    return HalfPlaneCoord(abs(w), cmath.phase(w))


def half_plane_to_square(hp: HalfPlaneCoord, consts: MapConstants | None = None) -> complex:
    return psi_inverse(half_plane_to_disk(hp), consts)


def square_to_half_plane(q, consts: MapConstants | None = None) -> HalfPlaneCoord:
    return disk_to_half_plane(psi(q, consts))


def g_alpha(alpha: float) -> float:
    """(alpha + pi/2) sin(alpha) + cos(alpha), free of cancellation near -pi/2."""
    d = alpha + PI / 2
    if d < 1e-2:
        d2 = d * d
        return d * d2 * (1.0 / 3.0 - d2 * (1.0 / 30.0 - d2 * (1.0 / 840.0 - d2 / 45360.0)))
    return math.sin(d) - d * math.cos(d)


def mixed_identity(hp: HalfPlaneCoord, consts: MapConstants | None = None) -> float:
    """h h_xy - h_x h_y at the square point of (t, alpha), in closed form."""
    k = _consts(consts)
    return 2.0 / (k.c ** 2 * PI ** 2) * g_alpha(hp.alpha) * (hp.t - 1.0 / hp.t)


# ---------------------------------------------------------------- midline


def _midline_t(x: float, k: MapConstants) -> float:
    """The t in (-1, 0) with psi^{-1}(t) = x + i pi/2."""
    target = (x - PI / 2) / k.c

    def f(t):
        return -integrate_line(_sc_integrand, 0.0, -t, tol=1e-14).value.real - target

    return brentq(f, -1.0 + DISK_MARGIN, 0.0, xtol=1e-15)


def midline_values(t: float, k: MapConstants) -> tuple[float, float]:
    """(h, h_x) at the midline point with real disk coordinate t in [-1, 0]."""
    s = t * t
    h = 2.0 / PI * math.atan2(1.0, s) - 0.5
    hx = -4.0 / (k.c * PI) * t / math.sqrt(1.0 + s * s)
    return h, hx


def K_profile(x: float, consts: MapConstants | None = None) -> float:
    """K(x) = h_x sin x - h cos x on the horizontal midline y = pi/2.

    The endpoints x = 0 and x = pi/2 are evaluated from the real-ray formulas
    at t = -1 and t = 0.
    """
    k = _consts(consts)
    if not 0.0 <= x <= PI / 2:
        raise DomainError("x must lie in [0, pi/2]")
    if x == 0.0:
        t = -1.0
    elif x == PI / 2:
        t = 0.0
    else:
        t = _midline_t(x, k)
    h, hx = midline_values(t, k)
    return hx * math.sin(x) - h * math.cos(x)


@dataclass(frozen=True)
class PolyRoots:
    t0: float
    small: float  # smaller root in t^2
    large: float


def p_poly(t: float, consts: MapConstants | None = None) -> float:
    k = _consts(consts)
    return t ** 4 - 8.0 / k.c ** 2 * t ** 2 + 1.0


def p_poly_roots(consts: MapConstants | None = None) -> PolyRoots:
    """Roots of t^4 - (8/c^2) t^2 + 1 and the single root t0 in (-1, 0)."""
    k = _consts(consts)
    if not k.c < 2.0:
        raise FVSpineError(f"scale constant {k.c} is not below 2")
    b = 4.0 / k.c ** 2
    disc = b * b - 1.0
    if disc <= 0:
        raise FVSpineError("non-positive discriminant in p(t)")
    large = b + math.sqrt(disc)
    small = 1.0 / large  # product of the roots is 1; avoids cancellation
    return PolyRoots(-math.sqrt(small), small, large)


# ---------------------------------------------------------------- verification


@dataclass
class Prop43Report:
    min_identity: float
    n_identity: int
    monotone_violations: list = field(default_factory=list)
    n_profiles: int = 0

    @property
    def passed(self) -> bool:
        return self.min_identity >= 0.0 and not self.monotone_violations


def verify_prop43(t_grid=None, alpha_grid=None, x_grid=None, n_y: int = 24,
                  consts: MapConstants | None = None) -> Prop43Report:
    """Sign of the mixed identity on a (t, alpha) grid, plus sampled y-monotonicity of h_x/h."""
    k = _consts(consts)
    if t_grid is None:
        t_grid = np.linspace(1.0, 50.0, 101)[1:]
    if alpha_grid is None:
        alpha_grid = np.linspace(-PI / 2, PI / 2, 102)[1:-1]
    if x_grid is None:
        x_grid = np.linspace(0.15, PI / 2 - 0.15, 6)
    vals = [mixed_identity(HalfPlaneCoord(t, a), k) for t in t_grid for a in alpha_grid]
    violations = []
    ys = np.linspace(0.1, PI / 2, n_y + 1)[:-1]
    for x in x_grid:
        ratios = []
        for y in ys:
            h, hx, _ = grad_h_at(complex(x, y), k)
            ratios.append(hx / h)
        steps = np.diff(ratios)
        if np.any(steps < -1e-9):
            violations.append((float(x), float(steps.min())))
    return Prop43Report(float(min(vals)), len(vals), violations, len(x_grid))


@dataclass
class Prop44Report:
    xs: np.ndarray
    K: np.ndarray
    K_left: float
    K_right: float

    @property
    def max_K(self) -> float:
        return float(self.K.max())

    @property
    def passed(self) -> bool:
        return self.max_K < 0 and abs(self.K_left) <= 1e-6 and abs(self.K_right) <= 1e-6


def verify_prop44(n: int = 100, margin: float = 0.01,
                  consts: MapConstants | None = None) -> Prop44Report:
    """K on n midline points of (margin, pi/2 - margin) and at both endpoints."""
    k = _consts(consts)
    xs = np.linspace(margin, PI / 2 - margin, n)
    K = np.array([K_profile(float(x), k) for x in xs])
    return Prop44Report(xs, K, K_profile(0.0, k), K_profile(PI / 2, k))


@dataclass
class ConstantsReport:
    c: float
    c_via_agm: float
    diagonal_identity: float
    roundtrip_max_error: float
    ray_max_error: float


def check_constants(n_roundtrip: int = 100, seed: int = 0,
                    consts: MapConstants | None = None) -> ConstantsReport:
    """Scale constant, diagonal identity, psi roundtrips and ray preservation."""
    k = _consts(consts)
    rng = np.random.default_rng(seed)
    r = 0.95 * np.sqrt(rng.random(n_roundtrip))
    th = 2 * PI * rng.random(n_roundtrip)
    err = 0.0
    for zz in r * np.exp(1j * th):
        zz = complex(zz)
        err = max(err, abs(psi(psi_inverse(zz, k), k, tol=1e-12) - zz))
    ray_err = 0.0
    for rr in (0.3, 0.6, 0.9):
        for j in range(8):
            q = psi_inverse(rr * cmath.exp(1j * j * PI / 4), k) - CENTER
            d = cmath.phase(q) - j * PI / 4
            ray_err = max(ray_err, abs(math.remainder(d, 2 * PI)))
    return ConstantsReport(k.c, math.sqrt(2.0) * agm(1.0, math.sqrt(2.0)),
                           k.diagonal_identity(), err, ray_err)
