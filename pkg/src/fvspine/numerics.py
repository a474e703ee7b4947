"""Numerical building blocks: AGM, Gamma(1/4), line quadrature, complex Newton.

Complex numbers are plain Python ``complex`` values; integrands are called with
numpy arrays of nodes and may return arrays or scalars.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConvergenceError, DomainError

AGM_MAX_ITER = 64

# Gauss-Kronrod 7/15 pair (QUADPACK qk15), nodes on [-1, 1].
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# full 15-point node set and matching weights, ordered -1 .. 1
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KWEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GWEIGHTS = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod nodes xgk[1], xgk[3], xgk[5], xgk[7]
for _i, _w in zip((1, 3, 5), _WG[:3]):
    _GWEIGHTS[_i] = _w
    _GWEIGHTS[14 - _i] = _w
_GWEIGHTS[7] = _WG[3]

#: polynomial degree integrated exactly by the Kronrod rule
KRONROD_DEGREE = 22


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    error_estimate: float
    evaluations: int


def agm(a: float, b: float, tol: float = 1e-15) -> float:
    """Arithmetic-geometric mean of two positive reals.

    Iterates ``a, b <- (a+b)/2, sqrt(a*b)`` until ``|a - b| <= tol*max(1, a)``.
    """
    a = float(a)
    b = float(b)
    if not (a > 0 and b > 0) or not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError(f"agm needs positive finite arguments, got {a!r}, {b!r}")
    if not tol > 0:
        raise DomainError("tol must be positive")
    lo, hi = min(a, b), max(a, b)
    for _ in range(AGM_MAX_ITER):
        if abs(a - b) <= tol * max(1.0, a):
            # rounding can push the mean a hair outside the starting bracket
            return min(max(a, lo), hi)
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    raise ConvergenceError("agm did not converge", last=a)


def lemniscate_constant() -> float:
    """varpi = 2 * int_0^1 dt / sqrt(1 - t^4) = pi / agm(1, sqrt 2)."""
    return math.pi / agm(1.0, math.sqrt(2.0))


def gamma_quarter() -> float:
    """Gamma(1/4) from the lemniscate relation varpi = Gamma(1/4)^2 / (2 sqrt(2 pi))."""
    varpi = lemniscate_constant()
    return math.sqrt(2.0 * varpi * math.sqrt(2.0 * math.pi))


def _panel(f, z0: complex, dz: complex, lo: float, hi: float):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    s = mid + half * _NODES
    vals = np.asarray(f(z0 + dz * s), dtype=complex)
    if vals.shape != s.shape:
        vals = np.broadcast_to(vals, s.shape)
    kron = half * np.dot(_KWEIGHTS, vals)
    gauss = half * np.dot(_GWEIGHTS, vals)
    if not np.all(np.isfinite(vals)):
        raise ConvergenceError("integrand is not finite on the integration segment")
    return kron, abs(kron - gauss)


def integrate_line(
    f: Callable,
    z0: complex,
    z1: complex,
    tol: float = 1e-12,
    singular: str | None = None,
    max_panels: int = 4000,
) -> QuadratureResult:
    """Integrate ``f`` along the straight segment from ``z0`` to ``z1``.

    Globally adaptive Gauss-Kronrod 7/15: the panel with the largest
    ``|K15 - G7|`` is bisected until the summed estimate is below ``tol``.

    ``singular="end"`` (or ``"start"``) declares an inverse-square-root
    singularity at that endpoint; the substitution ``z = z1 - (z1 - z0) s^2``
    turns it into a bounded integrand before quadrature.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    z0 = complex(z0)
    z1 = complex(z1)
    if z0 == z1:
        return QuadratureResult(0j, 0.0, 0)

    if singular is None:
        g, base, scale = f, z0, z1 - z0
    elif singular in ("end", "start"):
        anchor, other = (z1, z0) if singular == "end" else (z0, z1)
        span = other - anchor
        sign = 1.0 if singular == "end" else -1.0

        def g(s, anchor=anchor, span=span, sign=sign):
            # z = anchor + span*s^2, dz = 2*span*s ds; s runs 1 -> 0 for "end"
            s = s.real
            return sign * (-2.0) * span * s * np.asarray(f(anchor + span * s * s), dtype=complex)

        base, scale = 0j, 1.0 + 0j
    else:
        raise DomainError(f"unknown singular endpoint {singular!r}")

    value, err = _panel(g, base, scale, 0.0, 1.0)
    evals = 15
    heap = [(-err, 0.0, 1.0, value)]
    total_err = err
    total = value
    while total_err > tol:
        if len(heap) >= max_panels:
            raise ConvergenceError(
                f"quadrature stalled at error {total_err:.3e} > {tol:.3e}",
                last=QuadratureResult(complex(total), float(total_err), evals),
            )
        neg_err, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        v1, e1 = _panel(g, base, scale, lo, mid)
        v2, e2 = _panel(g, base, scale, mid, hi)
        evals += 30
        total += v1 + v2 - val
        total_err += e1 + e2 + neg_err
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
        if hi - lo < 1e-13:
            raise ConvergenceError("panel width underflow in quadrature", last=complex(total))
    # re-sum to avoid drift from incremental updates
    total = sum(item[3] for item in heap)
    total_err = sum(-item[0] for item in heap)
    return QuadratureResult(complex(total * scale), float(total_err * abs(scale)), evals)


def newton_complex(
    f: Callable[[complex], complex],
    f_prime: Callable[[complex], complex],
    z_init: complex,
    tol: float = 1e-13,
    max_iter: int = 60,
    inside: Callable[[complex], bool] | None = None,
) -> complex:
    """Solve ``f(z) = 0`` by Newton's method from ``z_init``.

    If ``inside`` is given, steps that leave the admissible region are halved
    until the iterate is admissible again.
    """
    z = complex(z_init)
    history = [z]
    fz = complex(f(z))
    for _ in range(max_iter):
        if not (math.isfinite(fz.real) and math.isfinite(fz.imag)):
            raise ConvergenceError("Newton iterate produced a non-finite residual", last=z, history=history)
        if abs(fz) <= tol:
            return z
        d = complex(f_prime(z))
        if d == 0:
            raise ConvergenceError("zero derivative in Newton iteration", last=z, history=history)
        step = fz / d
        znew = z - step
        if inside is not None:
            for _ in range(60):
                if inside(znew):
                    break
                step *= 0.5
                znew = z - step
            else:
                raise ConvergenceError("Newton step left the domain", last=z, history=history)
        z = znew
        history.append(z)
        fz = complex(f(z))
    if abs(fz) <= tol:
        return z
    raise ConvergenceError(
        f"Newton did not converge in {max_iter} iterations (|f|={abs(fz):.3e})",
        last=z,
        history=history,
    )
