"""Stationary quantities: Green density, harmonic measures and occupation of (0, eps).

The two-particle Fleming-Viot process has the normalised Green function of
killed Brownian motion in (0, pi) as its stationary density.  Brownian motion
conditioned to stay in (0, pi) has stationary density (2/pi) sin^2 x.  The
occupation experiment compares how much time the spine and the conditioned
motion spend near the boundary.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, stats

from . import montecarlo as mc
from ._backend import kernels
from .errors import DomainError, InsufficientEventsError

PI = math.pi
# int_0^pi int_0^pi min(x, y) (pi - max(x, y)) dx dy = pi^4 / 12
GREEN_NORM = 12.0 / PI ** 4


# ---------------------------------------------------------------- Green density


def green(x, y):
    """Green function of killed BM in (0, pi), normalised to a probability density.

    G(x, y) = (12/pi^4) min(x, y) (pi - max(x, y)).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x <= 0) | (x >= PI) | (y <= 0) | (y >= PI)):
        raise DomainError("green is defined on the open square (0, pi)^2")
    out = GREEN_NORM * np.minimum(x, y) * (PI - np.maximum(x, y))
    return float(out) if out.ndim == 0 else out


def green_cell_masses(nbins: int) -> np.ndarray:
    """Exact G-mass of each cell of the uniform nbins x nbins grid on (0, pi)^2."""
    e = np.linspace(0.0, PI, nbins + 1)
    lo, hi = e[:-1], e[1:]
    ym = 0.5 * (hi ** 2 - lo ** 2)                          # int y dy
    xm = PI * (hi - lo) - 0.5 * (hi ** 2 - lo ** 2)          # int (pi - x) dx
    # cell (i, j) with i > j lies in y < x: separable product
    mass = GREEN_NORM * np.tril(np.outer(xm, ym), -1)
    mass = mass + mass.T
    # diagonal cells: norm * int_a^b (pi - x)(x^2 - a^2) dx
    a, b = lo, hi
    pi = PI
    diag = (pi * (b ** 3 - a ** 3) / 3 - (b ** 4 - a ** 4) / 4
            - a ** 2 * (pi * (b - a) - 0.5 * (b ** 2 - a ** 2)))
    mass[np.diag_indices(nbins)] = GREEN_NORM * diag
    return mass


def total_variation(counts: np.ndarray, masses: np.ndarray) -> float:
    p = counts / counts.sum()
    return 0.5 * float(np.abs(p - masses).sum())


def occupation_conditioned(eps: float) -> float:
    """Stationary mass of (0, eps) under (2/pi) sin^2 x: (eps - sin(2 eps)/2)/pi."""
    if not 0 < eps <= PI:
        raise DomainError("eps must lie in (0, pi]")
    if eps < 1e-3:
        # eps - sin(2 eps)/2 cancels; use the series 2e^3/3 - 2e^5/15 + 4e^7/315
        e2 = eps * eps
        return eps * e2 * (2.0 / 3.0 - e2 * (2.0 / 15.0 - e2 * 4.0 / 315.0)) / PI
    return (eps - 0.5 * math.sin(2.0 * eps)) / PI


def conditioned_cell_masses(nbins: int) -> np.ndarray:
    e = np.linspace(0.0, PI, nbins + 1)
    cdf = (e - 0.5 * np.sin(2 * e)) / PI
    return np.diff(cdf)


# ---------------------------------------------------------------- harmonic measure


@dataclass(frozen=True)
class HarmonicMeasureSpec:
    """Strip {|Im v - a| < r, Re v < b} with base point c + ai, or the quarter disk of radius pi."""

    geometry: str
    a: float = 0.0
    r: float = 0.0
    b: float = 0.0
    c: float = 0.0
    x: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        if self.geometry == "strip":
            if not (self.c < self.b and self.r > 0):
                raise DomainError("strip needs c < b and r > 0")
        elif self.geometry == "quarter":
            if not (self.x > 0 and self.y > 0 and self.x ** 2 + self.y ** 2 < PI ** 2):
                raise DomainError("quarter-disk base point must be inside the quarter disk")
        else:
            raise DomainError(f"unknown geometry {self.geometry!r}")

    @classmethod
    def strip(cls, a: float, r: float, b: float, c: float) -> "HarmonicMeasureSpec":
        return cls("strip", a=a, r=r, b=b, c=c)

    @classmethod
    def quarter(cls, x: float, y: float) -> "HarmonicMeasureSpec":
        return cls("quarter", x=x, y=y)

    @classmethod
    def quarter_as_strip(cls, x: float) -> "HarmonicMeasureSpec":
        """The diagonal quarter-disk problem after v -> log v."""
        return cls.strip(a=PI / 4, r=PI / 4, b=math.log(PI), c=math.log(math.sqrt(2.0) * x))


def hm_strip(spec: HarmonicMeasureSpec) -> float:
    """Harmonic measure of the end face Re v = b seen from c + ai."""
    if spec.geometry != "strip":
        raise DomainError("hm_strip needs a strip geometry")
    return 4.0 / PI * math.atan(math.exp(-PI * (spec.b - spec.c) / (2.0 * spec.r)))


def hm_quarter_bound(x: float, y: float) -> float:
    """Upper bound on the harmonic measure of the arc |v| = pi seen from x + iy (equality if x = y)."""
    HarmonicMeasureSpec.quarter(x, y)
    return 4.0 / PI * math.atan((x * x + y * y) / PI ** 2)


def p1_quadrant(x: float, y: float) -> float:
    """Probability that planar BM from (x, y) hits the x-axis before the y-axis."""
    if not (x > 0 and y > 0):
        raise DomainError("need x, y > 0")
    return 2.0 / PI * math.atan(x / y)


def p_lower_bound(x: float, y: float) -> float:
    """max(0, p1 - quarter-disk bound): a lower bound on the probability that y exits first."""
    if not (0 < x < PI / 2 and 0 < y < PI / 2):
        raise DomainError("p_lower_bound needs x, y in (0, pi/2)")
    return max(0.0, p1_quadrant(x, y) - hm_quarter_bound(x, y))


def p_bound_threshold(hi: float = 2.0) -> float:
    """Largest x0 such that, along y = sqrt(x), the half-p1 term dominates the arc bound on (0, x0).

    That is (1/pi) arctan(sqrt x) >= (4/pi) arctan((x^2 + x)/pi^2), which gives
    p_lower_bound(x, sqrt x) >= (1/pi) arctan(x/y).
    """
    def f(x):
        return math.atan(math.sqrt(x)) - 4.0 * math.atan((x * x + x) / PI ** 2)

    xs = np.geomspace(1e-8, hi, 400)
    vals = np.array([f(x) for x in xs])
    bad = np.nonzero(vals < 0)[0]
    if len(bad) == 0:
        return hi
    k = bad[0]
    return optimize.brentq(f, xs[k - 1], xs[k], xtol=1e-14)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    n: int

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.std_error


def _binomial(hits: int, n: int) -> MCEstimate:
    p = hits / n
    return MCEstimate(p, math.sqrt(max(p * (1 - p), 1.0 / n) / n), n)


def mc_strip(spec: HarmonicMeasureSpec, n: int = 100_000, seed: int = 0,
             dt: float = mc.DEFAULT_DT, threads: int | None = None) -> MCEstimate:
    """Fraction of planar Brownian paths from c + ai leaving the half strip through Re v = b."""
    if spec.geometry != "strip":
        raise DomainError("mc_strip needs a strip geometry")
    bounds = (-math.inf, spec.b, spec.a - spec.r, spec.a + spec.r)
    sample = mc.exit_race(spec.c, spec.a, n, seed, dt, threads=threads, bounds=bounds)
    return _binomial(int(np.sum(sample.loser == 1)), n)


def mc_quarter(x: float, y: float, n: int = 100_000, seed: int = 0,
               dt: float = mc.DEFAULT_DT, threads: int | None = None) -> MCEstimate:
    """Fraction of planar Brownian paths from (x, y) reaching |v| = pi before the axes."""
    HarmonicMeasureSpec.quarter(x, y)
    sizes = mc._chunk_sizes(n)

    def work(i, gen):
        return kernels.quarter_exit(float(x), float(y), PI, float(dt), sizes[i], gen)[0]

    codes = np.concatenate(mc.map_streams(work, len(sizes), seed, threads))
    if np.any(codes < 0):
        raise mc.EstimationError("some quarter-disk paths did not exit")
    return _binomial(int(np.sum(codes == 1)), n)


def mc_p1(x: float, y: float, n: int = 100_000, seed: int = 0) -> MCEstimate:
    """Quadrant proxy for p by exact first-passage sampling.

    The hitting time of 0 from height a is a^2 / Z^2 with Z standard normal,
    so the comparison needs no time stepping.
    """
    if not (x > 0 and y > 0):
        raise DomainError("need x, y > 0")
    z = mc.RngSeed(seed).generator().standard_normal((2, n))
    # y-coordinate hits 0 first  <=>  y^2/Z2^2 < x^2/Z1^2
    hits = int(np.sum((y * np.abs(z[0])) < (x * np.abs(z[1]))))
    return _binomial(hits, n)


# ---------------------------------------------------------------- occupation integrals


def lower_integrand(x: float, y: float) -> float:
    """2 G(x, y) (1/pi) arctan(x/y) for y > x."""
    return 2.0 * GREEN_NORM * x * (PI - y) * math.atan(x / y) / PI


def spine_occupation_lower_integral(eps: float, rel_tol: float = 1e-10) -> float:
    """int_0^eps int_x^sqrt(x) 2 G(x, y) (1/pi) arctan(x/y) dy dx, by nested quadrature.

    G is the normalised density, so this is a lower bound for the long-run
    fraction of time the spine spends in (0, eps) (for eps small enough that
    the arctan bound on p holds).
    """
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")

    def inner(x):
        if x <= 0:
            return 0.0
        val, _ = integrate.quad(lambda y: lower_integrand(x, y), x, math.sqrt(x),
                                epsabs=0.0, epsrel=rel_tol, limit=200)
        return val

    val, _ = integrate.quad(inner, 0.0, eps, epsabs=0.0, epsrel=rel_tol, limit=200)
    return val


def lower_bound_crossover(lo: float = 1e-6, hi: float = 0.5) -> float:
    """eps* below which the spine lower integral exceeds the conditioned occupation."""
    def f(e):
        return math.log(spine_occupation_lower_integral(e, 1e-12) / occupation_conditioned(e))

    grid = np.geomspace(lo, hi, 60)
    vals = np.array([f(e) for e in grid])
    if vals[0] <= 0:
        return float("nan")
    neg = np.nonzero(vals <= 0)[0]
    if len(neg) == 0:
        return hi
    k = neg[0]
    return optimize.brentq(f, grid[k - 1], grid[k], xtol=1e-12)


# ---------------------------------------------------------------- ensembles


@dataclass
class FVEnsemble:
    horizon: float
    reps: int
    dt: float
    warmup: float
    eps: np.ndarray
    spine_occ: np.ndarray        # (reps, len(eps)) time fractions
    spine_time: np.ndarray       # (reps,)
    hist: np.ndarray
    hist_samples: int
    Y: list                      # per-rep branch positions after warm-up
    n_events: np.ndarray

    def spine_mean(self) -> np.ndarray:
        w = self.spine_time / self.spine_time.sum()
        return w @ self.spine_occ

    def spine_se(self) -> np.ndarray:
        return _replica_se(self.spine_occ, self.spine_time)


def _replica_se(frac: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Standard error of a weighted mean of replica fractions (ratio estimator)."""
    r = len(weight)
    if r < 2:
        return np.full(frac.shape[1], np.nan)
    w = weight / weight.sum()
    mean = w @ frac
    dev = (frac - mean) * (weight / weight.mean())[:, None]
    return np.sqrt(np.sum(dev ** 2, axis=0) / (r * (r - 1)))


def fv_ensemble(horizon: float, reps: int, seed: int = 0, eps: Sequence[float] = (),
                dt: float = mc.DEFAULT_DT, nbins: int = 40, warmup_frac: float = 0.1,
                start: tuple[float, float] = (PI / 2, PI / 2),
                threads: int | None = None) -> FVEnsemble:
    """``reps`` independent Fleming-Viot runs; replica i uses stream i of ``seed``."""
    if reps < 1:
        raise DomainError("reps must be >= 1")
    warm = warmup_frac * horizon

    def work(i, gen):
        run = mc.run_fv(start[0], start[1], horizon, gen, dt, eps=eps, nbins=nbins,
                        warmup=warm, record_stride=0)
        keep = run.T >= warm
        return run, run.Y[keep]

    results = mc.map_streams(work, reps, seed, threads)
    runs = [r for r, _ in results]
    n_events = np.array([r.n_events for r in runs])
    if np.any(n_events < 100):
        raise InsufficientEventsError(
            f"a replica saw only {int(n_events.min())} branch events; increase the horizon")
    eps_arr = np.asarray(eps, dtype=float).reshape(-1)
    spine_time = np.array([r.spine_time for r in runs])
    occ = np.array([r.spine_occ / r.spine_time for r in runs]).reshape(reps, len(eps_arr))
    return FVEnsemble(
        horizon=horizon, reps=reps, dt=dt, warmup=warm, eps=eps_arr, spine_occ=occ,
        spine_time=spine_time, hist=sum(r.hist for r in runs),
        hist_samples=int(sum(r.hist_samples for r in runs)),
        Y=[y for _, y in results], n_events=n_events,
    )


@dataclass
class ConditionedEnsemble:
    horizon: float
    reps: int
    eps: np.ndarray
    occ: np.ndarray          # (reps, len(eps))
    obs_time: np.ndarray
    samples: np.ndarray      # thinned positions, pooled over replicas

    def mean(self) -> np.ndarray:
        w = self.obs_time / self.obs_time.sum()
        return w @ self.occ

    def se(self) -> np.ndarray:
        return _replica_se(self.occ, self.obs_time)


def conditioned_ensemble(horizon: float, reps: int, seed: int = 0, eps: Sequence[float] = (),
                         dt: float = mc.DEFAULT_DT, warmup_frac: float = 0.1,
                         sample_every: float = 3.0, threads: int | None = None) -> ConditionedEnsemble:
    """Independent conditioned-BM runs from pi/2, with positions thinned every ``sample_every``."""
    stride = max(1, int(round(sample_every / dt)))
    warm = warmup_frac * horizon

    def work(i, gen):
        return mc.simulate_conditioned_bm(PI / 2, horizon, gen, dt, eps=eps, nbins=1,
                                          record_stride=stride, warmup=warm)

    paths = mc.map_streams(work, reps, seed, threads)
    eps_arr = np.asarray(eps, dtype=float).reshape(-1)
    samples = np.concatenate([p.positions[p.times >= warm] for p in paths])
    return ConditionedEnsemble(
        horizon=horizon, reps=reps, eps=eps_arr,
        occ=np.array([p.occupation() for p in paths]).reshape(reps, len(eps_arr)),
        obs_time=np.array([p.obs_time for p in paths]), samples=samples,
    )


def chi_square_sin2(samples: np.ndarray, nbins: int = 50, min_expected: float = 5.0):
    """Chi-square test of samples against (2/pi) sin^2 x; sparse edge bins are pooled."""
    counts, _ = np.histogram(samples, bins=nbins, range=(0.0, PI))
    expected = conditioned_cell_masses(nbins) * len(samples)
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        obs[-1] += acc_o
        exp[-1] += acc_e
    obs = np.array(obs)
    exp = np.array(exp)
    exp *= obs.sum() / exp.sum()
    return stats.chisquare(obs, exp)


@dataclass
class StationarityReport:
    ks_statistic: float
    ks_pvalue: float
    n_ks: int
    tv: float
    hist_samples: int
    nbins: int
    thin: int

    @property
    def passed(self) -> bool:
        return self.ks_pvalue > 0.01 and self.tv <= 0.02


def stationarity_report(ens: FVEnsemble, thin: int = 50) -> StationarityReport:
    """KS test of thinned branch positions against uniform, and TV of the pair histogram vs G.

    Successive branch positions are strongly correlated (about 0.77 at lag 1,
    decaying geometrically); every 50th event is close enough to independent
    for the KS null distribution to apply.
    """
    Y = np.concatenate([y[::thin] for y in ens.Y])
    ks = stats.kstest(Y / PI, "uniform")
    nb = ens.hist.shape[0]
    tv = total_variation(ens.hist.astype(float), green_cell_masses(nb))
    return StationarityReport(float(ks.statistic), float(ks.pvalue), len(Y), tv,
                              ens.hist_samples, nb, thin)


# ---------------------------------------------------------------- the occupation experiment


@dataclass
class OccupationRow:
    eps: float
    spine_emp: float
    spine_se: float
    cond_emp: float
    cond_se: float
    cond_analytic: float
    lower_integral: float
    significant_flag: bool

    @property
    def ratio(self) -> float:
        return self.spine_emp / self.cond_analytic


@dataclass
class OccupationReport:
    rows: list
    horizon: float
    reps: int
    cond_horizon: float
    dt: float
    seed: int
    params: dict = field(default_factory=dict)

    COLUMNS = ("eps", "spine_emp", "spine_se", "cond_emp", "cond_se", "cond_analytic",
               "lower_integral", "significant_flag")

    @property
    def any_significant(self) -> bool:
        return any(r.significant_flag for r in self.rows)

    @property
    def ratio_grows(self) -> bool:
        """Spine/conditioned ratio increases as eps decreases."""
        rows = sorted(self.rows, key=lambda r: r.eps)
        ratios = [r.ratio for r in rows]
        return all(a > b for a, b in zip(ratios, ratios[1:]))

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon, "reps": self.reps, "cond_horizon": self.cond_horizon,
            "dt": self.dt, "seed": self.seed,
            "rows": [asdict(r) for r in self.rows],
            "any_significant": self.any_significant, "ratio_grows": self.ratio_grows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            d = asdict(r)
            w.writerow([repr(d[c]) if isinstance(d[c], float) else int(d[c]) for c in self.COLUMNS])
        return buf.getvalue()


def thm24_experiment(eps_list: Sequence[float], horizon: float, reps: int, seed: int = 0,
                     dt: float = mc.DEFAULT_DT, cond_horizon: float | None = None,
                     threads: int | None = None, k_sigma: float = 3.0) -> OccupationReport:
    """Spine vs conditioned-BM occupation of (0, eps), first 10% of each run discarded.

    ``cond_horizon`` is the per-replica horizon of the conditioned runs
    (default: ``horizon``, capped at 20000 since its variance is far lower).
    """
    eps = [float(e) for e in eps_list]
    if not eps or any(not 0 < e <= 0.5 for e in eps):
        raise DomainError("each eps must lie in (0, 0.5]")
    if cond_horizon is None:
        cond_horizon = min(horizon, 20_000.0)
    fv = fv_ensemble(horizon, reps, seed, eps, dt, threads=threads)
    cond = conditioned_ensemble(cond_horizon, reps, seed ^ 0x5EED, eps, dt, threads=threads)
    s_mean, s_se = fv.spine_mean(), fv.spine_se()
    c_mean, c_se = cond.mean(), cond.se()
    rows = []
    for j, e in enumerate(eps):
        analytic = occupation_conditioned(e)
        rows.append(OccupationRow(
            eps=e, spine_emp=float(s_mean[j]), spine_se=float(s_se[j]),
            cond_emp=float(c_mean[j]), cond_se=float(c_se[j]), cond_analytic=analytic,
            lower_integral=spine_occupation_lower_integral(e),
            significant_flag=bool(s_mean[j] - k_sigma * s_se[j] > analytic),
        ))
    return OccupationReport(rows, horizon, reps, cond_horizon, dt, seed)
