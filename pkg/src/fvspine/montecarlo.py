"""Simulation of the two-particle Fleming-Viot process on (0, pi) and its spine.

Particles are Brownian motions stepped on a fixed grid ``dt`` with the
Brownian-bridge exit correction: a step whose endpoints are both interior is
still declared an exit with probability ``exp(-2 d0 d1 / dt)`` for each
boundary.  The hot loops live in compiled kernels (see ``_backend``).

Batch estimators split the N runs into fixed chunks, chunk ``i`` drawing from
``RngSeed(seed, i)``.  Chunks may run on several threads; results are
concatenated in chunk order, so they do not depend on the thread count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._backend import kernels
from .errors import DomainError, EmptyPathError, EstimationError

PI = math.pi
CHUNK = 1 << 16
DEFAULT_DT = 1e-4
DEFAULT_DT_PROBE = 5e-4
_U64 = 1 << 64


@dataclass(frozen=True)
class RngSeed:
    """A (seed, stream) pair; the same pair always yields the same random stream."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < _U64:
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSeed):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngSeed(int(rng)).generator()
    raise TypeError(f"cannot make a generator from {type(rng).__name__}")


def resolve_threads(threads: int | None = None) -> int:
    """Thread count: explicit argument, then FVSPINE_THREADS, then all cores."""
    if threads is None:
        env = os.environ.get("FVSPINE_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise DomainError("threads must be >= 1")
    return int(threads)


def map_streams(func: Callable[[int, np.random.Generator], object], n_streams: int,
                seed: int, threads: int | None = None) -> list:
    """Call ``func(i, generator_i)`` for i < n_streams; results in stream order."""
    gens = [RngSeed(seed, i).generator() for i in range(n_streams)]
    workers = min(resolve_threads(threads), max(n_streams, 1))
    if workers == 1:
        return [func(i, g) for i, g in enumerate(gens)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(n_streams), gens))


def _chunk_sizes(n: int) -> list[int]:
    full, rest = divmod(n, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _check_interior(*xs):
    for x in xs:
        if not 0.0 < x < PI:
            raise DomainError(f"position {x!r} is not in (0, pi)")


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class ParticlePair:
    x1: float
    x2: float
    time: float = 0.0

    def __post_init__(self):
        _check_interior(self.x1, self.x2)


@dataclass(frozen=True)
class BranchEvent:
    """k-th branching: time T_k, survivor index m_k and its position Y_k."""

    k: int
    T: float
    m: int
    Y: float


@dataclass(frozen=True)
class ConditionedBMParams:
    """Brownian motion conditioned to stay in (0, pi): phi = sin, lambda = 1/2."""

    eigenvalue: float = 0.5

    @staticmethod
    def eigenfunction(x):
        return np.sin(x)

    @staticmethod
    def drift(x):
        return np.cos(x) / np.sin(x)

    def parabolic(self, x, t):
        """H(x, t) = exp(lambda t) phi(x)."""
        return np.exp(self.eigenvalue * t) * np.sin(x)


@dataclass(frozen=True)
class FirstExit:
    loser: int
    time: float
    survivor: float


@dataclass
class RaceSample:
    """Outcomes of N independent exit races (one entry per run)."""

    loser: np.ndarray
    side: np.ndarray
    time: np.ndarray
    survivor: np.ndarray
    probe_half: np.ndarray
    probe_full: np.ndarray

    @classmethod
    def concat(cls, parts: Sequence[tuple]) -> "RaceSample":
        cols = list(zip(*parts))
        return cls(*(np.concatenate(c) for c in cols))


@dataclass
class DriftEstimate:
    mean: float
    std_error: float
    n_qualifying: int
    n_runs: int
    dt_probe: float
    half_mean: float
    half_std_error: float

    def interval(self, k: float = 3.0) -> tuple[float, float]:
        return self.mean - k * self.std_error, self.mean + k * self.std_error


@dataclass
class FVRun:
    """Result of one Fleming-Viot run (see :func:`run_fv`)."""

    a: float
    b: float
    horizon: float
    dt: float
    warmup: float
    eps: np.ndarray
    T: np.ndarray
    m: np.ndarray
    Y: np.ndarray
    hist: np.ndarray
    hist_samples: int
    spine_occ: np.ndarray
    spine_time: float
    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    spine_flag: np.ndarray
    steps: int
    ties: int
    end_time: float
    overflow: bool = False

    @property
    def n_events(self) -> int:
        return len(self.T)

    def events(self) -> list[BranchEvent]:
        return [BranchEvent(k + 1, float(t), int(m), float(y))
                for k, (t, m, y) in enumerate(zip(self.T, self.m, self.Y))]

    def spine_occupation(self) -> np.ndarray:
        """Fraction of completed-interval time (after warm-up) the spine spent in (0, eps)."""
        if self.spine_time <= 0:
            raise EmptyPathError("no completed inter-branch interval after warm-up")
        return self.spine_occ / self.spine_time


@dataclass
class SpinePath:
    times: np.ndarray
    positions: np.ndarray
    intervals: list = field(default_factory=list)  # (T_start, T_end, particle)


@dataclass
class ConditionedPath:
    times: np.ndarray
    positions: np.ndarray
    eps: np.ndarray
    occ: np.ndarray
    obs_time: float
    hist: np.ndarray
    substeps: int
    rejections: int

    def occupation(self) -> np.ndarray:
        return self.occ / self.obs_time


# --------------------------------------------------------------------------
# single steps and single runs


def step_with_exit(x: float, dt: float, rng) -> tuple[float, float | None]:
    """One Gaussian step of variance dt with the bridge exit correction.

    Returns ``(x_new, boundary)`` where boundary is 0.0 or pi if the path left
    (0, pi) during the step and None otherwise.
    """
    _check_interior(x)
    if not dt > 0:
        raise DomainError("dt must be positive")
    xn, code = kernels.step(float(x), float(dt), as_generator(rng))
    return xn, (None, 0.0, PI)[code]


def bridge_touch_probability(x0: float, x1: float, dt: float) -> float:
    """Probability that a Brownian bridge between interior points touches 0 or pi."""
    p0 = math.exp(-2.0 * x0 * x1 / dt)
    p1 = math.exp(-2.0 * (PI - x0) * (PI - x1) / dt)
    return min(1.0, p0 + p1)


def first_exit_pair(a: float, b: float, rng, dt: float = DEFAULT_DT) -> FirstExit:
    """Run two independent particles from (a, b) until the first one exits."""
    _check_interior(a, b)
    out = kernels.race(float(a), float(b), 0.0, PI, 0.0, PI, float(dt), 0.0, 1, as_generator(rng))
    return FirstExit(int(out[0][0]), float(out[2][0]), float(out[3][0]))


def exit_race(a: float, b: float, n: int, seed: int = 0, dt: float = DEFAULT_DT,
              probe_dt: float = 0.0, threads: int | None = None,
              bounds: tuple[float, float, float, float] = (0.0, PI, 0.0, PI)) -> RaceSample:
    """N independent exit races of two Brownian coordinates, replica-parallel.

    ``bounds`` are (lo1, hi1, lo2, hi2); infinite ends are allowed.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    lo1, hi1, lo2, hi2 = (float(v) for v in bounds)
    if not (lo1 < a < hi1 and lo2 < b < hi2):
        raise DomainError(f"start ({a}, {b}) is outside the race domain")
    sizes = _chunk_sizes(n)

    def work(i, gen):
        return kernels.race(float(a), float(b), lo1, hi1, lo2, hi2, float(dt),
                            float(probe_dt), sizes[i], gen)

    sample = RaceSample.concat(map_streams(work, len(sizes), seed, threads))
    if np.any(sample.loser == 0):
        raise EstimationError("some races hit the step cap without an exit")
    return sample


def estimate_h(a: float, b: float, n: int, seed: int = 0, dt: float = DEFAULT_DT,
               threads: int | None = None) -> tuple[float, float]:
    """Monte Carlo estimate of h(a, b) = P(particle 2 exits first) and its standard error."""
    _check_interior(a, b)
    sample = exit_race(a, b, n, seed, dt, threads=threads)
    p = float(np.mean(sample.loser == 2))
    return p, math.sqrt(max(p * (1.0 - p), 1e-300) / n)


def estimate_drift_h(a: float, b: float, dt_probe: float = DEFAULT_DT_PROBE, n: int = 10**5,
                     seed: int = 0, dt: float = DEFAULT_DT,
                     threads: int | None = None) -> DriftEstimate:
    """Estimate the h-process drift (h_x/h)(a, b) of particle 1.

    Averages ``(W_1(dt_probe) - a) / dt_probe`` over runs in which particle 2
    exits first.  The same runs also give the estimate at ``dt_probe/2`` so
    the O(dt_probe) bias can be inspected; no extrapolation is applied.
    """
    _check_interior(a, b)
    if not 0 < dt_probe:
        raise DomainError("dt_probe must be positive")
    sample = exit_race(a, b, n, seed, dt, probe_dt=dt_probe, threads=threads)
    keep = sample.loser == 2
    q = int(keep.sum())
    if q < 2:
        raise EstimationError("no runs in which particle 2 exited first")
    full = sample.probe_full[keep] / dt_probe
    half = sample.probe_half[keep] / (0.5 * dt_probe)
    return DriftEstimate(
        mean=float(full.mean()),
        std_error=float(full.std(ddof=1) / math.sqrt(q)),
        n_qualifying=q,
        n_runs=n,
        dt_probe=dt_probe,
        half_mean=float(half.mean()),
        half_std_error=float(half.std(ddof=1) / math.sqrt(q)),
    )


def run_fv(a: float, b: float, horizon: float, rng, dt: float = DEFAULT_DT,
           eps: Sequence[float] = (), nbins: int = 40, warmup: float = 0.0,
           record_stride: int = 1, max_events: int | None = None) -> FVRun:
    """Simulate the two-particle Fleming-Viot process from (a, b) up to ``horizon``.

    After each branching both particles restart from the survivor's position.
    Path rows (time, x1, x2) are kept every ``record_stride`` steps (0 keeps
    none); long runs should rely on the online accumulators instead: the pair
    histogram on an ``nbins x nbins`` grid and the spine occupation of
    ``(0, eps)``, both collected after ``warmup``.
    """
    _check_interior(a, b)
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    if max_events is None:
        max_events = int(50 * horizon) + 10_000
    eps_arr = np.ascontiguousarray(eps, dtype=np.float64).reshape(-1)
    out = kernels.fv_run(float(a), float(b), float(horizon), float(dt), as_generator(rng),
                         eps_arr, int(nbins), float(warmup), int(record_stride), int(max_events))
    return FVRun(
        a=float(a), b=float(b), horizon=float(horizon), dt=float(dt), warmup=float(warmup),
        eps=eps_arr, T=out["T"], m=out["m"], Y=out["Y"], hist=out["hist"],
        hist_samples=int(out["hist_samples"]), spine_occ=out["spine_occ"],
        spine_time=float(out["spine_time"]), times=out["rows_t"], x1=out["rows_x1"],
        x2=out["rows_x2"], spine_flag=out["rows_flag"], steps=int(out["steps"]),
        ties=int(out["ties"]), end_time=float(out["end_time"]), overflow=bool(out["overflow"]),
    )


def extract_spine(run: FVRun) -> SpinePath:
    """The spine on every completed inter-branch interval of a recorded run.

    On [T_{k-1}, T_k) the spine is the particle that survives the k-th
    branching.  The final interval has no branching yet and is dropped.
    """
    if run.n_events == 0:
        raise EmptyPathError("run has no completed inter-branch interval")
    flag = run.spine_flag
    keep = flag != 0
    if not np.any(keep):
        raise EmptyPathError("run has no recorded rows inside completed intervals")
    positions = np.where(flag == 1, run.x1, run.x2)[keep]
    starts = np.concatenate([[0.0], run.T[:-1]])
    intervals = [(float(s), float(e), int(m)) for s, e, m in zip(starts, run.T, run.m)]
    return SpinePath(times=run.times[keep], positions=positions, intervals=intervals)


def simulate_conditioned_bm(x0: float, horizon: float, rng, dt: float = DEFAULT_DT,
                            eps: Sequence[float] = (), nbins: int = 50,
                            record_stride: int = 1, noise: bool = True,
                            warmup: float = 0.0) -> ConditionedPath:
    """Brownian motion conditioned to stay in (0, pi): dX = cot(X) dt + dW.

    Euler-Maruyama with local step ``min(dt, (d/4)^2)``, d the distance to the
    nearer boundary; proposals outside (0, pi) are rejected and redrawn.
    ``noise=False`` switches the Brownian increments off (test hook).
    """
    _check_interior(x0)
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    eps_arr = np.ascontiguousarray(eps, dtype=np.float64).reshape(-1)
    out = kernels.cond_run(float(x0), float(horizon), float(dt), as_generator(rng), eps_arr,
                           int(nbins), int(record_stride), bool(noise), float(warmup))
    return ConditionedPath(
        times=out["rows_t"], positions=out["rows_x"], eps=eps_arr, occ=out["occ"],
        obs_time=float(out["obs_time"]), hist=out["hist"], substeps=int(out["substeps"]),
        rejections=int(out["rejections"]),
    )


def occupation_fraction(path, eps: float) -> float:
    """Time-weighted fraction of a sampled path spent in (0, eps).

    Trapezoid rule in time: each sampling interval contributes its length
    times the mean of the indicator at its two ends.  ``path`` is anything
    with ``times`` and ``positions`` arrays, or a (times, positions) pair.
    """
    if not 0 < eps <= PI:
        raise DomainError("eps must lie in (0, pi]")
    if hasattr(path, "times"):
        times, positions = path.times, path.positions
    else:
        times, positions = path
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if times.size < 2 or times[-1] <= times[0]:
        raise EmptyPathError("path needs at least two samples spanning positive time")
    inside = ((positions > 0) & (positions < eps)).astype(float)
    dt = np.diff(times)
    return float(np.sum(0.5 * dt * (inside[1:] + inside[:-1])) / (times[-1] - times[0]))


# --------------------------------------------------------------------------
# CSV dumps


def write_path_csv(run: FVRun, fh) -> None:
    """Columns: time, x1, x2, spine_flag (0 on the unfinished last interval)."""
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(["time", "x1", "x2", "spine_flag"])
    for row in zip(run.times, run.x1, run.x2, run.spine_flag):
        w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])


def write_events_csv(run: FVRun, fh) -> None:
    """Columns: k, T_k, m_k, Y_k."""
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(["k", "T_k", "m_k", "Y_k"])
    for ev in run.events():
        w.writerow([ev.k, repr(ev.T), ev.m, repr(ev.Y)])
