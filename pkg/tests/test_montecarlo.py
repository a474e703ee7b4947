import io
import math

import numpy as np
import pytest
from scipy.stats import norm

from fvspine import fourier
from fvspine import montecarlo as mc
from fvspine.errors import DomainError, EmptyPathError, EstimationError

PI = math.pi


def test_rng_seed_reproducible():
    a = mc.RngSeed(7, 3).generator().standard_normal(5)
    b = mc.RngSeed(7, 3).generator().standard_normal(5)
    c = mc.RngSeed(7, 4).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(DomainError):
        mc.RngSeed(-1)
    with pytest.raises(DomainError):
        mc.RngSeed(1, 1 << 64)


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("FVSPINE_THREADS", "3")
    assert mc.resolve_threads() == 3
    assert mc.resolve_threads(2) == 2
    monkeypatch.delenv("FVSPINE_THREADS")
    assert mc.resolve_threads() >= 1


def test_bridge_touch_probability():
    dt = 1e-4
    d = 5 * math.sqrt(dt)
    assert mc.bridge_touch_probability(d, d, dt) <= 2 * math.exp(-50)
    assert mc.bridge_touch_probability(0.0, 0.3, dt) == 1.0


def test_step_with_exit_frequency():
    # one step from 0.2 with variance 0.01: the bridge-corrected step exits exactly
    # when the continuous path would, so compare with the reflection principle
    gen = mc.RngSeed(5).generator()
    n = 1_000_000
    exits = sum(mc.step_with_exit(0.2, 0.01, gen)[1] is not None for _ in range(n))
    p = 2 * norm.cdf(-0.2 / 0.1) + 2 * norm.cdf(-(PI - 0.2) / 0.1)
    se = math.sqrt(p * (1 - p) / n)
    assert abs(exits / n - p) <= 3 * se


def test_step_with_exit_dense_substep_oracle():
    # oracle: the same step cut into 100 sub-steps, each with its own bridge correction
    rng = np.random.default_rng(9)
    n, m, dt = 200_000, 100, 0.01
    h = dt / m
    x = np.full(n, 0.2)
    alive = np.ones(n, bool)
    for _ in range(m):
        xn = x + math.sqrt(h) * rng.standard_normal(n)
        cross = (xn <= 0) | (xn >= PI)
        touch = rng.random(n) < np.exp(-2 * np.clip(x, 0, None) * np.clip(xn, 0, None) / h)
        alive &= ~(cross | touch)
        x = xn
    p_dense = 1 - alive.mean()
    gen = mc.RngSeed(6).generator()
    k = 200_000
    p_step = sum(mc.step_with_exit(0.2, dt, gen)[1] is not None for _ in range(k)) / k
    se = math.sqrt(p_dense * (1 - p_dense) * (1 / n + 1 / k))
    assert abs(p_step - p_dense) <= 3 * se


def test_first_exit_pair_near_boundary():
    sample = mc.exit_race(0.01, PI / 2, 20_000, seed=2)
    assert np.mean(sample.loser == 1) >= 0.99
    ex = mc.first_exit_pair(0.01, PI / 2, mc.RngSeed(1))
    assert ex.loser in (1, 2) and ex.time > 0 and 0 < ex.survivor < PI


def test_estimate_h_matches_fourier():
    p, se = mc.estimate_h(1.0, 1.5, 200_000, seed=4)
    assert abs(p - fourier.eval_h((1.0, 1.5)).value) <= 3 * se


def test_dt_refinement():
    p1, s1 = mc.estimate_h(1.0, 1.5, 100_000, seed=10, dt=1e-4)
    p2, s2 = mc.estimate_h(1.0, 1.5, 100_000, seed=11, dt=5e-5)
    assert abs(p1 - p2) <= 3 * math.hypot(s1, s2)


def test_replica_parallel_independent_of_threads():
    n = mc.CHUNK * 2 + 1000
    a = mc.exit_race(1.0, 1.2, n, seed=3, dt=1e-3, threads=1)
    b = mc.exit_race(1.0, 1.2, n, seed=3, dt=1e-3, threads=3)
    for f in ("loser", "side", "time", "survivor"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


@pytest.mark.parametrize("y", [0.5, 1.0, 1.5])
def test_drift_symmetric_points(y):
    est = mc.estimate_drift_h(PI / 2, y, 5e-4, 100_000, seed=int(10 * y))
    assert abs(est.mean) <= 3 * est.std_error
    assert est.dt_probe == 5e-4


def test_drift_no_qualifying_runs():
    with pytest.raises(EstimationError):
        mc.estimate_drift_h(1e-7, PI / 2, 5e-4, 50, seed=1, dt=1e-4)


def test_run_fv_invariants_and_reset():
    run = mc.run_fv(1.0, 2.0, 20.0, mc.RngSeed(8), dt=1e-3, record_stride=1)
    assert run.n_events > 5
    assert np.all(np.diff(run.T) > 0)
    assert np.all((run.Y > 0) & (run.Y < PI))
    assert set(np.unique(run.m)) <= {1, 2}
    # right after each branching both particles sit at the survivor's position
    for T, Y in zip(run.T[:5], run.Y[:5]):
        i = np.searchsorted(run.times, T)
        assert run.times[i] == T
        assert run.x1[i] == Y and run.x2[i] == Y


def test_run_fv_deterministic():
    a = mc.run_fv(1.0, 2.0, 50.0, mc.RngSeed(21), record_stride=0)
    b = mc.run_fv(1.0, 2.0, 50.0, mc.RngSeed(21), record_stride=0)
    assert a.events() == b.events()
    assert a.events()[0].k == 1


def test_extract_spine():
    run = mc.run_fv(0.6, 0.9, 10.0, mc.RngSeed(4), dt=1e-3, record_stride=1)
    assert run.n_events >= 2
    spine = mc.extract_spine(run)
    T1, m1 = run.T[0], run.m[0]
    first = run.times < T1
    own = run.x1 if m1 == 1 else run.x2
    np.testing.assert_array_equal(spine.positions[: first.sum()], own[first])
    assert np.all((spine.positions > 0) & (spine.positions < PI))
    assert spine.times[-1] < run.T[-1]
    assert spine.intervals[0] == (0.0, float(T1), int(m1))


def test_extract_spine_empty():
    run = mc.run_fv(PI / 2, PI / 2, 1e-3, mc.RngSeed(1), dt=1e-4)
    with pytest.raises(EmptyPathError):
        mc.extract_spine(run)


def test_spine_increment_matches_drift_estimator():
    dtp = 5e-4
    a = b = PI / 4
    incs = []
    for i in range(6000):
        run = mc.run_fv(a, b, 50.0, mc.RngSeed(77, i), dt=dtp, record_stride=1, max_events=1)
        if run.m[0] == 1:
            sp = mc.extract_spine(run)
            incs.append((sp.positions[1] - a) / dtp)
    incs = np.array(incs)
    est = mc.estimate_drift_h(a, b, dtp, 12_000, seed=78, dt=dtp)
    se = math.hypot(incs.std(ddof=1) / math.sqrt(len(incs)), est.std_error)
    assert abs(incs.mean() - est.mean) <= 3.5 * se


def test_conditioned_bm_zero_noise_equilibrium():
    path = mc.simulate_conditioned_bm(PI / 2, 5.0, mc.RngSeed(0), dt=1e-3, record_stride=10, noise=False)
    assert np.all(path.positions == PI / 2)


def test_conditioned_bm_never_exits():
    path = mc.simulate_conditioned_bm(0.05, 50.0, mc.RngSeed(3), dt=1e-3, record_stride=1, eps=[0.1])
    assert np.all((path.positions > 0) & (path.positions < PI))
    assert 0 < path.occupation()[0] < 1
    assert mc.ConditionedBMParams().drift(1.0) == pytest.approx(1 / math.tan(1.0))
    assert mc.ConditionedBMParams().parabolic(1.0, 2.0) == pytest.approx(math.e * math.sin(1.0))


def test_occupation_fraction():
    t = np.array([0.0, 1.0, 2.0, 4.0])
    x = np.array([0.05, 0.05, 1.0, 1.0])
    assert mc.occupation_fraction((t, x), 0.1) == pytest.approx((1.0 + 0.5) / 4)
    assert mc.occupation_fraction((t, x), PI) == 1.0
    assert mc.occupation_fraction((t, np.full(4, PI / 2)), 0.1) == 0.0
    with pytest.raises(EmptyPathError):
        mc.occupation_fraction((t[:1], x[:1]), 0.1)


def test_csv_dumps():
    run = mc.run_fv(1.0, 2.0, 2.0, mc.RngSeed(2), dt=1e-3, record_stride=50)
    buf = io.StringIO()
    mc.write_path_csv(run, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "time,x1,x2,spine_flag"
    assert len(lines) == len(run.times) + 1
    buf = io.StringIO()
    mc.write_events_csv(run, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "k,T_k,m_k,Y_k"
    assert len(lines) == run.n_events + 1
