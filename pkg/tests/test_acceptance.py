"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line, gathered in the terminal summary.
The Monte Carlo criteria take a few minutes in total on one core.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import pytest

from fvspine.cli import main
from fvspine.conformal import (check_constants, drift_gap_conformal, map_constants,
                               verify_prop43, verify_prop44)
from fvspine.fourier import drift_gap, eval_h, first_term_bound, verify_thm23
from fvspine.montecarlo import estimate_drift_h, estimate_h
from fvspine.stationary import (fv_ensemble, occupation_conditioned, stationarity_report,
                                thm24_experiment)

PI = math.pi
TESTS = Path(__file__).parent


def test_c01_drift_gap_at_quarter_point(capsys, verdict):
    t0 = time.perf_counter()
    code = main(["harmonic", "eval", "--x", repr(PI / 4), "--y", repr(PI / 4)])
    elapsed = time.perf_counter() - t0
    r = json.loads(capsys.readouterr().out)["results"]
    fourier, conformal = r["gap_fourier"], r["gap_conformal"]
    target = 0.248532
    ok = (code == 0 and abs(fourier - target) <= 1e-5 and abs(conformal - target) <= 1e-5
          and abs(fourier - conformal) <= 1e-9 and elapsed < 1.0)
    verdict(1, ok, f"fourier={fourier:.11f} conformal={conformal:.11f} target={target} "
                   f"|diff|={abs(fourier - conformal):.1e} time={elapsed:.2f}s")


def test_c02_first_term_bound(verdict):
    s = first_term_bound()
    ok = abs(s - 0.475282) <= 1e-5 and abs((1 - 2 * s) - 0.0494362) <= 1e-5
    verdict(2, ok, f"S={s:.7f} 1-2S={1 - 2 * s:.7f}")


def test_c03_map_constant(verdict):
    k = map_constants()
    resid = abs(k.diagonal_identity() - math.sqrt(2) * PI)
    ok = abs(k.c - 1.69443) <= 1e-5 and resid <= 1e-10
    verdict(3, ok, f"c={k.c:.13f} identity residual={resid:.1e}")


def test_c04_quarter_grid(verdict):
    t0 = time.perf_counter()
    rep = verify_thm23(grid_step=PI / 64)
    elapsed = time.perf_counter() - t0
    ok = rep.passed and rep.min_gap > 1e-6 and elapsed < 30
    verdict(4, ok, f"min gap={rep.min_gap:.6f} at {rep.argmin} over {rep.n_points} points, "
                   f"{len(rep.failures)} uncertified, time={elapsed:.2f}s")


def test_c05_identity_and_midline(verdict):
    p43 = verify_prop43()
    p44 = verify_prop44(n=100)
    ok = (p43.n_identity == 100 * 100 and p43.min_identity >= 0
          and p44.max_K < 0 and abs(p44.K_left) <= 1e-6 and abs(p44.K_right) <= 1e-6)
    verdict(5, ok, f"min g(a)(t-1/t)={p43.min_identity:.2e} on {p43.n_identity} points; "
                   f"max K={p44.max_K:.2e}, K(0)={p44.K_left:.1e}, K(pi/2)={p44.K_right:.1e}")


@pytest.mark.slow
def test_c06_monte_carlo_h(verdict):
    points = [(PI / 2, PI / 2), (PI / 4, PI / 4), (1.0, 2.0), (0.5, 1.2), (2.5, 0.8)]
    worst, details = 0.0, []
    sigma_mid = None
    for i, (a, b) in enumerate(points):
        p, se = estimate_h(a, b, 10**6, seed=100 + i, dt=1e-4)
        exact = eval_h((a, b)).value
        z = abs(p - exact) / se
        worst = max(worst, z)
        details.append(f"({a:.3f},{b:.3f}) z={z:.2f}")
        if i == 0:
            sigma_mid = se
    ok = worst <= 3.0 and abs(sigma_mid - 5e-4) <= 1e-5
    verdict(6, ok, f"max |z|={worst:.2f}, sigma at centre={sigma_mid:.2e}; " + ", ".join(details))


@pytest.mark.slow
def test_c07_drift_estimator(verdict):
    est = estimate_drift_h(PI / 4, PI / 4, dt_probe=5e-4, n=4 * 10**6, seed=7, dt=1e-4)
    bias_band = abs(est.mean - est.half_mean)
    lo, hi = est.interval(3.0)
    ok = abs(est.mean - 0.7515) <= 3 * est.std_error + bias_band and hi < 1.0
    verdict(7, ok, f"estimate={est.mean:.4f} se={est.std_error:.4f} bias band={bias_band:.4f} "
                   f"CI=({lo:.4f}, {hi:.4f}) from {est.n_qualifying} qualifying runs")


@pytest.mark.slow
def test_c08_stationarity(verdict):
    ens = fv_ensemble(25_000, 8, seed=11, eps=(0.1,), dt=1e-4, nbins=40)
    rep = stationarity_report(ens)
    ok = rep.ks_pvalue > 0.01 and rep.tv <= 0.02 and rep.hist_samples >= 10**7 and rep.nbins == 40
    verdict(8, ok, f"KS p={rep.ks_pvalue:.3f} (n={rep.n_ks}), TV={rep.tv:.4f}, "
                   f"histogram samples={rep.hist_samples:.2e}")


@pytest.mark.slow
def test_c09_spine_occupation(verdict):
    eps = (0.05, 0.1, 0.2)
    rep = thm24_experiment(eps, horizon=25_000, reps=8, seed=24, dt=1e-4, cond_horizon=12_500)
    row = next(r for r in rep.rows if r.eps == 0.1)
    analytic = (0.1 - math.sin(0.2) / 2) / PI
    rel = abs(row.cond_emp - analytic) / analytic
    ok = (rel <= 0.10 and abs(analytic - occupation_conditioned(0.1)) < 1e-15
          and rep.any_significant and rep.ratio_grows)
    ratios = ", ".join(f"eps={r.eps}: {r.ratio:.2f} ({(r.spine_emp - r.cond_analytic) / r.spine_se:.1f} se)"
                       for r in rep.rows)
    verdict(9, ok, f"conditioned rel err at 0.1={rel:.3f}; spine/conditioned {ratios}")


def test_c10_property_suites(verdict):
    targets = [
        "tests/test_numerics.py",
        "tests/test_conformal.py",
        "tests/test_fourier.py",
        "tests/test_kernels.py",
        "tests/test_montecarlo.py::test_run_fv_deterministic",
        "tests/test_cli.py::test_byte_identical_bodies",
    ]
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *targets],
                          cwd=TESTS.parent, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and elapsed < 60
    verdict(10, ok, f"{summary} (wall {elapsed:.1f}s)")
