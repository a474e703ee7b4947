"""The compiled kernels and the pure-Python fallback must agree bit for bit."""

import math

import numpy as np
import pytest

from fvspine import _backend
from fvspine.montecarlo import RngSeed

PI = math.pi
C = _backend.compiled_kernels
P = _backend.python_kernels

pytestmark = pytest.mark.skipif(C is None, reason="compiled extension not built")


def _gen(stream=0):
    return RngSeed(1234, stream).generator()


def _same(a, b):
    if isinstance(a, dict):
        assert a.keys() == b.keys()
        for k in a:
            _same(a[k], b[k])
    elif isinstance(a, tuple):
        for u, v in zip(a, b):
            _same(u, v)
    else:
        np.testing.assert_array_equal(np.asarray(a), np.asarray(b))


def test_backend_names():
    assert C.BACKEND == "cython"
    assert P.BACKEND == "python"
    assert _backend.BACKEND in ("cython", "python")


def test_step_identical():
    gc, gp = _gen(), _gen()
    for x in (0.01, 0.2, 1.5, PI - 0.003):
        for _ in range(50):
            assert C.step(x, 1e-3, gc) == P.step(x, 1e-3, gp)


@pytest.mark.parametrize("bounds", [(0.0, PI, 0.0, PI), (-math.inf, 1.1447, 0.0, PI / 2)])
def test_race_identical(bounds):
    args = (0.6, 0.4, *bounds, 1e-3, 5e-3, 300)
    _same(C.race(*args, _gen(1)), P.race(*args, _gen(1)))


def test_race_ties_identical():
    # coarse steps from near-boundary starts force many simultaneous exits
    args = (0.05, 0.05, 0.0, PI, 0.0, PI, 0.05, 0.0, 400)
    out = C.race(*args, _gen(2))
    _same(out, P.race(*args, _gen(2)))


@pytest.mark.parametrize("stride", [0, 7])
def test_fv_run_identical(stride):
    eps = np.array([0.05, 0.2])
    args = (1.0, 2.0, 5.0, 1e-3)
    c = C.fv_run(*args, _gen(3), eps, 8, 1.0, stride, 10_000)
    p = P.fv_run(*args, _gen(3), eps, 8, 1.0, stride, 10_000)
    _same(c, p)
    assert len(c["T"]) > 3


def test_cond_run_identical():
    eps = np.array([0.1, 0.3])
    c = C.cond_run(0.2, 3.0, 1e-3, _gen(4), eps, 10, 5, True, 0.5)
    p = P.cond_run(0.2, 3.0, 1e-3, _gen(4), eps, 10, 5, True, 0.5)
    _same(c, p)


def test_quarter_exit_identical():
    _same(C.quarter_exit(0.5, 0.7, PI, 1e-3, 100, _gen(5)),
          P.quarter_exit(0.5, 0.7, PI, 1e-3, 100, _gen(5)))
