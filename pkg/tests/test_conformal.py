import cmath
import math

import numpy as np
import pytest

from fvspine import fourier
from fvspine.conformal import (
    CENTER,
    DiskPoint,
    HalfPlaneCoord,
    K_profile,
    check_constants,
    disk_to_half_plane,
    g_alpha,
    grad_h_at,
    grad_h_conformal,
    h_conformal,
    half_plane_to_disk,
    half_plane_to_square,
    map_constants,
    mixed_identity,
    p_poly,
    p_poly_roots,
    phi,
    psi,
    psi_inverse,
    u_disk,
    verify_prop43,
    verify_prop44,
)
from fvspine.errors import DomainError
from fvspine.numerics import agm, integrate_line

PI = math.pi
K = map_constants()


def _fd_step(x, y):
    return 1e-5 * min(1.0, 10 * min(x, y, PI - x, PI - y))


def test_map_constants():
    assert K.c == pytest.approx(1.69443, abs=1e-5)
    assert K.c == pytest.approx(math.sqrt(2) * agm(1, math.sqrt(2)), rel=1e-15)
    assert abs(K.diagonal_identity() - math.sqrt(2) * PI) <= 1e-10


def test_phi_values():
    assert phi(0) == 0
    w = cmath.exp(1j * PI / 4)
    real = integrate_line(lambda t: 1 / np.sqrt(1 - t ** 4), 0, 0.5, tol=1e-14).value
    assert abs(phi(0.5 * w) - w * real) <= 1e-13
    half_varpi = PI / (2 * agm(1, math.sqrt(2)))
    rest = integrate_line(lambda t: 1 / np.sqrt(1 - t ** 4), 0.99, 1, tol=1e-13, singular="end").value
    assert abs(phi(0.99 * w)) + rest.real == pytest.approx(half_varpi, abs=1e-12)
    assert abs(phi(0.999999 * w)) < PI / (2 * agm(1, math.sqrt(2)))
    with pytest.raises(DomainError):
        phi(1.0)


def test_psi_inverse_examples():
    assert psi_inverse(0) == pytest.approx(CENTER, abs=1e-15)
    q = psi_inverse(-0.7)
    assert q.real < PI / 2 and q.imag == pytest.approx(PI / 2, abs=1e-14)
    assert psi_inverse(0.3j).real == pytest.approx(PI / 2, abs=1e-10)


def test_psi_examples():
    assert abs(psi(CENTER)) <= 1e-12
    z = psi((PI / 4, PI / 4))
    assert cmath.phase(z) == pytest.approx(-3 * PI / 4, abs=1e-10)


def test_psi_roundtrip_random():
    rng = np.random.default_rng(5)
    for _ in range(100):
        z = complex(0.95 * math.sqrt(rng.random()) * cmath.exp(2j * PI * rng.random()))
        assert abs(psi(psi_inverse(z), tol=1e-12) - z) <= 1e-10


def test_ray_preservation():
    for r in (0.3, 0.6, 0.9):
        for k in range(8):
            q = psi_inverse(r * cmath.exp(1j * k * PI / 4)) - CENTER
            assert math.remainder(cmath.phase(q) - k * PI / 4, 2 * PI) == pytest.approx(0, abs=1e-10)


def test_u_disk():
    assert u_disk(0) == 0.5
    assert u_disk(0.999j) == pytest.approx(1, abs=2e-3)
    assert u_disk(0.999) == pytest.approx(0, abs=2e-3)
    assert 0 <= u_disk(DiskPoint(0.5 + 0.5j)) <= 1


def test_h_conformal_examples():
    assert h_conformal((PI / 4, PI / 4)) == pytest.approx(0.5, abs=1e-12)
    assert h_conformal((PI / 2, 0.1)) > 0.9
    assert h_conformal((1.0, 1.5), tol=1e-13) == pytest.approx(fourier.eval_h((1.0, 1.5), 1e-13).value, abs=1e-10)


def test_grad_examples():
    assert grad_h_conformal(0) == (0.0, 0.0)
    for t in (-0.2, -0.6, -0.9):
        hx, hy = grad_h_conformal(t)
        assert hx == pytest.approx(-4 / (K.c * PI) * t / math.sqrt(1 + t ** 4), rel=1e-14)
        assert hx > 0 and hy == 0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(50):
        x, y = rng.uniform(0.2, PI - 0.2, 2)
        e = _fd_step(x, y)
        _, hx, hy = grad_h_at(complex(x, y), tol=1e-13)
        fx = (h_conformal((x + e, y), tol=1e-13) - h_conformal((x - e, y), tol=1e-13)) / (2 * e)
        fy = (h_conformal((x, y + e), tol=1e-13) - h_conformal((x, y - e), tol=1e-13)) / (2 * e)
        assert abs(hx - fx) <= 1e-6 and abs(hy - fy) <= 1e-6


def test_harmonicity_residual():
    rng = np.random.default_rng(3)
    e = 1e-3
    for _ in range(100):
        # the 5-point stencil's O(e^2) truncation error exceeds 1e-4 closer to the corners
        x, y = rng.uniform(0.2, PI - 0.2, 2)
        H = lambda a, b: h_conformal((a, b), tol=1e-13)
        lap = (H(x + e, y) + H(x - e, y) + H(x, y + e) + H(x, y - e) - 4 * H(x, y)) / e ** 2
        assert abs(lap) <= 1e-4


def test_boundary_values():
    # at distance d from a side h differs from its boundary value by about d |grad h|,
    # and |grad h| grows like 1/(distance to the corner): 1e-3 needs a corner margin of 0.7
    for s in np.linspace(0.7, PI - 0.7, 7):
        assert h_conformal((1e-3, s)) <= 1e-3
        assert h_conformal((PI - 1e-3, s)) <= 1e-3
        assert h_conformal((s, 1e-3)) >= 1 - 1e-3
        assert h_conformal((s, PI - 1e-3)) >= 1 - 1e-3
    for s in np.linspace(0.1, PI - 0.1, 7):
        assert h_conformal((1e-5, s)) <= 1e-3
        assert h_conformal((s, PI - 1e-5)) >= 1 - 1e-3
    assert h_conformal((1e-3, 0.1)) > 1e-3


def test_half_plane_chain():
    for t, a in [(1.5, -1.2), (3.0, 0.0), (20.0, 1.3), (1.01, -0.2)]:
        hp = HalfPlaneCoord(t, a)
        z = half_plane_to_disk(hp)
        assert z.real < 0 and z.imag < 0  # lower-left quarter of the disk
        back = disk_to_half_plane(z)
        assert back.t == pytest.approx(t, rel=1e-12) and back.alpha == pytest.approx(a, abs=1e-12)
        q = half_plane_to_square(hp)
        assert 0 < q.real < PI / 2 and 0 < q.imag < PI / 2
        assert h_conformal(q, tol=1e-13) == pytest.approx(a / PI + 0.5, abs=1e-12)
    with pytest.raises(DomainError):
        HalfPlaneCoord(0.9, 0.0)


def test_mixed_identity_examples():
    assert g_alpha(-PI / 2) == 0
    assert g_alpha(-PI / 2 + 1e-3) > 0
    assert g_alpha(-PI / 2 + 0.02) == pytest.approx((-PI / 2 + 0.02 + PI / 2) * math.sin(-PI / 2 + 0.02) + math.cos(-PI / 2 + 0.02), rel=1e-9)
    assert mixed_identity(HalfPlaneCoord(2.0, 0.0)) == pytest.approx(2 / (K.c ** 2 * PI ** 2) * 1.5)


@pytest.mark.parametrize("t,a", [(3.0, -0.4), (1.5, 0.7), (8.0, -1.1)])
def test_mixed_identity_finite_differences(t, a):
    hp = HalfPlaneCoord(t, a)
    q = half_plane_to_square(hp)
    x, y = q.real, q.imag
    e = 1e-4
    H = lambda u, v: h_conformal((u, v), tol=1e-13)
    h = H(x, y)
    hx = (H(x + e, y) - H(x - e, y)) / (2 * e)
    hy = (H(x, y + e) - H(x, y - e)) / (2 * e)
    hxy = (H(x + e, y + e) - H(x + e, y - e) - H(x - e, y + e) + H(x - e, y - e)) / (4 * e * e)
    assert h * hxy - hx * hy == pytest.approx(mixed_identity(hp), abs=1e-5)


def test_K_profile():
    assert K_profile(0.0) == 0.0
    assert abs(K_profile(PI / 2)) <= 1e-15
    assert abs(K_profile(1e-7)) <= 1e-6
    assert abs(K_profile(PI / 2 - 1e-7)) <= 1e-6
    xs = np.linspace(0.01, PI / 2 - 0.01, 100)
    assert all(K_profile(x) < 0 for x in xs)
    # against the Fourier evaluation on the midline
    x = 0.6
    h = fourier.eval_h((x, PI / 2)).value
    hx = fourier.eval_hx((x, PI / 2)).value
    assert K_profile(x) == pytest.approx(hx * math.sin(x) - h * math.cos(x), abs=1e-11)


def test_p_poly_roots():
    r = p_poly_roots()
    assert r.small * r.large == pytest.approx(1, abs=1e-15)
    assert -1 < r.t0 < 0
    assert r.t0 == pytest.approx(-0.6505, abs=1e-4)
    assert abs(p_poly(r.t0)) <= 1e-12


def test_verify_props():
    assert verify_prop43().passed
    rep = verify_prop44()
    assert rep.passed and len(rep.K) == 100


def test_check_constants():
    r = check_constants(n_roundtrip=20)
    assert r.roundtrip_max_error <= 1e-10 and r.ray_max_error <= 1e-10
