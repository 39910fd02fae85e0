import numpy as np
import pytest

from boltzlab.core import maxwellian
from boltzlab.testfunctions import (collision_invariants, constant,
                                    fourier_hermite, gauss_hermite_nodes,
                                    hermite, speed_squared,
                                    velocity_coordinate)


def test_orthonormality_by_quadrature():
    nodes, wts = gauss_hermite_nodes(24, d=2)
    modes = [(0, 0), (1, 0), (2, 0), (1, 1), (0, 3)]
    for a in modes:
        for b in modes:
            ga, gb = hermite(a), hermite(b)
            num = float(np.sum(wts * ga(None, nodes) * gb(None, nodes)))
            assert num == pytest.approx(1.0 if a == b else 0.0, abs=1e-10)
            assert ga.l2m_inner(gb) == pytest.approx(1.0 if a == b else 0.0)


def test_gradient_and_hessian_match_finite_differences():
    rng = np.random.default_rng(1)
    g = hermite((2, 1)) + 0.7 * hermite((0, 3)) - 1.2 * constant(1.0, 2)
    v = rng.standard_normal((12, 2))
    h = 1e-5
    grad = g.grad_v(None, v)
    hess = g.hess_v(None, v)
    for axis in range(2):
        dv = np.zeros(2)
        dv[axis] = h
        fd = (g(None, v + dv) - g(None, v - dv)) / (2 * h)
        assert np.allclose(grad[:, axis], fd, atol=1e-8)
        fd2 = (g.grad_v(None, v + dv) - g.grad_v(None, v - dv)) / (2 * h)
        assert np.allclose(hess[:, :, axis], fd2, atol=1e-7)


def test_fourier_modes_and_x_gradient():
    g = fourier_hermite((1, 2), (1, 0), part="c")
    x = np.array([[0.2, 0.7]])
    v = np.array([[0.5, -1.0]])
    k = np.array([1.0, 2.0])
    expected = np.sqrt(2) * np.cos(2 * np.pi * x @ k) * v[0, 0]
    assert g(x, v)[0] == pytest.approx(float(expected))
    h = 1e-6
    for axis in range(2):
        dx = np.zeros(2)
        dx[axis] = h
        fd = (g(x + dx, v) - g(x - dx, v)) / (2 * h)
        assert g.grad_x(x, v)[0, axis] == pytest.approx(float(fd), rel=1e-6)


def test_speed_squared_identity():
    rng = np.random.default_rng(3)
    v = rng.standard_normal((40, 3))
    g = speed_squared(3)
    assert np.allclose(g(None, v), np.sum(v**2, axis=1), atol=1e-12)


def test_collision_invariants_content():
    invs = collision_invariants(2)
    v = np.array([[0.3, -1.4]])
    vals = [f(None, v)[0] for f in invs]
    assert vals[0] == pytest.approx(1.0)
    assert vals[1] == pytest.approx(0.3)
    assert vals[2] == pytest.approx(-1.4)
    assert vals[3] == pytest.approx(0.3**2 + 1.4**2)


def test_weighted_sup_finite():
    g = hermite((4, 0)) + fourier_hermite((2, 0), (0, 2), "s")
    val = g.gaussian_weighted_sup()
    assert np.isfinite(val) and val > 0


def test_l2m_norm_matches_monte_carlo():
    rng = np.random.default_rng(5)
    g = 0.5 * hermite((2, 0)) - 1.5 * hermite((1, 1))
    v = rng.standard_normal((400000, 2))
    mc = np.sqrt(np.mean(g(None, v) ** 2))
    assert g.l2m_norm() == pytest.approx(mc, rel=0.02)


def test_maxwellian_weighting_consistency():
    # E_{v~M}[he_2(v_1)^2] = 1 holds against an explicit density integral
    g = hermite((2,))
    v = np.linspace(-12, 12, 200001)[:, None]
    dens = maxwellian(v)
    val = np.trapezoid(g(None, v) ** 2 * dens, v[:, 0])
    assert val == pytest.approx(1.0, abs=1e-8)
