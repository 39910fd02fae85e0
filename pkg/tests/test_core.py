import numpy as np
import pytest

from boltzlab.core import (CHI_FAMILIES, PhaseState, PotentialSpec,
                           SingularInputError, chi_value, hamiltonian,
                           maxwellian, mean_free_path, potential_gradient_norm,
                           potential_value, sample_maxwellian, scaling_from,
                           torus_displacement)
from boltzlab.testfunctions import gauss_hermite_nodes


def test_torus_wraparound():
    out = torus_displacement(np.array([0.1, 0.0, 0.0]), np.array([0.9, 0.0, 0.0]))
    assert np.allclose(out, [0.2, 0.0, 0.0])


def test_torus_identity():
    x = np.array([0.3, 0.7, 0.11])
    assert np.allclose(torus_displacement(x, x), 0.0)


def test_torus_halfcell_tie_is_deterministic():
    out = torus_displacement(np.array([0.75, 0.25, 0.0]),
                             np.array([0.25, 0.75, 0.0]))
    # both half-cell components land on the -1/2 representative
    assert np.allclose(out, [-0.5, -0.5, 0.0])
    assert np.all(out >= -0.5) and np.all(out < 0.5)


def test_chi_families_shape():
    r = np.linspace(0.0, 0.999, 400)
    for name in CHI_FAMILIES:
        v = chi_value(name, r)
        assert v[0] == pytest.approx(1.0)
        assert np.all(np.diff(v) <= 1e-12), name
        assert chi_value(name, 1.2) == 0.0


def test_potential_cutoff_support():
    spec = PotentialSpec(s=1.0, alpha=0.3)
    assert potential_value(spec, 1.0) == 0.0
    assert potential_value(spec, 3.7) == 0.0


def test_potential_bounded_for_s0():
    spec = PotentialSpec(s=0.0, alpha=0.3)
    r = np.linspace(0.0, 2.0, 500)
    assert np.all(potential_value(spec, r) <= 1.0 + 1e-15)


def test_potential_smoothstep_value_and_gradient():
    # chi(r) = (1-r)^2 (1+2r), s = 1: value at r = 0.5 is 0.5/0.5 = 1
    spec = PotentialSpec(s=1.0, chi="smoothstep", alpha=1.0)
    assert potential_value(spec, 0.5) == pytest.approx(1.0, abs=1e-14)
    # analytic gradient against central differences of the closed form
    for r in (0.2, 0.5, 0.8):
        h = 1e-6
        fd = (potential_value(spec, r + h) - potential_value(spec, r - h)) / (2 * h)
        assert potential_gradient_norm(spec, r) == pytest.approx(fd, rel=1e-8)


def test_potential_monotone_every_family():
    r = np.linspace(1e-3, 1.0, 2000)
    for chi in CHI_FAMILIES:
        for s in (0.5, 1.0, 2.0):
            v = potential_value(PotentialSpec(s=s, chi=chi, alpha=1.0), r)
            assert np.all(np.diff(v) <= 1e-9), (chi, s)


def test_potential_singular_input():
    spec = PotentialSpec(s=1.0)
    with pytest.raises(SingularInputError):
        potential_value(spec, 0.0)


def test_hamiltonian_free_cases():
    spec = PotentialSpec(s=1.0, alpha=0.1, epsilon=0.01)
    one = PhaseState(np.array([[0.5, 0.5]]), np.array([[1.0, 2.0]]))
    assert hamiltonian(spec, one) == pytest.approx(2.5)
    far = PhaseState(np.array([[0.1, 0.1], [0.6, 0.6]]),
                     np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert hamiltonian(spec, far) == pytest.approx(1.0)


def test_hamiltonian_pair_term():
    # two particles at distance eps/2, s = 1, alpha = 0.1:
    # pair energy 0.1 * chi(1/2) / (1/2) with the default poly_bump profile
    spec = PotentialSpec(s=1.0, alpha=0.1, epsilon=0.01, chi="poly_bump")
    pos = np.array([[0.5, 0.5], [0.5 + 0.005, 0.5]])
    vel = np.zeros((2, 2))
    chi_half = (1 - 0.5) ** 3 * (1 + 3 * 0.5)
    expected = 0.1 * chi_half / 0.5
    assert hamiltonian(spec, PhaseState(pos, vel)) == pytest.approx(expected,
                                                                    rel=1e-12)


def test_hamiltonian_translation_permutation_invariance():
    rng = np.random.default_rng(0)
    spec = PotentialSpec(s=0.5, alpha=0.4, epsilon=0.2)
    pos = rng.random((6, 2))
    vel = rng.standard_normal((6, 2))
    h0 = hamiltonian(spec, PhaseState(pos, vel))
    shift = rng.random(2)
    h1 = hamiltonian(spec, PhaseState(pos + shift, vel))
    perm = rng.permutation(6)
    h2 = hamiltonian(spec, PhaseState(pos[perm], vel[perm]))
    assert h1 == pytest.approx(h0, rel=1e-12)
    assert h2 == pytest.approx(h0, rel=1e-12)


def test_hamiltonian_overlap_singular():
    spec = PotentialSpec(s=1.0, alpha=0.1, epsilon=0.1)
    pos = np.array([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(SingularInputError):
        hamiltonian(spec, PhaseState(pos, np.zeros((2, 2))))


def test_mean_free_path_table():
    assert mean_free_path(2.0, 0.01) == pytest.approx(0.01)
    assert mean_free_path(1.0, np.exp(-1.0)) == pytest.approx(np.exp(-2.0))
    assert mean_free_path(0.5, 0.1) == pytest.approx(0.01)


def test_scaling_roundtrip():
    reg = scaling_from(s=1.0, alpha=0.2, mu=300.0, d=3)
    budget = reg.mu * reg.epsilon ** (reg.dimension - 1) * reg.mean_free_path
    assert budget == pytest.approx(1.0, abs=1e-14)


def test_scaling_rejects_bad_input():
    with pytest.raises(ValueError):
        scaling_from(s=-1.0, alpha=0.2, mu=10.0, d=3)
    with pytest.raises(ValueError):
        mean_free_path(1.0, 1.5)


def test_maxwellian_origin_and_normalization():
    assert maxwellian(np.zeros(3)) == pytest.approx((2 * np.pi) ** -1.5)
    nodes, wts = gauss_hermite_nodes(48, d=1)
    # integral of M against dv equals E_{v~M}[1] = 1 by the quadrature weights
    assert np.sum(wts) == pytest.approx(1.0, abs=1e-10)
    # and a redundant direct trapezoid in 1d
    v = np.linspace(-10, 10, 20001)[:, None]
    assert np.trapezoid(maxwellian(v), v[:, 0]) == pytest.approx(1.0, abs=1e-10)


def test_maxwellian_sampler_moments():
    rng = np.random.default_rng(7)
    v = sample_maxwellian(rng, 200000, 3)
    assert np.abs(v.mean(axis=0)).max() < 3.0 / np.sqrt(200000) * 1.5
    cov = np.cov(v.T)
    assert np.abs(cov - np.eye(3)).max() < 0.02
