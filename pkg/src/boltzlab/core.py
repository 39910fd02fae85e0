"""Shared domain types: torus geometry, cutoff power-law potential, Maxwellian,
Hamiltonian energy and the scaling-regime bookkeeping.

Units: the torus is [0,1)^d, velocities are thermal (unit mass and
temperature).  Inside the potential, distances are expressed in units of the
interaction range, so ``v(r) = chi(r) / r**s`` lives on [0, 1) and the callers
rescale by ``epsilon``.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CHI_FAMILIES",
    "PotentialSpec",
    "ScalingRegime",
    "PhaseState",
    "SingularInputError",
    "chi_value",
    "chi_derivative",
    "torus_displacement",
    "torus_distance",
    "potential_value",
    "potential_gradient_norm",
    "hamiltonian",
    "mean_free_path",
    "scaling_from",
    "maxwellian",
    "sample_maxwellian",
]


class SingularInputError(ValueError):
    """Raised when a potential or energy is evaluated at zero separation."""


# ---------------------------------------------------------------------------
# Cutoff profiles chi: chi(0)=1, chi(r)=0 for r>=1, non-increasing on [0,1].
# Each entry maps a displacement in [0, inf) to (value, derivative); all three
# families have chi'(0)=chi(1)=chi'(1)=0 so forces vanish smoothly at the edge.
# ---------------------------------------------------------------------------


def _poly_bump(r):
    # (1-r)^3 (1+3r): C^2 across the cutoff edge
    v = (1.0 - r) ** 3 * (1.0 + 3.0 * r)
    dv = -12.0 * r * (1.0 - r) ** 2
    return v, dv


def _smoothstep(r):
    # (1-r)^2 (1+2r): the cubic clamp profile
    v = (1.0 - r) ** 2 * (1.0 + 2.0 * r)
    dv = -6.0 * r * (1.0 - r)
    return v, dv


def _cosine(r):
    # raised-cosine taper (1+cos(pi r))/2
    v = 0.5 * (1.0 + np.cos(np.pi * r))
    dv = -0.5 * np.pi * np.sin(np.pi * r)
    return v, dv


CHI_FAMILIES = {
    "poly_bump": _poly_bump,
    "smoothstep": _smoothstep,
    "cosine": _cosine,
}


def chi_value(family: str, r):
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    v, _ = CHI_FAMILIES[family](np.where(inside, r, 1.0))
    return np.where(inside, v, 0.0)


def chi_derivative(family: str, r):
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    _, dv = CHI_FAMILIES[family](np.where(inside, r, 1.0))
    return np.where(inside, dv, 0.0)


@dataclass(frozen=True)
class PotentialSpec:
    """Repulsive cutoff potential v(r) = chi(r)/r^s with coupling alpha.

    Parameters
    ----------
    s : float
        Singularity exponent, >= 0.  s = 1 is the Coulomb threshold.
    chi : str
        Name of the cutoff profile, one of ``CHI_FAMILIES``.
    alpha : float
        Coupling strength in (0, 1]; alpha = 0 is allowed and means free flight.
    epsilon : float
        Interaction range on the unit torus.
    """

    s: float = 1.0
    chi: str = "poly_bump"
    alpha: float = 0.1
    epsilon: float = 0.01

    def __post_init__(self):
        if self.s < 0:
            raise ValueError(f"singularity exponent must be >= 0, got {self.s}")
        if self.chi not in CHI_FAMILIES:
            raise ValueError(f"unknown chi family {self.chi!r}")
        if self.alpha < 0:
            raise ValueError("coupling alpha must be >= 0")
        if self.epsilon <= 0:
            raise ValueError("interaction range epsilon must be > 0")


def potential_value(spec: PotentialSpec, r):
    """chi(r)/r^s at unit range; r in units of the interaction range."""
    r = np.asarray(r, dtype=float)
    if spec.s > 0 and np.any(r <= 0.0):
        raise SingularInputError("potential evaluated at r <= 0 with s > 0")
    if spec.s == 0:
        return chi_value(spec.chi, r)
    rsafe = np.where(r > 0, r, 1.0)
    return chi_value(spec.chi, r) / rsafe**spec.s


def potential_gradient_norm(spec: PotentialSpec, r):
    """d/dr [chi(r)/r^s], analytic; <= 0 everywhere (repulsive)."""
    r = np.asarray(r, dtype=float)
    if spec.s > 0 and np.any(r <= 0.0):
        raise SingularInputError("potential gradient at r <= 0 with s > 0")
    rsafe = np.where(r > 0, r, 1.0)
    chi = chi_value(spec.chi, r)
    dchi = chi_derivative(spec.chi, r)
    if spec.s == 0:
        return dchi
    return dchi / rsafe**spec.s - spec.s * chi / rsafe ** (spec.s + 1.0)


# ---------------------------------------------------------------------------
# Torus geometry
# ---------------------------------------------------------------------------


def torus_displacement(x, y):
    """Minimal-image representative of x - y, componentwise in [-1/2, 1/2).

    The half-cell tie maps to -1/2 so the representative is unique.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return (d + 0.5) % 1.0 - 0.5


def torus_distance(x, y):
    return np.linalg.norm(torus_displacement(x, y), axis=-1)


# ---------------------------------------------------------------------------
# Phase-space state and energy
# ---------------------------------------------------------------------------


@dataclass
class PhaseState:
    """Positions on the unit torus plus velocities for n particles."""

    positions: np.ndarray  # (n, d), componentwise in [0, 1)
    velocities: np.ndarray  # (n, d)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must have equal shapes")
        self.positions = self.positions % 1.0

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "PhaseState":
        return PhaseState(self.positions.copy(), self.velocities.copy())


def _pair_separations(positions):
    n = positions.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    disp = torus_displacement(positions[iu], positions[ju])
    return iu, ju, np.linalg.norm(disp, axis=-1)


def hamiltonian(spec: PotentialSpec, state: PhaseState) -> float:
    """Kinetic energy plus the alpha-weighted pair sum at range epsilon."""
    kinetic = 0.5 * float(np.sum(state.velocities**2))
    if state.n < 2 or spec.alpha == 0.0:
        return kinetic
    _, _, r = _pair_separations(state.positions)
    close = r < spec.epsilon
    if not np.any(close):
        return kinetic
    rr = r[close] / spec.epsilon
    if spec.s > 0 and np.any(rr == 0.0):
        raise SingularInputError("overlapping particles at zero separation")
    return kinetic + spec.alpha * float(np.sum(potential_value(spec, rr)))


# ---------------------------------------------------------------------------
# Scaling regime
# ---------------------------------------------------------------------------


def mean_free_path(s: float, alpha: float) -> float:
    """Regime-dependent normalization: alpha^(2/s), alpha^2 |log alpha|, alpha^2."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if s > 1.0:
        return alpha ** (2.0 / s)
    if s == 1.0:
        return alpha**2 * abs(np.log(alpha))
    return alpha**2


@dataclass(frozen=True)
class ScalingRegime:
    """Low-density scaling data tied together by mu * eps^(d-1) * dss = 1."""

    s: float
    alpha: float
    mean_free_path: float
    mu: float
    epsilon: float
    dimension: int

    def __post_init__(self):
        budget = self.mu * self.epsilon ** (self.dimension - 1) * self.mean_free_path
        if abs(budget - 1.0) > 1e-12:
            raise ValueError(f"scaling constraint violated: mu eps^(d-1) dss = {budget}")


def scaling_from(s: float, alpha: float, mu: float, d: int) -> ScalingRegime:
    """Solve the interaction range from the low-density constraint."""
    if s < 0:
        raise ValueError("s must be >= 0")
    if mu <= 0:
        raise ValueError("mu must be > 0")
    if d < 2:
        raise ValueError("dimension must be >= 2")
    dss = mean_free_path(s, alpha)
    eps = (1.0 / (mu * dss)) ** (1.0 / (d - 1))
    return ScalingRegime(s=s, alpha=alpha, mean_free_path=dss, mu=mu,
                         epsilon=eps, dimension=d)


# ---------------------------------------------------------------------------
# Maxwellian
# ---------------------------------------------------------------------------


def maxwellian(v) -> np.ndarray:
    """Standard Gaussian equilibrium density exp(-|v|^2/2)/(2 pi)^(d/2)."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    return np.exp(-0.5 * np.sum(v**2, axis=-1)) / (2.0 * np.pi) ** (d / 2.0)


def sample_maxwellian(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    return rng.standard_normal((n, d))
