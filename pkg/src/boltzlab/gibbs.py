"""Grand-canonical Gibbs sampling on the torus and time-zero fluctuation
field statistics.

The target law weights an n-particle configuration by mu^n/n! e^{-U(X)} with
the repulsive pair energy U at range eps; velocities are exactly Gaussian and
decoupled, so the chain only moves positions and the particle count.
Independent chains (one Philox-derived seed each) give clean error bars.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rng as rngmod
from ._scatter_fast import CHI_IDS, _chi_val, _chi_der
from .core import PhaseState, PotentialSpec, maxwellian
from .testfunctions import TestFunction

__all__ = [
    "GrandCanonicalConfig", "EnsembleSample", "sample", "sample_rejection",
    "fluctuation_field", "estimate_reference_mean", "equilibrium_covariance",
    "lln_check", "integrated_autocorr_time", "pair_distance_histogram",
]


@dataclass(frozen=True)
class GrandCanonicalConfig:
    mu: float
    spec: PotentialSpec
    dimension: int = 3
    rng_seed: int = 0
    n_chains: int = 32
    sweeps: int = 400            # one sweep ~ max(n, mu) single moves
    burn_in: int = 100
    thin: int = 4                # sweeps between retained samples
    displacement_sigma: float = 0.05

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("chemical potential mu must be > 0")
        if self.thin < 1:
            raise ValueError("thinning interval must be >= 1")


@dataclass
class EnsembleSample:
    states: list
    acceptance: dict
    counts: np.ndarray = field(default=None)


@njit(cache=True, inline="always")
def _pair_energy(pos, n, skip, x, d, s, alpha, cid, eps):
    """Energy of a probe point x against all particles except `skip`."""
    u = 0.0
    for j in range(n):
        if j == skip:
            continue
        r2 = 0.0
        for a in range(d):
            dx = x[a] - pos[j, a]
            dx -= np.floor(dx + 0.5)
            r2 += dx * dx
        r = np.sqrt(r2) / eps
        if r < 1.0:
            if r < 1e-14:
                r = 1e-14
            if s == 0.0:
                u += alpha * _chi_val(cid, r)
            else:
                u += alpha * _chi_val(cid, r) / r**s
    return u


@njit(cache=True)
def _run_chain(pos, n0, mu, d, s, alpha, cid, eps, sigma, n_moves, seed,
               sample_every, counts_out, accept_out):
    np.random.seed(seed)
    n = n0
    cap = pos.shape[0]
    ksample = 0
    n_acc_ins = 0
    n_try_ins = 0
    n_acc_del = 0
    n_try_del = 0
    n_acc_disp = 0
    n_try_disp = 0
    xnew = np.empty(d)
    for step in range(n_moves):
        u = np.random.random()
        if u < 0.25:
            # insertion
            n_try_ins += 1
            if n < cap:
                for a in range(d):
                    xnew[a] = np.random.random()
                dU = _pair_energy(pos, n, -1, xnew, d, s, alpha, cid, eps)
                if np.log(np.random.random() + 1e-300) < np.log(mu / (n + 1.0)) - dU:
                    for a in range(d):
                        pos[n, a] = xnew[a]
                    n += 1
                    n_acc_ins += 1
        elif u < 0.5:
            # deletion
            n_try_del += 1
            if n > 0:
                i = np.random.randint(0, n)
                ui = _pair_energy(pos, n, i, pos[i], d, s, alpha, cid, eps)
                if np.log(np.random.random() + 1e-300) < np.log(n / mu) + ui:
                    for a in range(d):
                        pos[i, a] = pos[n - 1, a]
                    n -= 1
                    n_acc_del += 1
        else:
            # displacement
            if n > 0:
                n_try_disp += 1
                i = np.random.randint(0, n)
                u_old = _pair_energy(pos, n, i, pos[i], d, s, alpha, cid, eps)
                for a in range(d):
                    xnew[a] = (pos[i, a] + sigma * np.random.normal()) % 1.0
                u_new = _pair_energy(pos, n, i, xnew, d, s, alpha, cid, eps)
                if np.log(np.random.random() + 1e-300) < u_old - u_new:
                    for a in range(d):
                        pos[i, a] = xnew[a]
                    n_acc_disp += 1
        if sample_every > 0 and (step + 1) % sample_every == 0:
            if ksample < counts_out.shape[0]:
                counts_out[ksample] = n
                ksample += 1
    accept_out[0] = n_try_ins
    accept_out[1] = n_acc_ins
    accept_out[2] = n_try_del
    accept_out[3] = n_acc_del
    accept_out[4] = n_try_disp
    accept_out[5] = n_acc_disp
    return n


def _chain_capacity(mu):
    return int(mu + 12.0 * np.sqrt(mu) + 64)


def sample(config: GrandCanonicalConfig) -> EnsembleSample:
    """Run independent chains; retain thinned post-burn-in states."""
    spec = config.spec
    d = config.dimension
    cid = CHI_IDS[spec.chi]
    cap = _chain_capacity(config.mu)
    moves_per_sweep = max(int(config.mu), 16)
    states = []
    counts_all = []
    acc = np.zeros(6, dtype=np.int64)
    eps = spec.epsilon
    keep_per_chain = max((config.sweeps - config.burn_in) // config.thin, 1)
    for c in range(config.n_chains):
        seed = rngmod.spawn_int(config.rng_seed, "gibbs-chain", c) % (2**31 - 1)
        vel_rng = rngmod.stream(config.rng_seed, "gibbs-vel", c)
        pos = np.empty((cap, d))
        init_rng = rngmod.stream(config.rng_seed, "gibbs-init", c)
        n0 = min(int(config.mu), cap)
        pos[:n0] = init_rng.random((n0, d))
        counts = np.empty(keep_per_chain, dtype=np.int64)
        acc_out = np.zeros(6, dtype=np.int64)
        # burn-in
        n0 = _run_chain(pos, n0, config.mu, d, spec.s, spec.alpha, cid, eps,
                        config.displacement_sigma,
                        config.burn_in * moves_per_sweep, seed, 0,
                        np.empty(0, dtype=np.int64), acc_out)
        # sampling phase: record a state every `thin` sweeps
        n = n0
        for k in range(keep_per_chain):
            n = _run_chain(pos, n, config.mu, d, spec.s, spec.alpha, cid, eps,
                           config.displacement_sigma,
                           config.thin * moves_per_sweep,
                           (seed + 7919 * (k + 1)) % (2**31 - 1), 0,
                           np.empty(0, dtype=np.int64), acc_out)
            counts[k] = n
            vel = vel_rng.standard_normal((n, d))
            states.append(PhaseState(pos[:n].copy(), vel))
        acc += acc_out
        counts_all.append(counts)
    total_disp = max(acc[4], 1)
    acceptance = {
        "insertion": acc[1] / max(acc[0], 1),
        "deletion": acc[3] / max(acc[2], 1),
        "displacement": acc[5] / total_disp,
    }
    if 0 < acceptance["displacement"] < 0.01:
        raise RuntimeError(
            "displacement acceptance below 1%: shrink displacement_sigma "
            f"(acceptance {acceptance})")
    return EnsembleSample(states, acceptance, np.concatenate(counts_all))


def sample_rejection(config: GrandCanonicalConfig, n_samples, max_tries=200000):
    """Exact rejection sampler from the Poisson proposal; only viable when
    mu^2 eps^d alpha is small.  Kept as the oracle for tiny systems."""
    spec = config.spec
    d = config.dimension
    rng = rngmod.stream(config.rng_seed, "gibbs-rejection")
    states = []
    tries = 0
    from .core import hamiltonian
    while len(states) < n_samples:
        tries += 1
        if tries > max_tries:
            raise RuntimeError("rejection sampler starved; density too high")
        n = rng.poisson(config.mu)
        pos = rng.random((n, d))
        vel = rng.standard_normal((n, d))
        st = PhaseState(pos, vel) if n > 0 else PhaseState(np.zeros((0, d)),
                                                           np.zeros((0, d)))
        pot = hamiltonian(spec, st) - 0.5 * float(np.sum(vel**2)) if n > 1 else 0.0
        if rng.random() < np.exp(-pot):
            states.append(st)
    return EnsembleSample(states, {"rejection_rate": len(states) / tries})


# ---------------------------------------------------------------------------
# Fluctuation-field statistics
# ---------------------------------------------------------------------------


def empirical_average(state: PhaseState, g: TestFunction, mu: float) -> float:
    """pi(g) = (1/mu) sum_i g(z_i)."""
    if state.n == 0:
        return 0.0
    return float(np.sum(g(state.positions, state.velocities))) / mu


def fluctuation_field(state: PhaseState, g: TestFunction, reference_mean: float,
                      mu: float) -> float:
    """zeta(g) = sqrt(mu) (pi(g) - reference_mean)."""
    return np.sqrt(mu) * (empirical_average(state, g, mu) - reference_mean)


def estimate_reference_mean(ensemble: EnsembleSample, g: TestFunction,
                            mu: float) -> float:
    vals = [empirical_average(st, g, mu) for st in ensemble.states]
    return float(np.mean(vals))


def integrated_autocorr_time(series) -> float:
    """Geyer initial-positive-sequence estimate of tau_int."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 8:
        return 1.0
    x = x - x.mean()
    var = np.mean(x**2)
    if var == 0:
        return 1.0
    acf = np.correlate(x, x, mode="full")[n - 1:] / (var * n)
    tau = 1.0
    k = 1
    while k + 1 < min(n, 2000):
        gamma = acf[k] + acf[k + 1]
        if gamma <= 0:
            break
        tau += 2.0 * gamma
        k += 2
    return float(max(tau, 1.0))


def equilibrium_covariance(ensemble: EnsembleSample, g: TestFunction,
                           h: TestFunction, mu: float, ref_g=None, ref_h=None):
    """Sample covariance of (zeta(g), zeta(h)) with autocorrelation-aware
    error bars.  Returns (estimate, stderr, n_effective)."""
    ref_g = estimate_reference_mean(ensemble, g, mu) if ref_g is None else ref_g
    ref_h = estimate_reference_mean(ensemble, h, mu) if ref_h is None else ref_h
    zg = np.array([fluctuation_field(st, g, ref_g, mu) for st in ensemble.states])
    zh = np.array([fluctuation_field(st, h, ref_h, mu) for st in ensemble.states])
    prod = zg * zh
    est = float(np.mean(prod))
    tau = integrated_autocorr_time(prod)
    neff = max(len(prod) / tau, 2.0)
    err = float(np.std(prod, ddof=1) / np.sqrt(neff))
    if neff < 16:
        raise RuntimeError(f"too few effective samples ({neff:.1f}) for a covariance")
    return est, err, neff


def lln_check(ensemble: EnsembleSample, g: TestFunction, mu: float) -> dict:
    """Empirical pi(g) against the equilibrium value int g M dz."""
    vals = np.array([empirical_average(st, g, mu) for st in ensemble.states])
    target = g.l2m_inner(_one_like(g))
    sigma_g = np.sqrt(max(g.l2m_inner(g), 1e-300))
    tol = 3.0 * sigma_g / np.sqrt(mu * len(vals))
    dev = abs(float(np.mean(vals)) - target)
    return {"empirical": float(np.mean(vals)), "target": target,
            "deviation": dev, "tolerance": tol, "pass": bool(dev <= tol)}


def _one_like(g: TestFunction) -> TestFunction:
    from .testfunctions import constant
    return constant(1.0, g.d)


def pair_distance_histogram(states, eps, n_bins=20):
    """Histogram of pair separations below eps, in units of eps."""
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    counts = np.zeros(n_bins)
    for st in states:
        if st.n < 2:
            continue
        iu, ju = np.triu_indices(st.n, k=1)
        disp = st.positions[iu] - st.positions[ju]
        disp -= np.floor(disp + 0.5)
        r = np.linalg.norm(disp, axis=1) / eps
        close = r < 1.0
        if np.any(close):
            counts += np.histogram(r[close], bins=edges)[0]
    return edges, counts
