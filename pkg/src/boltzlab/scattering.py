"""Two-body scattering map for the cutoff repulsive potential.

Geometry convention used everywhere in this package: at entry particle 1 sits
at the origin, particle 2 at eps*nu, and the approach condition is
(v - v_star) . nu > 0.  At exit nu' again points from particle 1 to particle
2, so the outgoing pair satisfies (v' - v_star') . nu' < 0 (separating) and
the wedge invariant (v - v_star) ^ nu = (v' - v_star') ^ nu' holds with equal
sign.  Lengths are in units of eps and durations in units of eps over unit
speed; multiply by eps for torus time.

The reduced problem integrates y = x1 - x2 under the one-body potential
u_eff(r) = 2 alpha chi(r)/r^s (the factor 2 because both particles recoil),
so the turning point solves 1 - rho^2/r^2 - 2 u_eff(r)/w^2 = 0.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .core import PotentialSpec, chi_derivative, potential_gradient_norm, potential_value

__all__ = [
    "ScatteringError",
    "CollisionInput",
    "ScatteringOutcome",
    "scatter",
    "scatter_batch",
    "deflection_by_quadrature",
    "collision_time",
    "turning_point",
    "impact_from_contact",
    "contact_from_impact",
    "sample_contact_direction",
]

_UNIT_TOL = 1e-12


class ScatteringError(RuntimeError):
    """Invalid collision input or integrator failure, with diagnostics."""


@dataclass(frozen=True)
class CollisionInput:
    nu: np.ndarray
    v: np.ndarray
    v_star: np.ndarray
    spec: PotentialSpec

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "v_star", np.asarray(self.v_star, dtype=float))
        if abs(np.linalg.norm(nu) - 1.0) > 1e-9:
            raise ScatteringError(f"contact direction not unit: |nu| = {np.linalg.norm(nu)}")
        w = self.v - self.v_star
        if np.linalg.norm(w) <= 0.0:
            raise ScatteringError("zero relative speed")
        if float(w @ nu) <= 0.0:
            raise ScatteringError("approach condition (v - v_star) . nu > 0 violated")


@dataclass
class ScatteringOutcome:
    nu_prime: np.ndarray
    v_prime: np.ndarray
    v_star_prime: np.ndarray
    deflection_angle: float
    duration: float
    impact_parameter: float
    residuals: dict = field(default_factory=dict)
    n_steps: int = 0


# ---------------------------------------------------------------------------
# Batched adaptive Dormand-Prince 4(5) on the reduced problem
# ---------------------------------------------------------------------------

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])


def _accel_factor(spec: PotentialSpec, r):
    """a(y) = fac(r) * y with fac = -u_eff'(r)/r; fac >= 0 (repulsive)."""
    r = np.maximum(r, 1e-30)
    if spec.alpha == 0.0:
        return np.zeros_like(r)
    fac = np.zeros_like(r)
    inside = r < 1.0
    if np.any(inside):
        ri = r[inside]
        if spec.s == 0.0:
            dv = chi_derivative(spec.chi, ri)
        else:
            dv = potential_gradient_norm(spec, ri)
        fac[inside] = -2.0 * spec.alpha * dv / ri
    return fac


def _rhs(spec, Y, d):
    y = Y[:, :d]
    u = Y[:, d:]
    r = np.linalg.norm(y, axis=1)
    fac = _accel_factor(spec, r)
    return np.concatenate([u, fac[:, None] * y], axis=1)


def _rk_step(spec, Y, h, d, k0=None):
    """One DP45 step of size h (per-sample); returns Y5, err_norm_input, k_last."""
    B = Y.shape[0]
    ks = np.empty((7, B, 2 * d))
    ks[0] = _rhs(spec, Y, d) if k0 is None else k0
    for i in range(1, 7):
        acc = Y + h[:, None] * np.tensordot(_DP_A[i], ks[:i], axes=(0, 0))
        ks[i] = _rhs(spec, acc, d)
    y5 = Y + h[:, None] * np.tensordot(_DP_B5, ks, axes=(0, 0))
    y4 = Y + h[:, None] * np.tensordot(_DP_B4, ks, axes=(0, 0))
    return y5, y5 - y4, ks


def _hermite_eval(Y0, Y1, f0, f1, h, theta, d):
    """Cubic Hermite interpolant of the state on [0, h] at fractions theta."""
    t = theta[:, None]
    h1 = h[:, None]
    a = 2 * t**3 - 3 * t**2 + 1
    b = (t**3 - 2 * t**2 + t) * h1
    c = -2 * t**3 + 3 * t**2
    e = (t**3 - t**2) * h1
    return a * Y0 + b * f0 + c * Y1 + e * f1


def scatter_batch(spec: PotentialSpec, nu, v, v_star, rtol=1e-10, atol=1e-12,
                  max_steps=20000, engine="numba"):
    """Vectorized scattering map.

    Parameters
    ----------
    nu, v, v_star : (B, d) arrays
        Contact directions (unit) and incoming velocities with
        (v - v_star) . nu > 0 for every row.
    engine : str
        "numba" for the compiled per-sample path, "numpy" for the pure
        vectorized reference used in cross-checks.

    Returns
    -------
    dict with per-sample arrays: nu_prime, v_prime, v_star_prime, deflection,
    duration, rho, n_steps, ok, and the four conservation residuals.
    """
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    v_star = np.atleast_2d(np.asarray(v_star, dtype=float))
    B, d = nu.shape
    if np.any(np.abs(np.linalg.norm(nu, axis=1) - 1.0) > 1e-9):
        raise ScatteringError("non-unit contact direction in batch")
    w0 = v - v_star
    speed = np.linalg.norm(w0, axis=1)
    if np.any(speed <= 0.0):
        raise ScatteringError("zero relative speed in batch")
    wdotnu = np.sum(w0 * nu, axis=1)
    if np.any(wdotnu <= 0.0):
        raise ScatteringError("approach condition violated in batch")

    vcm = 0.5 * (v + v_star)
    y = -nu.copy()
    u = w0.copy()

    if spec.alpha == 0.0:
        # free flight across the chord; exit after 2 (nu.u)/|u|^2
        t_exit = 2.0 * wdotnu / speed**2
        y_exit = y + t_exit[:, None] * u
        return _assemble(spec, nu, v, v_star, vcm, y_exit, u, t_exit,
                         np.zeros(B, dtype=int), np.ones(B, dtype=bool))

    if engine == "numba":
        from ._scatter_fast import CHI_IDS, integrate_batch
        Y = np.concatenate([y, u], axis=1)
        t_exit, ok, steps = integrate_batch(float(spec.s), float(spec.alpha),
                                            CHI_IDS[spec.chi], Y, rtol, atol,
                                            max_steps)
        return _assemble(spec, nu, v, v_star, vcm, Y[:, :d], Y[:, d:],
                         t_exit, steps, ok)

    Y = np.concatenate([y, u], axis=1)
    t = np.zeros(B)
    # bootstrap off the r = 1 start so the exit event is strictly interior
    h_boot = 1e-9 / np.maximum(speed, 1.0)
    Y = Y + h_boot[:, None] * _rhs(spec, Y, d)
    t += h_boot

    h = 5e-3 / np.maximum(speed, 1.0)
    t_cap = 50.0 / speed
    active = np.ones(B, dtype=bool)
    ok = np.ones(B, dtype=bool)
    exit_Y = np.zeros_like(Y)
    exit_t = np.zeros(B)
    steps = np.zeros(B, dtype=int)

    n_iter = 0
    while np.any(active):
        n_iter += 1
        if n_iter > max_steps:
            ok[active] = False
            break
        idx = np.nonzero(active)[0]
        Ya = Y[idx]
        ha = h[idx]
        y5, err, ks = _rk_step(spec, Ya, ha, d)
        scale = atol + rtol * np.maximum(np.abs(Ya), np.abs(y5))
        enorm = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        accept = enorm <= 1.0
        # PI-free basic controller
        fac = np.clip(0.9 * np.power(np.maximum(enorm, 1e-16), -0.2), 0.2, 5.0)
        bad = ~np.isfinite(enorm)
        fac[bad] = 0.2
        accept &= ~bad

        acc_idx = idx[accept]
        if acc_idx.size:
            Yn = y5[accept]
            r_new = np.linalg.norm(Yn[:, :d], axis=1)
            crossed = r_new >= 1.0
            inside = ~crossed
            keep = acc_idx[inside]
            Y[keep] = Yn[inside]
            t[keep] += ha[accept][inside]
            steps[keep] += 1
            if np.any(crossed):
                cross_rows = np.nonzero(accept)[0][crossed]
                gl = acc_idx[crossed]
                Y0c = Ya[cross_rows]
                hc = ha[cross_rows]
                f0 = ks[0][cross_rows]
                f1 = _rhs(spec, y5[cross_rows], d)
                th = _locate_exit(spec, Y0c, y5[cross_rows], f0, f1, hc, d)
                Ye, te = _polish_exit(spec, Y0c, hc * th, d)
                exit_Y[gl] = Ye
                exit_t[gl] = t[gl] + te
                steps[gl] += 1
                active[gl] = False
        h[acc_idx] = np.minimum(ha[accept] * fac[accept], 0.25)

        rej_idx = idx[~accept]
        h[rej_idx] = ha[~accept] * fac[~accept]
        if np.any(h[idx] < 1e-15):
            dead = idx[h[idx] < 1e-15]
            ok[dead] = False
            active[dead] = False
        overtime = idx[t[idx] > t_cap[idx]]
        if overtime.size:
            ok[overtime] = False
            active[overtime] = False

    failed_exit = ok & (np.linalg.norm(exit_Y[:, :d], axis=1) < 0.5)
    ok &= ~failed_exit
    return _assemble(spec, nu, v, v_star, vcm, exit_Y[:, :d], exit_Y[:, d:],
                     exit_t, steps, ok)


def _locate_exit(spec, Y0, Y1, f0, f1, h, d):
    """Fraction theta in (0,1] where |y| crosses 1, by sampling + bisection."""
    B = Y0.shape[0]
    ngrid = 9
    thetas = np.linspace(0.0, 1.0, ngrid)
    lo = np.zeros(B)
    hi = np.ones(B)
    prev = np.linalg.norm(Y0[:, :d], axis=1) - 1.0
    found = np.zeros(B, dtype=bool)
    for k in range(1, ngrid):
        th = np.full(B, thetas[k])
        Yk = _hermite_eval(Y0, Y1, f0, f1, h, th, d)
        ek = np.linalg.norm(Yk[:, :d], axis=1) - 1.0
        newly = (~found) & (prev < 0.0) & (ek >= 0.0)
        lo[newly] = thetas[k - 1]
        hi[newly] = thetas[k]
        found |= newly
        prev = np.where(found, prev, ek)
    lo[~found] = 1.0 - 1.0 / ngrid  # crossing is at the step end region
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        Ym = _hermite_eval(Y0, Y1, f0, f1, h, mid, d)
        em = np.linalg.norm(Ym[:, :d], axis=1) - 1.0
        hi = np.where(em >= 0.0, mid, hi)
        lo = np.where(em >= 0.0, lo, mid)
    return 0.5 * (lo + hi)


def _polish_exit(spec, Y0, dt, d):
    """Newton-correct the exit time with genuine RK sub-steps from Y0."""
    te = dt.copy()
    Ye = None
    for _ in range(3):
        Ye, _, _ = _rk_step(spec, Y0, te, d)
        y = Ye[:, :d]
        u = Ye[:, d:]
        r = np.linalg.norm(y, axis=1)
        drdt = np.sum(y * u, axis=1) / np.maximum(r, 1e-30)
        step = (1.0 - r) / np.where(np.abs(drdt) > 1e-14, drdt, 1e-14)
        te = te + np.clip(step, -0.5 * te, 0.5 * te)
    Ye, _, _ = _rk_step(spec, Y0, te, d)
    return Ye, te


def _wedge(a, b):
    """All i<j components a_i b_j - a_j b_i, shape (B, d(d-1)/2)."""
    d = a.shape[1]
    cols = [a[:, i] * b[:, j] - a[:, j] * b[:, i]
            for i in range(d) for j in range(i + 1, d)]
    return np.stack(cols, axis=1)


def _assemble(spec, nu, v, v_star, vcm, y_exit, u_exit, t_exit, steps, ok):
    B, d = nu.shape
    r_exit = np.linalg.norm(y_exit, axis=1)
    r_exit = np.where(r_exit > 0, r_exit, 1.0)
    nu_p = -y_exit / r_exit[:, None]
    v_p = vcm + 0.5 * u_exit
    vs_p = vcm - 0.5 * u_exit

    w0 = v - v_star
    speed = np.linalg.norm(w0, axis=1)
    wn = np.linalg.norm(u_exit, axis=1)
    cosang = np.sum(w0 * u_exit, axis=1) / np.maximum(speed * wn, 1e-300)
    sinang = np.linalg.norm(_wedge(w0, u_exit), axis=1) / np.maximum(speed * wn, 1e-300)
    deflection = np.arctan2(sinang, cosang)

    what = w0 / speed[:, None]
    nu_par = np.sum(nu * what, axis=1)
    rho = np.linalg.norm(nu - nu_par[:, None] * what, axis=1)

    mom_in = v + v_star
    mom_out = v_p + vs_p
    e_in = np.sum(v**2, axis=1) + np.sum(v_star**2, axis=1)
    e_out = np.sum(v_p**2, axis=1) + np.sum(vs_p**2, axis=1)
    L_in = _wedge(w0, nu)
    L_out = _wedge(v_p - vs_p, nu_p)
    nrm = np.maximum(1.0, np.linalg.norm(mom_in, axis=1))
    res_mom = np.linalg.norm(mom_in - mom_out, axis=1) / nrm
    res_energy = np.abs(e_in - e_out) / np.maximum(1.0, e_in)
    res_angmom = np.linalg.norm(L_in - L_out, axis=1) / np.maximum(1.0, np.linalg.norm(L_in, axis=1))
    dot_in = np.abs(np.sum(w0 * nu, axis=1))
    dot_out = np.abs(np.sum((v_p - vs_p) * nu_p, axis=1))
    res_dot = np.abs(dot_in - dot_out) / np.maximum(1.0, dot_in)

    return {
        "nu_prime": nu_p, "v_prime": v_p, "v_star_prime": vs_p,
        "deflection": deflection, "duration": t_exit, "rho": rho,
        "n_steps": steps, "ok": ok,
        "res_momentum": res_mom, "res_energy": res_energy,
        "res_angular_momentum": res_angmom, "res_normal_speed": res_dot,
    }


def scatter(inp: CollisionInput, rtol=1e-10, atol=1e-12) -> ScatteringOutcome:
    """Scattering map for a single collision; raises on integrator failure."""
    out = scatter_batch(inp.spec, inp.nu[None, :], inp.v[None, :],
                        inp.v_star[None, :], rtol=rtol, atol=atol)
    if not out["ok"][0]:
        raise ScatteringError(
            f"integration failed after {out['n_steps'][0]} steps "
            f"(s={inp.spec.s}, alpha={inp.spec.alpha})")
    return ScatteringOutcome(
        nu_prime=out["nu_prime"][0], v_prime=out["v_prime"][0],
        v_star_prime=out["v_star_prime"][0],
        deflection_angle=float(out["deflection"][0]),
        duration=float(out["duration"][0]),
        impact_parameter=float(out["rho"][0]),
        residuals={k: float(out[k][0]) for k in
                   ("res_momentum", "res_energy", "res_angular_momentum",
                    "res_normal_speed")},
        n_steps=int(out["n_steps"][0]),
    )


# ---------------------------------------------------------------------------
# Radial quadrature route (independent of the ODE path)
# ---------------------------------------------------------------------------


def _u_eff(spec, r):
    return 2.0 * spec.alpha * potential_value(spec, r)


def turning_point(spec: PotentialSpec, rho: float, w: float) -> float:
    """Largest root of 1 - rho^2/r^2 - 2 u_eff(r)/w^2 on (0, 1]."""
    return _turning_point_profile(lambda r: _u_eff(spec, r), rho, w)


def _turning_point_profile(ueff, rho, w):
    if not 0.0 <= rho < 1.0:
        raise ValueError("impact parameter must lie in [0, 1)")
    if w <= 0.0:
        raise ValueError("relative speed must be positive")

    def q(r):
        val = 2.0 * ueff(np.asarray(r)) / w**2
        if rho > 0:
            val = val + rho**2 / np.asarray(r) ** 2
        return float(val) - 1.0

    if rho == 0.0 and q(1e-12) <= 0.0:
        # bounded potential crossed head-on: no turning point
        return 0.0
    lo = max(rho, 1e-12) if rho > 0 else 0.5
    tries = 0
    while q(lo) <= 0.0:
        lo *= 0.5
        tries += 1
        if tries > 600:
            raise ScatteringError("turning-point bracketing failure")
    if q(1.0) > 0.0:
        raise ScatteringError("no turning point below the entry radius")
    return brentq(q, lo, 1.0, xtol=1e-15, rtol=8.9e-16, maxiter=300)


@lru_cache(maxsize=32)
def _unit_leggauss(n):
    tt, ww = np.polynomial.legendre.leggauss(n)
    return 0.5 * (tt + 1.0), 0.5 * ww


def _radial_integrals(spec, rho, w, n_nodes):
    return _radial_integrals_profile(lambda r: _u_eff(spec, r), rho, w, n_nodes)


def _radial_integrals_profile(ueff, rho, w, n_nodes):
    """Angle swept to periapsis and time inside range, by the t^2 substitution
    r = r_min + (1 - r_min) t^2 that removes the turning-point singularity.
    `ueff` is the reduced one-body potential on the unit range."""
    rmin = _turning_point_profile(ueff, rho, w)
    tt, ww = _unit_leggauss(n_nodes)
    if rmin == 0.0:
        # pass-through: integrate dr directly, no singular endpoint
        r = tt
        F = 1.0 - 2.0 * ueff(r) / w**2
        T = 2.0 / w * float(np.sum(ww / np.sqrt(F)))
        return 0.0, T, rmin
    r = rmin + (1.0 - rmin) * tt**2
    F = 1.0 - 2.0 * ueff(r) / w**2
    if rho > 0:
        F = F - rho**2 / r**2
    # F/t^2 is analytic and positive; the floor guards roundoff at extreme
    # grazing where 1 - rho^2 cancels catastrophically
    F = np.maximum(F, 1e-280)
    ratio = np.sqrt(F) / tt
    jac = 2.0 * (1.0 - rmin)
    phi = float(np.sum(ww * (rho / r**2) * jac / ratio)) if rho > 0 else 0.0
    T = 2.0 / w * float(np.sum(ww * jac / ratio))
    return phi, T, rmin


def deflection_by_quadrature(spec: PotentialSpec, rho: float, w: float,
                             n_nodes: int = 400) -> float:
    """Deflection angle of the relative velocity, in [0, pi]."""
    if spec.alpha == 0.0:
        return 0.0
    if rho == 0.0:
        rmin = turning_point(spec, 0.0, w)
        return np.pi if rmin > 0.0 else 0.0
    phi, _, _ = _radial_integrals(spec, rho, w, n_nodes)
    theta = np.pi - 2.0 * (np.arcsin(min(rho, 1.0)) + phi)
    return float(np.clip(theta, 0.0, np.pi))




def deflection_unit_profile(ueff, rho, w, n_nodes=400):
    """Deflection for an arbitrary reduced potential on the unit range."""
    if rho == 0.0:
        rmin = _turning_point_profile(ueff, 0.0, w)
        return np.pi if rmin > 0.0 else 0.0
    phi, _, _ = _radial_integrals_profile(ueff, rho, w, n_nodes)
    theta = np.pi - 2.0 * (np.arcsin(min(rho, 1.0)) + phi)
    return float(np.clip(theta, 0.0, np.pi))


def collision_time(spec: PotentialSpec, rho: float, w: float,
                   n_nodes: int = 400) -> float:
    """Duration with pair distance <= 1 (units of eps)."""
    if spec.alpha == 0.0:
        return 2.0 * np.sqrt(max(1.0 - rho**2, 0.0)) / w
    _, T, _ = _radial_integrals(spec, rho, w, n_nodes)
    return T


# ---------------------------------------------------------------------------
# Impact-parameter representation
# ---------------------------------------------------------------------------


def impact_from_contact(nu, v, v_star):
    """Impact vector nu ^ (v - v_star)/|v - v_star|, orthogonal to w.

    In d = 3 this is the cross product; in d = 2 the scalar wedge is returned
    embedded as a 1-vector.  |rho| = sin of the angle between nu and w.
    """
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    w = np.atleast_2d(np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float))
    speed = np.linalg.norm(w, axis=1, keepdims=True)
    if np.any(speed <= 0):
        raise ScatteringError("zero relative speed")
    what = w / speed
    d = nu.shape[1]
    if d == 3:
        out = np.cross(nu, what)
    elif d == 2:
        out = (nu[:, 0] * what[:, 1] - nu[:, 1] * what[:, 0])[:, None]
    else:
        raise ValueError("impact vectors implemented for d in {2, 3}")
    return out


def contact_from_impact(rho_vec, v, v_star):
    """Inverse of impact_from_contact with the incoming orientation w.nu > 0."""
    rho_vec = np.atleast_2d(np.asarray(rho_vec, dtype=float))
    w = np.atleast_2d(np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float))
    speed = np.linalg.norm(w, axis=1, keepdims=True)
    what = w / speed
    rho = np.linalg.norm(rho_vec, axis=1)
    if np.any(rho >= 1.0):
        raise ScatteringError("impact parameter must be < 1")
    par = np.sqrt(1.0 - rho**2)[:, None] * what
    d = what.shape[1]
    if d == 3:
        perp = np.cross(what, rho_vec)
    elif d == 2:
        # scalar wedge: nu = sqrt(1-rho^2) what - rho * rot90(what)
        rot = np.stack([-what[:, 1], what[:, 0]], axis=1)
        perp = -rho_vec * rot
    else:
        raise ValueError("impact vectors implemented for d in {2, 3}")
    return par + perp


def sample_contact_direction(rng, w, size):
    """Draw nu from the law proportional to ((w.nu))_+ on the sphere."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = np.broadcast_to(w, (size, w.shape[0]))
    d = w.shape[1]
    speed = np.linalg.norm(w, axis=1, keepdims=True)
    what = w / speed
    if d == 3:
        cospsi = np.sqrt(rng.random(size))
        phi = 2.0 * np.pi * rng.random(size)
        e1, e2 = _orthonormal_frame(what)
        sinpsi = np.sqrt(1.0 - cospsi**2)
        return (cospsi[:, None] * what
                + (sinpsi * np.cos(phi))[:, None] * e1
                + (sinpsi * np.sin(phi))[:, None] * e2)
    if d == 2:
        sinp = 2.0 * rng.random(size) - 1.0
        cosp = np.sqrt(1.0 - sinp**2)
        perp = np.stack([-what[:, 1], what[:, 0]], axis=1)
        return cosp[:, None] * what + sinp[:, None] * perp
    raise ValueError("contact sampling implemented for d in {2, 3}")


def _orthonormal_frame(what):
    """Two unit fields orthogonal to each row of what (d = 3)."""
    ref = np.zeros_like(what)
    small = np.abs(what[:, 0]) < 0.9
    ref[small, 0] = 1.0
    ref[~small, 1] = 1.0
    e1 = np.cross(what, ref)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(what, e1)
    return e1, e2
