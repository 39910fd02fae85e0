"""Numba kernel for the batched scattering integration.

Per-sample scalar Dormand-Prince 4(5) with adaptive steps, exit-event
location by cubic-Hermite bisection and Newton polish.  Samples are
independent, so the parallel loop is deterministic for any thread count.
"""

import numpy as np
from numba import njit, prange

CHI_IDS = {"poly_bump": 0, "smoothstep": 1, "cosine": 2}

_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, :2] = (3 / 40, 9 / 40)
_A[3, :3] = (44 / 45, -56 / 15, 32 / 9)
_A[4, :4] = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
_A[5, :5] = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_A[6, :6] = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])


@njit(cache=True, inline="always")
def _chi_val(cid, r):
    if cid == 0:
        return (1.0 - r) ** 3 * (1.0 + 3.0 * r)
    if cid == 1:
        return (1.0 - r) ** 2 * (1.0 + 2.0 * r)
    return 0.5 * (1.0 + np.cos(np.pi * r))


@njit(cache=True, inline="always")
def _chi_der(cid, r):
    if cid == 0:
        return -12.0 * r * (1.0 - r) ** 2
    if cid == 1:
        return -6.0 * r * (1.0 - r)
    return -0.5 * np.pi * np.sin(np.pi * r)


@njit(cache=True, inline="always")
def _force_factor(s, alpha, cid, r):
    # a(y) = factor * y with factor = -u_eff'(r)/r, u_eff = 2 alpha chi/r^s
    if r >= 1.0 or alpha == 0.0:
        return 0.0
    rr = r if r > 1e-30 else 1e-30
    if s == 0.0:
        dv = _chi_der(cid, rr)
    else:
        dv = _chi_der(cid, rr) / rr**s - s * _chi_val(cid, rr) / rr ** (s + 1.0)
    return -2.0 * alpha * dv / rr


@njit(cache=True)
def _rhs_scalar(s, alpha, cid, Y, out, d):
    r2 = 0.0
    for i in range(d):
        r2 += Y[i] * Y[i]
    r = np.sqrt(r2)
    fac = _force_factor(s, alpha, cid, r)
    for i in range(d):
        out[i] = Y[d + i]
        out[d + i] = fac * Y[i]


@njit(cache=True)
def _rk_single(s, alpha, cid, Y0, h, d, K, acc, Yout):
    """One full DP45 step of size h from Y0 into Yout; K is (7, 2d) work."""
    n2 = 2 * d
    _rhs_scalar(s, alpha, cid, Y0, K[0], d)
    for i in range(1, 7):
        for j in range(n2):
            a = Y0[j]
            for m in range(i):
                a += h * _A[i, m] * K[m, j]
            acc[j] = a
        _rhs_scalar(s, alpha, cid, acc, K[i], d)
    for j in range(n2):
        a = Y0[j]
        for m in range(7):
            a += h * _B5[m] * K[m, j]
        Yout[j] = a


@njit(cache=True)
def _hermite_r(Y0, Y1, f0, f1, h, th, d):
    """|y| of the cubic Hermite interpolant at fraction th of the step."""
    a = 2 * th**3 - 3 * th**2 + 1.0
    b = (th**3 - 2 * th**2 + th) * h
    c = -2 * th**3 + 3 * th**2
    e = (th**3 - th**2) * h
    r2 = 0.0
    for i in range(d):
        yi = a * Y0[i] + b * f0[i] + c * Y1[i] + e * f1[i]
        r2 += yi * yi
    return np.sqrt(r2)


@njit(cache=True)
def _integrate_one(s, alpha, cid, yu, t_out, d, rtol, atol, max_steps):
    """Integrate one reduced collision to exit; returns (ok, n_steps)."""
    n2 = 2 * d
    K = np.empty((7, n2))
    acc = np.empty(n2)
    Ynew = np.empty(n2)
    Yprev = np.empty(n2)
    f1 = np.empty(n2)

    w2 = 0.0
    for i in range(d):
        w2 += yu[d + i] * yu[d + i]
    w = np.sqrt(w2)
    wm = w if w > 1.0 else 1.0

    # bootstrap off the r = 1 entry so the exit event is strictly interior
    _rhs_scalar(s, alpha, cid, yu, K[0], d)
    hb = 1e-9 / wm
    for j in range(n2):
        yu[j] += hb * K[0, j]
    t = hb

    h = 5e-3 / wm
    t_cap = 50.0 / w
    nsteps = 0
    for _ in range(max_steps):
        for j in range(n2):
            Yprev[j] = yu[j]
        _rk_single(s, alpha, cid, Yprev, h, d, K, acc, Ynew)
        # embedded error estimate
        errsum = 0.0
        finite = True
        for j in range(n2):
            e4 = Yprev[j]
            for m in range(7):
                e4 += h * _B4[m] * K[m, j]
            diff = Ynew[j] - e4
            ay = abs(Yprev[j])
            an = abs(Ynew[j])
            sc = atol + rtol * (ay if ay > an else an)
            q = diff / sc
            errsum += q * q
            if not np.isfinite(q):
                finite = False
        enorm = np.sqrt(errsum / n2)
        if (not finite) or enorm > 1.0:
            fac = 0.2 if not finite else 0.9 * enorm ** (-0.2)
            if fac < 0.2:
                fac = 0.2
            h *= fac
            if h < 1e-15:
                return False, nsteps
            continue
        nsteps += 1
        r2 = 0.0
        for i in range(d):
            r2 += Ynew[i] * Ynew[i]
        if np.sqrt(r2) >= 1.0:
            # crossing inside this step: bracket on the interpolant
            _rhs_scalar(s, alpha, cid, Ynew, f1, d)
            lo = 0.0
            hi = 1.0
            prev_e = _hermite_r(Yprev, Ynew, K[0], f1, h, 0.0, d) - 1.0
            found = False
            for k in range(1, 9):
                th = k / 8.0
                ek = _hermite_r(Yprev, Ynew, K[0], f1, h, th, d) - 1.0
                if (not found) and prev_e < 0.0 and ek >= 0.0:
                    lo = (k - 1) / 8.0
                    hi = th
                    found = True
                if not found:
                    prev_e = ek
            if not found:
                lo = 7.0 / 8.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                em = _hermite_r(Yprev, Ynew, K[0], f1, h, mid, d) - 1.0
                if em >= 0.0:
                    hi = mid
                else:
                    lo = mid
            te = 0.5 * (lo + hi) * h
            # Newton polish with genuine sub-steps from the step start
            for _ in range(3):
                _rk_single(s, alpha, cid, Yprev, te, d, K, acc, Ynew)
                r = 0.0
                dr = 0.0
                for i in range(d):
                    r += Ynew[i] * Ynew[i]
                    dr += Ynew[i] * Ynew[d + i]
                r = np.sqrt(r)
                drdt = dr / (r if r > 1e-30 else 1e-30)
                if abs(drdt) < 1e-14:
                    break
                step = (1.0 - r) / drdt
                lim = 0.5 * te
                if step > lim:
                    step = lim
                elif step < -lim:
                    step = -lim
                te += step
            _rk_single(s, alpha, cid, Yprev, te, d, K, acc, Ynew)
            for j in range(n2):
                yu[j] = Ynew[j]
            t_out[0] = t + te
            return True, nsteps
        for j in range(n2):
            yu[j] = Ynew[j]
        t += h
        if t > t_cap:
            return False, nsteps
        fac = 0.9 * enorm ** (-0.2) if enorm > 1e-16 else 5.0
        if fac > 5.0:
            fac = 5.0
        h *= fac
        if h > 0.25:
            h = 0.25
    return False, nsteps


@njit(parallel=True, cache=True)
def integrate_batch(s, alpha, cid, Y, rtol, atol, max_steps):
    """Y is (B, 2d) with [y, u] rows, modified in place to the exit state."""
    B = Y.shape[0]
    d = Y.shape[1] // 2
    t_exit = np.zeros(B)
    ok = np.zeros(B, dtype=np.bool_)
    nsteps = np.zeros(B, dtype=np.int64)
    for b in prange(B):
        tloc = np.zeros(1)
        good, ns = _integrate_one(s, alpha, cid, Y[b], tloc, d, rtol, atol,
                                  max_steps)
        ok[b] = good
        nsteps[b] = ns
        t_exit[b] = tloc[0]
    return t_exit, ok, nsteps
