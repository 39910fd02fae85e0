"""Hamiltonian N-body evolution on the unit torus.

Between encounters every particle flies exactly straight; contact times of
free pairs are the roots of a quadratic in the minimal image, so no force
evaluation happens at all while the gas is dilute.  Particles within a guard
band of an interacting pair are absorbed into an "active" set integrated by
velocity-Verlet substeps; forces vanish beyond the interaction range, so
absorbing a spectator is exact.  The scheme is therefore symplectic piecewise
and reversible, and the collision graph (pair intervals at distance <= eps)
falls out of the substep bookkeeping.

A dense small-system integrator with per-step trajectory storage and an
interaction mask (for block Hamiltonians) lives alongside; the cluster
machinery builds on it.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._scatter_fast import CHI_IDS, _chi_der, _chi_val
from .core import PhaseState, PotentialSpec, hamiltonian

__all__ = ["DtPolicy", "CollisionGraph", "Trajectory", "evolve",
           "evolve_dense", "DenseTrajectory", "detect_pathologies",
           "energy_series"]

_BIG = 1e300


@dataclass(frozen=True)
class DtPolicy:
    """Step policy: encounter substeps per traversal time eps/w."""
    encounter_substeps: int = 384
    guard_factor: float = 1.0      # guard band in units of eps
    horizon_displacement: float = 0.1


@dataclass
class CollisionGraph:
    """Time-labeled encounter intervals (i < j, t_start <= t_end)."""
    edges: list

    def cycle_count(self):
        """Edges that close a cycle when added in time order (recollisions)."""
        parent = {}

        def find(a):
            while parent.get(a, a) != a:
                parent[a] = parent.get(parent[a], parent[a])
                a = parent[a]
            return a

        cycles = 0
        for (i, j, t0, t1) in sorted(self.edges, key=lambda e: e[2]):
            ri, rj = find(i), find(j)
            if ri == rj:
                cycles += 1
            else:
                parent[ri] = rj
        return cycles


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: list            # PhaseState per sample time
    events: CollisionGraph
    multi_interactions: list   # (t, component size >= 3)
    energies: np.ndarray = None
    initial_state: PhaseState = None


@njit(cache=True, inline="always")
def _mi(dx):
    return dx - np.floor(dx + 0.5)


@njit(cache=True)
def _predict_pair(pos, vel, i, j, d, eps, t_now, t_horizon):
    """Absolute contact time of a free pair, or BIG if none before horizon."""
    a = 0.0
    b = 0.0
    c = 0.0
    for k in range(d):
        y = _mi(pos[i, k] - pos[j, k])
        u = vel[i, k] - vel[j, k]
        a += u * u
        b += y * u
        c += y * y
    c -= eps * eps
    if c <= 0.0:
        return t_now
    if b >= 0.0 or a == 0.0:
        return _BIG
    disc = b * b - a * c
    if disc <= 0.0:
        return _BIG
    tau = (-b - np.sqrt(disc)) / a
    t_hit = t_now + tau
    if t_hit > t_horizon:
        return _BIG
    return t_hit


@njit(cache=True)
def _forces_active(pos, act_idx, n_act, d, eps, s, alpha, cid, F):
    for a in range(n_act):
        for k in range(d):
            F[a, k] = 0.0
    if alpha == 0.0:
        return
    for a in range(n_act):
        i = act_idx[a]
        for b in range(a + 1, n_act):
            j = act_idx[b]
            r2 = 0.0
            dx = np.empty(d)
            for k in range(d):
                dx[k] = _mi(pos[i, k] - pos[j, k])
                r2 += dx[k] * dx[k]
            r = np.sqrt(r2)
            if r >= eps or r == 0.0:
                continue
            rr = r / eps
            if rr < 1e-14:
                rr = 1e-14
            if s == 0.0:
                dv = _chi_der(cid, rr)
            else:
                dv = _chi_der(cid, rr) / rr**s - s * _chi_val(cid, rr) / rr ** (s + 1.0)
            # force on i along +dx for repulsion (dv <= 0)
            fmag = -(alpha / eps) * dv / r
            for k in range(d):
                F[a, k] += fmag * dx[k]
                F[b, k] -= fmag * dx[k]


@njit(cache=True)
def _evolve_kernel(pos, vel, eps, s, alpha, cid, t_final, snap_times,
                   snap_pos, snap_vel, ev_i, ev_j, ev_t0, ev_t1,
                   multi_t, multi_sz, n_sub, guard_factor, horizon_disp):
    n, d = pos.shape
    active = np.zeros(n, np.uint8)
    contact = np.zeros((n, n), np.uint8)
    contact_t0 = np.zeros((n, n))
    nxt = np.full((n, n), _BIG)
    rowmin = np.full(n, _BIG)
    F = np.empty((n, d))
    act_idx = np.empty(n, np.int64)
    comp = np.empty(n, np.int64)

    ev_count = 0
    multi_count = 0
    ev_cap = ev_i.shape[0]
    multi_cap = multi_t.shape[0]
    n_snap = snap_times.shape[0]
    snap_k = 0
    multi_flag = False

    v_max = 1e-9
    for i in range(n):
        sp = 0.0
        for k in range(d):
            sp += vel[i, k] * vel[i, k]
        sp = np.sqrt(sp)
        if sp > v_max:
            v_max = sp

    t = 0.0
    band = guard_factor * eps
    horizon = t + horizon_disp / (2.0 * v_max)

    # initial overlaps and proximity form the first active set
    n_act = 0
    for i in range(n):
        for j in range(i + 1, n):
            r2 = 0.0
            for k in range(d):
                y = _mi(pos[i, k] - pos[j, k])
                r2 += y * y
            r = np.sqrt(r2)
            if r <= eps:
                contact[i, j] = 1
                contact_t0[i, j] = 0.0
                active[i] = 1
                active[j] = 1
            elif r <= eps + band:
                active[i] = 1
                active[j] = 1

    # free-pair predictions
    for i in range(n):
        rm = _BIG
        if active[i] == 0:
            for j in range(n):
                if j == i or active[j] == 1:
                    continue
                if j > i:
                    tij = _predict_pair(pos, vel, i, j, d, eps, t, horizon)
                    if tij < nxt[i, j]:
                        nxt[i, j] = tij
                else:
                    tij = nxt[j, i]
                if tij < rm:
                    rm = tij
        rowmin[i] = rm

    max_iter = 100000000
    for _ in range(max_iter):
        if t >= t_final - 1e-14:
            break
        # earliest free-free contact
        t_ff = _BIG
        pi = -1
        pj = -1
        for i in range(n):
            if active[i] == 0 and rowmin[i] < t_ff:
                t_ff = rowmin[i]
                pi = i
        if pi >= 0:
            for j in range(n):
                if j != pi and active[j] == 0:
                    a, b = (pi, j) if pi < j else (j, pi)
                    if nxt[a, b] <= t_ff:
                        t_ff = nxt[a, b]
                        pj = j
        any_active = False
        for i in range(n):
            if active[i] == 1:
                any_active = True
                break

        t_stop = t_final
        if t_ff < t_stop:
            t_stop = t_ff
        if horizon < t_stop:
            t_stop = horizon
        if snap_k < n_snap and snap_times[snap_k] < t_stop:
            t_stop = snap_times[snap_k]
        if any_active:
            h_chunk = eps / (2.0 * v_max)
            if t + h_chunk < t_stop:
                t_stop = t + h_chunk

        dt = t_stop - t
        if dt > 0.0:
            # free particles: exact flight
            for i in range(n):
                if active[i] == 0:
                    for k in range(d):
                        pos[i, k] += vel[i, k] * dt
            if any_active:
                n_act = 0
                for i in range(n):
                    if active[i] == 1:
                        act_idx[n_act] = i
                        n_act += 1
                # substep count keyed to the fastest active pair speed
                wmax = 1e-9
                for a in range(n_act):
                    i = act_idx[a]
                    for b in range(a + 1, n_act):
                        j = act_idx[b]
                        du = 0.0
                        for k in range(d):
                            uu = vel[i, k] - vel[j, k]
                            du += uu * uu
                        du = np.sqrt(du)
                        if du > wmax:
                            wmax = du
                n_steps = int(n_sub * dt * wmax / eps) + 1
                h = dt / n_steps
                _forces_active(pos, act_idx, n_act, d, eps, s, alpha, cid, F)
                for st in range(n_steps):
                    for a in range(n_act):
                        i = act_idx[a]
                        for k in range(d):
                            vel[i, k] += 0.5 * h * F[a, k]
                            pos[i, k] += h * vel[i, k]
                    _forces_active(pos, act_idx, n_act, d, eps, s, alpha, cid, F)
                    for a in range(n_act):
                        i = act_idx[a]
                        for k in range(d):
                            vel[i, k] += 0.5 * h * F[a, k]
                    t_sub = t + (st + 1) * h
                    # contact transitions among active pairs
                    for a in range(n_act):
                        i = act_idx[a]
                        for b in range(a + 1, n_act):
                            j = act_idx[b]
                            ii, jj = (i, j) if i < j else (j, i)
                            r2 = 0.0
                            for k in range(d):
                                y = _mi(pos[ii, k] - pos[jj, k])
                                r2 += y * y
                            r = np.sqrt(r2)
                            if contact[ii, jj] == 0 and r <= eps:
                                contact[ii, jj] = 1
                                contact_t0[ii, jj] = t_sub - 0.5 * h
                            elif contact[ii, jj] == 1 and r > eps:
                                contact[ii, jj] = 0
                                if ev_count < ev_cap:
                                    ev_i[ev_count] = ii
                                    ev_j[ev_count] = jj
                                    ev_t0[ev_count] = contact_t0[ii, jj]
                                    ev_t1[ev_count] = t_sub - 0.5 * h
                                    ev_count += 1
                    # multiple interaction: connected contact component >= 3
                    biggest = _largest_contact_component(contact, act_idx,
                                                         n_act, comp)
                    if biggest >= 3:
                        if not multi_flag and multi_count < multi_cap:
                            multi_t[multi_count] = t_sub
                            multi_sz[multi_count] = biggest
                            multi_count += 1
                        multi_flag = True
                    else:
                        multi_flag = False
        t = t_stop

        # snapshot
        if snap_k < n_snap and t >= snap_times[snap_k] - 1e-14:
            for i in range(n):
                for k in range(d):
                    snap_pos[snap_k, i, k] = pos[i, k] % 1.0
                    snap_vel[snap_k, i, k] = vel[i, k]
            snap_k += 1
            continue

        # horizon refresh
        if t >= horizon - 1e-14 and t < t_final - 1e-14:
            v_max = 1e-9
            for i in range(n):
                sp = 0.0
                for k in range(d):
                    sp += vel[i, k] * vel[i, k]
                sp = np.sqrt(sp)
                if sp > v_max:
                    v_max = sp
            horizon = t + horizon_disp / (2.0 * v_max)
            for i in range(n):
                rm = _BIG
                if active[i] == 0:
                    for j in range(n):
                        if j == i or active[j] == 1:
                            continue
                        if j > i:
                            nxt[i, j] = _predict_pair(pos, vel, i, j, d, eps,
                                                      t, horizon)
                            tij = nxt[i, j]
                        else:
                            tij = nxt[j, i]
                        if tij < rm:
                            rm = tij
                rowmin[i] = rm

        # free-free contact: activate the pair and its guard neighborhood
        if pi >= 0 and pj >= 0 and t >= t_ff - 1e-14:
            _activate(active, pos, pi, pj, n, d, eps, band, nxt, rowmin)
            aa, bb = (pi, pj) if pi < pj else (pj, pi)
            if contact[aa, bb] == 0:
                contact[aa, bb] = 1
                contact_t0[aa, bb] = t

        # active-set maintenance: absorb approaching, release departed
        if any_active or (pi >= 0 and pj >= 0):
            changed = True
            while changed:
                changed = False
                for i in range(n):
                    if active[i] == 1:
                        continue
                    for j in range(n):
                        if active[j] == 1:
                            r2 = 0.0
                            for k in range(d):
                                y = _mi(pos[i, k] - pos[j, k])
                                r2 += y * y
                            if np.sqrt(r2) <= eps + band:
                                active[i] = 1
                                rowmin[i] = _BIG
                                for jj in range(n):
                                    if jj > i:
                                        nxt[i, jj] = _BIG
                                    elif jj < i:
                                        nxt[jj, i] = _BIG
                                changed = True
                                break
            # recompute rowmins of free rows that referenced newly active
            for i in range(n):
                if active[i] == 0:
                    rm = _BIG
                    for j in range(n):
                        if j == i or active[j] == 1:
                            continue
                        tij = nxt[i, j] if j > i else nxt[j, i]
                        if tij < rm:
                            rm = tij
                    rowmin[i] = rm
            # release members with no neighbors in the guard band
            for i in range(n):
                if active[i] == 0:
                    continue
                near = False
                for j in range(n):
                    if j == i or active[j] == 0:
                        continue
                    r2 = 0.0
                    for k in range(d):
                        y = _mi(pos[i, k] - pos[j, k])
                        r2 += y * y
                    if np.sqrt(r2) <= eps + band:
                        near = True
                        break
                if not near:
                    active[i] = 0
                    sp = 0.0
                    for k in range(d):
                        sp += vel[i, k] * vel[i, k]
                    sp = np.sqrt(sp)
                    if sp > v_max:
                        v_max = sp
                        # keep horizon conservative for the new speed
                        hz = t + horizon_disp / (2.0 * v_max)
                        if hz < horizon:
                            horizon = hz
                    rm = _BIG
                    for j in range(n):
                        if j == i or active[j] == 1:
                            continue
                        a, b = (i, j) if i < j else (j, i)
                        nxt[a, b] = _predict_pair(pos, vel, i, j, d, eps, t,
                                                  horizon)
                        if nxt[a, b] < rm:
                            rm = nxt[a, b]
                        if nxt[a, b] < rowmin[j]:
                            rowmin[j] = nxt[a, b]
                    rowmin[i] = rm

    # close intervals still open at the end of the run
    for i in range(n):
        for j in range(i + 1, n):
            if contact[i, j] == 1 and ev_count < ev_cap:
                ev_i[ev_count] = i
                ev_j[ev_count] = j
                ev_t0[ev_count] = contact_t0[i, j]
                ev_t1[ev_count] = t_final
                ev_count += 1
    status = 0 if ev_count < ev_cap and multi_count < multi_cap else 1
    return ev_count, multi_count, status


@njit(cache=True)
def _activate(active, pos, pi, pj, n, d, eps, band, nxt, rowmin):
    for i in (pi, pj):
        active[i] = 1
        rowmin[i] = _BIG
        for j in range(n):
            if j > i:
                nxt[i, j] = _BIG
            elif j < i:
                nxt[j, i] = _BIG


@njit(cache=True)
def _largest_contact_component(contact, act_idx, n_act, comp):
    for a in range(n_act):
        comp[a] = a
    # tiny union-find over the active contact graph
    for a in range(n_act):
        i = act_idx[a]
        for b in range(a + 1, n_act):
            j = act_idx[b]
            ii, jj = (i, j) if i < j else (j, i)
            if contact[ii, jj] == 1:
                ra = a
                while comp[ra] != ra:
                    ra = comp[ra]
                rb = b
                while comp[rb] != rb:
                    rb = comp[rb]
                if ra != rb:
                    comp[rb] = ra
    best = 1
    for a in range(n_act):
        size = 0
        ra = a
        while comp[ra] != ra:
            ra = comp[ra]
        for b in range(n_act):
            rb = b
            while comp[rb] != rb:
                rb = comp[rb]
            if rb == ra:
                size += 1
        if size > best:
            best = size
    return best


def evolve(state: PhaseState, spec: PotentialSpec, t_final: float,
           policy: DtPolicy = DtPolicy(), sample_times=None,
           energy_tolerance=None) -> Trajectory:
    """Evolve the gas to t_final, recording snapshots and encounter intervals.

    energy_tolerance, if given, is the allowed relative drift per unit time;
    exceeding it raises with the measured drift.
    """
    st = state.copy()
    pos = np.ascontiguousarray(st.positions)
    vel = np.ascontiguousarray(st.velocities)
    n = pos.shape[0]
    if sample_times is None:
        sample_times = np.array([t_final])
    sample_times = np.asarray(sample_times, dtype=float)
    snap_pos = np.empty((len(sample_times), n, st.d))
    snap_vel = np.empty_like(snap_pos)
    cap = 128 * n + 4096
    ev_i = np.empty(cap, np.int64)
    ev_j = np.empty(cap, np.int64)
    ev_t0 = np.empty(cap)
    ev_t1 = np.empty(cap)
    multi_t = np.empty(cap)
    multi_sz = np.empty(cap, np.int64)
    h0 = hamiltonian(spec, state)
    nev, nmulti, status = _evolve_kernel(
        pos, vel, spec.epsilon, float(spec.s), float(spec.alpha),
        CHI_IDS[spec.chi], float(t_final), sample_times, snap_pos, snap_vel,
        ev_i, ev_j, ev_t0, ev_t1, multi_t, multi_sz,
        policy.encounter_substeps, policy.guard_factor,
        policy.horizon_displacement)
    if status != 0:
        raise RuntimeError("event buffers overflowed; raise capacity")
    snaps = [PhaseState(snap_pos[k], snap_vel[k]) for k in range(len(sample_times))]
    edges = [(int(ev_i[k]), int(ev_j[k]), float(ev_t0[k]), float(ev_t1[k]))
             for k in range(nev)]
    multis = [(float(multi_t[k]), int(multi_sz[k])) for k in range(nmulti)]
    energies = np.array([hamiltonian(spec, s) for s in snaps])
    if energy_tolerance is not None and len(energies) and abs(h0) > 0:
        drift = np.max(np.abs(energies - h0)) / abs(h0) / max(t_final, 1e-9)
        if drift > energy_tolerance:
            raise RuntimeError(f"energy drift {drift:.2e} per unit time "
                               f"exceeds {energy_tolerance:.2e}")
    return Trajectory(times=sample_times, snapshots=snaps,
                      events=CollisionGraph(edges), multi_interactions=multis,
                      energies=energies, initial_state=state.copy())


# ---------------------------------------------------------------------------
# Dense small-system path with trajectory storage and an interaction mask
# ---------------------------------------------------------------------------


@dataclass
class DenseTrajectory:
    times: np.ndarray         # (T,)
    positions: np.ndarray     # (T, n, d), unwrapped within segments
    velocities: np.ndarray
    events: CollisionGraph

    def state_at(self, t):
        """Piecewise-linear interpolant; exact on free segments."""
        k = np.searchsorted(self.times, t, side="right") - 1
        k = min(max(k, 0), len(self.times) - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        lam = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        p = (1 - lam) * self.positions[k] + lam * self.positions[k + 1]
        v = self.velocities[k] if lam < 1.0 else self.velocities[k + 1]
        return p, v


def evolve_dense(state: PhaseState, spec: PotentialSpec, t_final: float,
                 mask=None, n_sub=512) -> DenseTrajectory:
    """Small-n integrator storing every breakpoint.

    mask[i, j] = False removes the (i, j) interaction (block Hamiltonians);
    contact bookkeeping only tracks interacting pairs.  Positions are stored
    wrapped to [0, 1); segments are short enough that minimal-image
    interpolation between breakpoints is valid.
    """
    pos = state.positions.copy()
    vel = state.velocities.copy()
    n, d = pos.shape
    eps = spec.epsilon
    if mask is None:
        mask = np.ones((n, n), dtype=bool)
    np.fill_diagonal(mask, False)
    iu, ju = np.triu_indices(n, k=1)
    pair_on = mask[iu, ju]

    times = [0.0]
    P = [pos.copy()]
    V = [vel.copy()]
    contact_open = {}
    edges = []

    def pair_r(p):
        disp = p[iu] - p[ju]
        disp -= np.floor(disp + 0.5)
        return np.linalg.norm(disp, axis=1), disp

    def forces(p):
        F = np.zeros_like(p)
        if spec.alpha == 0.0:
            return F
        r, disp = pair_r(p)
        hot = pair_on & (r < eps) & (r > 0)
        if not np.any(hot):
            return F
        rr = np.maximum(r[hot] / eps, 1e-14)
        from .core import potential_gradient_norm, chi_derivative
        if spec.s == 0.0:
            dv = chi_derivative(spec.chi, rr)
        else:
            dv = potential_gradient_norm(spec, rr)
        fmag = -(spec.alpha / eps) * dv / r[hot]
        contrib = fmag[:, None] * disp[hot]
        np.add.at(F, iu[hot], contrib)
        np.add.at(F, ju[hot], -contrib)
        return F

    def record(t, p, v):
        times.append(t)
        P.append(p.copy())
        V.append(v.copy())

    def update_contacts(t, r_prev, r_now, t_prev):
        for idx in np.nonzero(pair_on)[0]:
            i, j = int(iu[idx]), int(ju[idx])
            was = (i, j) in contact_open
            now = r_now[idx] <= eps
            if now and not was:
                lam = _cross_fraction(r_prev[idx], r_now[idx], eps)
                contact_open[(i, j)] = t_prev + lam * (t - t_prev)
            elif was and not now:
                lam = _cross_fraction(r_prev[idx], r_now[idx], eps)
                edges.append((i, j, contact_open.pop((i, j)),
                              t_prev + lam * (t - t_prev)))

    t = 0.0
    r_now, _ = pair_r(pos)
    for idx in np.nonzero(pair_on & (r_now <= eps))[0]:
        contact_open[(int(iu[idx]), int(ju[idx]))] = 0.0
    guard = 1e-12
    max_iter = 20000000
    it = 0
    while t < t_final - 1e-15 and it < max_iter:
        it += 1
        r_now, _ = pair_r(pos)
        near = pair_on & (r_now < 1.5 * eps)
        v_rel_max = 1e-9
        if np.any(pair_on):
            rel = vel[iu] - vel[ju]
            v_rel_max = max(np.max(np.linalg.norm(rel[pair_on], axis=1)), 1e-9)
        if not np.any(near):
            # free flight to the earliest interacting contact
            t_hit = t_final
            disp = pos[iu] - pos[ju]
            disp -= np.floor(disp + 0.5)
            relv = vel[iu] - vel[ju]
            a = np.sum(relv**2, axis=1)
            b = np.sum(disp * relv, axis=1)
            c = np.sum(disp**2, axis=1) - (1.4 * eps) ** 2
            ok = pair_on & (b < 0) & (a > 0)
            disc = b**2 - a * np.where(a > 0, c, 1.0)
            ok &= disc > 0
            tau = np.where(ok, (-b - np.sqrt(np.maximum(disc, 0))) /
                           np.where(a > 0, a, 1.0), np.inf)
            # cap the jump to keep minimal-image interpolation valid
            vmax_any = max(np.max(np.linalg.norm(vel, axis=1)), 1e-9)
            cap = 0.05 / vmax_any
            t_pair = float(np.min(tau)) if tau.size else np.inf
            dt = min(t_pair, t_final - t, cap)
            dt = max(dt, guard)
            r_prev = r_now
            pos = pos + vel * dt
            t += dt
            record(t, pos, vel)
            r_now, _ = pair_r(pos)
            update_contacts(t, r_prev, r_now, t - dt)
            continue
        h = eps / (n_sub * v_rel_max)
        h = min(h, t_final - t)
        r_prev = r_now
        F = forces(pos)
        vel = vel + 0.5 * h * F
        pos = pos + h * vel
        vel = vel + 0.5 * h * forces(pos)
        t += h
        record(t, pos, vel)
        r_now, _ = pair_r(pos)
        update_contacts(t, r_prev, r_now, t - h)
    for (i, j), t0 in contact_open.items():
        edges.append((i, j, t0, t_final))
    return DenseTrajectory(np.array(times), np.array(P), np.array(V),
                           CollisionGraph(edges))


def _cross_fraction(r0, r1, eps):
    if r1 == r0:
        return 0.5
    lam = (eps - r0) / (r1 - r0)
    return float(np.clip(lam, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Pathology classification
# ---------------------------------------------------------------------------


def detect_pathologies(traj: Trajectory, eps: float) -> dict:
    """Overlaps at sampling instants, multiple interactions, recollisions."""
    overlaps = 0
    for st in traj.snapshots:
        if st.n < 2:
            continue
        iu, ju = np.triu_indices(st.n, k=1)
        disp = st.positions[iu] - st.positions[ju]
        disp -= np.floor(disp + 0.5)
        overlaps += int(np.sum(np.linalg.norm(disp, axis=1) <= eps))
    recollisions = traj.events.cycle_count()
    n = traj.snapshots[0].n if traj.snapshots else 0
    t_span = float(traj.times[-1]) if len(traj.times) else 1.0
    denom = max(n * t_span, 1e-12)
    return {
        "n_encounters": len(traj.events.edges),
        "overlaps_at_samples": overlaps,
        "multiple_interactions": len(traj.multi_interactions),
        "recollisions": recollisions,
        "recollision_rate": recollisions / denom,
        "multiple_rate": len(traj.multi_interactions) / denom,
        "encounter_rate": len(traj.events.edges) / denom,
    }


def energy_series(traj: Trajectory, spec: PotentialSpec):
    return traj.times, traj.energies


# ---------------------------------------------------------------------------
# Time-dependent fluctuation covariance
# ---------------------------------------------------------------------------


def _covariance_replica(args):
    (idx, gc_config, g, h, time_grid, ref_g, ref_h, policy) = args
    from . import rng as rngmod
    from .gibbs import GrandCanonicalConfig, fluctuation_field, sample
    cfg = GrandCanonicalConfig(
        mu=gc_config.mu, spec=gc_config.spec, dimension=gc_config.dimension,
        rng_seed=rngmod.spawn_int(gc_config.rng_seed, "cov-replica", idx),
        n_chains=1, sweeps=gc_config.sweeps, burn_in=gc_config.burn_in,
        thin=max(gc_config.sweeps - gc_config.burn_in, 1),
        displacement_sigma=gc_config.displacement_sigma)
    ens = sample(cfg)
    state = ens.states[-1]
    z0 = fluctuation_field(state, g, ref_g, gc_config.mu)
    traj = evolve(state, gc_config.spec, float(time_grid[-1]), policy,
                  sample_times=time_grid)
    zt = np.array([fluctuation_field(st, h, ref_h, gc_config.mu)
                   for st in traj.snapshots])
    return idx, z0, zt, len(traj.events.edges)


def covariance_experiment(gc_config, g, h, time_grid, n_replicas,
                          policy: DtPolicy = DtPolicy(), threads=1,
                          reference_sample=None):
    """E[zeta^t(h) zeta^0(g)] over independent equilibrium replicas.

    Reference means are estimated once from a dedicated high-budget pass
    (or a supplied ensemble).  Returns a dict with the covariance curve,
    batch stderr, and replica bookkeeping.
    """
    from .gibbs import GrandCanonicalConfig, estimate_reference_mean, sample
    time_grid = np.asarray(time_grid, dtype=float)
    if reference_sample is None:
        ref_cfg = GrandCanonicalConfig(
            mu=gc_config.mu, spec=gc_config.spec,
            dimension=gc_config.dimension,
            rng_seed=rngmod_spawn(gc_config.rng_seed, "cov-reference"),
            n_chains=16, sweeps=gc_config.sweeps * 2,
            burn_in=gc_config.burn_in, thin=4,
            displacement_sigma=gc_config.displacement_sigma)
        reference_sample = sample(ref_cfg)
    ref_g = estimate_reference_mean(reference_sample, g, gc_config.mu)
    ref_h = estimate_reference_mean(reference_sample, h, gc_config.mu)

    jobs = [(i, gc_config, g, h, time_grid, ref_g, ref_h, policy)
            for i in range(n_replicas)]
    results = [None] * n_replicas
    failures = 0
    if threads > 1:
        import multiprocessing as mp
        with mp.get_context("fork").Pool(threads) as pool:
            for idx, z0, zt, nev in pool.imap_unordered(_covariance_replica,
                                                        jobs, chunksize=4):
                results[idx] = (z0, zt, nev)
    else:
        for job in jobs:
            idx, z0, zt, nev = _covariance_replica(job)
            results[idx] = (z0, zt, nev)
    z0s = np.array([r[0] for r in results])
    zts = np.stack([r[1] for r in results])
    prods = zts * z0s[:, None]
    est = prods.mean(axis=0)
    err = prods.std(axis=0, ddof=1) / np.sqrt(n_replicas)
    return {"t": time_grid, "estimate": est, "stderr": err,
            "n_replicas": n_replicas, "failures": failures,
            "ref_means": (ref_g, ref_h),
            "encounters_per_replica": float(np.mean([r[2] for r in results]))}


def rngmod_spawn(seed, *tags):
    from . import rng as rngmod
    return rngmod.spawn_int(seed, *tags)
