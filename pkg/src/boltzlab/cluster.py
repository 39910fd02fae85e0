"""Dynamical cluster development: block trajectories, overlap cumulants,
dynamical cumulants, the expansion identity, and possible-cluster partitions.

Blocks evolve isolated under their own Hamiltonian; a set of particles forms
a dynamical cluster when the within-block contact graph over [0, t] is
connected, and two isolated blocks overlap when some cross pair comes within
the interaction range.  The cumulants are signed sums over partitions,
enumerable exactly for the small systems this module verifies.
"""

from functools import lru_cache
from itertools import permutations

import numpy as np

from .core import PhaseState, PotentialSpec
from .dynamics import DenseTrajectory, evolve_dense

__all__ = [
    "BlockRun", "partitions_of", "overlap_cumulant", "overlap_cumulant_exhaustive",
    "penrose_bound", "dynamical_cluster_indicator", "dynamical_cumulant",
    "verify_expansion", "possible_cluster_partition",
    "possible_cluster_exhaustive", "conditioning_check",
]


def partitions_of(items):
    """All set partitions of a sequence, as tuples of sorted tuples."""
    items = list(items)
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for part in partitions_of(rest):
        yield (tuple((first,)),) + part
        for k in range(len(part)):
            grown = tuple(sorted(part[k] + (first,)))
            yield part[:k] + (grown,) + part[k + 1:]


class BlockRun:
    """Caches isolated-block trajectories of subsets of one initial state."""

    def __init__(self, state: PhaseState, spec: PotentialSpec, horizon: float,
                 n_sub: int = 512):
        self.state = state
        self.spec = spec
        self.horizon = float(horizon)
        self.n_sub = n_sub
        self._trajs = {}
        self._overlaps = {}

    def trajectory(self, block) -> DenseTrajectory:
        key = frozenset(block)
        if key not in self._trajs:
            idx = np.array(sorted(key), dtype=int)
            sub = PhaseState(self.state.positions[idx],
                             self.state.velocities[idx])
            self._trajs[key] = (idx, evolve_dense(sub, self.spec, self.horizon,
                                                  n_sub=self.n_sub))
        return self._trajs[key]

    def contact_graph(self, block):
        """Edges (global indices) of the isolated block's collision graph."""
        idx, traj = self.trajectory(block)
        return [(int(idx[i]), int(idx[j])) for (i, j, _, _) in traj.events.edges]

    def blocks_overlap(self, block_a, block_b) -> bool:
        """Cross-block contact between trajectories evolved in isolation."""
        ka, kb = frozenset(block_a), frozenset(block_b)
        if ka & kb:
            raise ValueError("overlap defined for disjoint blocks")
        cache_key = (ka, kb) if min(ka) < min(kb) else (kb, ka)
        if cache_key in self._overlaps:
            return self._overlaps[cache_key]
        ia, ta = self.trajectory(ka)
        ib, tb = self.trajectory(kb)
        grid = np.unique(np.concatenate([ta.times, tb.times]))
        hit = False
        pa0, _ = ta.state_at(grid[0])
        pb0, _ = tb.state_at(grid[0])
        eps = self.spec.epsilon
        for k in range(1, len(grid)):
            pa1, _ = ta.state_at(grid[k])
            pb1, _ = tb.state_at(grid[k])
            if _segment_pair_min_dist(pa0, pa1, pb0, pb1) <= eps:
                hit = True
                break
            pa0, pb0 = pa1, pb1
        self._overlaps[cache_key] = hit
        return hit


def _seg_min(y0, dy):
    dd = float(dy @ dy)
    if dd == 0.0:
        return float(np.linalg.norm(y0))
    lam = float(np.clip(-(y0 @ dy) / dd, 0.0, 1.0))
    return float(np.linalg.norm(y0 + lam * dy))


def _segment_pair_min_dist(pa0, pa1, pb0, pb1):
    """Min over the segment of the minimal-image distance between any pair
    (one particle from each set), both sets moving linearly (unwrapped)."""
    d = pa0.shape[1]
    shifts = np.array(np.meshgrid(*([[-1.0, 0.0, 1.0]] * d),
                                  indexing="ij")).reshape(d, -1).T
    best = np.inf
    for qa in range(pa0.shape[0]):
        for qb in range(pb0.shape[0]):
            raw0 = pa0[qa] - pb0[qb]
            y0 = raw0 - np.floor(raw0 + 0.5)
            dy = (pa1[qa] - pb1[qb]) - raw0
            drift = float(np.linalg.norm(dy))
            for z in shifts:
                y0z = y0 + z
                if float(np.linalg.norm(y0z)) - drift > best:
                    continue
                dist = _seg_min(y0z, dy)
                if dist < best:
                    best = dist
    return best


# ---------------------------------------------------------------------------
# Cumulants
# ---------------------------------------------------------------------------


def _connected_signed_sum(l, overlap):
    """OO over l blocks from the pairwise overlap matrix, by the recursion
    Prod(S) = sum over T containing min(S) of OO(T) Prod(S \\ T)."""
    if l > 12:
        raise ValueError("overlap cumulant capped at 12 blocks")
    full = (1 << l) - 1

    def no_edges(mask):
        members = [i for i in range(l) if mask >> i & 1]
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                if overlap[members[a]][members[b]]:
                    return 0
        return 1

    P = np.empty(full + 1)
    for mask in range(full + 1):
        P[mask] = no_edges(mask)
    OO = {}
    for mask in range(1, full + 1):
        low = mask & (-mask)
        rest = mask ^ low
        total = P[mask]
        # proper submasks T of mask containing the lowest set bit
        sub = rest
        while True:
            sub = (sub - 1) & rest
            T = low | sub
            if T != mask:
                total -= OO[T] * P[mask ^ T]
            if sub == 0:
                break
        OO[mask] = total
    return float(OO[full])


def overlap_cumulant(blockrun: BlockRun, blocks) -> float:
    """Signed connected expansion of the non-overlap indicators."""
    l = len(blocks)
    if l == 1:
        return 1.0
    overlap = [[False] * l for _ in range(l)]
    for a in range(l):
        for b in range(a + 1, l):
            o = blockrun.blocks_overlap(blocks[a], blocks[b])
            overlap[a][b] = overlap[b][a] = o
    return _connected_signed_sum(l, overlap)


def overlap_cumulant_exhaustive(overlap_matrix) -> float:
    """Oracle: enumerate every spanning edge subset; sum (-1)^{edges} over
    the connected ones.  Exponential, for <= 5 blocks in tests."""
    l = len(overlap_matrix)
    edges = [(a, b) for a in range(l) for b in range(a + 1, l)
             if overlap_matrix[a][b]]
    total = 0.0
    for mask in range(1 << len(edges)):
        chosen = [edges[k] for k in range(len(edges)) if mask >> k & 1]
        parent = list(range(l))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for (a, b) in chosen:
            parent[find(a)] = find(b)
        if l == 1 or len({find(x) for x in range(l)}) == 1:
            total += (-1.0) ** len(chosen)
    return total


def penrose_bound(overlap_matrix) -> float:
    """Number of spanning trees using available overlap edges (Kirchhoff)."""
    l = len(overlap_matrix)
    if l == 1:
        return 1.0
    L = np.zeros((l, l))
    for a in range(l):
        for b in range(l):
            if a != b and overlap_matrix[a][b]:
                L[a, b] = -1.0
                L[a, a] += 1.0
    minor = L[1:, 1:]
    det = np.linalg.det(minor)
    return float(max(round(det), 0))


def dynamical_cluster_indicator(blockrun: BlockRun, block, tagged=None) -> bool:
    """Connectivity of the within-block contact graph over the horizon.

    With `tagged`, the weaker condition: every particle shares a component
    with some tagged particle.
    """
    block = tuple(sorted(block))
    if len(block) == 1:
        return True
    edges = blockrun.contact_graph(block)
    parent = {q: q for q in block}

    def find(q):
        while parent[q] != q:
            parent[q] = parent[parent[q]]
            q = parent[q]
        return q

    for (a, b) in edges:
        parent[find(a)] = find(b)
    if tagged is None:
        roots = {find(q) for q in block}
        return len(roots) == 1
    tagged_roots = {find(q) for q in tagged if q in parent}
    return all(find(q) in tagged_roots for q in block)


def dynamical_cumulant(h_m, blockrun: BlockRun, particles, m: int,
                       t: float) -> float:
    """The signed partition sum expressing an m-particle observable at time t
    through n initial particles.

    h_m maps (positions (m, d), velocities (m, d)) to a scalar; `particles`
    are global indices, the first m of which are the tagged set.
    """
    particles = list(particles)
    n = len(particles)
    if n > 8:
        raise ValueError("dynamical cumulant capped at 8 particles")
    tagged = particles[:m]
    others = particles[m:]
    total = 0.0
    import math
    for extra_mask in range(1 << len(others)):
        lam1 = tuple(sorted(tagged + [others[k] for k in range(len(others))
                                      if extra_mask >> k & 1]))
        rest = [others[k] for k in range(len(others)) if not extra_mask >> k & 1]
        if not dynamical_cluster_indicator(blockrun, lam1, tagged=tagged):
            continue
        idx, traj = blockrun.trajectory(lam1)
        p, v = traj.state_at(t)
        sel = [int(np.where(idx == q)[0][0]) for q in tagged]
        h_val = h_m(p[sel], v[sel])
        if h_val == 0.0:
            continue
        for part in partitions_of(rest):
            if any(not dynamical_cluster_indicator(blockrun, b) for b in part):
                continue
            blocks = (lam1,) + part
            total += h_val * overlap_cumulant(blockrun, blocks)
    return total / math.factorial(n - m)


def verify_expansion(h, state: PhaseState, spec: PotentialSpec, t: float,
                     n_sub: int = 512) -> dict:
    """Residual of the cluster expansion against the true flow of particle 0.

    h maps (position (d,), velocity (d,)) to a scalar.  The state must be
    small (N <= 4) since every ordered tuple is enumerated.
    """
    N = state.n
    if N > 4:
        raise ValueError("expansion verification capped at N = 4")
    run = BlockRun(state, spec, t, n_sub=n_sub)
    # true value: full dynamics
    _, full_traj = run.trajectory(tuple(range(N)))
    p, v = full_traj.state_at(t)
    truth = float(h(p[0], v[0]))

    def h_m(pp, vv):
        return float(h(pp[0], vv[0]))

    total = 0.0
    n_terms = 0
    rest = list(range(1, N))
    for n in range(1, N + 1):
        for tail in permutations(rest, n - 1):
            total += dynamical_cumulant(h_m, run, [0] + list(tail), 1, t)
            n_terms += 1
    return {"truth": truth, "expansion": total,
            "residual": abs(total - truth), "n_terms": n_terms,
            "n_trajectories": len(run._trajs)}


# ---------------------------------------------------------------------------
# Possible clusters and conditioning
# ---------------------------------------------------------------------------


def _components(n, edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (a, b) in edges:
        parent[find(a)] = find(b)
    comps = {}
    for q in range(n):
        comps.setdefault(find(q), []).append(q)
    return [tuple(sorted(c)) for c in comps.values()]


def _speed_bound(state: PhaseState, spec: PotentialSpec) -> float:
    """Any particle's speed under any block dynamics is capped by the total
    energy (potentials are nonnegative)."""
    from .core import hamiltonian
    return float(np.sqrt(2.0 * hamiltonian(spec, state)))


def possible_cluster_partition(state: PhaseState, spec: PotentialSpec,
                               delta: float, exact_cap: int = 6,
                               n_sub: int = 256):
    """Connected components of "could interact within [0, delta] under some
    interaction partition".

    A sound reachability over-approximation (separation > eps + 2 c_max delta
    forbids contact for any dynamics with speeds <= c_max) produces candidate
    components; components no larger than `exact_cap` are refined by the
    exact search over interaction partitions.
    """
    n = state.n
    if n == 0:
        return []
    c_max = _speed_bound(state, spec)
    reach = spec.epsilon + 2.0 * c_max * delta
    iu, ju = np.triu_indices(n, k=1)
    disp = state.positions[iu] - state.positions[ju]
    disp -= np.floor(disp + 0.5)
    r = np.linalg.norm(disp, axis=1)
    edges = [(int(iu[k]), int(ju[k])) for k in np.nonzero(r <= reach)[0]]
    coarse = _components(n, edges)
    refined = []
    for comp in coarse:
        if len(comp) == 1 or len(comp) > exact_cap:
            refined.append(comp)
            continue
        union_edges = _possible_edges_exact(state, spec, delta, comp, n_sub)
        local = {q: k for k, q in enumerate(comp)}
        sub = _components(len(comp), [(local[a], local[b])
                                      for (a, b) in union_edges])
        refined.extend(tuple(comp[i] for i in c) for c in sub)
    return sorted(refined)


def _possible_edges_exact(state, spec, delta, comp, n_sub):
    """Union over interaction partitions of the collision-graph edges."""
    idx = np.array(comp, dtype=int)
    sub = PhaseState(state.positions[idx], state.velocities[idx])
    k = len(comp)
    edges = set()
    for part in partitions_of(range(k)):
        mask = np.zeros((k, k), dtype=bool)
        for block in part:
            for a in block:
                for b in block:
                    mask[a, b] = a != b
        traj = evolve_dense(sub, spec, delta, mask=mask, n_sub=n_sub)
        for (i, j, _, _) in traj.events.edges:
            edges.add((comp[i], comp[j]))
    return edges


def possible_cluster_exhaustive(state: PhaseState, spec: PotentialSpec,
                                delta: float, n_sub: int = 256):
    """Brute-force partition for <= 5 particles: the oracle."""
    if state.n > 5:
        raise ValueError("exhaustive possible-cluster search capped at 5")
    edges = _possible_edges_exact(state, spec, delta, tuple(range(state.n)),
                                  n_sub)
    return sorted(_components(state.n, list(edges)))


def conditioning_check(state: PhaseState, spec: PotentialSpec, gamma: int,
                       vmax: float, delta: float) -> dict:
    """Good-configuration test: no possible cluster larger than gamma, and
    every subset of at most gamma particles has kinetic energy within the
    gamma-scaled budget (norm bound sqrt(gamma) vmax)."""
    parts = possible_cluster_partition(state, spec, delta)
    largest = max((len(p) for p in parts), default=0)
    speeds_sq = np.sort(np.sum(state.velocities**2, axis=1))[::-1]
    k = min(gamma, state.n)
    kinetic_ok = bool(np.sum(speeds_sq[:k]) <= gamma * vmax**2 + 1e-12)
    return {"largest_possible_cluster": largest,
            "cluster_ok": bool(largest <= gamma),
            "kinetic_ok": kinetic_ok,
            "pass": bool(largest <= gamma and kinetic_ok)}
