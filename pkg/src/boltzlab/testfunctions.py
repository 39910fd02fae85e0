"""Velocity/space observables built on an orthonormal Hermite x Fourier basis.

Velocity factors are products of probabilists' Hermite polynomials he_n
(orthonormal against the Maxwellian), position factors are real Fourier modes
on the unit torus.  Evaluation, gradients, Hessians and L2(M dz) inner
products are all closed form, which the operator modules rely on.
"""

from dataclasses import dataclass

import numpy as np

from .core import maxwellian

__all__ = ["TestFunction", "hermite", "fourier_hermite", "constant",
           "velocity_coordinate", "speed_squared", "collision_invariants",
           "gauss_hermite_nodes"]


def _he_all(t, nmax):
    """Orthonormal Hermite values he_0..he_nmax at t, shape (..., nmax+1)."""
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (nmax + 1,))
    out[..., 0] = 1.0
    if nmax >= 1:
        out[..., 1] = t
    for n in range(1, nmax):
        out[..., n + 1] = (t * out[..., n] - np.sqrt(n) * out[..., n - 1]) / np.sqrt(n + 1.0)
    return out


@dataclass(frozen=True)
class _Term:
    coeff: float
    kvec: tuple          # integer Fourier mode; all zeros = constant in x
    part: str            # 'c' cosine, 's' sine, '1' no x-dependence
    nvec: tuple          # Hermite degrees per velocity axis


class TestFunction:
    """Finite linear combination of Hermite x Fourier basis members."""

    def __init__(self, d, terms):
        self.d = int(d)
        merged = {}
        for t in terms:
            key = (t.kvec, t.part, t.nvec)
            merged[key] = merged.get(key, 0.0) + t.coeff
        self.terms = tuple(_Term(c, k, p, n) for (k, p, n), c in merged.items()
                           if c != 0.0)
        self._nmax = max((max(t.nvec) for t in self.terms), default=0)

    # -- algebra -----------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, TestFunction) or other.d != self.d:
            return NotImplemented
        return TestFunction(self.d, self.terms + other.terms)

    def __mul__(self, c):
        return TestFunction(self.d, [_Term(t.coeff * float(c), t.kvec, t.part, t.nvec)
                                     for t in self.terms])

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    # -- structure ---------------------------------------------------------

    @property
    def max_degree(self):
        return self._nmax

    @property
    def velocity_only(self):
        return all(t.part == "1" for t in self.terms)

    def l2m_inner(self, other: "TestFunction") -> float:
        """Exact <f, g> in L2(dx M(v) dv) by basis orthonormality."""
        table = {(t.kvec, t.part, t.nvec): t.coeff for t in self.terms}
        return float(sum(table.get((t.kvec, t.part, t.nvec), 0.0) * t.coeff
                         for t in other.terms))

    def l2m_norm(self) -> float:
        return float(np.sqrt(sum(t.coeff**2 for t in self.terms)))

    # -- pointwise evaluation ----------------------------------------------

    def _space_factor(self, term, x, deriv_axis=None):
        if term.part == "1":
            if deriv_axis is None:
                return 1.0
            return 0.0
        k = np.asarray(term.kvec, dtype=float)
        phase = 2.0 * np.pi * (x @ k)
        if term.part == "c":
            val = np.sqrt(2.0) * np.cos(phase)
            der = -np.sqrt(2.0) * np.sin(phase)
        else:
            val = np.sqrt(2.0) * np.sin(phase)
            der = np.sqrt(2.0) * np.cos(phase)
        if deriv_axis is None:
            return val
        return der * 2.0 * np.pi * k[deriv_axis]

    def __call__(self, x, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        he = _he_all(v, self._nmax)  # (N, d, nmax+1)
        out = np.zeros(v.shape[0])
        x = None if x is None else np.atleast_2d(np.asarray(x, dtype=float))
        for t in self.terms:
            vel = np.prod(he[:, range(self.d), t.nvec], axis=-1)
            if t.part == "1":
                out += t.coeff * vel
            else:
                out += t.coeff * vel * self._space_factor(t, x)
        return out

    def grad_v(self, x, v):
        """d/dv, exact: he_n' = sqrt(n) he_(n-1)."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        he = _he_all(v, self._nmax)
        out = np.zeros_like(v)
        x = None if x is None else np.atleast_2d(np.asarray(x, dtype=float))
        for t in self.terms:
            sp = 1.0 if t.part == "1" else self._space_factor(t, x)
            per_axis = he[:, range(self.d), t.nvec]  # (N, d)
            for axis in range(self.d):
                n = t.nvec[axis]
                if n == 0:
                    continue
                others = np.prod(np.delete(per_axis, axis, axis=1), axis=1)
                out[:, axis] += t.coeff * sp * others * np.sqrt(n) * he[:, axis, n - 1]
        return out

    def hess_v(self, x, v):
        """d^2/dv^2 as (N, d, d) arrays, exact."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        N = v.shape[0]
        he = _he_all(v, self._nmax)
        out = np.zeros((N, self.d, self.d))
        x = None if x is None else np.atleast_2d(np.asarray(x, dtype=float))
        for t in self.terms:
            sp = 1.0 if t.part == "1" else self._space_factor(t, x)
            per_axis = he[:, range(self.d), t.nvec]
            for a in range(self.d):
                na = t.nvec[a]
                for b in range(a, self.d):
                    nb = t.nvec[b]
                    if a == b:
                        if na < 2:
                            continue
                        others = np.prod(np.delete(per_axis, a, axis=1), axis=1)
                        term = others * np.sqrt(na * (na - 1.0)) * he[:, a, na - 2]
                    else:
                        if na == 0 or nb == 0:
                            continue
                        others = np.prod(np.delete(per_axis, [a, b], axis=1), axis=1)
                        term = (others * np.sqrt(float(na)) * he[:, a, na - 1]
                                * np.sqrt(float(nb)) * he[:, b, nb - 1])
                    out[:, a, b] += t.coeff * sp * term
                    if a != b:
                        out[:, b, a] += t.coeff * sp * term
        return out

    def grad_x(self, x, v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        he = _he_all(v, self._nmax)
        for t in self.terms:
            if t.part == "1":
                continue
            vel = np.prod(he[:, range(self.d), t.nvec], axis=-1)
            for axis in range(self.d):
                out[:, axis] += t.coeff * vel * self._space_factor(t, x, deriv_axis=axis)
        return out

    def gaussian_weighted_sup(self, rng=None, n_grid=20000):
        """sup over a probe grid of |g(x,v)| M(v); finite for any member."""
        rng = np.random.default_rng(0) if rng is None else rng
        v = rng.standard_normal((n_grid, self.d)) * 2.0
        x = rng.random((n_grid, self.d))
        return float(np.max(np.abs(self(x, v)) * maxwellian(v)))


# ---------------------------------------------------------------------------
# Factories
# ---------------------------------------------------------------------------


def hermite(nvec) -> TestFunction:
    nvec = tuple(int(n) for n in nvec)
    d = len(nvec)
    return TestFunction(d, [_Term(1.0, (0,) * d, "1", nvec)])


def fourier_hermite(kvec, nvec, part="c") -> TestFunction:
    kvec = tuple(int(k) for k in kvec)
    nvec = tuple(int(n) for n in nvec)
    if part not in ("c", "s"):
        raise ValueError("part must be 'c' or 's'")
    if all(k == 0 for k in kvec):
        raise ValueError("use hermite() for the zero Fourier mode")
    return TestFunction(len(nvec), [_Term(1.0, kvec, part, nvec)])


def constant(c, d) -> TestFunction:
    return TestFunction(d, [_Term(float(c), (0,) * d, "1", (0,) * d)])


def velocity_coordinate(axis, d) -> TestFunction:
    nvec = tuple(1 if i == axis else 0 for i in range(d))
    return hermite(nvec)


def speed_squared(d) -> TestFunction:
    # |v|^2 = sum_i (sqrt(2) he_2(v_i) + 1)
    terms = [_Term(float(d), (0,) * d, "1", (0,) * d)]
    for i in range(d):
        nvec = tuple(2 if j == i else 0 for j in range(d))
        terms.append(_Term(np.sqrt(2.0), (0,) * d, "1", nvec))
    return TestFunction(d, terms)


def collision_invariants(d):
    """1, v_1..v_d, |v|^2: the kernel of both collision operators."""
    return [constant(1.0, d)] + [velocity_coordinate(i, d) for i in range(d)] \
        + [speed_squared(d)]


def gauss_hermite_nodes(order, d=1):
    """Nodes/weights for E_{v ~ M}[f(v)] as a tensor Gauss-Hermite rule."""
    t, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / np.sqrt(2.0 * np.pi)
    if d == 1:
        return t[:, None], w
    grids = np.meshgrid(*([t] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(nodes.shape[0])
    wg = np.meshgrid(*([w] * d), indexing="ij")
    for g in wg:
        weights *= g.ravel()
    return nodes, weights
