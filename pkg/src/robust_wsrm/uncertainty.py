"""Channel-error sets formed by intersecting ellipsoids.

An error ``delta`` is a complex row vector of length ``T``. The set is
``{delta : delta P_q delta^H <= rho, q = 1..Q}``. Box, polyhedral and
single-ellipsoid sets are special cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MEMBERSHIP_TOL = 1e-9
MAX_PROPOSALS = 10**6


class BoundednessError(ValueError):
    """Sum of the shape matrices is singular, so the set is unbounded."""


def _hermitian(m):
    return 0.5 * (m + m.conj().swapaxes(-1, -2))


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    P: np.ndarray  # (Q, T, T) Hermitian PSD
    rho: float
    kind: str = "ellipsoids"

    def __post_init__(self):
        P = np.asarray(self.P, dtype=complex)
        if P.ndim == 2:
            P = P[None]
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise ValueError("P must be a stack of square matrices")
        if not np.allclose(P, P.conj().swapaxes(1, 2), atol=1e-12):
            raise ValueError("P matrices must be Hermitian")
        P = _hermitian(P)
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if min(np.linalg.eigvalsh(p)[0] for p in P) < -1e-9:
            raise ValueError("P matrices must be positive semidefinite")
        if np.linalg.eigvalsh(P.sum(axis=0))[0] <= 1e-9:
            raise BoundednessError("sum of P matrices is singular; the set is unbounded")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def Q(self):
        return self.P.shape[0]

    @property
    def T(self):
        return self.P.shape[1]

    @property
    def Z_tilde(self):
        """Normalized shape matrices ``P_q / rho``."""
        return self.P / self.rho

    def with_rho(self, rho):
        return UncertaintySet(self.P, rho, self.kind)

    def quad_forms(self, delta):
        """``delta P_q delta^H`` for every q; ``delta`` may be batched ``(..., T)``."""
        delta = np.asarray(delta)
        if delta.shape[-1] != self.T:
            raise ValueError(f"delta has length {delta.shape[-1]}, set dimension is {self.T}")
        return np.einsum("...i,qij,...j->...q", delta, self.P, delta.conj()).real

    def slack(self, delta):
        """``rho - max_q delta P_q delta^H`` (negative outside)."""
        return self.rho - self.quad_forms(delta).max(axis=-1)

    def contains(self, delta, tol=MEMBERSHIP_TOL):
        return np.all(self.quad_forms(delta) <= self.rho * (1.0 + tol) + 1e-300, axis=-1)

    def boundary_scale(self, delta):
        """Largest ``s`` with ``s * delta`` in the set (``inf`` for ``delta = 0``)."""
        worst = self.quad_forms(delta).max(axis=-1)
        with np.errstate(divide="ignore"):
            return np.sqrt(self.rho / worst)


def make_box(T, rho, theta=None):
    """``|delta_q| <= sqrt(rho / theta_q)`` per coordinate."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    theta = np.ones(T) if theta is None else np.broadcast_to(np.asarray(theta, dtype=float), (T,))
    if np.any(theta <= 0):
        raise ValueError("theta must be positive")
    P = np.zeros((T, T, T), dtype=complex)
    for q in range(T):
        P[q, q, q] = theta[q]
    return UncertaintySet(P, rho, "box")


def make_polyhedral(xi, rho):
    """``|delta xi_q| <= sqrt(rho)`` for each column vector ``xi_q``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    xi = [np.asarray(v, dtype=complex).ravel() for v in xi]
    if any(np.linalg.norm(v) == 0 for v in xi):
        raise ValueError("polyhedral directions must be nonzero")
    P = np.stack([np.outer(v, v.conj()) for v in xi])
    return UncertaintySet(P, rho, "polyhedral")


def make_ellipsoids(P, rho):
    return UncertaintySet(np.asarray(P, dtype=complex), rho, "ellipsoids")


def random_ellipsoids(T, Q, rho, rng, spread=1.0):
    """Q random full-dimensional ellipsoids whose intersection sits inside the box.

    Each ``P_q = I + A A^H`` with a random complex ``A``, so ``P_q >= I`` and each
    ellipsoid lies within ``|delta_i| <= sqrt(rho)``.
    """
    mats = []
    for _ in range(Q):
        A = spread * (rng.standard_normal((T, T)) + 1j * rng.standard_normal((T, T))) / np.sqrt(2 * T)
        mats.append(np.eye(T) + A @ A.conj().T)
    return UncertaintySet(np.stack(mats), rho, "ellipsoids")


def membership(uset, delta, return_slack=False):
    """True iff ``delta P_q delta^H <= rho (1 + 1e-9)`` for all q."""
    inside = bool(uset.contains(np.asarray(delta)))
    if return_slack:
        return inside, float(uset.slack(np.asarray(delta)))
    return inside


def complex_ball(rng, n, dim):
    """Uniform samples from the unit ball of C^dim (as R^(2 dim))."""
    g = rng.standard_normal((n, 2 * dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(n) ** (1.0 / (2 * dim))
    g *= r[:, None]
    return g[:, :dim] + 1j * g[:, dim:]


def complex_sphere(rng, n, dim):
    g = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _bounding_map(uset):
    """Row-vector map taking the unit ball onto ``{delta (sum P) delta^H <= Q rho}``."""
    S = uset.P.sum(axis=0) / (uset.Q * uset.rho)
    vals, vecs = np.linalg.eigh(S)
    return (vecs / np.sqrt(vals)) @ vecs.conj().T


def sample(uset, n, rng, mode="interior"):
    """Draw ``n`` members of the set, shape ``(n, T)``.

    ``interior``: rejection sampling from the bounding ellipsoid
    ``delta (sum_q P_q) delta^H <= Q rho``. ``boundary_biased``: each accepted
    draw is pushed radially to the boundary. After ``MAX_PROPOSALS`` proposals
    the remainder is filled by the boundary construction.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode not in ("interior", "boundary_biased"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    T = uset.T
    if uset.rho == 0:
        return np.zeros((n, T), dtype=complex)
    M = _bounding_map(uset)
    got, proposed = [], 0
    count = 0
    while count < n and proposed < MAX_PROPOSALS:
        batch = min(max(4 * (n - count), 256), MAX_PROPOSALS - proposed)
        z = complex_ball(rng, batch, T) @ M
        proposed += batch
        keep = z[uset.contains(z)]
        got.append(keep)
        count += len(keep)
    out = np.concatenate(got)[:n] if got else np.zeros((0, T), dtype=complex)
    if len(out) < n:
        dirs = complex_sphere(rng, n - len(out), T)
        out = np.concatenate([out, dirs])
        mode_fill = np.arange(len(out)) >= len(out) - len(dirs)
    else:
        mode_fill = np.zeros(len(out), bool)
    if mode == "boundary_biased" or mode_fill.any():
        scale = uset.boundary_scale(out)
        scale = np.where(np.isfinite(scale), scale, 0.0)
        if mode == "boundary_biased":
            out = out * scale[:, None]
        else:
            out[mode_fill] *= scale[mode_fill, None]
        # rounding can leave a point a hair outside
        fix = ~uset.contains(out)
        if fix.any():
            out[fix] *= uset.boundary_scale(out[fix])[:, None]
    return out


def link_set(sets, n, u):
    """Uncertainty set of the link from BS ``n`` to user ``u``.

    ``sets`` is one :class:`UncertaintySet` shared by all links, a nested
    ``sets[n][u]`` structure, or a callable ``sets(n, u)``.
    """
    if sets is None or isinstance(sets, UncertaintySet):
        return sets
    if callable(sets):
        return sets(n, u)
    return sets[n][u]


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """``{x = E' u + c : ||u|| <= 1}`` in column coordinates.

    A row error ``delta`` corresponds to the column point ``x = delta^H``, so
    ``delta M delta^H = x^H M x`` for any Hermitian ``M``.
    """

    generator: np.ndarray
    center: np.ndarray | None = None

    def __post_init__(self):
        E = np.atleast_2d(np.asarray(self.generator))
        if E.shape[0] != E.shape[1]:
            raise ValueError("generator must be square")
        c = np.zeros(E.shape[0], dtype=E.dtype) if self.center is None else np.asarray(self.center).ravel()
        if c.shape != (E.shape[0],):
            raise ValueError("center has the wrong length")
        object.__setattr__(self, "generator", E)
        object.__setattr__(self, "center", c)

    @classmethod
    def from_quadratic(cls, Et, center=None):
        """From ``{x : (x-c)^H Et (x-c) <= 1}``; uses the Hermitian root ``Et^{-1/2}``."""
        Et = np.asarray(Et)
        vals, vecs = np.linalg.eigh(0.5 * (Et + Et.conj().T))
        if vals[0] <= 0:
            raise ValueError("quadratic form must be positive definite")
        E = (vecs / np.sqrt(vals)) @ vecs.conj().T
        if not np.iscomplexobj(Et):
            E = E.real
        return cls(E, center)

    @property
    def dim(self):
        return self.generator.shape[0]

    @property
    def is_complex(self):
        return np.iscomplexobj(self.generator) or np.iscomplexobj(self.center)

    @property
    def quadratic(self):
        G = self.generator @ self.generator.conj().T
        if np.linalg.cond(G) > 1e14:
            raise ValueError("flat ellipsoid: generator is singular")
        return np.linalg.inv(G)

    def log_volume(self):
        """``log|det E'|`` per real dimension pair (complex) or per dimension (real)."""
        return float(np.linalg.slogdet(self.generator)[1])

    def form(self, x):
        d = np.asarray(x) - self.center
        return np.einsum("...i,ij,...j->...", d.conj(), self.quadratic, d).real

    def contains(self, x, tol=1e-9):
        return self.form(x) <= 1.0 + tol

    def contains_row(self, delta, tol=1e-9):
        return self.contains(np.asarray(delta).conj(), tol)

    def boundary(self, rng, n):
        """``n`` points on the surface, column coordinates, shape ``(n, dim)``."""
        if self.is_complex:
            u = complex_sphere(rng, n, self.dim)
        else:
            u = rng.standard_normal((n, self.dim))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u @ self.generator.T + self.center

    def scaled(self, s):
        return Ellipsoid(self.generator * s, self.center)
