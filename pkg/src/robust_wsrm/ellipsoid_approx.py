"""Extremal ellipsoids for intersections of ellipsoids.

An outer ellipsoid is described by ``{x : ||F (x - d)|| <= 1}`` with
``F = Et^(1/2)``; this also covers degenerate cylinders such as a single
coordinate bound of a box. The inner ellipsoid ``{A u + a : ||u|| <= 1}`` fits
inside iff, for some ``lambda >= 0``,

    [[I,              F (a - d),  F A       ],
     [(F (a - d))^H,  1 - lambda, 0         ],
     [(F A)^H,        0,          lambda I  ]]  >= 0.

Volume is maximized through ``det(A)^(1/n)`` using a triangular factor and a
geometric-mean tree, so only SOC and PSD cones are needed.
"""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np

from .conic import CExpr, ConicProgram, Expr, bmat, geometric_mean_objective
from .robust_first import psd_sqrt
from .solver import SolverError, SolverOptions, solve
from .uncertainty import Ellipsoid, UncertaintySet


def symmetric_variable(prog, m, name="S"):
    """Real symmetric ``m x m`` matrix expression with ``m (m + 1) / 2`` parameters."""
    iu = np.triu_indices(m)
    x = prog.variable(len(iu[0]), name)
    n = prog.n
    coef = np.zeros((m, m, n))
    c = x.padded(n).coef
    for k, (i, j) in enumerate(zip(*iu)):
        coef[i, j] = c[k]
        coef[j, i] = c[k]
    return Expr(coef, np.zeros((m, m)))


def _lower_factor(prog, m, complex_field, name):
    """Lower-triangular ``L`` with a real diagonal, and ``diag(L)`` as a matrix."""
    diag = prog.variable(m, name + ".diag")
    il = np.tril_indices(m, -1)
    off_re = prog.variable(len(il[0]), name + ".re") if len(il[0]) else None
    off_im = prog.variable(len(il[0]), name + ".im") if (len(il[0]) and complex_field) else None
    n = prog.n
    re = np.zeros((m, m, n))
    im = np.zeros((m, m, n))
    dg = np.zeros((m, m, n))
    d = diag.padded(n).coef
    for i in range(m):
        re[i, i] = d[i]
        dg[i, i] = d[i]
    for part, out in ((off_re, re), (off_im, im)):
        if part is not None:
            c = part.padded(n).coef
            for k, (i, j) in enumerate(zip(*il)):
                out[i, j] = c[k]
    zero = np.zeros((m, m))
    return CExpr(Expr(re, zero), Expr(im, zero)), Expr(dg, zero), [diag[i] for i in range(m)]


def containment_lmi(prog: ConicProgram, A, a, F, d, name="contain"):
    """Emit the LMI forcing ``{A u + a}`` inside ``{x : ||F (x - d)|| <= 1}``.

    ``A``/``a`` are (complex or real) expressions, ``F``/``d`` numeric.
    Returns the multiplier.
    """
    F = np.asarray(F)
    m = F.shape[0]
    lam = prog.variable((), name + ".lam")
    prog.add_nonneg(lam, name + ".lam_pos")
    shift = F @ (a - np.asarray(d))
    FA = F @ A
    lam11 = lam.reshape(1, 1)
    blocks = [
        [np.eye(m), shift.reshape(m, 1), FA],
        [None, 1.0 - lam11, None],
        [None, None, lam * np.eye(A.shape[1])],
    ]
    is_complex = isinstance(A, CExpr) or isinstance(a, CExpr) or np.iscomplexobj(F) or np.iscomplexobj(d)
    if is_complex:
        shift_h = shift.H if isinstance(shift, CExpr) else shift.conj().T
        blocks[1][0] = shift_h.reshape(1, m) if isinstance(shift_h, CExpr) else shift_h
        blocks[2][0] = FA.H
        prog.add_hermitian_psd(bmat(blocks), name)
    else:
        blocks[1][0] = shift.reshape(1, m)
        blocks[2][0] = FA.T
        prog.add_psd(bmat(blocks), name)
    return lam


def _outer_factors(target):
    """``[(F, d), ...]`` and field flag for an :class:`UncertaintySet` or ellipsoid list."""
    if isinstance(target, UncertaintySet):
        return [(psd_sqrt(p / target.rho), np.zeros(target.T, dtype=complex)) for p in target.P], True
    outs, cplx = [], False
    for ell in target:
        if isinstance(ell, Ellipsoid):
            outs.append((psd_sqrt(ell.quadratic), ell.center))
            cplx |= ell.is_complex
        else:
            Et, c = ell
            outs.append((psd_sqrt(np.asarray(Et)), np.asarray(c)))
            cplx |= np.iscomplexobj(Et) or np.iscomplexobj(c)
    return outs, cplx


def max_volume_inner_ellipsoid(target, centered=None, opts: SolverOptions | None = None):
    """Largest-volume ellipsoid inside an intersection of ellipsoids.

    ``target`` is an :class:`UncertaintySet` (complex, centred at the origin)
    or a list of :class:`Ellipsoid` / ``(Et, center)`` pairs. For uncertainty
    sets the problem is solved at ``rho = 1`` and rescaled by ``sqrt(rho)``.
    ``centered`` pins the centre at the origin (default: only for uncertainty
    sets, which are symmetric about it).
    """
    if isinstance(target, UncertaintySet):
        if target.rho <= 0:
            raise ValueError("set has empty interior (rho = 0)")
        unit = _unit_inner(target.P.tobytes(), target.P.shape, opts)
        return unit.scaled(np.sqrt(target.rho))
    outs, cplx = _outer_factors(target)
    return _solve_inner(outs, cplx, bool(centered), opts)


@lru_cache(maxsize=256)
def _unit_inner(p_bytes, shape, opts):
    P = np.frombuffer(p_bytes, dtype=complex).reshape(shape)
    outs = [(psd_sqrt(p), np.zeros(shape[1], dtype=complex)) for p in P]
    return _solve_inner(outs, True, True, opts)


def _solve_inner(outs, cplx, centered, opts):
    m = outs[0][0].shape[0]
    prog = ConicProgram()
    if cplx:
        A = prog.hermitian_variable(m, "A")
        a = CExpr.constant(np.zeros(m, dtype=complex), prog.n) if centered else prog.complex_variable(m, "a")
    else:
        A = symmetric_variable(prog, m, "A")
        a = Expr.constant(np.zeros(m), prog.n) if centered else prog.variable(m, "a")
    L, Dg, diag = _lower_factor(prog, m, cplx, "L")
    if cplx:
        prog.add_hermitian_psd(bmat([[A, L], [L.H, Dg]]), "logdet")
    else:
        prog.add_psd(bmat([[A, L.re], [L.re.T, Dg]]), "logdet")
    for i in range(m):
        prog.add_nonneg(diag[i], f"L.diag{i}")
    g = geometric_mean_objective(prog, diag, "vol")
    prog.maximize(g)
    for q, (F, d) in enumerate(outs):
        containment_lmi(prog, A, a, F, d, f"contain{q}")
    sol = solve(prog, opts or SolverOptions())
    if not sol.optimal:
        raise SolverError(sol.status, f"inscribed-ellipsoid SDP ended with status {sol.status}")
    Av = np.asarray(sol.value(A))
    av = np.asarray(sol.value(a))
    Av = 0.5 * (Av + Av.conj().T)
    if not cplx:
        Av, av = Av.real, av.real
    return Ellipsoid(Av, av)


def lfj_inflate(ell: Ellipsoid, dim=None, symmetric=True):
    """Scale the generator by ``sqrt(dim)`` about the centre.

    ``dim`` defaults to the ellipsoid's dimension. The cover guarantee needs a
    centrally symmetric set; ``symmetric=False`` only warns.
    """
    if not symmetric:
        warnings.warn("LFJ inflation needs a centrally symmetric set; the cover may fail", stacklevel=2)
    dim = ell.dim if dim is None else dim
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return Ellipsoid(ell.generator * np.sqrt(dim), ell.center)


def generator_to_quadratic(ell: Ellipsoid):
    """``(Et, c)`` with ``Et = (E' E'^H)^(-1)``; a singular generator is an error."""
    return ell.quadratic, ell.center


def quadratic_to_generator(Et, center=None):
    return Ellipsoid.from_quadratic(Et, center)


def contains_ellipsoid(outer, inner: Ellipsoid, opts: SolverOptions | None = None):
    """Decide ``inner`` within ``outer`` by feasibility of the containment LMI."""
    outs, _ = _outer_factors([outer])
    F, d = outs[0]
    prog = ConicProgram()
    A = inner.generator
    lam = containment_lmi(prog, _const(prog, A), _const(prog, inner.center), F, d)
    prog.maximize(-lam)
    sol = solve(prog, opts or SolverOptions())
    return sol.optimal


def _const(prog, v):
    v = np.asarray(v)
    if np.iscomplexobj(v):
        return CExpr.constant(v, prog.n)
    return Expr.constant(v, prog.n)
