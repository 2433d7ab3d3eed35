"""Solve :class:`~robust_wsrm.conic.ConicProgram` instances.

Two interior-point backends sit behind the same contract: Clarabel (default)
and CVXOPT's ``conelp``. Both accept the {zero, nonnegative, second-order,
PSD} cones the IR emits.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .conic import ConicProgram

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"
ITERATION_LIMIT = "iteration_limit"

_SQRT2 = np.sqrt(2.0)


class SolverError(RuntimeError):
    """Raised by callers that need an optimal solve and did not get one."""

    def __init__(self, status, message=""):
        super().__init__(message or f"solver returned status {status}")
        self.status = status


@dataclass(frozen=True)
class SolverOptions:
    tol_gap: float = 1e-7
    tol_feas: float = 1e-7
    max_iterations: int = 200
    backend: str = "clarabel"
    fallback: str | None = "cvxopt"

    def __post_init__(self):
        if self.tol_gap <= 0 or self.tol_feas <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for b in (self.backend, self.fallback):
            if b is not None and b not in BACKENDS:
                raise ValueError(f"unknown backend {b!r}")


@dataclass
class Solution:
    status: str
    x: np.ndarray | None
    objective: float = float("nan")
    dual_objective: float = float("nan")
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    solve_time: float = 0.0
    backend: str = ""
    raw_status: str = ""

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def value(self, expr):
        if self.x is None:
            raise SolverError(self.status, "no primal point available")
        return expr.value(self.x)


def _svec_index(m):
    rows, cols, scale = [], [], []
    for j in range(m):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
            scale.append(1.0 if i == j else _SQRT2)
    return np.array(rows), np.array(cols), np.array(scale)


def _block_rows(block, n, full_psd=False):
    """(coef, const) rows for a block in slack form ``s = const + coef x``."""
    e = block.expr.padded(n)
    if block.kind != "psd":
        return e.coef, e.const
    m = e.shape[0]
    if full_psd:
        # column-major full vectorization (CVXOPT)
        return e.coef.transpose(1, 0, 2).reshape(m * m, n), e.const.T.reshape(m * m)
    r, c, s = _svec_index(m)
    return e.coef[r, c] * s[:, None], e.const[r, c] * s


def primal_violation(prog: ConicProgram, x):
    """Largest cone violation of ``x`` over all blocks (absolute units)."""
    worst = 0.0
    for b in prog.blocks:
        v = b.expr.value(x)
        if b.kind == "eq":
            viol = float(np.max(np.abs(v)))
        elif b.kind == "nonneg":
            viol = float(max(0.0, -np.min(v)))
        elif b.kind == "soc":
            viol = float(max(0.0, np.linalg.norm(v[1:]) - v[0]))
        else:
            viol = float(max(0.0, -np.linalg.eigvalsh(0.5 * (v + v.T))[0]))
        worst = max(worst, viol)
    return worst


def _solve_clarabel(prog, opts):
    import clarabel

    n = prog.n
    coefs, consts, cones = [], [], []
    for b in prog.blocks:
        coef, const = _block_rows(b, n)
        coefs.append(-coef)
        consts.append(const)
        if b.kind == "eq":
            cones.append(clarabel.ZeroConeT(b.rows))
        elif b.kind == "nonneg":
            cones.append(clarabel.NonnegativeConeT(b.rows))
        elif b.kind == "soc":
            cones.append(clarabel.SecondOrderConeT(b.rows))
        else:
            cones.append(clarabel.PSDTriangleConeT(b.expr.shape[0]))
    A = sp.csc_matrix(np.vstack(coefs)) if coefs else sp.csc_matrix((0, n))
    rhs = np.concatenate(consts) if consts else np.zeros(0)
    obj = prog.objective.padded(n) if prog.objective is not None else None
    q = -obj.coef if obj is not None else np.zeros(n)
    P = sp.csc_matrix((n, n))

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = opts.tol_gap
    settings.tol_gap_rel = opts.tol_gap
    settings.tol_feas = opts.tol_feas
    settings.max_iter = opts.max_iterations
    settings.max_threads = 1
    sol = clarabel.DefaultSolver(P, q, A, rhs, cones, settings).solve()
    raw = str(sol.status)
    status = {
        "Solved": OPTIMAL,
        "PrimalInfeasible": INFEASIBLE,
        "DualInfeasible": UNBOUNDED,
        "AlmostPrimalInfeasible": INFEASIBLE,
        "AlmostDualInfeasible": UNBOUNDED,
        "MaxIterations": ITERATION_LIMIT,
        "MaxTime": ITERATION_LIMIT,
    }.get(raw, NUMERICAL_FAILURE)
    x = np.array(sol.x) if status in (OPTIMAL, NUMERICAL_FAILURE, ITERATION_LIMIT) else None
    const = obj.const if obj is not None else 0.0
    out = Solution(
        status=status,
        x=x,
        objective=-sol.obj_val + float(const),
        dual_objective=-sol.obj_val_dual + float(const),
        iterations=sol.iterations,
        solve_time=sol.solve_time,
        backend="clarabel",
        raw_status=raw,
    )
    out.residuals = {"primal": float(sol.r_prim), "dual": float(sol.r_dual),
                     "gap": abs(out.objective - out.dual_objective) / max(1.0, abs(out.objective))}
    return out


def _solve_cvxopt(prog, opts):
    import cvxopt
    from cvxopt import solvers

    n = prog.n
    groups = {"eq": [], "nonneg": [], "soc": [], "psd": []}
    for b in prog.blocks:
        groups[b.kind].append(b)
    G_rows, h_rows = [], []
    dims = {"l": 0, "q": [], "s": []}
    for b in groups["nonneg"]:
        coef, const = _block_rows(b, n)
        G_rows.append(-coef)
        h_rows.append(const)
        dims["l"] += b.rows
    for b in groups["soc"]:
        coef, const = _block_rows(b, n)
        G_rows.append(-coef)
        h_rows.append(const)
        dims["q"].append(b.rows)
    for b in groups["psd"]:
        coef, const = _block_rows(b, n, full_psd=True)
        G_rows.append(-coef)
        h_rows.append(const)
        dims["s"].append(b.expr.shape[0])
    obj = prog.objective.padded(n) if prog.objective is not None else None
    c = cvxopt.matrix(-obj.coef if obj is not None else np.zeros(n))
    G = cvxopt.matrix(np.vstack(G_rows)) if G_rows else cvxopt.matrix(np.zeros((0, n)))
    h = cvxopt.matrix(np.concatenate(h_rows)) if h_rows else cvxopt.matrix(np.zeros(0))
    kwargs = {}
    if groups["eq"]:
        rows = [_block_rows(b, n) for b in groups["eq"]]
        kwargs["A"] = cvxopt.matrix(np.vstack([r[0] for r in rows]))
        kwargs["b"] = cvxopt.matrix(-np.concatenate([r[1] for r in rows]))
    options = {"show_progress": False, "abstol": opts.tol_gap, "reltol": opts.tol_gap,
               "feastol": opts.tol_feas, "maxiters": opts.max_iterations}
    t0 = time.perf_counter()
    try:
        res = solvers.conelp(c, G, h, dims, options=options, **kwargs)
    except (ValueError, ArithmeticError) as exc:
        return Solution(NUMERICAL_FAILURE, None, backend="cvxopt", raw_status=str(exc),
                        solve_time=time.perf_counter() - t0)
    raw = res["status"]
    status = {"optimal": OPTIMAL, "primal infeasible": INFEASIBLE,
              "dual infeasible": UNBOUNDED}.get(raw, NUMERICAL_FAILURE)
    if raw == "unknown" and res.get("iterations", 0) >= opts.max_iterations:
        status = ITERATION_LIMIT
    x = np.array(res["x"]).ravel() if res["x"] is not None else None
    const = float(obj.const) if obj is not None else 0.0
    out = Solution(
        status=status,
        x=x,
        objective=-res["primal objective"] + const if res["primal objective"] is not None else float("nan"),
        dual_objective=-res["dual objective"] + const if res["dual objective"] is not None else float("nan"),
        iterations=res.get("iterations", 0),
        solve_time=time.perf_counter() - t0,
        backend="cvxopt",
        raw_status=raw,
    )
    out.residuals = {"primal": float(res.get("primal infeasibility") or 0.0),
                     "dual": float(res.get("dual infeasibility") or 0.0),
                     "gap": float(res.get("relative gap") or 0.0)}
    return out


BACKENDS = {"clarabel": _solve_clarabel, "cvxopt": _solve_cvxopt}


def solve(prog: ConicProgram, opts: SolverOptions | None = None) -> Solution:
    """Solve ``prog``; never raises on solver trouble, the status says what happened.

    When the primary backend stops short (numerical failure or iteration
    limit) and ``opts.fallback`` names another backend, that one gets a try.
    """
    opts = opts or SolverOptions()
    if prog.n == 0:
        raise ValueError("program has no variables")
    sol = BACKENDS[opts.backend](prog, opts)
    if sol.status in (NUMERICAL_FAILURE, ITERATION_LIMIT) and opts.fallback not in (None, opts.backend):
        alt = BACKENDS[opts.fallback](prog, opts)
        if alt.status != NUMERICAL_FAILURE:
            return alt
    return sol
