"""Perfect-CSI weighted-sum-rate maximization by sequential convex approximation.

The rate problem is rewritten with auxiliaries ``t`` and ``mu``:

    max  prod_u t_u
    s.t. Re(h_u w_u) >= sqrt((t_u^(1/a_u) - 1) mu_u),  Im(h_u w_u) = 0,
         sigma^2 + sum_{v != u} |h_{bs(v),u} w_v|^2 <= mu_u,
         per-BS power budgets.

The right-hand side of the signal constraint is concave, so it is replaced by
its tangent plane at the current ``(t, mu)``. Each step is a conic program,
and the tangent point moves to the step's optimum, which makes the certified
rate nondecreasing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .conic import ConicProgram, CExpr, concat, geometric_mean_objective, squared_norm_soc
from .model import BeamformerSet, ChannelSet, NetworkConfig
from .solver import INFEASIBLE, SolverError, SolverOptions, solve

WEIGHT_MARGIN = 1e-3


class SingularityError(ValueError):
    """Tangent point with ``t <= 1``, where the bound has no finite gradient."""


@dataclass(frozen=True)
class SCAOptions:
    max_iters: int = 50
    tol_obj: float = 1e-4
    eps_t: float = 1e-3
    seed: int = 0
    restarts: int = 10
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")
        if self.tol_obj <= 0 or self.eps_t <= 0:
            raise ValueError("tol_obj and eps_t must be positive")


@dataclass
class SCAState:
    t: np.ndarray
    mu: np.ndarray
    n: int = 0
    history: list = field(default_factory=list)
    eps_t: float = 1e-3

    def __post_init__(self):
        self.t = np.maximum(np.asarray(self.t, dtype=float), 1.0 + self.eps_t)
        self.mu = np.asarray(self.mu, dtype=float)
        if np.any(self.mu <= 0):
            raise ValueError("mu must be positive")

    def advance(self, t, mu, objective):
        self.t = np.maximum(np.asarray(t, dtype=float), 1.0 + self.eps_t)
        self.mu = np.maximum(np.asarray(mu, dtype=float), 1e-12)
        self.history.append(float(objective))
        self.n += 1


def scaled_weights(alpha):
    """``alpha' = alpha (1 + 1e-3) / min(alpha)`` so every exponent ``1/alpha'`` is below 1."""
    alpha = np.asarray(alpha, dtype=float)
    return alpha * (1.0 + WEIGHT_MARGIN) / alpha.min()


def certified_rate(t, cfg):
    """``sum alpha log2(t^(1/alpha'))``: the rate every feasible point guarantees."""
    a = np.asarray(cfg.alpha)
    return float(np.sum(a / scaled_weights(a) * np.log2(np.asarray(t, dtype=float))))


def signal_bound(t, mu, alpha):
    """Exact ``sqrt((t^(1/alpha) - 1) mu)``."""
    return np.sqrt((np.asarray(t, dtype=float) ** (1.0 / alpha) - 1.0) * mu)


def taylor_coefficients(t_n, mu_n, alpha):
    """(value, d/dt, d/dmu) of ``sqrt((t^(1/alpha) - 1) mu)`` at ``(t_n, mu_n)``."""
    if t_n <= 1.0:
        raise SingularityError(f"tangent point t={t_n} must exceed 1")
    if mu_n <= 0:
        raise ValueError("mu_n must be positive")
    s = t_n ** (1.0 / alpha) - 1.0
    val = math.sqrt(s * mu_n)
    d_t = t_n ** (1.0 / alpha - 1.0) / (2.0 * alpha) * math.sqrt(mu_n / s)
    d_mu = 0.5 * math.sqrt(s / mu_n)
    return val, d_t, d_mu


def taylor_upper_bound(t_n, mu_n, alpha, t_var, mu_var):
    """Tangent plane of the concave signal bound; affine in ``(t_var, mu_var)``.

    Works on numbers or on :class:`~robust_wsrm.conic.Expr` operands.
    """
    val, d_t, d_mu = taylor_coefficients(t_n, mu_n, alpha)
    return d_t * (t_var - t_n) + d_mu * (mu_var - mu_n) + val


@dataclass
class IterationProblem:
    """A per-iteration program and handles to the quantities the driver reads back."""

    prog: ConicProgram
    w: CExpr
    t: object
    mu: object
    extras: dict = field(default_factory=dict)


def base_problem(cfg, state, power=True):
    """Variables ``w, t, mu``, the product objective and the shared constraints.

    Returns the program, the handles, and the list of tangent-plane expressions
    ``f_u`` used as signal thresholds.
    """
    prog = ConicProgram()
    K, T = cfg.K, cfg.T
    w = prog.complex_variable((K, T), "w")
    t = prog.variable(K, "t")
    mu = prog.variable(K, "mu")
    g = geometric_mean_objective(prog, [t[u] for u in range(K)], "g")
    prog.maximize(g)
    prog.add_nonneg(t - (1.0 + state.eps_t), "t_guard")
    alpha = scaled_weights(cfg.alpha)
    f = [taylor_upper_bound(state.t[u], state.mu[u], alpha[u], t[u], mu[u]) for u in range(K)]
    if power:
        for b in range(cfg.B):
            idx = cfg.users_of(b)
            prog.add_soc(math.sqrt(cfg.P[b]), concat([w.re[idx].ravel(), w.im[idx].ravel()]), f"power{b}")
    ip = IterationProblem(prog, w, t, mu)
    ip.extras["f"] = f
    return ip, f


def interference_amplitudes(h, w, cfg, u):
    """Complex amplitudes ``h_{bs(v),u} w_v`` for every interferer ``v != u``."""
    bs = cfg.serving_bs
    amps = [h[bs[v], u] @ w[v] for v in range(cfg.K) if v != u]
    return amps


def build_iteration_problem(channels, cfg, state):
    """Convex program for one tangent point ``(state.t, state.mu)``."""
    h = channels.h if isinstance(channels, ChannelSet) else np.asarray(channels)
    ip, f = base_problem(cfg, state)
    prog, w, mu = ip.prog, ip.w, ip.mu
    bs = cfg.serving_bs
    for u in range(cfg.K):
        amp = h[bs[u], u] @ w[u]
        prog.add_nonneg(amp.real - f[u], f"signal{u}")
        prog.add_eq(amp.imag, f"phase{u}")
        others = interference_amplitudes(h, w, cfg, u)
        if others:
            vec = concat([concat([a.real.reshape(1), a.imag.reshape(1)]) for a in others])
            prog.add_soc(squared_norm_soc(vec, mu[u] - cfg.sigma2), name=f"interf{u}")
        else:
            prog.add_nonneg(mu[u] - cfg.sigma2, f"interf{u}")
    return ip


def random_state(cfg, rng, eps_t):
    return SCAState(
        t=rng.uniform(1.1, 2.0, cfg.K),
        mu=rng.uniform(cfg.sigma2, cfg.sigma2 + sum(cfg.P), cfg.K),
        eps_t=eps_t,
    )


def fallback_state(cfg, eps_t):
    """Tangent point of the ``w ~ 0`` solution: ``t = 1 + eps``, ``mu = sigma^2``.

    There the tangent plane at ``t = 1 + eps`` is as low as it gets, so any
    beam with a small positive margin is feasible.
    """
    return SCAState(t=np.full(cfg.K, 1.0 + eps_t), mu=np.full(cfg.K, cfg.sigma2), eps_t=eps_t)


@dataclass
class SCAResult:
    beams: BeamformerSet
    state: SCAState
    objective: float
    converged: bool
    iterations: int
    restarts: int
    wall_time: float
    extras: dict = field(default_factory=dict)

    @property
    def history(self):
        return list(self.state.history)


def _initial_states(channels, cfg, opts, rng):
    for _ in range(opts.restarts):
        yield random_state(cfg, rng, opts.eps_t)
    yield fallback_state(cfg, opts.eps_t)


def run_sca(build, channels, cfg, opts=None, finalize=None, step=None):
    """Generic SCA driver shared by the nominal, robust and sampled designs.

    ``build(state)`` returns an :class:`IterationProblem`. A start whose first
    program is not solved to optimality is discarded and a fresh random tangent
    point is drawn; after ``opts.restarts`` random draws one deterministic
    fallback start is tried. ``finalize(solution, problem)`` may attach extra
    outputs (e.g. rank reports) and may replace the beamformers. ``step(state,
    solver_opts)`` may replace the build-then-solve step; it returns
    ``(solution, problem)``.
    """
    opts = opts or SCAOptions()
    if step is None:
        def step(st, sopts):
            ip = build(st)
            return solve(ip.prog, sopts), ip
    rng = np.random.default_rng(opts.seed)
    t0 = time.perf_counter()
    last_status = None
    for attempt, state in enumerate(_initial_states(channels, cfg, opts, rng)):
        sol, ip = step(state, opts.solver)
        if not sol.optimal:
            last_status = sol.status
            continue
        converged = False
        while True:
            t_val, mu_val = sol.value(ip.t), sol.value(ip.mu)
            w_val = sol.value(ip.w)
            kept = (sol, ip, w_val)
            obj = certified_rate(t_val, cfg)
            prev = state.history[-1] if state.history else None
            state.advance(t_val, mu_val, obj)
            if prev is not None and abs(obj - prev) <= opts.tol_obj * max(abs(prev), 1e-9):
                converged = True
                break
            if state.n >= opts.max_iters:
                break
            sol_next, ip_next = step(state, opts.solver)
            if not sol_next.optimal:
                # the previous optimum stays feasible, so this is numerical trouble: stop here
                break
            sol, ip = sol_next, ip_next
        sol, ip, w_val = kept
        beams = BeamformerSet(np.asarray(w_val), {"restart": attempt})
        extras = {"t": state.t.copy(), "mu": state.mu.copy(),
                  "threshold": np.array([float(sol.value(fu)) for fu in ip.extras.get("f", [])])}
        if finalize is not None:
            beams, more = finalize(sol, ip, beams)
            extras.update(more)
        return SCAResult(beams, state, state.history[-1], converged, state.n, attempt,
                         time.perf_counter() - t0, extras)
    raise SolverError(last_status or INFEASIBLE,
                      f"no start produced a solvable program after {opts.restarts} restarts (last: {last_status})")


def run(channels, cfg, opts=None):
    """Perfect-CSI design; returns an :class:`SCAResult`."""
    return run_sca(lambda s: build_iteration_problem(channels, cfg, s), channels, cfg, opts)
