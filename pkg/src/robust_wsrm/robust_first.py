"""First robust design: conic duality for the signal term, S-procedure LMIs for interference.

For a link with error set ``{delta : delta Zt_q delta^H <= 1}`` (``Zt_q = P_q / rho``):

* signal: ``min_delta Re(delta w) >= -sum_q lambda_q`` whenever
  ``w = -sum_q Zh_q v_q`` and ``||v_q|| <= lambda_q`` with ``Zh_q = Zt_q^(1/2)``;
* interference: ``|(hbar + delta) w|^2 <= beta`` for all members whenever

      [[beta - sum lambda_q, 0,                  hbar w],
       [0,                   sum lambda_q Zt_q,  w     ],
       [(hbar w)^*,          w^H,                1     ]]  >= 0,   lambda >= 0.

Both are safe for any number of ellipsoids and exact for one.
"""

from __future__ import annotations

import numpy as np

from .conic import ConicProgram, bmat, concat, squared_norm_soc
from .model import ChannelSet
from .sca import SCAOptions, base_problem, run_sca
from .uncertainty import link_set


def psd_sqrt(M):
    """Hermitian PSD square root; eigenvalues below zero are clamped."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("need a square matrix")
    if not np.allclose(M, M.conj().T, atol=1e-10 * max(1.0, np.abs(M).max())):
        raise ValueError("matrix is not Hermitian")
    vals, vecs = np.linalg.eigh(0.5 * (M + M.conj().T))
    if vals[0] < -1e-9 * max(1.0, abs(vals[-1])):
        raise ValueError("matrix is not positive semidefinite")
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    return root if np.iscomplexobj(M) else root.real


def dual_signal_constraints(prog: ConicProgram, w, uset, hbar, f, name="sig"):
    """``Re(hbar w) - sum lambda_q >= f`` protected over ``uset``; returns the multipliers.

    ``w`` is a complex expression of length T and ``f`` a real scalar
    expression. With ``rho = 0`` the nominal constraint is emitted.
    """
    amp = np.asarray(hbar) @ w
    if uset is None or uset.rho == 0:
        prog.add_nonneg(amp.real - f, name)
        return None
    Q, T = uset.Q, uset.T
    lam = prog.variable(Q, name + ".lam")
    # y_q = v_q / sqrt(rho), so w = -sum P_q^(1/2) y_q keeps O(1) coefficients
    y = prog.complex_variable((Q, T), name + ".v")
    prog.add_nonneg(amp.real - lam.sum() - f, name)
    recon = w
    sr = np.sqrt(uset.rho)
    for q in range(Q):
        recon = recon + psd_sqrt(uset.P[q]) @ y[q]
        prog.add_soc(lam[q], sr * concat([y.re[q], y.im[q]]), f"{name}.dual{q}")
    prog.add_eq(recon.real, name + ".re")
    prog.add_eq(recon.imag, name + ".im")
    return lam


def interference_lmi(prog: ConicProgram, hbar, w, uset, beta, name="int"):
    """Emit the LMI bounding ``|(hbar + delta) w|^2 <= beta`` over ``uset``.

    Works in the congruent form with middle block ``sum lambda_q P_q`` and
    border ``sqrt(rho) w``, which stays well scaled as ``rho`` shrinks.
    Returns the multipliers (``None`` when ``rho = 0``).
    """
    amp = np.asarray(hbar) @ w
    if uset is None or uset.rho == 0:
        prog.add_soc(squared_norm_soc(concat([amp.real.reshape(1), amp.imag.reshape(1)]), beta), name=name)
        return None
    Q, T = uset.Q, uset.T
    lam = prog.variable(Q, name + ".lam")
    prog.add_nonneg(lam, name + ".lam_pos")
    mid = sum(lam[q] * uset.P[q] for q in range(Q))
    corner = (beta - lam.sum()).reshape(1, 1)
    a = amp.reshape(1, 1)
    ws = np.sqrt(uset.rho) * w.reshape(T, 1)
    H = bmat([
        [corner, None, a],
        [None, mid, ws],
        [a.conj(), ws.H, np.ones((1, 1))],
    ])
    prog.add_hermitian_psd(H, name)
    return lam


def build_iteration_problem_first(channels_nominal, sets, cfg, state):
    """Per-iteration program of the first robust design.

    ``sets`` is one :class:`UncertaintySet` shared by every link or a nested
    ``sets[n][u]``. Each interfering pair gets its own slack ``beta``, and
    ``sigma^2 + sum beta <= mu`` per user.
    """
    h = channels_nominal.h if isinstance(channels_nominal, ChannelSet) else np.asarray(channels_nominal)
    ip, f = base_problem(cfg, state)
    prog, w, mu = ip.prog, ip.w, ip.mu
    bs = cfg.serving_bs
    for u in range(cfg.K):
        dual_signal_constraints(prog, w[u], link_set(sets, bs[u], u), h[bs[u], u], f[u], f"sig{u}")
        others = [v for v in range(cfg.K) if v != u]
        if not others:
            prog.add_nonneg(mu[u] - cfg.sigma2, f"agg{u}")
            continue
        beta = prog.variable(len(others), f"beta{u}")
        for i, v in enumerate(others):
            n = bs[v]
            interference_lmi(prog, h[n, u], w[v], link_set(sets, n, u), beta[i], f"int{u}.{v}")
        prog.add_nonneg(mu[u] - cfg.sigma2 - beta.sum(), f"agg{u}")
    return ip


def run_first(channels_nominal, sets, cfg, opts: SCAOptions | None = None):
    """First robust design; returns an :class:`~robust_wsrm.sca.SCAResult`."""
    return run_sca(lambda s: build_iteration_problem_first(channels_nominal, sets, cfg, s),
                   channels_nominal, cfg, opts)
