"""Second robust design: one approximating ellipsoid per link plus the S-lemma.

Each link's error set is replaced by its maximum-volume inscribed ellipsoid
(or that ellipsoid inflated by ``sqrt(T)``, which covers symmetric sets). For
``{delta : (delta - c) Ea (delta - c)^H <= 1}`` and ``W = w w^H``,

    |(hbar + delta) w|^2 <= beta  for all members
    <=>  [[-W, -W hbar^H], [-hbar W, beta - hbar W hbar^H]]
          - lam [[-Ea, Ea c^H], [c Ea, 1 - c Ea c^H]]  >= 0,  lam >= 0.

``W`` is relaxed to ``W >= w w^H`` (a Schur block), which keeps every bound
valid for the vector ``w`` used in the signal constraint.
"""

from __future__ import annotations

import math

import numpy as np

from .conic import ConicProgram, bmat, concat
from .ellipsoid_approx import lfj_inflate, max_volume_inner_ellipsoid
from .model import BeamformerSet, ChannelSet
from .sca import SCAOptions, base_problem, run_sca
from .solver import SolverOptions
from .uncertainty import Ellipsoid, UncertaintySet, link_set, sample

RANK_ONE_THRESHOLD = 1e-4
RANK_FLAG_THRESHOLD = 1e-2


def approximating_ellipsoid(uset: UncertaintySet, use_lfj=False, lfj_dim=None, opts=None):
    """Inscribed (or LFJ-inflated) ellipsoid of a link's error set, column coordinates."""
    inner = max_volume_inner_ellipsoid(uset, opts=opts)
    if not use_lfj:
        return inner
    return lfj_inflate(inner, lfj_dim or uset.T)


def row_quadratic(ell: Ellipsoid):
    """``(Ea, c_row)`` describing ``{delta : (delta - c) Ea (delta - c)^H <= 1}``."""
    return ell.quadratic, ell.center.conj()


def s_lemma_lmi(prog: ConicProgram, hbar, W, ell: Ellipsoid, beta, name="slem"):
    """Emit the S-lemma LMI for ``|(hbar + delta) w|^2 <= beta`` over ``ell``.

    Uses the congruence ``diag(sqrt(s) I, 1)`` with ``s = 1 / lambda_max(Ea)`` so
    the ellipsoid block is O(1) whatever the set's size. Returns the multiplier.
    """
    Ea, c = row_quadratic(ell)
    T = Ea.shape[0]
    s = 1.0 / np.linalg.eigvalsh(Ea)[-1]
    rs = math.sqrt(s)
    hb = np.asarray(hbar).reshape(1, T)
    lam = prog.variable((), name + ".lam")
    prog.add_nonneg(lam, name + ".lam_pos")
    Wh = W @ hb.conj().T  # (T, 1)
    hWh = hb @ Wh  # (1, 1)
    B = bmat([[-s * W, -rs * Wh], [-rs * Wh.H, beta.reshape(1, 1) - hWh]])
    c = c.reshape(1, T)
    A = np.block([[-s * Ea, rs * Ea @ c.conj().T], [rs * c @ Ea, 1.0 - c @ Ea @ c.conj().T]])
    A = 0.5 * (A + A.conj().T)
    prog.add_hermitian_psd(B - lam * A, name)
    return lam


def build_iteration_problem_second(channels_nominal, sets, cfg, state, use_lfj=False, ellipsoids=None):
    """Per-iteration program of the second robust design.

    ``ellipsoids`` may map ``(n, u)`` to a precomputed approximating ellipsoid;
    otherwise they are computed (and cached per set) here.
    """
    h = channels_nominal.h if isinstance(channels_nominal, ChannelSet) else np.asarray(channels_nominal)
    ellipsoids = ellipsoids if ellipsoids is not None else link_ellipsoids(sets, cfg, use_lfj)
    ip, f = base_problem(cfg, state, power=False)
    prog, w, mu = ip.prog, ip.w, ip.mu
    T = cfg.T
    bs = cfg.serving_bs
    Ws = []
    for v in range(cfg.K):
        W = prog.hermitian_variable(T, f"W{v}")
        wv = w[v].reshape(T, 1)
        prog.add_hermitian_psd(bmat([[W, wv], [wv.H, np.ones((1, 1))]]), f"couple{v}")
        Ws.append(W)
    for b in range(cfg.B):
        prog.add_nonneg(cfg.P[b] - _trace(Ws, cfg.users_of(b)), f"power{b}")
    for u in range(cfg.K):
        n = bs[u]
        ell = ellipsoids.get((n, u))
        amp = h[n, u] @ w[u]
        if ell is None:
            prog.add_nonneg(amp.real - f[u], f"sig{u}")
        else:
            _, c = row_quadratic(ell)
            amp = (h[n, u] + c) @ w[u]
            Aw = ell.generator.conj().T @ w[u]
            prog.add_soc(amp.real - f[u], concat([Aw.re, Aw.im]), f"sig{u}")
        others = [v for v in range(cfg.K) if v != u]
        if not others:
            prog.add_nonneg(mu[u] - cfg.sigma2, f"agg{u}")
            continue
        beta = prog.variable(len(others), f"beta{u}")
        for i, v in enumerate(others):
            m = bs[v]
            ell_i = ellipsoids.get((m, u))
            if ell_i is None:
                Wh = Ws[v] @ h[m, u].conj()
                prog.add_nonneg(beta[i] - (h[m, u] @ Wh).real, f"int{u}.{v}")
            else:
                s_lemma_lmi(prog, h[m, u], Ws[v], ell_i, beta[i], f"int{u}.{v}")
        prog.add_nonneg(mu[u] - cfg.sigma2 - beta.sum(), f"agg{u}")
    ip.extras["W"] = Ws
    return ip


def _trace(Ws, idx):
    out = 0.0
    for v in idx:
        for i in range(Ws[v].shape[0]):
            out = out + Ws[v].re[i, i]
    return out


def link_ellipsoids(sets, cfg, use_lfj=False, lfj_dim=None, opts=None):
    """``{(n, u): Ellipsoid}`` for every link with a nondegenerate set; one SDP per distinct set."""
    cache, out = {}, {}
    for n in range(cfg.B):
        for u in range(cfg.K):
            s = link_set(sets, n, u)
            if s is None or s.rho == 0:
                continue
            key = id(s)
            if key not in cache:
                cache[key] = approximating_ellipsoid(s, use_lfj, lfj_dim, opts)
            out[(n, u)] = cache[key]
    return out


def extract_beamformer(W, reference=None):
    """Principal component ``sqrt(l1) v1`` of ``W`` and the ratio ``l2 / l1``.

    With ``reference`` the vector is rotated to the reference's phase.
    """
    W = np.asarray(W)
    vals, vecs = np.linalg.eigh(0.5 * (W + W.conj().T))
    l1 = max(vals[-1], 0.0)
    l2 = max(vals[-2], 0.0) if len(vals) > 1 else 0.0
    w = math.sqrt(l1) * vecs[:, -1]
    if reference is not None:
        ip = np.vdot(w, reference)
        if abs(ip) > 0:
            w = w * ip / abs(ip)
    ratio = l2 / l1 if l1 > 0 else 1.0
    return w, float(ratio)


def rank_report(Wvals, w):
    ratios = []
    extracted = []
    for Wv, wv in zip(Wvals, w):
        e, r = extract_beamformer(Wv, wv)
        ratios.append(r)
        extracted.append(e)
    return np.array(ratios), np.array(extracted)


def robust_violation(beams, channels_nominal, sets, cfg, threshold, mu, rng, n_samples=1000):
    """Largest relative violation of the robust constraints over sampled errors.

    Checks ``Re((hbar + delta) w_u) >= threshold_u`` on the serving link and
    ``sigma^2 + sum |(hbar + delta) w_v|^2 <= mu_u`` with one shared ``delta``
    per (BS, user) link. Returns 0 when every sample satisfies both.
    """
    h = channels_nominal.h if isinstance(channels_nominal, ChannelSet) else np.asarray(channels_nominal)
    w = beams.w if isinstance(beams, BeamformerSet) else np.asarray(beams)
    bs = cfg.serving_bs
    worst = 0.0
    for u in range(cfg.K):
        deltas = {}
        for n in range(cfg.B):
            s = link_set(sets, n, u)
            deltas[n] = np.zeros((1, cfg.T), complex) if (s is None or s.rho == 0) else sample(s, n_samples, rng, "boundary_biased")
        sig = ((h[bs[u], u] + deltas[bs[u]]) @ w[u]).real
        scale = max(abs(threshold[u]), 1e-12)
        worst = max(worst, float(np.max((threshold[u] - sig) / scale)))
        total = cfg.sigma2
        for n in range(cfg.B):
            idx = [v for v in cfg.users_of(n) if v != u]
            if idx:
                amps = (h[n, u] + deltas[n]) @ w[idx].T
                total = total + np.sum(np.abs(amps) ** 2, axis=-1)
        worst = max(worst, float(np.max((np.atleast_1d(total) - mu[u]) / mu[u])))
    return max(worst, 0.0)


def run_second(channels_nominal, sets, cfg, opts: SCAOptions | None = None, use_lfj=False, lfj_dim=None):
    """Second robust design; returns an :class:`~robust_wsrm.sca.SCAResult`.

    ``extras`` carries ``rank_ratio`` per user, the principal-component
    beamformers, and ``flagged`` when some ratio exceeds 1e-2. Flagged runs
    are re-checked by sampling (``verified``) before their rate is used.
    The returned beams are the coupled vectors ``w``, which satisfy the robust
    constraints whatever the rank of ``W``.
    """
    opts = opts or SCAOptions()
    ells = link_ellipsoids(sets, cfg, use_lfj, lfj_dim, opts.solver)

    def finalize(sol, ip, beams):
        Wvals = [np.asarray(sol.value(W)) for W in ip.extras["W"]]
        ratios, extracted = rank_report(Wvals, beams.w)
        extras = {"rank_ratio": ratios, "extracted": extracted,
                  "flagged": bool(np.max(ratios) > RANK_FLAG_THRESHOLD)}
        meta = dict(beams.meta, method="robust2-lfj" if use_lfj else "robust2")
        return BeamformerSet(beams.w, meta), extras

    res = run_sca(lambda s: build_iteration_problem_second(channels_nominal, sets, cfg, s, use_lfj, ells),
                  channels_nominal, cfg, opts, finalize)
    res.extras["ellipsoids"] = ells
    if res.extras["flagged"]:
        rng = np.random.default_rng(opts.seed + 7919)
        check_sets = {k: _ellipsoid_set(e) for k, e in ells.items()}
        viol = robust_violation(res.beams, channels_nominal, lambda n, u: check_sets.get((n, u)), cfg,
                                res.extras["threshold"], res.extras["mu"], rng)
        res.extras["verified"] = viol <= 1e-6
    return res


def _ellipsoid_set(ell: Ellipsoid):
    """The approximating ellipsoid as a one-matrix :class:`UncertaintySet` (centred sets only)."""
    if np.linalg.norm(ell.center) > 0:
        raise ValueError("sampling check needs a centred ellipsoid")
    return UncertaintySet(ell.quadratic[None], 1.0, "ellipsoids")
