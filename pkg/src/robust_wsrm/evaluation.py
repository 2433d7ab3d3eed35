"""Monte-Carlo evaluation: worst-case rates, exceedance probability, sampled designs, sweeps."""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .conic import concat, squared_norm_soc
from .model import (BeamformerSet, ChannelSet, NetworkConfig, generate_channels, sinr_all, weighted_sum_rate,
                    zero_forcing_beamformers)
from .robust_first import run_first
from .robust_second import run_second
from .sca import SCAOptions, SCAResult, base_problem, run, run_sca
from .solver import NUMERICAL_FAILURE, Solution, SolverError, solve
from .uncertainty import link_set, make_box, sample

METHODS = ("nonrobust", "robust1", "robust2", "robust2-lfj", "zf", "sampled-rc")
# methods whose objective is a worst-case rate over the set they were designed for
CERTIFIED = ("robust1", "robust2", "robust2-lfj", "sampled-rc")


def _h(channels):
    return channels.h if isinstance(channels, ChannelSet) else np.asarray(channels)


def _w(beams):
    return beams.w if isinstance(beams, BeamformerSet) else np.asarray(beams)


def cell_rng(*keys):
    """Independent stream per (seed, cell, ...) so results never depend on run order."""
    words = []
    for k in keys:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return np.random.default_rng(words)


# ---------------------------------------------------------------- error draws

def draw_link_errors(sets, cfg, n, rng, mode="boundary_biased"):
    """``(n, B, K, T)`` joint draws from the per-link sets, one ``delta`` per link."""
    out = np.zeros((n, cfg.B, cfg.K, cfg.T), dtype=complex)
    for b in range(cfg.B):
        for u in range(cfg.K):
            s = link_set(sets, b, u)
            if s is not None and s.rho > 0:
                out[:, b, u] = sample(s, n, rng, mode)
    return out


@dataclass(frozen=True)
class ErrorSpec:
    """Random channel errors for PE and CDF experiments.

    ``box``: each entry uniform on the disc ``|delta_i| <= sqrt(size)``.
    ``gaussian``: each entry CN(0, size), ``size`` being the variance.
    """

    kind: str
    size: float

    def __post_init__(self):
        if self.kind not in ("box", "gaussian"):
            raise ValueError(f"unknown error model {self.kind!r}")
        if self.size < 0:
            raise ValueError("error size must be nonnegative")

    def draw(self, shape, rng):
        if self.kind == "box":
            r = np.sqrt(self.size * rng.random(shape))
            return r * np.exp(2j * np.pi * rng.random(shape))
        s = np.sqrt(self.size / 2.0)
        return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# ---------------------------------------------------------------- metrics

def realized_rates(beams, channels_nominal, cfg, deltas):
    return weighted_sum_rate(_h(channels_nominal)[None] + deltas, _w(beams), cfg)


def worst_case_rate(beams, channels_nominal, sets, cfg, n_samples, rng, batch=2000):
    """Minimum realized weighted sum rate over boundary-biased joint error draws."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    worst = float(weighted_sum_rate(_h(channels_nominal), _w(beams), cfg)) if _all_zero(sets, cfg) else np.inf
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        d = draw_link_errors(sets, cfg, m, rng)
        worst = min(worst, float(realized_rates(beams, channels_nominal, cfg, d).min()))
        done += m
    return worst


def per_user_worst_case_rate(beams, channels_nominal, sets, cfg, n_samples, rng, batch=2000, mode="boundary_biased"):
    """Worst-case rate with each user's own minimum over the sampled errors.

    User ``u``'s SINR only involves the links into ``u``, so the worst case of
    the sum is the sum of per-user worst cases. Minimizing each term over the
    ``n_samples`` draws is the minimum over every combination of the drawn
    per-user errors, a much tighter estimate than the joint-draw minimum.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    h, w = _h(channels_nominal), _w(beams)
    worst = np.log2(1.0 + sinr_all(h, w, cfg)) if _all_zero(sets, cfg) else np.full(cfg.K, np.inf)
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        d = draw_link_errors(sets, cfg, m, rng, mode)
        worst = np.minimum(worst, np.log2(1.0 + sinr_all(h[None] + d, w, cfg)).min(axis=0))
        done += m
    return float(worst @ np.asarray(cfg.alpha))


def _all_zero(sets, cfg):
    return all((link_set(sets, b, u) is None or link_set(sets, b, u).rho == 0)
               for b in range(cfg.B) for u in range(cfg.K))


def pe(beams, channels_nominal, error_spec: ErrorSpec, threshold, n_trials, rng, cfg, batch=5000):
    """Fraction of random error draws whose realized rate reaches ``threshold``."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    hits, done = 0, 0
    shape = (cfg.B, cfg.K, cfg.T)
    while done < n_trials:
        m = min(batch, n_trials - done)
        d = error_spec.draw((m,) + shape, rng)
        hits += int(np.sum(realized_rates(beams, channels_nominal, cfg, d) >= threshold))
        done += m
    return hits / n_trials


def cdf_sum_rate(designs, channels_nominal, error_spec: ErrorSpec, n_trials, rng, cfg):
    """Empirical CDF of the realized rate for each design under common error draws.

    Returns ``{method: (sorted rates, cumulative probabilities)}``.
    """
    d = error_spec.draw((n_trials, cfg.B, cfg.K, cfg.T), rng)
    out = {}
    for name, beams in designs.items():
        r = np.sort(realized_rates(beams, channels_nominal, cfg, d))
        out[name] = (r, np.arange(1, n_trials + 1) / n_trials)
    return out


# ---------------------------------------------------------------- sampled robust counterpart

def _link_samples(sampled_deltas, n, u, active=None):
    d = sampled_deltas[n][u]
    if d is None:
        return None
    return d if active is None else d[active[n][u]]


def build_sampled_rc_problem(channels_nominal, sampled_deltas, cfg, state, active=None):
    """Per-iteration program whose robust constraints hold on the sampled errors only.

    ``sampled_deltas[n][u]`` is an ``(S, T)`` array for the link from BS ``n`` to
    user ``u`` (or ``None`` for an exact link). ``active[n][u]`` optionally
    restricts each link to a subset of its samples.
    """
    h = _h(channels_nominal)
    ip, f = base_problem(cfg, state)
    prog, w, mu = ip.prog, ip.w, ip.mu
    bs = cfg.serving_bs
    betas = {}
    for u in range(cfg.K):
        d = _link_samples(sampled_deltas, bs[u], u, active)
        H = h[bs[u], u][None] + (d if d is not None else 0.0)
        prog.add_nonneg((H @ w[u]).real - f[u], f"sig{u}")
        agg = mu[u] - cfg.sigma2
        for n in range(cfg.B):
            idx = [v for v in cfg.users_of(n) if v != u]
            if not idx:
                continue
            d = _link_samples(sampled_deltas, n, u, active)
            H = h[n, u][None] + (d if d is not None else 0.0)
            beta = prog.variable((), f"beta{n}.{u}")
            amps = [H @ w[v] for v in idx]  # each (S,)
            for s in range(H.shape[0]):
                vec = concat([concat([a.real[s].reshape(1), a.imag[s].reshape(1)]) for a in amps])
                prog.add_soc(squared_norm_soc(vec, beta), name=f"int{n}.{u}.{s}")
            betas[(n, u)] = beta
            agg = agg - beta
        prog.add_nonneg(agg, f"agg{u}")
    ip.extras["beta"] = betas
    return ip


def sampled_violations(channels_nominal, sampled_deltas, cfg, w, f, betas, tol=1e-7):
    """Per link, indices of samples whose constraint ``(w, f, beta)`` breaks, worst first."""
    h = _h(channels_nominal)
    bs = cfg.serving_bs
    out = {}
    for n in range(cfg.B):
        for u in range(cfg.K):
            d = sampled_deltas[n][u]
            if d is None:
                continue
            H = h[n, u][None] + d
            gap = np.full(len(d), -np.inf)
            if bs[u] == n:
                sig = (H @ w[u]).real
                gap = np.maximum(gap, (f[u] - sig) / max(abs(f[u]), 1.0))
            idx = [v for v in cfg.users_of(n) if v != u]
            if idx:
                load = np.sum(np.abs(H @ w[idx].T) ** 2, axis=1)
                b = betas[(n, u)]
                gap = np.maximum(gap, (load - b) / max(abs(b), 1.0))
            bad = np.nonzero(gap > tol)[0]
            if len(bad):
                out[(n, u)] = bad[np.argsort(-gap[bad])]
    return out


class _CuttingPlaneStep:
    """Solve the sampled program by constraint generation.

    Starts from a few samples per link and adds violated samples until the
    relaxed optimum satisfies every sample, which makes it the optimum of the
    full sampled program. Active sets persist across SCA iterations.
    """

    def __init__(self, channels_nominal, deltas, cfg, n_init=8, n_add=8, max_rounds=50):
        self.ch, self.deltas, self.cfg = channels_nominal, deltas, cfg
        self.n_add, self.max_rounds = n_add, max_rounds
        self.active = [[(np.arange(min(n_init, len(d))) if d is not None else None) for d in row] for row in deltas]

    def __call__(self, state, sopts):
        for _ in range(self.max_rounds):
            ip = build_sampled_rc_problem(self.ch, self.deltas, self.cfg, state, self.active)
            sol = solve(ip.prog, sopts)
            if not sol.optimal:
                return sol, ip
            w = np.asarray(sol.value(ip.w))
            f = [float(sol.value(fu)) for fu in ip.extras["f"]]
            betas = {k: float(sol.value(b)) for k, b in ip.extras["beta"].items()}
            viol = sampled_violations(self.ch, self.deltas, self.cfg, w, f, betas)
            if not viol:
                return sol, ip
            for (n, u), bad in viol.items():
                self.active[n][u] = np.union1d(self.active[n][u], bad[: self.n_add])
        return Solution(NUMERICAL_FAILURE, None, raw_status="constraint generation did not settle"), ip


def run_sampled_rc(channels_nominal, sets, cfg, opts: SCAOptions | None = None, n_samples=200, n_repeats=50,
                   rng=None, mode="interior"):
    """Minimum over repeats of the sampled-counterpart objective.

    Each repeat draws ``n_samples`` errors per link (uniform over the set by
    default) and runs SCA on the sampled problem. Returns the result of the
    repeat with the smallest certified rate; ``extras["repeat_objectives"]``
    lists all of them.
    """
    opts = opts or SCAOptions()
    rng = rng if rng is not None else cell_rng(opts.seed, "sampled-rc")
    best, objs = None, []
    for _ in range(n_repeats):
        deltas = [[None if (link_set(sets, n, u) is None or link_set(sets, n, u).rho == 0)
                   else sample(link_set(sets, n, u), n_samples, rng, mode)
                   for u in range(cfg.K)] for n in range(cfg.B)]
        res = run_sca(None, channels_nominal, cfg, opts, step=_CuttingPlaneStep(channels_nominal, deltas, cfg))
        objs.append(res.objective)
        if best is None or res.objective < best.objective:
            best = res
    best.extras["repeat_objectives"] = objs
    best.beams.meta["method"] = "sampled-rc"
    return best


# ---------------------------------------------------------------- orchestration

def design(method, channels_nominal, sets, cfg, opts: SCAOptions | None = None, sampling=None):
    """Run one design method; ZF returns a pseudo-result with its nominal rate."""
    opts = opts or SCAOptions()
    sampling = sampling or {}
    if method == "nonrobust":
        return run(channels_nominal, cfg, opts)
    if method == "robust1":
        return run_first(channels_nominal, sets, cfg, opts)
    if method == "robust2":
        return run_second(channels_nominal, sets, cfg, opts, use_lfj=False)
    if method == "robust2-lfj":
        return run_second(channels_nominal, sets, cfg, opts, use_lfj=True)
    if method == "sampled-rc":
        return run_sampled_rc(channels_nominal, sets, cfg, opts, sampling.get("n_samples", 200),
                              sampling.get("n_repeats", 50))
    if method == "zf":
        t0 = time.perf_counter()
        beams = zero_forcing_beamformers(channels_nominal, cfg)
        rate = float(weighted_sum_rate(channels_nominal, beams, cfg))
        return SCAResult(beams, None, rate, True, 0, 0, time.perf_counter() - t0, {})
    raise ValueError(f"unknown method {method!r}")


def reported_worst_case(method, res, channels_nominal, sets, cfg, n_samples, rng):
    """Worst-case rate a design is credited with.

    Certified methods report their objective unless a rank flag could not be
    cleared by sampling; everything else gets the per-user sampled minimum.
    """
    if method in CERTIFIED and res.extras.get("verified", True):
        return float(res.objective)
    return per_user_worst_case_rate(res.beams, channels_nominal, sets, cfg, n_samples, rng)


SWEEP_COLUMNS = ("seed", "method", "param", "value", "nominal_rate", "worst_case_rate", "pe",
                 "rank_ratio_max", "iterations", "wall_ms")


def sweep(param, values, methods, cfg: NetworkConfig, seeds, rho=0.1, snr_db=None, opts=None,
          n_samples=1000, n_trials=0, sampling=None, set_factory=None, clock=None):
    """Rows of (seed, method, parameter value) results.

    ``param`` is ``"rho"`` (box radius) or ``"snr"`` (dB, with the fixed
    ``rho``). ``worst_case_rate`` is what each design guarantees: the
    certified objective for the robust designs, the minimum-over-repeats
    objective for ``sampled-rc``, and for ``nonrobust`` and ``zf`` (which
    certify nothing) the per-user sampled worst case over ``n_samples``
    boundary draws. PE (box errors of the design size) is only estimated when
    ``n_trials > 0``. A failed cell is recorded with NaN rates. ``clock``
    replaces the wall-time measurement (use ``lambda: 0`` for byte-stable
    output).
    """
    if param not in ("rho", "snr"):
        raise ValueError("param must be 'rho' or 'snr'")
    opts = opts or SCAOptions()
    clock = clock or time.perf_counter
    set_factory = set_factory or (lambda T, r: make_box(T, r))
    rows = []
    for seed in seeds:
        for value in values:
            if param == "rho":
                c, r = cfg, float(value)
            else:
                c = NetworkConfig.from_snr(cfg.B, cfg.users_per_bs, cfg.T, float(value), cfg.sigma2, cfg.alpha)
                r = rho
            ch = generate_channels(c, seed)
            sets = set_factory(c.T, r)
            for m_idx, method in enumerate(methods):
                row = {"seed": seed, "method": method, "param": param, "value": float(value)}
                t0 = clock()
                try:
                    res = design(method, ch, sets, c, replace(opts, seed=seed), sampling)
                except (SolverError, ValueError):
                    row.update(nominal_rate=float("nan"), worst_case_rate=float("nan"), pe=float("nan"),
                               rank_ratio_max=float("nan"), iterations=0, wall_ms=(clock() - t0) * 1e3)
                    rows.append(row)
                    continue
                rng = cell_rng(seed, method, int(round(float(value) * 1e6)), "wc")
                nominal = float(weighted_sum_rate(ch, res.beams, c))
                wc = reported_worst_case(method, res, ch, sets, c, n_samples, rng)
                p = float("nan")
                if n_trials > 0:
                    p = pe(res.beams, ch, ErrorSpec("box", r), res.objective, n_trials,
                           cell_rng(seed, method, int(round(float(value) * 1e6)), "pe"), c)
                rr = res.extras.get("rank_ratio")
                row.update(nominal_rate=nominal, worst_case_rate=wc, pe=p,
                           rank_ratio_max=float(np.max(rr)) if rr is not None else float("nan"),
                           iterations=res.iterations, wall_ms=(clock() - t0) * 1e3)
                rows.append(row)
    return rows


def find_rho_for_pe(sigma, cfg, channels_nominal, method="robust1", target_pe=0.8, n_trials=2000,
                    bracket=(1e-4, 1.0), tol=1e-3, opts=None, seed=0):
    """Smallest box ``rho`` whose design reaches ``PE >= target`` under CN(0, sigma) errors.

    Bisection assumes PE grows with ``rho``. Returns ``(rho, trace)`` where the
    trace lists ``(rho, pe, objective)`` per probe; a probe whose design fails
    counts as not reaching the target. An upper end with no feasible design is
    halved towards ``lo`` first. Raises ``ValueError`` if even the (feasible)
    upper end misses the target.
    """
    opts = opts or SCAOptions(seed=seed)
    spec = ErrorSpec("gaussian", sigma)
    trace = []

    def probe(r):
        try:
            res = design(method, channels_nominal, make_box(cfg.T, r), cfg, opts)
        except SolverError:
            trace.append((r, float("nan"), float("nan")))
            return 0.0, None
        p = pe(res.beams, channels_nominal, spec, res.objective, n_trials, cell_rng(seed, "rho-pe", int(r * 1e9)), cfg)
        trace.append((r, p, res.objective))
        return p, res

    lo, hi = bracket
    p_lo, _ = probe(lo)
    if p_lo >= target_pe:
        return lo, trace
    p_hi, res_hi = probe(hi)
    # a radius the design cannot handle at all is pulled in until it can
    while res_hi is None and hi - lo > tol:
        hi = 0.5 * (lo + hi)
        p_hi, res_hi = probe(hi)
    if p_hi < target_pe:
        raise ValueError(f"PE {p_hi:.3f} at rho={hi} is below the target {target_pe}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        p_mid, _ = probe(mid)
        if p_mid >= target_pe:
            hi = mid
        else:
            lo = mid
    return hi, trace


def pe_monotone(trace):
    """True when PE along the probed ``rho`` values (sorted) never decreases."""
    pts = sorted((r, p) for r, p, _ in trace if np.isfinite(p))
    return all(b[1] >= a[1] for a, b in zip(pts, pts[1:]))
