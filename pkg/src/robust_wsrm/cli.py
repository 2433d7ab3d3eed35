"""Command-line front end.

    robust-wsrm solve CONFIG --method robust1 --out sol.json
    robust-wsrm sweep CONFIG --param rho --values 0.05:0.25:0.05 --out sweep.csv
    robust-wsrm pe-table CONFIG --ratios 1,2.25,4,6.25 --out pe.csv
    robust-wsrm cdf CONFIG --out cdf.csv
    robust-wsrm rho-for-pe CONFIG --sigma 0.1,0.2 --out rho.csv

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 infeasible.
Output is a pure function of the config and seed; wall-clock columns are
zero unless ``--timing`` is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import evaluation as ev
from .model import NetworkConfig, generate_channels
from .sca import SCAOptions
from .solver import INFEASIBLE, SolverError, SolverOptions
from .uncertainty import make_box, make_ellipsoids, make_polyhedral, random_ellipsoids

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    network: NetworkConfig
    uncertainty: dict
    algorithm: SCAOptions
    sampling: dict
    seed: int

    def uncertainty_set(self, rho=None):
        return build_set(self.uncertainty, self.network.T, self.uncertainty["rho"] if rho is None else rho, self.seed)


def _require(section, key, where):
    if key not in section:
        raise ConfigError(f"missing field '{where}.{key}'")
    return section[key]


def _complex_array(data, where):
    a = np.asarray(data, dtype=float)
    if a.shape[-1] != 2:
        raise ConfigError(f"'{where}' entries must be [real, imag] pairs")
    return a[..., 0] + 1j * a[..., 1]


def build_set(spec, T, rho, seed=0):
    """Uncertainty set of type box, polyhedral or ellipsoids at radius ``rho``."""
    kind = spec["type"]
    try:
        if kind == "box":
            return make_box(T, rho, spec.get("theta"))
        if kind == "polyhedral":
            xi = _complex_array(_require(spec, "xi", "uncertainty"), "uncertainty.xi")
            return make_polyhedral(list(xi.reshape(-1, T)), rho)
        if kind == "ellipsoids":
            if "matrices" in spec:
                P = _complex_array(spec["matrices"], "uncertainty.matrices")
                return make_ellipsoids(P.reshape(-1, T, T), rho)
            Q = int(_require(spec, "Q", "uncertainty"))
            return random_ellipsoids(T, Q, rho, np.random.default_rng(spec.get("seed", seed)))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"uncertainty: {exc}") from exc
    raise ConfigError(f"uncertainty.type must be box, polyhedral or ellipsoids, not {kind!r}")


def load_config(path, seed=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    net = _require(raw, "network", "config")
    unc = _require(raw, "uncertainty", "config")
    alg = raw.get("algorithm", {})
    smp = raw.get("sampling", {})
    B = _require(net, "B", "network")
    upb = _require(net, "users_per_bs", "network")
    T = _require(net, "T", "network")
    _require(unc, "type", "uncertainty")
    rho = float(_require(unc, "rho", "uncertainty"))
    if rho < 0:
        raise ConfigError("uncertainty.rho must be nonnegative")
    seed = int(alg.get("seed", 0) if seed is None else seed)
    try:
        network = NetworkConfig.from_snr(B, upb, T, float(net.get("snr_db", 10.0)), float(net.get("sigma2", 1.0)),
                                         tuple(net.get("weights") or ()))
        algorithm = SCAOptions(max_iters=int(alg.get("max_iters", 50)), tol_obj=float(alg.get("tol_obj", 1e-4)),
                               eps_t=float(alg.get("eps_t", 1e-3)), seed=seed,
                               restarts=int(alg.get("restarts", 10)), solver=SolverOptions())
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    sampling = {"n_samples": int(smp.get("n_samples", 200)), "n_trials": int(smp.get("n_trials", 10000)),
                "n_repeats": int(smp.get("n_repeats", 50)), "n_eval": int(smp.get("n_eval", 2000))}
    cfg = RunConfig(network, dict(unc), algorithm, sampling, seed)
    if rho > 0:
        cfg.uncertainty_set()  # surface set errors as config errors
    return cfg


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _floats(text):
    """``a,b,c`` or ``start:stop:step`` (inclusive stop)."""
    try:
        if ":" in text:
            a, b, s = (float(v) for v in text.split(":"))
            n = int(np.floor((b - a) / s + 1e-9)) + 1
            return [round(a + i * s, 12) for i in range(n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse value list {text!r}") from exc


def _methods(text):
    out = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in out if m not in ev.METHODS]
    if bad:
        raise ConfigError(f"unknown method(s) {bad}; choose from {list(ev.METHODS)}")
    return out


def _sets(cfg, rho):
    return None if rho == 0 else cfg.uncertainty_set(rho)


def _clock(args):
    if args.timing:
        import time
        return time.perf_counter
    return lambda: 0.0


# ---------------------------------------------------------------- commands

def cmd_solve(args):
    cfg = load_config(args.config, args.seed)
    if args.method not in ev.METHODS:
        raise ConfigError(f"unknown method {args.method!r}")
    rho = float(cfg.uncertainty["rho"])
    ch = generate_channels(cfg.network, cfg.seed)
    res = ev.design(args.method, ch, _sets(cfg, rho), cfg.network, cfg.algorithm, cfg.sampling)
    rr = res.extras.get("rank_ratio")
    out = {
        "method": args.method,
        "seed": cfg.seed,
        "rho": rho,
        "objective": res.objective,
        "nominal_rate": float(ev.weighted_sum_rate(ch, res.beams, cfg.network)),
        "converged": bool(res.converged),
        "iterations": int(res.iterations),
        "history": [float(v) for v in res.history] if res.state is not None else [],
        "beams_real": res.beams.w.real.tolist(),
        "beams_imag": res.beams.w.imag.tolist(),
        "rank_ratio": None if rr is None else [float(v) for v in rr],
        "rank_flagged": bool(res.extras.get("flagged", False)),
    }
    if "verified" in res.extras:
        out["rank_verified"] = bool(res.extras["verified"])
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"{args.method}: objective {res.objective:.6f} bits/s/Hz after {res.iterations} iterations")
    return EXIT_OK


def cmd_sweep(args):
    cfg = load_config(args.config, args.seed)
    methods = _methods(args.methods)
    values = _floats(args.values)
    seeds = range(cfg.seed, cfg.seed + args.n_seeds)
    rho = float(cfg.uncertainty["rho"])
    rows = ev.sweep(args.param, values, methods, cfg.network, seeds, rho=rho, opts=cfg.algorithm,
                    n_samples=cfg.sampling["n_eval"], n_trials=args.pe_trials, sampling=cfg.sampling,
                    set_factory=lambda T, r: _sets(cfg, r), clock=_clock(args))
    write_csv(args.out, ev.SWEEP_COLUMNS, rows)
    return EXIT_OK


PE_COLUMNS = ("method", "rho", "ratio", "pe", "objective")


def cmd_pe_table(args):
    cfg = load_config(args.config, args.seed)
    methods = _methods(args.methods)
    ratios = _floats(args.ratios)
    rho = float(cfg.uncertainty["rho"])
    ch = generate_channels(cfg.network, cfg.seed)
    rows = []
    for m in methods:
        res = ev.design(m, ch, _sets(cfg, rho), cfg.network, cfg.algorithm, cfg.sampling)
        for k, r in enumerate(ratios):
            p = ev.pe(res.beams, ch, ev.ErrorSpec("box", rho * r), res.objective, cfg.sampling["n_trials"],
                      ev.cell_rng(cfg.seed, m, k, "pe-table"), cfg.network)
            rows.append({"method": m, "rho": rho, "ratio": r, "pe": p, "objective": res.objective})
    write_csv(args.out, PE_COLUMNS, rows)
    return EXIT_OK


CDF_COLUMNS = ("method", "rate", "cdf", "objective")


def cmd_cdf(args):
    cfg = load_config(args.config, args.seed)
    methods = _methods(args.methods)
    rho = float(cfg.uncertainty["rho"])
    size = rho if args.error_size is None else args.error_size
    ch = generate_channels(cfg.network, cfg.seed)
    designs, objs = {}, {}
    for m in methods:
        res = ev.design(m, ch, _sets(cfg, rho), cfg.network, cfg.algorithm, cfg.sampling)
        designs[m], objs[m] = res.beams, res.objective
    spec = ev.ErrorSpec(args.error_model, size)
    table = ev.cdf_sum_rate(designs, ch, spec, cfg.sampling["n_trials"], ev.cell_rng(cfg.seed, "cdf"), cfg.network)
    step = max(1, args.thin)
    rows = []
    for m in methods:
        rates, probs = table[m]
        keep = list(range(step - 1, len(rates), step))
        if keep[-1] != len(rates) - 1:
            keep.append(len(rates) - 1)
        rows += [{"method": m, "rate": rates[i], "cdf": probs[i], "objective": objs[m]} for i in keep]
    write_csv(args.out, CDF_COLUMNS, rows)
    return EXIT_OK


RHO_COLUMNS = ("sigma", "method", "rho", "pe", "objective", "probes", "pe_monotone")


def cmd_rho_for_pe(args):
    cfg = load_config(args.config, args.seed)
    methods = _methods(args.methods)
    ch = generate_channels(cfg.network, cfg.seed)
    rows = []
    for sigma in _floats(args.sigma):
        for m in methods:
            try:
                rho, trace = ev.find_rho_for_pe(sigma, cfg.network, ch, m, args.target, cfg.sampling["n_trials"],
                                                (args.lo, args.hi), args.tol, cfg.algorithm, cfg.seed)
            except ValueError as exc:
                print(f"sigma={sigma} {m}: {exc}", file=sys.stderr)
                rows.append({"sigma": sigma, "method": m, "rho": float("nan"), "pe": float("nan"),
                             "objective": float("nan"), "probes": 0, "pe_monotone": False})
                continue
            hit = [t for t in trace if t[0] == rho][-1]
            rows.append({"sigma": sigma, "method": m, "rho": rho, "pe": hit[1], "objective": hit[2],
                         "probes": len(trace), "pe_monotone": ev.pe_monotone(trace)})
    write_csv(args.out, RHO_COLUMNS, rows)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="robust-wsrm", description="Robust weighted-sum-rate beamforming experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, methods=True):
        sp.add_argument("config", help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="overrides algorithm.seed (also the channel seed)")
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        if methods:
            sp.add_argument("--methods", default="nonrobust,robust1,robust2,robust2-lfj,zf")

    s = sub.add_parser("solve", help="design one beamformer set")
    common(s, methods=False)
    s.add_argument("--method", default="nonrobust")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", help="worst-case rate against rho or SNR")
    common(s)
    s.add_argument("--param", choices=("rho", "snr"), default="rho")
    s.add_argument("--values", default="0.05:0.25:0.05")
    s.add_argument("--n-seeds", type=int, default=1)
    s.add_argument("--pe-trials", type=int, default=0)
    s.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical reruns)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("pe-table", help="exceedance probability for growing error boxes")
    common(s)
    s.add_argument("--ratios", default="1,2.25,4,6.25")
    s.set_defaults(func=cmd_pe_table)

    s = sub.add_parser("cdf", help="empirical CDF of the realized rate")
    common(s)
    s.add_argument("--error-model", choices=("box", "gaussian"), default="box")
    s.add_argument("--error-size", type=float, default=None, help="defaults to the design rho")
    s.add_argument("--thin", type=int, default=1, help="keep every n-th CDF point")
    s.set_defaults(func=cmd_cdf)

    s = sub.add_parser("rho-for-pe", help="smallest rho reaching a PE target under Gaussian errors")
    common(s)
    s.set_defaults(methods="robust1")
    s.add_argument("--sigma", default="0.2")
    s.add_argument("--target", type=float, default=0.8)
    s.add_argument("--lo", type=float, default=1e-4)
    s.add_argument("--hi", type=float, default=1.0)
    s.add_argument("--tol", type=float, default=1e-3)
    s.set_defaults(func=cmd_rho_for_pe)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE if exc.status == INFEASIBLE else EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
