"""Smallest box radius giving PE >= 0.8 under CN(0, sigma I) errors, then the rates and PEs at that radius."""
import argparse

from robust_wsrm.evaluation import ErrorSpec, cell_rng, design, find_rho_for_pe, pe
from robust_wsrm.model import NetworkConfig, generate_channels
from robust_wsrm.sca import SCAOptions
from robust_wsrm.solver import SolverError
from robust_wsrm.uncertainty import make_box

ap = argparse.ArgumentParser()
ap.add_argument("--sigmas", default="0.05,0.1,0.15,0.2")
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--trials", type=int, default=2000)
a = ap.parse_args()

cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
ch = generate_channels(cfg, a.seed)
for sigma in (float(s) for s in a.sigmas.split(",")):
    try:
        rho, trace = find_rho_for_pe(sigma, cfg, ch, "robust1", 0.8, a.trials, (1e-4, 1.0), 1e-3,
                                     SCAOptions(seed=a.seed), a.seed)
    except ValueError as exc:
        print(f"sigma={sigma}: {exc}")
        continue
    parts = []
    for m in ("robust1", "robust2", "robust2-lfj"):
        try:
            res = design(m, ch, make_box(cfg.T, rho), cfg, SCAOptions(seed=a.seed))
        except SolverError as exc:
            parts.append(f"{m} failed ({exc.status})")
            continue
        p = pe(res.beams, ch, ErrorSpec("gaussian", sigma), res.objective, a.trials, cell_rng(a.seed, m, sigma), cfg)
        parts.append(f"{m} {res.objective:.2f} (PE {p:.2f})")
    print(f"sigma={sigma}: rho={rho:.4f} after {len(trace)} probes | " + ", ".join(parts))
