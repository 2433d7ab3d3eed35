"""Exceedance probability when the true errors live in a larger box (design rho = 0.02)."""
import argparse

from robust_wsrm.evaluation import ErrorSpec, cell_rng, design, pe
from robust_wsrm.model import NetworkConfig, generate_channels
from robust_wsrm.sca import SCAOptions
from robust_wsrm.uncertainty import make_box

ap = argparse.ArgumentParser()
ap.add_argument("--rho", type=float, default=0.02)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--trials", type=int, default=10_000)
a = ap.parse_args()

cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
ch = generate_channels(cfg, a.seed)
ratios = (1.0, 2.25, 4.0, 6.25)
print("rho'/rho      " + "".join(f"{r:>8.2f}" for r in ratios))
for m in ("nonrobust", "robust1", "robust2", "robust2-lfj"):
    res = design(m, ch, make_box(cfg.T, a.rho), cfg, SCAOptions(seed=a.seed))
    ps = [pe(res.beams, ch, ErrorSpec("box", a.rho * r), res.objective, a.trials, cell_rng(a.seed, m, r), cfg)
          for r in ratios]
    print(f"{m:13s} " + "".join(f"{p:8.3f}" for p in ps))
