"""CDF of the realized sum rate under uniform box errors (rho = 0.2), with each design's objective."""
import argparse

import numpy as np

from robust_wsrm.evaluation import ErrorSpec, cdf_sum_rate, cell_rng, design
from robust_wsrm.model import NetworkConfig, generate_channels
from robust_wsrm.sca import SCAOptions
from robust_wsrm.solver import SolverError
from robust_wsrm.uncertainty import make_box

ap = argparse.ArgumentParser()
ap.add_argument("--rho", type=float, default=0.2)
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--trials", type=int, default=10_000)
a = ap.parse_args()

cfg = NetworkConfig.from_snr(2, (2, 2), 4, 10)
ch = generate_channels(cfg, a.seed)
res = {}
for m in ("nonrobust", "robust1", "robust2", "robust2-lfj", "zf"):
    try:
        res[m] = design(m, ch, make_box(cfg.T, a.rho), cfg, SCAOptions(seed=a.seed))
    except SolverError as exc:
        print(f"{m}: no design ({exc.status})")
cdf = cdf_sum_rate({m: r.beams for m, r in res.items()}, ch, ErrorSpec("box", a.rho), a.trials,
                   cell_rng(a.seed, "cdf"), cfg)
print(f"{'method':13s} {'objective':>9s} {'p10':>7s} {'median':>7s} {'p90':>7s} {'PE':>6s}")
for m, (rates, probs) in cdf.items():
    q = [np.interp(x, probs, rates) for x in (0.1, 0.5, 0.9)]
    print(f"{m:13s} {res[m].objective:9.2f} " + " ".join(f"{v:7.2f}" for v in q)
          + f" {np.mean(rates >= res[m].objective):6.3f}")
