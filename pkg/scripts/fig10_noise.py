"""Blind reconstruction under Poisson noise: terminal RE against NSR.

The photon scale is chosen per target NSR; the realised NSR, terminal RE
and their ratio (the noise amplification factor) are written to CSV.
"""

import time
from dataclasses import dataclass

import numpy as np

from _common import outdir, parse, write_csv, write_summary
from drsptycho import blind, datasets, forward, solvers


@dataclass
class Fig10Config:
    n: int = 64
    m: int = 16
    tau: int = 8
    perturb_range: int = 2
    epochs: int = 100
    nsr_targets: tuple = (0.02, 0.05, 0.1, 0.2, 0.3)
    method: str = "gaussian-drs"
    seed: int = 2


def run(cfg: Fig10Config, out=None):
    t0 = time.perf_counter()
    path = outdir(out, "fig10")
    f = datasets.generate(datasets.PhantomSpec(kind="cib", n=cfg.n, seed=cfg.seed))
    mu = datasets.generate_probe("iid", cfg.m, seed=cfg.seed - 1)
    scheme = forward.make_scan(cfg.n, cfg.m, cfg.tau, kind="full-rank", perturb_range=cfg.perturb_range,
                               rng_seed=0)
    op = forward.MeasurementOp.object_side(mu, scheme)
    clean = np.abs(op.forward(f))
    rows = []
    for target in cfg.nsr_targets:
        scale = forward.poisson_scale_for_nsr(clean, target)
        d = forward.measure(op, f, noise={"kind": "poisson", "scale": scale}, rng=3)
        bc = blind.BlindConfig(inner=solvers.SolverConfig(method=cfg.method, rho=1.0), max_epochs=cfg.epochs)
        st = blind.run_blind(d.b, scheme, bc, truth=(f, mu))
        re = st.trace[-1][1]
        rows.append([target, d.nsr, re, re / d.nsr])
    write_csv(path / "re_vs_nsr.csv", ["target_nsr", "nsr", "re", "amplification"], rows)
    write_summary(path / "summary.json", cfg,
                  {"points": [dict(zip(("target_nsr", "nsr", "re", "amplification"), r)) for r in rows]}, t0)
    return rows


if __name__ == "__main__":
    run(*parse(Fig10Config, __doc__))
