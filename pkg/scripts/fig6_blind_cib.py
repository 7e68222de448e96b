"""Blind reconstruction of the CiB object from a PPC(1/2) probe guess.

Gaussian- and Poisson-DRS inner loops, full-rank perturbed raster scan.
Writes the per-epoch trace of each run and the fitted per-epoch rates.
"""

import time
from dataclasses import dataclass

import numpy as np

from _common import outdir, parse, write_summary
from drsptycho import blind, datasets, forward, metrics, solvers


@dataclass
class Fig6Config:
    n: int = 64
    m: int = 16
    tau: int = 8
    perturb_range: int = 2
    epochs: int = 100
    ppc_delta: float = 0.5
    rho: float = 1.0
    seed: int = 2
    scan: str = "full-rank"


def blind_run(cfg, obj, method, path):
    f = datasets.generate(datasets.PhantomSpec(kind=obj, n=cfg.n, seed=cfg.seed))
    mu = datasets.generate_probe("iid", cfg.m, seed=cfg.seed - 1)
    scheme = forward.make_scan(cfg.n, cfg.m, cfg.tau, kind=cfg.scan, perturb_range=cfg.perturb_range,
                               rng_seed=0)
    b = np.abs(forward.MeasurementOp.object_side(mu, scheme).forward(f))
    bc = blind.BlindConfig(inner=solvers.SolverConfig(method=method, rho=cfg.rho), max_epochs=cfg.epochs,
                           ppc_delta=cfg.ppc_delta)
    st = blind.run_blind(b, scheme, bc, truth=(f, mu))
    st.write_trace(path / f"trace_{obj}_{method}.csv")
    re = np.array([row[1] for row in st.trace])
    phase = re[(re < 1e-1) & (re > 1e-13)]
    rate, r2 = metrics.fit_geometric_rate(phase) if phase.size >= 3 else (float("nan"), float("nan"))
    return {"final_re": float(re[-1]), "final_re2": float(st.trace[-1][2]), "rate": rate, "r2": r2}


def run(cfg: Fig6Config, out=None, obj="cib", name="fig6"):
    t0 = time.perf_counter()
    path = outdir(out, name)
    summary = {m: blind_run(cfg, obj, m, path) for m in ("gaussian-drs", "poisson-drs")}
    write_summary(path / "summary.json", cfg, {"object": obj, "runs": summary}, t0)
    return summary


if __name__ == "__main__":
    run(*parse(Fig6Config, __doc__))
