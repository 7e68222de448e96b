"""Non-blind method comparison on the two-pattern setup.

One plane-wave pattern plus one uniformly random phase mask, RPP object,
noiseless data.  Writes a per-iteration RE trace for each method and a
summary with fitted geometric rates.
"""

import time
from dataclasses import dataclass

import numpy as np

from _common import outdir, parse, write_csv, write_summary
from drsptycho import datasets, forward, metrics, solvers


@dataclass
class Fig4Config:
    n: int = 64
    seed: int = 1
    max_iters: int = 1000
    drs_rhos: tuple = (0.3, 0.5, 1.0)
    raar_betas: tuple = (0.5, 0.9)


def run(cfg: Fig4Config, out=None):
    t0 = time.perf_counter()
    path = outdir(out, "fig4")
    rng = np.random.default_rng(cfg.seed)
    masks = np.stack([np.ones((cfg.n, cfg.n)), np.exp(2j * np.pi * rng.random((cfg.n, cfg.n)))])
    op = forward.MeasurementOp.coded_diffraction(masks)
    f = datasets.rpp(cfg.n, seed=cfg.seed + 1)
    b = np.abs(op.forward(f))
    u0 = solvers.default_init(op, cfg.seed)

    runs = {f"gaussian-drs({r})": solvers.SolverConfig(rho=r) for r in cfg.drs_rhos}
    runs["poisson-drs(1.0)"] = solvers.SolverConfig(method="poisson-drs", rho=1.0)
    runs.update({f"raar({bt})": solvers.SolverConfig(method="raar", beta=bt) for bt in cfg.raar_betas})
    runs["aar"] = solvers.SolverConfig(method="aar")

    traces, summary = {}, {}
    for name, sc in runs.items():
        sc = solvers.SolverConfig(**{**sc.__dict__, "max_iters": cfg.max_iters, "tol": None})
        st = solvers.run(sc, op, b, u0=u0, f_true=f)
        re = np.array([row[2] for row in st.trace])
        traces[name] = re
        live = re[re > 1e-13]
        rate, r2 = metrics.fit_geometric_rate(live, start=len(live) // 2)
        summary[name] = {"final_re": float(re[-1]), "rate": rate, "r2": r2}

    k = max(len(t) for t in traces.values())
    rows = [[i] + [t[i] if i < len(t) else "" for t in traces.values()] for i in range(k)]
    write_csv(path / "re_traces.csv", ["iter", *traces], rows)
    write_summary(path / "summary.json", cfg, {"methods": summary}, t0)
    return summary


if __name__ == "__main__":
    run(*parse(Fig4Config, __doc__))
