"""Bright-field boundary enforcement and the linear phase ramp.

The object is embedded in a bright frame of known value; pinning the frame
after each object update removes the ramp ambiguity so RE2 (no ramp
compensation) decays together with RE.  Two inner caps are compared.
"""

import time
from dataclasses import dataclass

import numpy as np

from _common import outdir, parse, write_csv, write_summary
from drsptycho import blind, datasets, forward, solvers


@dataclass
class Fig9Config:
    n: int = 64
    m: int = 16
    tau: int = 8
    perturb_range: int = 2
    margin: int = 8
    epochs: int = 100
    caps: tuple = (80, 110)
    inner_tol: float = 1e-5
    seed: int = 2


def run(cfg: Fig9Config, out=None):
    t0 = time.perf_counter()
    path = outdir(out, "fig9")
    scheme = forward.make_scan(cfg.n, cfg.m, cfg.tau, kind="full-rank", perturb_range=cfg.perturb_range,
                               rng_seed=0)
    mu = datasets.generate_probe("iid", cfg.m, seed=cfg.seed - 1)
    win = (slice(cfg.margin, cfg.n - cfg.margin),) * 2
    summary, cols = {}, {}
    for obj in ("rpp", "cib"):
        roi = datasets.generate(datasets.PhantomSpec(kind=obj, n=cfg.n - 2 * cfg.margin, seed=cfg.seed))
        f, mask = datasets.embed_bright(roi, cfg.margin, 1.0)
        b = np.abs(forward.MeasurementOp.object_side(mu, scheme).forward(f))
        for cap in cfg.caps:
            bc = blind.BlindConfig(inner=solvers.SolverConfig(method="poisson-drs", rho=1.0),
                                   max_epochs=cfg.epochs, inner_cap=cap, inner_tol=cfg.inner_tol,
                                   boundary_enforce="bright", bright_value=1.0)
            st = blind.run_blind(b, scheme, bc, truth=(f, mu), roi=win, bright_mask=mask)
            re = np.array([row[1] for row in st.trace])
            re2 = np.array([row[2] for row in st.trace])
            cols[f"{obj}_cap{cap}_re"], cols[f"{obj}_cap{cap}_re2"] = re, re2
            summary[f"{obj}/cap{cap}"] = {"final_re": float(re[-1]), "final_re2": float(re2[-1]),
                                          "re2_floor": float(np.median(re2[-10:]))}
    k = max(len(c) for c in cols.values())
    rows = [[i + 1] + [c[i] if i < len(c) else "" for c in cols.values()] for i in range(k)]
    write_csv(path / "traces.csv", ["epoch", *cols], rows)
    write_summary(path / "summary.json", cfg, {"runs": summary}, t0)
    return summary


if __name__ == "__main__":
    run(*parse(Fig9Config, __doc__))
