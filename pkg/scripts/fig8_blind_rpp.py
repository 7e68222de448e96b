"""Blind reconstruction of random phase objects.

Runs the salted RPP (every pixel nonzero with probability p at full
brightness) and the plain sparse RPP under the same settings as the CiB
study.  The plain RPP is expected to stall from PPC(1/2); see the README.
"""

import time
from dataclasses import dataclass

from _common import outdir, parse, write_summary
from fig6_blind_cib import Fig6Config, blind_run


@dataclass
class Fig8Config(Fig6Config):
    include_plain: bool = True


def run(cfg: Fig8Config, out=None):
    t0 = time.perf_counter()
    path = outdir(out, "fig8")
    objects = ("salted_rpp", "rpp") if cfg.include_plain else ("salted_rpp",)
    summary = {f"{o}/{m}": blind_run(cfg, o, m, path) for o in objects for m in ("gaussian-drs", "poisson-drs")}
    write_summary(path / "summary.json", cfg, {"runs": summary}, t0)
    return summary


if __name__ == "__main__":
    run(*parse(Fig8Config, __doc__))
