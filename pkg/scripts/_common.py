"""Shared helpers for the figure scripts: argument parsing and CSV output."""

import argparse
import csv
import dataclasses
import json
import time
from pathlib import Path


def parse(cfg_cls, doc):
    """Build a parser exposing every dataclass field as ``--field`` and return a config."""
    p = argparse.ArgumentParser(description=doc)
    p.add_argument("--out", default=None, help="output directory (default: results/<script>)")
    for f in dataclasses.fields(cfg_cls):
        default = f.default
        if isinstance(default, bool):
            p.add_argument(f"--{f.name}", action=argparse.BooleanOptionalAction, default=default)
        elif isinstance(default, tuple):
            p.add_argument(f"--{f.name}", type=type(default[0]), nargs="+", default=list(default))
        else:
            p.add_argument(f"--{f.name}", type=type(default), default=default)
    args = vars(p.parse_args())
    out = args.pop("out")
    cfg = cfg_cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in args.items()})
    return cfg, out


def outdir(out, name) -> Path:
    path = Path(out) if out else Path("results") / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_summary(path, cfg, summary, t0) -> None:
    payload = {"config": dataclasses.asdict(cfg), "seconds": round(time.perf_counter() - t0, 2), **summary}
    Path(path).write_text(json.dumps(payload, indent=2, default=float))
    print(json.dumps(summary, indent=2, default=float))
