"""Command-line experiment runner.

Subcommands
-----------
simulate     build object, probe and scan, write measurements and truth
reconstruct  non-blind reconstruction with a known probe (or mask set)
blind        blind reconstruction (object and probe)
sweep        repeat simulate + reconstruct over one parameter, in parallel
spectral     spectral gap, optimal relaxation and eigenstructure report

Configuration is a TOML file (see :class:`ExperimentConfig`).  Precedence,
lowest first: scale preset, TOML file, command-line flags.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import blind as blind_mod
from . import datasets, forward, metrics, solvers, spectral
from .errors import (CapacityError, ConfigurationError, ConvergenceError, DRSError,
                     NumericalFailure, SingularityError)
from .grids import load_npy, norm2, save_npy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

SCALES = {
    "desk": {"n": 64, "m": 16, "tau": 8, "perturb_range": 2},
    "paper": {"n": 256, "m": 60, "tau": 32, "perturb_range": 4},
}
SWEEP_PARAMS = ("rho", "beta", "nsr-scale", "tau", "c")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass
class ProbeSpec:
    kind: str = "iid"
    m: int = 16
    c: float = 1.0


@dataclass
class ScanSpec:
    """``setup="ptycho"`` for a scanned probe, ``"two-pattern"`` for a plane
    wave plus one random phase mask over the whole object."""

    setup: str = "ptycho"
    tau: int = 8
    kind: str = "full-rank"
    perturb_range: int = 2
    boundary: str = "periodic"

    def __post_init__(self):
        if self.setup not in ("ptycho", "two-pattern"):
            raise ConfigurationError(f"unknown setup {self.setup!r}")


@dataclass
class NoiseSpec:
    """``kind="poisson"`` with either a photon ``scale`` or a target ``nsr``."""

    kind: str = "none"
    nsr: float | None = None
    scale: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "poisson"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if self.kind == "poisson" and self.nsr is None and self.scale is None:
            raise ConfigurationError("poisson noise needs nsr or scale")


@dataclass
class BlindSpec:
    """Blind-run settings; ``margin > 0`` embeds the object in a bright frame."""

    config: blind_mod.BlindConfig = field(default_factory=blind_mod.BlindConfig)
    margin: int = 0


@dataclass
class SpectralSpec:
    mode: str = "auto"
    rho_grid: list = field(default_factory=lambda: list(np.linspace(0.0, 2.0, 41)))
    jacobian_rhos: list = field(default_factory=list)
    verify: bool = True


@dataclass
class SweepSpec:
    param: str = "rho"
    values: list = field(default_factory=list)
    workers: int = 0
    predict: bool = False
    blind: bool = False

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigurationError(f"sweep param must be one of {SWEEP_PARAMS}")


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; ``seed`` feeds every random stage."""

    seed: int = 0
    scale: str = "desk"
    out: str = "out"
    object: datasets.PhantomSpec = field(default_factory=datasets.PhantomSpec)
    probe: ProbeSpec = field(default_factory=ProbeSpec)
    scan: ScanSpec = field(default_factory=ScanSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    solver: solvers.SolverConfig = field(default_factory=solvers.SolverConfig)
    blind: BlindSpec = field(default_factory=BlindSpec)
    spectral: SpectralSpec = field(default_factory=SpectralSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    # per-stage seeds
    @property
    def seeds(self) -> dict:
        s = int(self.seed)
        return {"object": s, "probe": s + 1, "scan": s + 2, "noise": s + 3, "solver": s + 4}


def _build(cls, d: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    bad = set(d) - names
    if bad:
        raise ConfigurationError(f"unknown key(s) in [{where}]: {sorted(bad)}")
    return cls(**d)


def config_from_dict(raw: dict, scale: str | None = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from nested dicts over a scale preset."""
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    scale = scale or raw.get("scale", "desk")
    if scale not in SCALES:
        raise ConfigurationError(f"scale must be one of {sorted(SCALES)}")
    pre = SCALES[scale]
    top = {k: raw.pop(k) for k in ("seed", "out") if k in raw}
    raw.pop("scale", None)

    obj = {"n": pre["n"], **raw.pop("object", {})}
    probe = {"m": pre["m"], **raw.pop("probe", {})}
    scan = {"tau": pre["tau"], "perturb_range": pre["perturb_range"], **raw.pop("scan", {})}
    noise = raw.pop("noise", {})
    solver = raw.pop("solver", {})
    bl = raw.pop("blind", {})
    spec = raw.pop("spectral", {})
    sw = raw.pop("sweep", {})
    if raw:
        raise ConfigurationError(f"unknown section(s): {sorted(raw)}")

    seed = int(top.get("seed", 0))
    obj.setdefault("seed", seed)
    solver.setdefault("rng_seed", seed + 4)
    margin = int(bl.pop("margin", 0))
    if "inner" in bl:
        bl["inner"] = _build(solvers.SolverConfig, dict(bl["inner"]), "blind.inner")
    bl.setdefault("rng_seed", seed)
    if "ppc_ramp" in bl:
        bl["ppc_ramp"] = tuple(bl["ppc_ramp"])
    try:
        return ExperimentConfig(
            seed=seed, scale=scale, out=str(top.get("out", "out")),
            object=_build(datasets.PhantomSpec, obj, "object"),
            probe=_build(ProbeSpec, probe, "probe"),
            scan=_build(ScanSpec, scan, "scan"),
            noise=_build(NoiseSpec, noise, "noise"),
            solver=_build(solvers.SolverConfig, solver, "solver"),
            blind=BlindSpec(config=_build(blind_mod.BlindConfig, bl, "blind"), margin=margin),
            spectral=_build(SpectralSpec, spec, "spectral"),
            sweep=_build(SweepSpec, sw, "sweep"),
        )
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path=None, scale=None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
    return config_from_dict(raw, scale)


def apply_flags(cfg: ExperimentConfig, args) -> ExperimentConfig:
    """Command-line overrides (highest precedence)."""
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.object.seed = args.seed
        cfg.solver.rng_seed = args.seed + 4
        cfg.blind.config.rng_seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    upd = {k: getattr(args, k, None) for k in ("method", "rho", "beta")}
    upd = {k: v for k, v in upd.items() if v is not None}
    if upd:
        cfg.solver = dataclasses.replace(cfg.solver, **upd)
        bc = cfg.blind.config
        cfg.blind.config = dataclasses.replace(bc, inner=dataclasses.replace(bc.inner, **upd))
    return cfg


# --------------------------------------------------------------------------
# small I/O helpers
# --------------------------------------------------------------------------


def _write_json(path, obj) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=1, default=_jsonable))
    os.replace(tmp, path)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    return str(o)


def write_pgm(path, img, maxval=65535) -> None:
    """Binary PGM (P5); 16-bit big-endian when ``maxval > 255``."""
    img = np.asarray(img, dtype=float)
    q = np.clip(np.rint(img * maxval), 0, maxval)
    dt = ">u2" if maxval > 255 else "u1"
    h, w = q.shape
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(q.astype(dt).tobytes())
    os.replace(tmp, path)


def export_images(prefix, f) -> None:
    """Magnitude (scaled by its max) and phase (``[-pi, pi] -> [0, 65535]``)."""
    mag = np.abs(f)
    top = mag.max()
    write_pgm(f"{prefix}_mag.pgm", mag / top if top > 0 else mag)
    write_pgm(f"{prefix}_phase.pgm", (np.angle(f) + np.pi) / (2 * np.pi))


def _fitted_rate(values):
    """Geometric rate over the last half of the trace above round-off."""
    v = np.asarray([x for x in values if np.isfinite(x) and x > 0], dtype=float)
    floor = np.flatnonzero(v < 1e-13)
    if floor.size:
        v = v[: floor[0]]
    if len(v) < 4:
        return float("nan"), float("nan")
    return metrics.fit_geometric_rate(v, start=len(v) // 2)


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def build_truth(cfg: ExperimentConfig):
    """Object, probe (or mask stack), scan and bright-frame mask."""
    sd = cfg.seeds
    margin = cfg.blind.margin
    n = cfg.object.n
    mask = None
    if margin:
        roi = datasets.generate(dataclasses.replace(cfg.object, n=n - 2 * margin))
        f, mask = datasets.embed_bright(roi, margin, cfg.blind.config.bright_value)
    else:
        f = datasets.generate(cfg.object)
    if cfg.scan.setup == "two-pattern":
        rng = np.random.default_rng(sd["probe"])
        masks = np.stack([np.ones((n, n)), np.exp(2j * np.pi * rng.random((n, n)))])
        scheme = forward.ScanScheme(n=n, m=n, tau=n, shifts=np.zeros((1, 2)), kind="raster")
        return f, masks, scheme, mask
    mu = datasets.generate_probe(cfg.probe.kind, cfg.probe.m, cfg.probe.c, seed=sd["probe"])
    scheme = forward.make_scan(n, cfg.probe.m, cfg.scan.tau, kind=cfg.scan.kind,
                               perturb_range=cfg.scan.perturb_range, rng_seed=sd["scan"],
                               boundary=cfg.scan.boundary)
    return f, mu, scheme, mask


def object_operator(cfg: ExperimentConfig, probe, scheme):
    if cfg.scan.setup == "two-pattern":
        return forward.MeasurementOp.coded_diffraction(probe)
    return forward.MeasurementOp.object_side(probe, scheme, bright_value=cfg.blind.config.bright_value)


def cmd_simulate(cfg: ExperimentConfig, out=None) -> Path:
    """Write ``b.npy``, ``scheme.json``, ``f_true.npy``, ``mu_true.npy`` and
    ``manifest.json`` (plus ``bright_mask.npy`` for framed objects)."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    f, mu, scheme, mask = build_truth(cfg)
    op = object_operator(cfg, mu, scheme)
    noise = {"kind": "none"}
    if cfg.noise.kind == "poisson":
        scale = cfg.noise.scale
        if scale is None:
            scale = forward.poisson_scale_for_nsr(np.abs(op.forward(f)), cfg.noise.nsr)
        noise = {"kind": "poisson", "scale": float(scale)}
    data = forward.measure(op, f, noise=noise, rng=cfg.seeds["noise"])
    data.save(out / "b.npy")
    tmp = out / "scheme.json.tmp"
    scheme.save(tmp)
    os.replace(tmp, out / "scheme.json")
    save_npy(out / "f_true.npy", f)
    save_npy(out / "mu_true.npy", mu)
    if mask is not None:
        save_npy(out / "bright_mask.npy", mask, dtype=bool)
    _write_json(out / "manifest.json", {
        "seed": cfg.seed, "scale": cfg.scale, "setup": cfg.scan.setup,
        "n": int(f.shape[0]), "patterns": int(data.b.shape[0]),
        "noise": noise, "nsr": float(data.nsr),
        "files": ["b.npy", "scheme.json", "f_true.npy", "mu_true.npy"],
    })
    return out


def _load_data(data_dir):
    d = Path(data_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"data directory {d} does not exist")
    for name in ("b.npy", "scheme.json", "f_true.npy", "mu_true.npy"):
        if not (d / name).exists():
            raise FileNotFoundError(f"{d / name} is missing (run simulate first)")
    b = np.load(d / "b.npy", allow_pickle=False)
    scheme = forward.ScanScheme.load(d / "scheme.json")
    f = load_npy(d / "f_true.npy")
    mu = load_npy(d / "mu_true.npy")
    mask = np.load(d / "bright_mask.npy") if (d / "bright_mask.npy").exists() else None
    return b, scheme, f, mu, mask


def _roi(mask):
    if mask is None:
        return None
    rows = np.flatnonzero(~mask.all(axis=1))
    cols = np.flatnonzero(~mask.all(axis=0))
    return (slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1))


def cmd_reconstruct(cfg: ExperimentConfig, data_dir, out=None) -> dict:
    """Non-blind run; writes trace, estimate, images and ``summary.json``."""
    b, scheme, f_true, mu, _ = _load_data(data_dir)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    op = object_operator(cfg, mu, scheme)
    st = solvers.run(cfg.solver, op, b, f_true=f_true)
    f_est = op.pinv(st.u)
    st.write_trace(out / "trace.csv")
    save_npy(out / "f_est.npy", f_est)
    save_npy(out / "u_final.npy", st.u)
    export_images(out / "f_est", f_est)
    rate, r2 = _fitted_rate([row[2] for row in st.trace])
    summary = {
        "mode": "reconstruct", "method": cfg.solver.method, "rho": cfg.solver.rho,
        "beta": cfg.solver.beta, "iterations": st.k, "converged": st.converged,
        "re": metrics.re(f_true, f_est)[0], "re2": metrics.re2(f_true, f_est),
        "rr": metrics.rr(b, op, f_est), "rate": rate, "rate_r2": r2,
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_blind(cfg: ExperimentConfig, data_dir, out=None) -> dict:
    """Blind run from a PPC probe; writes epoch trace, estimates and summary."""
    if cfg.scan.setup != "ptycho":
        raise ConfigurationError("blind runs need a ptychographic scan")
    b, scheme, f_true, mu, mask = _load_data(data_dir)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    bc = cfg.blind.config
    if bc.checkpoint_every and not bc.checkpoint_dir:
        bc = dataclasses.replace(bc, checkpoint_dir=str(out / "checkpoints"))
    if bc.boundary_enforce == "bright" and mask is None:
        raise ConfigurationError("bright enforcement needs data simulated with blind.margin > 0")
    roi = _roi(mask)
    st = blind_mod.run_blind(b, scheme, bc, truth=(f_true, mu), roi=roi, bright_mask=mask)
    st.write_trace(out / "trace.csv")
    save_npy(out / "f_est.npy", st.f)
    save_npy(out / "mu_est.npy", st.mu)
    export_images(out / "f_est", st.f)
    rate, r2 = _fitted_rate([row[1] for row in st.trace])
    last = st.trace[-1] if st.trace else (0, math.nan, math.nan, math.nan, math.nan)
    summary = {
        "mode": "blind", "method": bc.inner.method, "rho": bc.inner.rho,
        "epochs": st.epoch, "re": last[1], "re2": last[2], "rr": last[3], "probe_re": last[4],
        "rate": rate, "rate_r2": r2,
        "inner_iters": [list(t) for t in st.inner_iters],
    }
    _write_json(out / "summary.json", summary)
    return summary


def _spectral_mode(cfg, op):
    mode = cfg.spectral.mode
    if mode == "auto":
        mode = "dense" if op.size_data <= spectral.DENSE_CAP else "power"
    if mode not in ("dense", "power"):
        raise ConfigurationError(f"unknown spectral mode {mode!r}")
    return mode


def cmd_spectral(cfg: ExperimentConfig, data_dir, out=None) -> dict:
    """Spectral report at the true object (``spectral.json``)."""
    _, scheme, f_true, mu, _ = _load_data(data_dir)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    op = object_operator(cfg, mu, scheme)
    point = spectral.LinearizationPoint.from_object(op, f_true)
    mode = _spectral_mode(cfg, op)
    rep = spectral.analyze(point, op, rho_grid=np.asarray(cfg.spectral.rho_grid, dtype=float),
                           mode=mode, jacobian_rhos=cfg.spectral.jacobian_rhos if mode == "dense" else (),
                           verify=cfg.spectral.verify and mode == "dense")
    rep.save(out / "spectral.json")
    if rep.eigenstructure:
        _write_json(out / "eigenstructure.json", rep.eigenstructure)
    return rep.to_dict()


def _with_value(cfg: ExperimentConfig, param: str, value) -> ExperimentConfig:
    cfg = dataclasses.replace(cfg)
    if param == "rho":
        cfg.solver = dataclasses.replace(cfg.solver, rho=float(value))
        bc = cfg.blind.config
        cfg.blind = dataclasses.replace(cfg.blind, config=dataclasses.replace(
            bc, inner=dataclasses.replace(bc.inner, rho=float(value))))
    elif param == "beta":
        cfg.solver = dataclasses.replace(cfg.solver, method="raar", beta=float(value))
    elif param == "nsr-scale":
        cfg.noise = NoiseSpec(kind="poisson", nsr=float(value))
    elif param == "tau":
        cfg.scan = dataclasses.replace(cfg.scan, tau=int(value))
    elif param == "c":
        cfg.probe = dataclasses.replace(cfg.probe, kind="correlated", c=float(value))
    return cfg


def _sweep_one(cfg: ExperimentConfig, param, value, run_dir, use_blind, predict):
    row = {"value": value, "re": math.nan, "rate": math.nan, "status": "ok"}
    try:
        c = _with_value(cfg, param, value)
        data = cmd_simulate(c, Path(run_dir) / "data")
        fn = cmd_blind if use_blind else cmd_reconstruct
        s = fn(c, data, Path(run_dir))
        row.update(re=s["re"], rate=s["rate"])
        if predict and param == "rho":
            _, scheme, f_true, mu, _ = _load_data(data)
            op = object_operator(c, mu, scheme)
            point = spectral.LinearizationPoint.from_object(op, f_true)
            mode = _spectral_mode(c, op)
            if mode == "dense":
                lam2 = float(spectral.singular_system(point, op)[0][1])
            else:
                lam2 = spectral.spectral_gap(point, op, mode="power")
            row["predicted_rate"] = float(spectral.predicted_second(lam2, float(value)))
    except (DRSError, OSError, ValueError) as exc:
        row["status"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(cfg: ExperimentConfig, param=None, values=None, out=None) -> list:
    """Simulate + reconstruct per value; aggregate into ``sweep.csv``.

    Failed runs are recorded with their error in the ``status`` column.
    """
    param = param or cfg.sweep.param
    if param not in SWEEP_PARAMS:
        raise ConfigurationError(f"sweep param must be one of {SWEEP_PARAMS}")
    values = list(cfg.sweep.values if values is None else values)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    predict = cfg.sweep.predict and param == "rho"
    jobs = [(cfg, param, v, out / f"{param}_{i:03d}", cfg.sweep.blind, predict)
            for i, v in enumerate(values)]
    workers = cfg.sweep.workers or min(len(jobs), os.cpu_count() or 1)
    if workers > 1 and len(jobs) > 1:
        with cf.ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_one, *zip(*jobs)))
    else:
        rows = [_sweep_one(*j) for j in jobs]
    header = ["value", "re", "rate", "status"] + (["predicted_rate"] if predict else [])
    solvers.write_trace_csv(out / "sweep.csv", [[r.get(h, math.nan) for h in header] for r in rows], header)
    return rows


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment file")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--scale", choices=sorted(SCALES), help="size preset")
    common.add_argument("--method", choices=solvers.METHODS)
    common.add_argument("--rho", type=float)
    common.add_argument("--beta", type=float)

    p = argparse.ArgumentParser(prog="drsptycho", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write measurements and truth")
    helps = {"reconstruct": "non-blind reconstruction", "blind": "joint object and probe recovery",
             "spectral": "spectral gap and optimal relaxation"}
    for name in ("reconstruct", "blind", "spectral"):
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        sp.add_argument("--data", metavar="DIR",
                        help="simulate output (default: simulate into OUT/data first)")
    sw = sub.add_parser("sweep", parents=[common], help="repeat a run over one parameter")
    sw.add_argument("--param", choices=SWEEP_PARAMS)
    sw.add_argument("--values", type=float, nargs="*", help="overrides sweep.values")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = apply_flags(load_config(args.config, args.scale), args)
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.param, args.values)
        else:
            data = args.data
            if data is None:
                data = cmd_simulate(cfg, Path(cfg.out) / "data")
            fn = {"reconstruct": cmd_reconstruct, "blind": cmd_blind, "spectral": cmd_spectral}
            result = fn[args.command](cfg, data)
            brief = {k: v for k, v in result.items() if isinstance(v, (int, float, str, bool))}
            print(json.dumps(brief, default=_jsonable))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, SingularityError, ConvergenceError, CapacityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
