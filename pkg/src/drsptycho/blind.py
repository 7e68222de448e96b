"""Blind ptychography by alternating minimization with DRS inner loops.

Each epoch updates the object with the probe fixed (operator ``A_k``) and
then the probe with the new object fixed (operator ``B_k``), running the
same DRS map in both inner loops.  The transform-domain iterates ``u`` and
``v`` are carried over between epochs as warm starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .errors import ConfigurationError, SingularityError
from .forward import MeasurementOp, ScanScheme
from .grids import norm2, save_npy
from .solvers import SolverConfig, run, write_trace_csv

BLIND_METHODS = ("gaussian-drs", "poisson-drs", "apr", "aar", "raar")


@dataclass
class BlindConfig:
    """Settings for :func:`run_blind`.

    ``inner`` supplies the method and ``rho`` for both loops (its
    ``max_iters``/``tol`` are replaced by ``inner_cap``/``inner_tol``);
    ``probe_rho`` overrides ``rho`` for the probe loop.  With
    ``boundary_enforce="bright"`` the pixels flagged by the mask passed to
    :func:`run_blind` are reset to ``bright_value`` after every object
    update.
    """

    inner: SolverConfig = field(default_factory=lambda: SolverConfig(method="gaussian-drs", rho=1.0))
    probe_rho: float | None = None
    ppc_delta: float = 0.5
    ppc_ramp: tuple[int, int] = (0, 0)
    max_epochs: int = 100
    boundary_enforce: str = "off"
    bright_value: complex = 1.0
    inner_tol: float | None = 1e-4
    inner_cap: int = 60
    stagnation_tol: float = 1e-6
    stagnation_window: int = 5
    normalize_probe: bool = True
    warm_start: str = "carry"
    init_object: str = "flat"
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if isinstance(self.inner, dict):
            self.inner = SolverConfig(**self.inner)
        if self.inner.method not in BLIND_METHODS:
            raise ConfigurationError(f"method {self.inner.method!r} is not available for blind runs")
        if not 0 < self.ppc_delta <= 0.5:
            raise ConfigurationError("ppc_delta must lie in (0, 1/2]")
        if self.inner_cap < 0:
            raise ConfigurationError("inner_cap must be >= 0")
        if self.max_epochs < 0:
            raise ConfigurationError("max_epochs must be >= 0")
        if self.boundary_enforce not in ("off", "bright"):
            raise ConfigurationError(f"unknown boundary_enforce {self.boundary_enforce!r}")
        if self.boundary_enforce == "bright" and self.bright_value == 0:
            raise ConfigurationError("bright value must be nonzero")
        if self.init_object not in ("flat", "pinv"):
            raise ConfigurationError(f"unknown init_object {self.init_object!r}")
        if self.warm_start not in ("carry", "product"):
            raise ConfigurationError(f"unknown warm_start {self.warm_start!r}")
        self.ppc_ramp = tuple(int(k) for k in self.ppc_ramp)

    def loop_config(self, which: str) -> SolverConfig:
        rho = self.inner.rho
        if which == "probe" and self.probe_rho is not None:
            rho = self.probe_rho
        return dataclasses.replace(self.inner, rho=rho, max_iters=self.inner_cap,
                                   tol=self.inner_tol, record_every=max(1, self.inner_cap))


@dataclass
class BlindState:
    f: np.ndarray
    mu: np.ndarray
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    epoch: int = 0
    trace: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    mu_norm0: float = 0.0

    def write_trace(self, path) -> None:
        write_trace_csv(path, self.trace, ("epoch", "re", "re2", "rr", "probe_re"))

    def checkpoint(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        tag = f"{self.epoch:04d}"
        save_npy(d / f"f_{tag}.npy", self.f)
        save_npy(d / f"mu_{tag}.npy", self.mu)
        if self.u is not None:
            save_npy(d / f"u_{tag}.npy", self.u)
        if self.v is not None:
            save_npy(d / f"v_{tag}.npy", self.v)


def ppc_init(true_probe, delta=0.5, ramp_k=(0, 0), seed=0, n=None) -> np.ndarray:
    """``mu0 * exp(2 pi i k.n / n) * exp(i phi)`` with ``phi ~ U(-delta pi, delta pi)``.

    ``n`` is the object size setting the ramp period (defaults to the probe
    size).
    """
    if not 0 <= delta <= 0.5:
        raise ConfigurationError("delta must lie in [0, 1/2]")
    mu0 = np.asarray(true_probe, dtype=complex)
    m = mu0.shape[0]
    n = m if n is None else int(n)
    rng = np.random.default_rng(seed)
    phi = rng.uniform(-delta * np.pi, delta * np.pi, size=mu0.shape)
    k = np.arange(m)
    ramp = np.exp(2j * np.pi * (ramp_k[0] * k[:, None] + ramp_k[1] * k[None, :]) / n)
    return mu0 * ramp * np.exp(1j * phi)


def initial_object(b, probe, scheme: ScanScheme, kind="flat", seed=0, bright_value=1.0) -> np.ndarray:
    """Starting object for the first epoch.

    ``flat`` is a constant image scaled so that ``||A_1 f_1|| = ||b||``;
    ``pinv`` is ``A_1^+ (b * exp(i theta))`` with uniform random ``theta``.
    """
    A = MeasurementOp.object_side(probe, scheme, bright_value=bright_value)
    b = np.asarray(b)
    if kind == "flat":
        f = np.ones(A.in_shape, dtype=complex)
        return f * (norm2(b) / norm2(A.forward(f)))
    if kind == "pinv":
        rng = np.random.default_rng(seed)
        return A.pinv(b * np.exp(2j * np.pi * rng.random(b.shape)))
    raise ConfigurationError(f"unknown object initialisation {kind!r}")


def _evaluate(state, b, scheme, truth, roi):
    nb = norm2(b)
    B = MeasurementOp.probe_side(state.f, scheme)
    rr = norm2(b - np.abs(B.forward(state.mu))) / nb
    re = re2 = pre = float("nan")
    if truth is not None:
        f_true, mu_true = truth
        ft, fe = (f_true, state.f) if roi is None else (f_true[roi], state.f[roi])
        re = metrics.re(ft, fe)[0]
        re2 = metrics.re2(ft, fe)
        if mu_true is not None:
            pre = metrics.probe_re(mu_true, state.mu, scheme.n)[0]
    return re, re2, rr, pre


def epoch(state: BlindState, b, scheme: ScanScheme, config: BlindConfig,
          truth=None, roi=None, bright_mask=None) -> BlindState:
    """One object update followed by one probe update."""
    if np.any(state.mu == 0):
        idx = tuple(int(i) for i in np.argwhere(state.mu == 0)[0])
        raise SingularityError(f"probe estimate vanishes at {idx}", index=idx)
    pin = config.boundary_enforce == "bright"
    if pin and bright_mask is None:
        raise ConfigurationError("bright enforcement needs a boundary mask")

    A = MeasurementOp.object_side(state.mu, scheme, bright_value=config.bright_value)
    u0 = A.forward(state.f) if (state.u is None or config.warm_start == "product") else state.u
    su = run(config.loop_config("object"), A, b, u0=u0)
    f = A.pinv(su.u) if su.k > 0 else state.f.copy()
    u_next = su.u
    if pin:
        delta = np.where(bright_mask, config.bright_value - f, 0.0)
        f = f + delta
        # keep the warm start consistent with the pinned object
        u_next = su.u + A.forward(delta)

    B = MeasurementOp.probe_side(f, scheme)
    v0 = B.forward(state.mu) if (state.v is None or config.warm_start == "product") else state.v
    sv = run(config.loop_config("probe"), B, b, u0=v0)
    mu = B.pinv(sv.u) if sv.k > 0 else state.mu.copy()

    if config.normalize_probe and not pin and state.mu_norm0 > 0:
        s = state.mu_norm0 / norm2(mu)
        mu = mu * s
        f = f / s

    state.f, state.mu, state.u, state.v = f, mu, u_next, sv.u
    state.epoch += 1
    state.inner_iters.append((su.k, sv.k))
    re, re2, rr, pre = _evaluate(state, b, scheme, truth, roi)
    state.trace.append((state.epoch, re, re2, rr, pre))
    return state


def run_blind(b, scheme: ScanScheme, config: BlindConfig, init=None, truth=None,
              roi=None, bright_mask=None, callback=None) -> BlindState:
    """Epoch loop until the data residual stagnates or ``max_epochs``.

    Parameters
    ----------
    b : magnitudes, shape ``(T, 2m-1, 2m-1)``.
    init : ``(f1, mu1)``, a probe ``mu1`` alone (object then from
        :func:`initial_object`) or ``None`` (requires ``truth`` so that a PPC
        probe can be drawn).
    truth : ``(f, mu)`` used only for the RE, RE2 and probe error columns.
    roi : index expression restricting the object metrics.
    bright_mask : boolean ``n x n`` mask of known frame pixels.

    Stagnation means the relative change of RR stayed below
    ``stagnation_tol`` for ``stagnation_window`` consecutive epochs.
    """
    b = np.asarray(b, dtype=float)
    if init is None:
        if truth is None or truth[1] is None:
            raise ConfigurationError("no initial probe and no true probe for PPC")
        mu1 = ppc_init(truth[1], config.ppc_delta, config.ppc_ramp, config.rng_seed, scheme.n)
        f1 = None
    elif isinstance(init, tuple):
        f1, mu1 = init
    else:
        f1, mu1 = None, init
    mu1 = np.array(mu1, dtype=complex)
    if f1 is None:
        f1 = initial_object(b, mu1, scheme, config.init_object, seed=config.rng_seed + 1,
                            bright_value=config.bright_value)
    f1 = np.array(f1, dtype=complex)
    if config.boundary_enforce == "bright" and bright_mask is not None:
        f1[bright_mask] = config.bright_value

    state = BlindState(f=f1, mu=mu1, mu_norm0=norm2(mu1))
    calm = 0
    for _ in range(config.max_epochs):
        prev_rr = state.trace[-1][3] if state.trace else None
        epoch(state, b, scheme, config, truth=truth, roi=roi, bright_mask=bright_mask)
        if callback is not None:
            callback(state)
        if config.checkpoint_every and config.checkpoint_dir and state.epoch % config.checkpoint_every == 0:
            state.checkpoint(config.checkpoint_dir)
        rr = state.trace[-1][3]
        if prev_rr is not None and prev_rr > 0:
            calm = calm + 1 if abs(rr - prev_rr) / prev_rr < config.stagnation_tol else 0
            if calm >= config.stagnation_window:
                break
    return state
