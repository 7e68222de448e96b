"""Fixed-point iterations for phase retrieval with a known measurement matrix.

Every map acts on a transform-domain iterate ``u`` (shape of the data ``b``)
and needs only ``op.project`` (``P_X``) and the magnitude data.  The object
is read off at the end with ``A^+ u``.

RAAR is written in the same variable, so its fixed points satisfy the
Gaussian-DRS fixed-point equation at ``rho = (1-beta)/(2beta-1)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .errors import ConfigurationError, NumericalFailure
from .grids import norm2, save_npy, sgn
from .prox import prox_gaussian

METHODS = ("aar", "gaussian-drs", "poisson-drs", "raar", "apr", "ap", "admm-gaussian")


@dataclass
class SolverConfig:
    """Method and stopping rule for a single fixed-point run.

    ``tol`` is the threshold on the relative decrease of the residual
    ``|| |P_X u| - b ||`` between consecutive iterations; ``None`` runs to
    ``max_iters``; an increase also counts as "no decrease" and stops the
    run.  ``stop_rule="stagnation"`` compares the absolute relative change
    instead, so only a stalled residual stops.  ``project_every`` optionally
    replaces the iterate by ``P_X u`` every K iterations (off by default).
    """

    method: str = "gaussian-drs"
    rho: float = 1.0
    beta: float = 0.9
    max_iters: int = 1000
    tol: float | None = None
    record_every: int = 1
    rng_seed: int = 0
    project_every: int = 0
    divergence_factor: float = 1e3
    stop_rule: str = "decrease"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.rho < 0:
            raise ConfigurationError("rho must be nonnegative")
        if self.method in ("poisson-drs", "admm-gaussian") and self.rho <= 0:
            raise ConfigurationError(f"{self.method} requires rho > 0")
        if not 0.5 <= self.beta <= 1.0:
            raise ConfigurationError("beta must lie in [1/2, 1]")
        if self.tol is not None and self.tol <= 0:
            raise ConfigurationError("tol must be positive (or None)")
        if self.stop_rule not in ("decrease", "stagnation"):
            raise ConfigurationError(f"unknown stop_rule {self.stop_rule!r}")
        if self.max_iters < 0 or self.record_every < 1:
            raise ConfigurationError("max_iters >= 0 and record_every >= 1 required")


@dataclass
class SolverState:
    u: np.ndarray
    k: int = 0
    trace: list = field(default_factory=list)
    converged: bool = False
    extras: dict = field(default_factory=dict)

    def write_trace(self, path) -> None:
        write_trace_csv(path, self.trace, ("iter", "rr", "re", "norm_u"))

    def save(self, path) -> None:
        save_npy(path, self.u)


def write_trace_csv(path, rows, header) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if (isinstance(v, float) and math.isnan(v)) else v for v in row])
    tmp.replace(path)


def beta_to_rho(beta: float) -> float:
    """Gaussian-DRS parameter sharing RAAR(beta)'s fixed points."""
    if beta <= 0.5:
        return math.inf
    return (1.0 - beta) / (2.0 * beta - 1.0)


# --------------------------------------------------------------------------
# single steps; `pu` is an optional precomputed P_X u
# --------------------------------------------------------------------------


def _px(op, u, pu):
    return op.project(u) if pu is None else pu


def step_aar(u, op, b, pu=None):
    """``u + P_Y R_X u - P_X u``."""
    p = _px(op, u, pu)
    return u + b * sgn(2.0 * p - u) - p


def step_gaussian_drs(u, op, b, rho, pu=None):
    """``u/(rho+1) + (rho-1)/(rho+1) P_X u + P_Y R_X u/(rho+1)``."""
    if rho < 0:
        raise ConfigurationError("rho must be nonnegative")
    p = _px(op, u, pu)
    return (u + (rho - 1.0) * p + b * sgn(2.0 * p - u)) / (rho + 1.0)


def step_apr(u, op, b, pu=None):
    """Averaged projection-reflection ``u/2 + P_Y R_X u / 2``."""
    p = _px(op, u, pu)
    return 0.5 * u + 0.5 * b * sgn(2.0 * p - u)


def step_poisson_drs(u, op, b, rho, pu=None):
    """``u/2 - R_X u/(rho+2) + rho/(2(rho+2)) sqrt(|R_X u|^2 + 8(2+rho) b^2/rho^2) sgn(R_X u)``."""
    if rho <= 0:
        raise ConfigurationError("poisson-drs requires rho > 0")
    p = _px(op, u, pu)
    x = 2.0 * p - u
    root = np.sqrt(np.abs(x) ** 2 + 8.0 * (2.0 + rho) * b ** 2 / rho ** 2)
    return 0.5 * u - x / (rho + 2.0) + (rho / (2.0 * (rho + 2.0))) * root * sgn(x)


def step_raar(u, op, b, beta, pu=None):
    """Relaxed AAR in the transform variable of the other maps.

    With ``x = R_X u`` the classical update is
    ``x' = beta (x + R_X R_Y x)/2 + (1 - beta) P_Y x``; carried out on
    ``u = R_X x`` it reads
    ``u' = beta (u - P_X u) + (2 beta - 1) P_Y x + 2 (1 - beta) P_X P_Y x``.
    ``beta = 1`` is AAR and ``beta = 1/2`` is alternating projections on
    ``range(A)``.
    """
    if not 0.5 <= beta <= 1.0:
        raise ConfigurationError("beta must lie in [1/2, 1]")
    p = _px(op, u, pu)
    py = b * sgn(2.0 * p - u)
    out = beta * (u - p) + (2.0 * beta - 1.0) * py
    if beta != 1.0:
        out = out + 2.0 * (1.0 - beta) * op.project(py)
    return out


def step_ap(u, op, b, pu=None):
    """Alternating projections ``P_X P_Y u``."""
    return op.project(b * sgn(u))


def step(config: SolverConfig, u, op, b, pu=None):
    m = config.method
    if m == "aar":
        return step_aar(u, op, b, pu)
    if m in ("gaussian-drs", "admm-gaussian"):
        return step_gaussian_drs(u, op, b, config.rho, pu)
    if m == "apr":
        return step_apr(u, op, b, pu)
    if m == "poisson-drs":
        return step_poisson_drs(u, op, b, config.rho, pu)
    if m == "raar":
        return step_raar(u, op, b, config.beta, pu)
    if m == "ap":
        return step_ap(u, op, b, pu)
    raise ConfigurationError(f"unknown method {m!r}")


# --------------------------------------------------------------------------
# runs
# --------------------------------------------------------------------------


def default_init(op, rng_seed=0):
    """``A g`` for a random complex Gaussian object ``g`` (lies in the range)."""
    rng = np.random.default_rng(rng_seed)
    g = rng.standard_normal(op.in_shape) + 1j * rng.standard_normal(op.in_shape)
    return op.forward(g)


def _residual(pu, b, nb):
    return norm2(np.abs(pu) - b) / nb


def _bound_params(config):
    """(contraction, limit factor) of the norm recursion for Gaussian-DRS."""
    if config.method == "apr":
        rho = 1.0
    elif config.method == "gaussian-drs" and config.rho > 0:
        rho = config.rho
    else:
        return None
    return max(rho, 1.0) / (rho + 1.0), 1.0 / min(rho, 1.0)


def _should_stop(config, res, res_new) -> bool:
    if res == 0:
        return True
    change = (res - res_new) / res
    if config.stop_rule == "stagnation":
        change = abs(change)
    return change <= config.tol


def run(config: SolverConfig, op, b, u0=None, f_true=None, callback=None) -> SolverState:
    """Iterate ``config.method`` from ``u0`` (default: :func:`default_init`).

    The trace holds ``(k, rr, re, ||u||)`` every ``record_every`` iterations
    where ``rr = || |P_X u| - b || / ||b||`` and ``re`` is the
    constant-phase relative error of ``A^+ u`` against ``f_true`` (NaN
    without a truth).  For Gaussian-DRS the norm bound
    ``||u_k|| <= c^k ||u_0|| + ||b|| / min(rho, 1)``, ``c = max(rho,1)/(rho+1)``,
    is checked after burn-in; its limit is the asymptotic bound.
    """
    b = np.asarray(b, dtype=float)
    nb = norm2(b)
    u = default_init(op, config.rng_seed) if u0 is None else np.array(u0, dtype=complex)
    if not np.all(np.isfinite(u)):
        raise NumericalFailure("initial iterate is not finite", iteration=0)
    if config.method == "admm-gaussian":
        p = op.project(u)
        # u_1 = z_1 + lam_0/rho reproduces the DRS iterate started at u
        return admm_gaussian_run(config, op, b, y0=p, z0=u,
                                 lambda0=config.rho * (u - p),
                                 f_true=f_true, callback=callback)

    state = SolverState(u=u)
    bound = _bound_params(config)
    norm0 = norm2(u)
    burn_in = max(50, config.max_iters // 2)
    guard = config.divergence_factor * nb

    def record(k, res):
        re = float("nan")
        if f_true is not None:
            re = metrics.re2(f_true, op.pinv(u))
        state.trace.append((k, res, re, norm2(u)))

    pu = op.project(u)
    res = _residual(pu, b, nb)
    record(0, res)
    k = 0
    while k < config.max_iters:
        u_new = step(config, u, op, b, pu)
        k += 1
        if config.project_every and k % config.project_every == 0:
            u_new = op.project(u_new)
        if not np.all(np.isfinite(u_new)):
            raise NumericalFailure(f"non-finite iterate at iteration {k}", iteration=k)
        nu = norm2(u_new)
        if nu > guard:
            raise NumericalFailure(f"iterate norm {nu:.3e} exceeds {config.divergence_factor:g}*||b|| "
                                   f"at iteration {k} (diverging)", iteration=k)
        if bound is not None and k >= burn_in and not config.project_every:
            c, lim = bound
            allowed = (lim * nb + c ** k * norm0) * (1 + 1e-6)
            if nu > allowed:
                raise NumericalFailure(f"norm bound violated at iteration {k}: {nu} > {allowed}",
                                       iteration=k)
        u = u_new
        if callback is not None:
            callback(k, u)
        pu = op.project(u)
        res_new = _residual(pu, b, nb)
        if k % config.record_every == 0 or k == config.max_iters:
            record(k, res_new)
        stop = False
        if config.tol is not None:
            stop = _should_stop(config, res, res_new)
        res = res_new
        if stop:
            state.converged = True
            if state.trace[-1][0] != k:
                record(k, res)
            break
    state.u = u
    state.k = k
    return state


def admm_gaussian_run(config: SolverConfig, op, b, y0, z0, lambda0, f_true=None,
                      callback=None) -> SolverState:
    """ADMM on ``K(y) + L(z) + <lam, z - y> + rho/2 ||z - y||^2``.

    Each iteration updates ``z <- prox_{L/rho}(y - lam/rho)``, then
    ``y <- P_X(z + lam/rho)``, then ``lam <- lam + rho (z - y)``.  The
    exposed iterate is ``u_k = z_k + lam_{k-1}/rho``; with
    ``u_1 = z_1 + lam_0/rho`` it follows Gaussian-DRS exactly.  ``z0`` is
    only reported as the value before the first update.
    """
    rho = config.rho
    if rho <= 0:
        raise ConfigurationError("admm requires rho > 0")
    b = np.asarray(b, dtype=float)
    nb = norm2(b)
    y = np.array(y0, dtype=complex)
    z = np.array(z0, dtype=complex)
    lam = np.array(lambda0, dtype=complex)
    state = SolverState(u=z + lam / rho)
    state.extras["lambda_residual"] = []

    def record(k, u, pu):
        re = float("nan")
        if f_true is not None:
            re = metrics.re2(f_true, op.pinv(u))
        state.trace.append((k, _residual(pu, b, nb), re, norm2(u)))

    u = state.u
    record(0, u, op.project(u))
    res = None
    k = 0
    for k in range(1, config.max_iters + 1):
        z = prox_gaussian(y - lam / rho, b, rho)
        u = z + lam / rho
        y = op.project(u)
        lam_new = lam + rho * (z - y)
        state.extras["lambda_residual"].append(norm2(lam_new - lam - rho * (z - y)))
        lam = lam_new
        if not np.all(np.isfinite(u)):
            raise NumericalFailure(f"non-finite iterate at iteration {k}", iteration=k)
        if callback is not None:
            callback(k, u)
        res_new = _residual(y, b, nb)
        if k % config.record_every == 0 or k == config.max_iters:
            record(k, u, y)
        if config.tol is not None and res is not None and _should_stop(config, res, res_new):
            state.converged = True
            break
        res = res_new
    state.u = u
    state.k = k
    state.extras.update(y=y, z=z, lam=lam)
    return state


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


def fixed_point_residual(u, op, b, rho) -> float:
    """``||P_X u + rho (u - P_X u) - b sgn(R_X u)|| / ||b||``."""
    p = op.project(u)
    return norm2(p + rho * (u - p) - b * sgn(2.0 * p - u)) / norm2(b)


def extract_object(u, op):
    """Object estimate ``A^+ u``."""
    return op.pinv(u)
