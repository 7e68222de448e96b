"""Data-fidelity losses and their proximal maps.

``rho`` is the relaxation parameter throughout; the step size is ``1/rho``.
All maps act entrywise on magnitudes and keep the phase ``sgn(u)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, EvaluationError
from .grids import sgn

LOSSES = ("gaussian", "poisson")


@dataclass(frozen=True)
class LossKind:
    variant: str = "gaussian"
    rho: float = 1.0

    def __post_init__(self):
        if self.variant not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.variant!r}")
        if self.rho < 0:
            raise ConfigurationError("rho must be nonnegative")
        if self.variant == "poisson" and self.rho == 0:
            raise ConfigurationError("poisson prox requires rho > 0")


def _same(u, b):
    u = np.asarray(u)
    b = np.asarray(b, dtype=float)
    if u.shape != b.shape:
        raise DimensionError(f"shape mismatch {u.shape} vs {b.shape}")
    return u, b


def loss(kind, u, b) -> float:
    """Gaussian ``0.5 || |u| - b ||^2`` or Poisson ``sum |u|^2 - b^2 ln |u|^2``."""
    variant = kind.variant if isinstance(kind, LossKind) else kind
    u, b = _same(u, b)
    a = np.abs(u)
    if variant == "gaussian":
        return 0.5 * float(np.sum((a - b) ** 2))
    if variant != "poisson":
        raise ConfigurationError(f"unknown loss {variant!r}")
    bad = (a == 0) & (b > 0)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise EvaluationError(f"poisson loss diverges at index {idx} (u=0, b>0)", index=idx)
    a2 = a ** 2
    logs = np.zeros_like(a2)
    pos = b > 0
    logs[pos] = np.log(a2[pos])
    return float(np.sum(a2 - b ** 2 * logs))


def project_magnitude(u, b) -> np.ndarray:
    """``P_Y u = b * sgn(u)``."""
    u, b = _same(u, b)
    return b * sgn(u)


def prox_gaussian(u, b, rho) -> np.ndarray:
    """``((b + rho|u|) / (rho + 1)) * sgn(u)``; ``rho`` may be an array."""
    if np.any(np.asarray(rho) < 0):
        raise ConfigurationError("rho must be nonnegative")
    u, b = _same(u, b)
    return ((b + rho * np.abs(u)) / (rho + 1.0)) * sgn(u)


def poisson_magnitude(a, b, rho):
    """Positive root of ``(2 + rho) r^2 - rho a r - 2 b^2 = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return (rho * a + np.sqrt((rho * a) ** 2 + 8.0 * (rho + 2.0) * b ** 2)) / (2.0 * (rho + 2.0))


def prox_poisson(u, b, rho) -> np.ndarray:
    if np.any(np.asarray(rho) <= 0):
        raise ConfigurationError("poisson prox requires rho > 0")
    u, b = _same(u, b)
    return poisson_magnitude(np.abs(u), b, rho) * sgn(u)


def prox(kind, u, b, rho=None) -> np.ndarray:
    variant = kind.variant if isinstance(kind, LossKind) else kind
    if rho is None:
        rho = kind.rho
    if variant == "gaussian":
        return prox_gaussian(u, b, rho)
    if variant == "poisson":
        return prox_poisson(u, b, rho)
    raise ConfigurationError(f"unknown loss {variant!r}")


def relaxed_reflect(kind, u, b, rho=None) -> np.ndarray:
    """``2 prox(u) - u``; with the gaussian loss at ``rho = 0`` this is ``2 P_Y - I``."""
    return 2.0 * prox(kind, u, b, rho) - np.asarray(u)
