"""Reconstruction error metrics that discount the inherent ambiguities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import UndefinedMetricError
from .grids import norm2


@dataclass
class AlignmentResult:
    alpha: complex
    ramp: tuple[float, float]
    residual: float


def _ramp_corr(h, r, period, sign):
    """``sum_n exp(-sign * 2 pi i n.r / period) h(n)`` for a real 2-vector r."""
    n1, n2 = h.shape
    e1 = np.exp(-sign * 2j * np.pi * np.arange(n1) * r[0] / period[0])
    e2 = np.exp(-sign * 2j * np.pi * np.arange(n2) * r[1] / period[1])
    return e1 @ h @ e2


def _align(f_true, f_est, period, sign, window, refine):
    """Best ``alpha`` and ramp for ``f_true ~ alpha exp(i sign 2 pi n.r/period) f_est``.

    For the object metric ``sign = -1``.  The correlation with every integer
    ramp comes from one zero-padded FFT; the best one is optionally refined
    over continuous ramps by per-axis bounded scalar minimisation.
    """
    f_true = np.asarray(f_true, dtype=complex)
    f_est = np.asarray(f_est, dtype=complex)
    if f_true.shape != f_est.shape:
        raise ValueError(f"shape mismatch {f_true.shape} vs {f_est.shape}")
    nf = norm2(f_true)
    if nf == 0:
        raise UndefinedMetricError("relative error undefined for a zero reference")
    ne2 = norm2(f_est) ** 2
    if ne2 == 0:
        return 1.0, AlignmentResult(0j, (0.0, 0.0), nf)

    # correlation against exp(i sign 2pi n.r/P) f_est is sum exp(-i sign ...) conj(f_est) f
    h = np.conj(f_est) * f_true
    P = tuple(int(p) for p in period)
    hp = np.zeros(P, dtype=complex)
    hp[: h.shape[0], : h.shape[1]] = h
    C = np.fft.fft2(hp) if sign > 0 else P[0] * P[1] * np.fft.ifft2(hp)
    if window is not None:
        w = int(window)
        k1 = np.arange(-min(w, P[0] // 2), min(w, (P[0] - 1) // 2) + 1)
        k2 = np.arange(-min(w, P[1] // 2), min(w, (P[1] - 1) // 2) + 1)
        sub = np.abs(C[np.ix_(k1 % P[0], k2 % P[1])])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        r = np.array([k1[i], k2[j]], dtype=float)
    else:
        i, j = np.unravel_index(np.argmax(np.abs(C)), C.shape)
        r = np.array([i if i <= P[0] // 2 else i - P[0],
                      j if j <= P[1] // 2 else j - P[1]], dtype=float)
    best = abs(_ramp_corr(h, r, P, sign))

    if refine:
        for _ in range(3):
            moved = False
            for ax in range(2):
                def neg(t, ax=ax):
                    rr = r.copy()
                    rr[ax] = t
                    return -abs(_ramp_corr(h, rr, P, sign))
                res = minimize_scalar(neg, bounds=(r[ax] - 0.5, r[ax] + 0.5),
                                      method="bounded", options={"xatol": 1e-10})
                if -res.fun > best * (1 + 1e-15):
                    best = -res.fun
                    moved = moved or abs(res.x - r[ax]) > 1e-12
                    r[ax] = res.x
            if not moved:
                break

    c = _ramp_corr(h, r, P, sign)
    alpha = c / ne2
    res2 = max(nf ** 2 - abs(c) ** 2 / ne2, 0.0)
    # recompute directly for accuracy at tiny errors
    n1, n2 = f_est.shape
    ph = np.exp(sign * 2j * np.pi * (np.arange(n1)[:, None] * r[0] / P[0]
                                     + np.arange(n2)[None, :] * r[1] / P[1]))
    direct = norm2(f_true - alpha * ph * f_est)
    resid = direct if np.isfinite(direct) else np.sqrt(res2)
    return resid / nf, AlignmentResult(complex(alpha), (float(r[0]), float(r[1])), resid)


def re(f_true, f_est, window=8, refine=True):
    """Relative error modulo a complex scale and a linear phase ramp.

    ``min_{alpha, r} ||f - alpha exp(-2 pi i n.r/n) f_est|| / ||f||``.
    Returns ``(value, AlignmentResult)``.
    """
    f_true = np.asarray(f_true)
    return _align(f_true, f_est, f_true.shape, -1, window, refine)


def re_noramp(f_true, f_est) -> float:
    """Relative error modulo a complex scale only."""
    f_true = np.asarray(f_true, dtype=complex)
    f_est = np.asarray(f_est, dtype=complex)
    nf = norm2(f_true)
    if nf == 0:
        raise UndefinedMetricError("relative error undefined for a zero reference")
    ne2 = norm2(f_est) ** 2
    if ne2 == 0:
        return 1.0
    alpha = np.vdot(f_est, f_true) / ne2
    return norm2(f_true - alpha * f_est) / nf


def re2(f_true, f_est) -> float:
    """Relative error modulo a constant phase factor only."""
    f_true = np.asarray(f_true, dtype=complex)
    f_est = np.asarray(f_est, dtype=complex)
    nf = norm2(f_true)
    if nf == 0:
        raise UndefinedMetricError("relative error undefined for a zero reference")
    c = np.vdot(f_est, f_true)
    phase = c / abs(c) if c != 0 else 1.0
    return norm2(f_true - phase * f_est) / nf


def probe_re(mu_true, mu_est, n, window=8, refine=True):
    """Probe analogue of :func:`re`: ramp of object period ``n``, opposite sign."""
    return _align(mu_true, mu_est, (n, n), +1, window, refine)


def rr(b, op, f_est) -> float:
    """Relative residual ``||b - |A f_est||| / ||b||``."""
    nb = norm2(b)
    if nb == 0:
        raise UndefinedMetricError("relative residual undefined for zero data")
    return norm2(np.asarray(b) - np.abs(op.forward(f_est))) / nb


def nsr(b_noisy, op, f_true) -> float:
    """Noise-to-signal ratio ``||b - |A f||| / ||A f||``."""
    clean = np.abs(op.forward(f_true))
    d = norm2(clean)
    if d == 0:
        raise UndefinedMetricError("NSR undefined for zero signal")
    return norm2(np.asarray(b_noisy) - clean) / d


def fit_geometric_rate(values, start=0, stop=None):
    """Least-squares slope of ``log(values)`` per step.

    Returns ``(rate, r_squared)`` with ``rate = exp(slope)``.
    """
    y = np.log(np.asarray(values, dtype=float)[start:stop])
    if len(y) < 2:
        return float("nan"), float("nan")
    x = np.arange(len(y), dtype=float)
    slope, icpt = np.polyfit(x, y, 1)
    pred = slope * x + icpt
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(np.exp(slope)), r2
