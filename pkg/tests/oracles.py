"""Slow, independent reference implementations used by the tests.

None of these call into the package's transforms; they are written from
the definitions so that agreement is meaningful.
"""

from __future__ import annotations

import itertools

import numpy as np


def dft_matrix(m: int) -> np.ndarray:
    """``(2m-1) x m`` oversampled DFT, ``W[k, j] = exp(-2 pi i k j / (2m-1))``."""
    M = 2 * m - 1
    k = np.arange(M)[:, None]
    j = np.arange(m)[None, :]
    return np.exp(-2j * np.pi * k * j / M)


def naive_patch_dft(patch: np.ndarray) -> np.ndarray:
    m = patch.shape[0]
    W = dft_matrix(m)
    return W @ patch @ W.T


def dense_object_matrix(probe, shifts, n) -> np.ndarray:
    """Explicit ``A`` mapping vec(f) (row-major) to stacked patterns."""
    probe = np.asarray(probe)
    m = probe.shape[-1]
    M = 2 * m - 1
    W = dft_matrix(m)
    K = np.kron(W, W)  # acts on row-major vec of an m x m patch
    rows = []
    for t, (r, c) in enumerate(shifts):
        S = np.zeros((m * m, n * n))
        for a in range(m):
            for b in range(m):
                S[a * m + b, ((r + a) % n) * n + (c + b) % n] = 1.0
        pr = probe if probe.ndim == 2 else probe[t]
        rows.append(K @ (np.diag(pr.ravel()) @ S))
    A = np.vstack(rows)
    assert A.shape == (len(shifts) * M * M, n * n)
    return A


def dense_probe_matrix(obj, shifts, m) -> np.ndarray:
    n = obj.shape[0]
    W = dft_matrix(m)
    K = np.kron(W, W)
    rows = []
    for r, c in shifts:
        window = obj[np.ix_((r + np.arange(m)) % n, (c + np.arange(m)) % n)]
        rows.append(K @ np.diag(window.ravel()))
    return np.vstack(rows)


def svd_projector(A: np.ndarray) -> np.ndarray:
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    U = U[:, s > s[0] * 1e-12]
    return U @ U.conj().T


def golden_min(fun, lo, hi, iters=200):
    """Vectorised golden-section minimisation in long double.

    ``fun`` maps an array of abscissae to objective values; ``lo``/``hi``
    are arrays of bracket ends (one unimodal problem per entry).
    """
    g = (np.sqrt(np.longdouble(5)) - 1) / 2
    a = np.asarray(lo, dtype=np.longdouble).copy()
    b = np.asarray(hi, dtype=np.longdouble).copy()
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc < fd
        # minimum in [a, d]: shift the bracket left, reuse c as the new d
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        nd = np.where(left, c, a + g * (b - a))
        nc = np.where(left, b - g * (b - a), d)
        fnd = np.where(left, fc, fun(nd))
        fnc = np.where(left, fun(nc), fd)
        c, d, fc, fd = nc, nd, fnc, fnd
    return (a + b) / 2


def prox_magnitude_oracle(kind, a, b, rho):
    """Minimisers over ``r >= 0`` of the entrywise prox objective."""
    a = np.asarray(a, dtype=np.longdouble)
    b = np.asarray(b, dtype=np.longdouble)
    rho = np.asarray(rho, dtype=np.longdouble)
    if kind == "gaussian":
        def obj(r):
            return (r - b) ** 2 / 2 + rho / 2 * (r - a) ** 2
    else:
        def obj(r):
            with np.errstate(divide="ignore"):
                lg = np.where(b > 0, b * b * np.log(r * r), 0)
            return r * r - lg + rho / 2 * (r - a) ** 2
    hi = np.maximum(a, b) * 2 + 1
    return golden_min(obj, np.zeros_like(hi), hi)


def brute_overlap_counts(shifts, m, n, support) -> np.ndarray:
    """Pairwise ``#(M^t ∩ M^t' ∩ supp)`` by explicit set intersection."""
    sets = []
    for r, c in shifts:
        s = set()
        for a in range(m):
            for b in range(m):
                p = ((r + a) % n, (c + b) % n)
                if support[p]:
                    s.add(p)
        sets.append(s)
    T = len(sets)
    out = np.zeros((T, T), dtype=int)
    for i, j in itertools.product(range(T), repeat=2):
        out[i, j] = len(sets[i] & sets[j])
    return out


def components_from_counts(counts) -> list:
    """Connected components by repeated union (no BFS)."""
    T = counts.shape[0]
    label = list(range(T))

    def find(x):
        while label[x] != x:
            x = label[x]
        return x

    for i in range(T):
        for j in range(i + 1, T):
            if counts[i, j] >= 2:
                label[find(i)] = find(j)
    groups = {}
    for i in range(T):
        groups.setdefault(find(i), []).append(i)
    return sorted(sorted(g) for g in groups.values())


def re_grid_search(f_true, f_est, window=2, alpha_steps=401):
    """Relative error by exhaustive search over integer ramps and a polar
    grid of ``alpha``, then a shrinking-lattice refinement of ``alpha``.

    The objective ``||f - a g||^2`` is evaluated through its quadratic
    expansion so a whole grid costs one vectorised expression.
    """
    n1, n2 = f_true.shape
    nf2 = np.vdot(f_true, f_true).real
    k1 = np.arange(n1)[:, None]
    k2 = np.arange(n2)[None, :]
    best = np.inf
    for r1 in range(-window, window + 1):
        for r2 in range(-window, window + 1):
            g = np.exp(-2j * np.pi * (k1 * r1 / n1 + k2 * r2 / n2)) * f_est
            gg = np.vdot(g, g).real
            gf = np.vdot(g, f_true)

            def obj(a):
                return nf2 + np.abs(a) ** 2 * gg - 2 * np.real(np.conj(a) * gf)

            s = np.sqrt(nf2 / gg)
            mags = np.linspace(0, 2 * s, alpha_steps)
            phs = np.exp(2j * np.pi * np.arange(alpha_steps) / alpha_steps)
            grid = mags[:, None] * phs[None, :]
            a0 = grid.ravel()[np.argmin(obj(grid).ravel())]
            step = 2 * s / alpha_steps
            for _ in range(200):
                cand = a0 + step * np.array([0, 1, -1, 1j, -1j])
                a0 = cand[int(np.argmin(obj(cand)))]
                step *= 0.8
            best = min(best, np.sqrt(max(obj(a0), 0.0) / nf2))
    return best
