"""Local stability analysis of Gaussian-DRS at a regular solution.

At a regular solution ``x`` (``|x| = b`` and ``x`` in the range of ``A``)
set ``Omega = diag(sgn x)`` and ``H = Omega^* A D^{-1/2}`` where ``D`` is the
diagonal Gram matrix, so ``H`` is an isometry.  Its real form
``calH = [Re H, Im H]`` (``N x 2n^2``) has singular values
``1 = lam_1 >= lam_2 >= ... >= lam_{2n^2} = 0`` paired by
``lam_k^2 + lam_{2n^2+1-k}^2 = 1``; ``lam_2`` (the spectral gap) controls the
local rate of every map in :mod:`drsptycho.solvers`.

Real vectors of length ``2 n^2`` are identified with complex objects via
``W(z) = [Re z; -Im z]``, so ``calH W(z) = Re(H z)`` and
``calH^T eta = W(H^* eta)``.  Real matrices of the real-linear Jacobian act
on ``[Re eta; Im eta]`` (flattened, index order).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, ConfigurationError, ConvergenceError, SingularityError
from .grids import norm2, sgn

DENSE_CAP = 20000


# --------------------------------------------------------------------------
# linearization point and the isometry
# --------------------------------------------------------------------------


@dataclass
class LinearizationPoint:
    """Regular solution ``x`` with ``omega = sgn(x)`` and data ``b``."""

    x: np.ndarray
    omega: np.ndarray
    b: np.ndarray

    @classmethod
    def from_object(cls, op, f) -> "LinearizationPoint":
        x = op.forward(f)
        return cls(x=x, omega=sgn(x), b=np.abs(x))

    def validate(self, op, tol: float = 1e-8) -> None:
        nb = norm2(self.b)
        if norm2(np.abs(self.x) - self.b) > tol * nb:
            raise ConfigurationError("|x| != b: not a regular solution")
        if norm2(op.project(self.x) - self.x) > tol * norm2(self.x):
            raise ConfigurationError("x is not in the range of A")
        bad = (np.abs(self.x) == 0) & (self.b > 0)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise SingularityError(f"x vanishes at {idx} where b > 0", index=idx)

    @property
    def ratio(self) -> np.ndarray:
        """``b / |x|`` (1 where both vanish)."""
        a = np.abs(self.x)
        out = np.ones_like(a)
        nz = a > 0
        out[nz] = self.b[nz] / a[nz]
        if ((~nz) & (self.b > 0)).any():
            raise SingularityError("x vanishes where b > 0")
        return out


def _sqrt_gram(op):
    g = op.gram
    if np.any(g <= 0):
        idx = tuple(int(i) for i in np.argwhere(g <= 0)[0])
        raise SingularityError(f"zero Gram entry at {idx}", index=idx)
    return np.sqrt(g)


def _W(z):
    z = np.ravel(z)
    return np.concatenate([z.real, -z.imag])


def _Winv(xi, shape):
    k = xi.size // 2
    return (xi[:k] - 1j * xi[k:]).reshape(shape)


def apply_calH(point, op, xi) -> np.ndarray:
    """``calH xi = Re(H W^{-1} xi)`` as a flat real vector of length ``N``."""
    z = _Winv(np.asarray(xi, dtype=float), op.in_shape) / _sqrt_gram(op)
    return np.real(np.conj(point.omega) * op.forward(z)).ravel()


def apply_calHT(point, op, eta) -> np.ndarray:
    """``calH^T eta = W(H^* eta)`` for a real ``eta`` of length ``N``."""
    eta = np.asarray(eta, dtype=float).reshape(op.out_shape)
    return _W(op.adjoint(point.omega * eta) / _sqrt_gram(op))


def build_H(point, op, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense complex ``H`` (``N x n^2``)."""
    if op.size_data > cap:
        raise CapacityError(f"N={op.size_data} exceeds the dense cap {cap}")
    A = op.dense()
    return np.conj(point.omega).reshape(-1, 1) * A / _sqrt_gram(op).reshape(1, -1)


def build_calH(point, op, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense real ``calH = [Re H, Im H]`` (``N x 2n^2``)."""
    H = build_H(point, op, cap)
    return np.hstack([H.real, H.imag])


def singular_system(point, op, cap: int = DENSE_CAP):
    """``(lam, xi, eta)`` of ``calH`` in descending order (dense).

    ``xi`` columns are right singular vectors (length ``2 n^2``) and ``eta``
    columns the left ones (length ``N``); left vectors of zero singular
    values are returned as zero columns.
    """
    C = build_calH(point, op, cap)
    lam2, xi = np.linalg.eigh(C.T @ C)
    lam2, xi = lam2[::-1], xi[:, ::-1]
    lam = np.sqrt(np.clip(lam2, 0.0, None))
    eta = C @ xi
    pos = lam > 1e-12
    eta[:, pos] /= lam[pos]
    eta[:, ~pos] = 0.0
    return lam, xi, eta


def top_vector(point, op) -> np.ndarray:
    """``xi_1 = W(D^{1/2} f) / ||.||`` with ``f = A^+ x``."""
    f = op.pinv(point.x)
    v = _W(_sqrt_gram(op) * f)
    return v / np.linalg.norm(v)


def spectral_gap(point, op, mode="dense", tol=1e-9, max_iters=10000, block=4,
                 rng_seed=0, cap: int = DENSE_CAP) -> float:
    """Second singular value ``lam_2`` of ``calH``.

    ``mode="power"`` runs subspace (block power) iteration on
    ``calH^T calH`` with ``xi_1`` deflated; ``block=1`` is plain power
    iteration.  It stops when the leading Ritz value changes by less than
    ``tol`` (relative) and its residual is below ``sqrt(tol)``.
    """
    if mode == "dense":
        lam, _, _ = singular_system(point, op, cap)
        return float(lam[1])
    if mode != "power":
        raise ConfigurationError(f"unknown mode {mode!r}")

    xi1 = top_vector(point, op)
    dim = xi1.size
    p = max(1, min(int(block), dim - 1))
    rng = np.random.default_rng(rng_seed)

    def G(q):
        return apply_calHT(point, op, apply_calH(point, op, q))

    def deflate(Z):
        return Z - np.outer(xi1, xi1 @ Z)

    Q, _ = np.linalg.qr(deflate(rng.standard_normal((dim, p))))
    history = []
    theta_old = None
    for _ in range(max_iters):
        Z = np.column_stack([G(Q[:, j]) for j in range(p)])
        T = Q.T @ Z
        w, V = np.linalg.eigh(0.5 * (T + T.T))
        theta = float(w[-1])
        ritz = Q @ V[:, -1]
        resid = float(np.linalg.norm(Z @ V[:, -1] - theta * ritz))
        history.append(theta)
        if theta_old is not None and abs(theta - theta_old) <= tol * theta and resid <= math.sqrt(tol):
            return math.sqrt(max(theta, 0.0))
        theta_old = theta
        Q, _ = np.linalg.qr(deflate(Z))
    raise ConvergenceError(f"power iteration did not converge in {max_iters} iterations",
                           history=history)


# --------------------------------------------------------------------------
# the Jacobian of Gaussian-DRS
# --------------------------------------------------------------------------


def _rtilde(point, op, eta):
    v = point.omega * eta
    return np.conj(point.omega) * (2.0 * op.project(v) - v)


def jacobian_apply(point, op, rho, eta) -> np.ndarray:
    """``J(eta) = eta/2 + (rho-1)/(2(rho+1)) R eta + i/(rho+1) (b/|x|) Im(R eta)``.

    ``R = Omega^* R_X Omega``.  The map is real-linear only.
    """
    if rho < 0:
        raise ConfigurationError("rho must be nonnegative")
    eta = np.asarray(eta, dtype=complex).reshape(op.out_shape)
    r = _rtilde(point, op, eta)
    return 0.5 * eta + (rho - 1.0) / (2.0 * (rho + 1.0)) * r + 1j / (rho + 1.0) * point.ratio * r.imag


def jacobian_matrix(point, op, rho, cap: int = DENSE_CAP) -> np.ndarray:
    """Real ``2N x 2N`` matrix of :func:`jacobian_apply` in the (Re, Im) basis."""
    if rho < 0:
        raise ConfigurationError("rho must be nonnegative")
    N = op.size_data
    if N > cap:
        raise CapacityError(f"N={N} exceeds the dense cap {cap}")
    H = build_H(point, op, cap)
    P = H @ H.conj().T
    Pr = np.block([[P.real, -P.imag], [P.imag, P.real]])
    R = 2.0 * Pr - np.eye(2 * N)
    q = point.ratio.ravel()
    J = 0.5 * np.eye(2 * N) + (rho - 1.0) / (2.0 * (rho + 1.0)) * R
    J[N:, :] += (q[:, None] * R[N:, :]) / (rho + 1.0)
    return J


def closed_form_eigenvalues(lam, rho, N) -> np.ndarray:
    """Moduli of the predicted Jacobian spectrum, descending, length ``2N``.

    Each ``k`` contributes the pair
    ``[rho + 2 lam'^2 +- sqrt(rho^2 - 4 lam^2 lam'^2)] / (2 (rho+1))`` with
    ``lam = lam_k``, ``lam' = lam_{2n^2+1-k}``; in the complex regime both
    have modulus ``lam' / sqrt(1+rho)``.  The ``N - 2n^2`` directions
    orthogonal to the range of ``calH`` add ``1/(1+rho)`` (real part) and 0
    (imaginary part).
    """
    lam = np.asarray(lam, dtype=float)
    K = lam.size
    lp = lam[::-1]
    disc = rho ** 2 - 4.0 * lam ** 2 * lp ** 2
    out = []
    for d, l2 in zip(disc, lp):
        if d >= 0:
            s = math.sqrt(d)
            out += [(rho + 2 * l2 ** 2 + s) / (2 * (rho + 1)), (rho + 2 * l2 ** 2 - s) / (2 * (rho + 1))]
        else:
            out += [l2 / math.sqrt(1 + rho)] * 2
    out += [1.0 / (1.0 + rho)] * (N - K) + [0.0] * (N - K)
    return np.sort(np.abs(np.array(out)))[::-1]


def block_matrices(lam_k, lam_p, rho):
    """The two real 2x2 blocks of the Jacobian on ``span{eta_k, i eta_k'}``."""
    c = (rho - 1.0) / (rho + 1.0)
    a = lam_k * lam_p
    B1 = np.array([[1.0 / (1 + rho) + c * lam_k ** 2, c * a], [a, lam_p ** 2]])
    B2 = np.array([[lam_k ** 2, a], [c * a, 1.0 / (1 + rho) + c * lam_p ** 2]])
    return B1, B2


def closed_form_svals(lam, rho, N) -> np.ndarray:
    """Singular values of the block-diagonal form, descending, length ``2N``.

    The blocks are not symmetric, so these differ from the eigenvalue
    moduli of :func:`closed_form_eigenvalues`.
    """
    lam = np.asarray(lam, dtype=float)
    K = lam.size
    out = []
    for k in range(K // 2):
        B1, B2 = block_matrices(lam[k], lam[K - 1 - k], rho)
        out += list(np.linalg.svd(B1, compute_uv=False)) + list(np.linalg.svd(B2, compute_uv=False))
    out += [1.0 / (1.0 + rho)] * (N - K) + [0.0] * (N - K)
    return np.sort(np.array(out))[::-1]


@dataclass
class JacobianSpectrum:
    rho: float
    svals: np.ndarray
    eig_moduli: np.ndarray
    predicted_svals: np.ndarray
    predicted_eigs: np.ndarray

    def second_eigenvalue(self) -> float:
        return float(self.eig_moduli[1])


def jacobian_svals(point, op, rho, lam=None, cap: int = DENSE_CAP) -> JacobianSpectrum:
    """Numerical singular values and eigenvalue moduli of the Jacobian.

    Both come with their closed-form counterparts built from the singular
    values ``lam`` of ``calH`` (computed densely if not given).
    """
    if lam is None:
        lam, _, _ = singular_system(point, op, cap)
    J = jacobian_matrix(point, op, rho, cap)
    sv = np.linalg.svd(J, compute_uv=False)
    ev = np.sort(np.abs(np.linalg.eigvals(J)))[::-1]
    N = op.size_data
    return JacobianSpectrum(rho=float(rho), svals=sv, eig_moduli=ev,
                            predicted_svals=closed_form_svals(lam, rho, N),
                            predicted_eigs=closed_form_eigenvalues(lam, rho, N))


# --------------------------------------------------------------------------
# optimal relaxation
# --------------------------------------------------------------------------


def predicted_second(lambda2, rho):
    """Predicted second eigenvalue modulus of the Jacobian as a function of rho.

    ``[rho + 2 lam_2^2 + sqrt(rho^2 - 4 lam_2^2 (1 - lam_2^2))] / (2 (1+rho))``
    for ``rho >= rho*`` and ``lam_2 / sqrt(1+rho)`` below it.
    """
    rho = np.asarray(rho, dtype=float)
    rs, _ = optimal_rho(lambda2)
    l2 = lambda2 ** 2
    disc = np.clip(rho ** 2 - 4 * l2 * (1 - l2), 0.0, None)
    real = (rho + 2 * l2 + np.sqrt(disc)) / (2 * (1 + rho))
    cplx = lambda2 / np.sqrt(1 + rho)
    out = np.where(rho >= rs, real, cplx)
    return float(out) if out.ndim == 0 else out


def optimal_rho(lambda2: float):
    """``(rho*, rate*) = (2 lam_2 sqrt(1 - lam_2^2), lam_2 / sqrt(1 + rho*))``."""
    lo = math.sqrt(0.5)
    if not (lo - 1e-12 <= lambda2 <= 1.0 + 1e-12):
        raise ConfigurationError(f"lambda2={lambda2} outside [sqrt(1/2), 1]")
    l = min(max(lambda2, lo), 1.0)
    rs = 2.0 * l * math.sqrt(max(1.0 - l * l, 0.0))
    return rs, l / math.sqrt(1.0 + rs)


# --------------------------------------------------------------------------
# structure checks
# --------------------------------------------------------------------------


def partner(xi) -> np.ndarray:
    """``W(-i W^{-1} xi)``: maps the k-th right vector to the (2n^2+1-k)-th."""
    k = xi.size // 2
    a, c = xi[:k], xi[k:]
    # W^{-1} xi = a - i c ; times -i gives -c - i a ; W of that is [-c; a]
    return np.concatenate([-c, a])


def verify_eigenstructure(point, op, tol=1e-8, group_tol=1e-6, cap: int = DENSE_CAP) -> dict:
    """Dense checks of the singular structure of ``calH`` and ``H H^*``.

    (a) ``eta_1 = b/||b||`` is the top left vector with ``lam_1 = 1``;
    (b) ``lam_k^2 + lam_{2n^2+1-k}^2 = 1``;
    (c) ``partner(xi_k)`` is an eigenvector of ``calH^T calH`` for
        ``1 - lam_k^2`` (exact in degenerate clusters too);
    (d) ``H H^*`` restricted to ``span{eta_k, i eta'_k}`` with
        ``eta'_k = calH partner(xi_k) / lam'_k`` is the 2x2 block
        ``[[lam_k^2, lam_k lam'_k], [lam_k lam'_k, lam'_k^2]]`` and the span is
        invariant.
    """
    C = build_calH(point, op, cap)
    G = C.T @ C
    lam, xi, eta = singular_system(point, op, cap)
    K = lam.size
    b = point.b.ravel()
    bn = b / np.linalg.norm(b)

    # clusters (reported; the checks below do not depend on them)
    clusters = [[0]]
    for k in range(1, K):
        (clusters[-1].append(k) if lam[k - 1] - lam[k] <= group_tol else clusters.append([k]))

    err_a = max(abs(lam[0] - 1.0), min(np.linalg.norm(eta[:, 0] - bn), np.linalg.norm(eta[:, 0] + bn)))
    err_b = float(np.max(np.abs(lam ** 2 + lam[::-1] ** 2 - 1.0)))

    err_c = 0.0
    for k in range(K):
        s = partner(xi[:, k])
        err_c = max(err_c, float(np.linalg.norm(G @ s - (1.0 - lam[k] ** 2) * s)))

    def hhstar(v):
        z = point.omega * v.reshape(op.out_shape)
        return (np.conj(point.omega) * op.project(z)).ravel()

    err_d = 0.0
    checked = 0
    for k in range(K):
        lp = math.sqrt(max(1.0 - lam[k] ** 2, 0.0))
        e1 = eta[:, k].astype(complex)
        if lam[k] <= 1e-6:
            continue
        if lp <= 1e-6:
            # k = 1: the block degenerates to H H^* eta_1 = eta_1
            err_d = max(err_d, float(np.linalg.norm(hhstar(e1) - lam[k] ** 2 * e1)))
            checked += 1
            continue
        e2 = 1j * (C @ partner(xi[:, k])) / lp
        basis = np.column_stack([e1, e2])
        img = np.column_stack([hhstar(e1), hhstar(e2)])
        block = np.real(basis.conj().T @ img)
        want = np.array([[lam[k] ** 2, lam[k] * lp], [lam[k] * lp, lp ** 2]])
        leak = np.linalg.norm(img - basis @ (basis.conj().T @ img))
        err_d = max(err_d, float(np.max(np.abs(block - want))), float(leak))
        checked += 1

    report = {
        "eta1_error": float(err_a),
        "pairing_error": err_b,
        "partner_error": err_c,
        "block_error": err_d,
        "blocks_checked": checked,
        "n_clusters": len(clusters),
        "lambda_min": float(lam[-1]),
        "tol": tol,
    }
    report["passed"] = bool(max(err_a, err_b, err_c, err_d) <= tol)
    return report


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


@dataclass
class SpectralReport:
    lam: list
    lambda2: float
    rho_star: float
    rate_star: float
    rho_grid: list = field(default_factory=list)
    predicted_rate: list = field(default_factory=list)
    jacobian_svals: dict = field(default_factory=dict)
    eigenstructure: dict = field(default_factory=dict)

    def to_dict(self, truncate: int = 64) -> dict:
        return {
            "lambda": [float(v) for v in self.lam[:truncate]],
            "lambda2": self.lambda2,
            "rho_star": self.rho_star,
            "rate_star": self.rate_star,
            "rho_grid": list(map(float, self.rho_grid)),
            "predicted_rate": list(map(float, self.predicted_rate)),
            "jacobian_svals": {k: [float(x) for x in v[:truncate]] for k, v in self.jacobian_svals.items()},
            "eigenstructure": self.eigenstructure,
        }

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=1))
        tmp.replace(path)


def analyze(point, op, rho_grid=None, mode="dense", jacobian_rhos=(), verify=False,
            cap: int = DENSE_CAP) -> SpectralReport:
    """Spectral gap, optimal relaxation and predicted rate curve."""
    if rho_grid is None:
        rho_grid = np.linspace(0.0, 2.0, 41)
    if mode == "dense":
        lam, _, _ = singular_system(point, op, cap)
        lambda2 = float(lam[1])
    else:
        lambda2 = spectral_gap(point, op, mode="power")
        lam = np.array([1.0, lambda2])
    rs, rate = optimal_rho(lambda2)
    rep = SpectralReport(lam=list(map(float, lam)), lambda2=lambda2, rho_star=rs, rate_star=rate,
                         rho_grid=list(rho_grid),
                         predicted_rate=list(np.atleast_1d(predicted_second(lambda2, rho_grid))))
    for r in jacobian_rhos:
        rep.jacobian_svals[f"{r:g}"] = jacobian_svals(point, op, r, lam=lam, cap=cap).svals
    if verify:
        rep.eigenstructure = verify_eigenstructure(point, op, cap=cap)
    return rep
