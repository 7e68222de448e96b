"""Ptychographic forward model.

The bilinear map ``F(probe, object)`` cuts the object into ``m x m`` windows
at the scan shifts, multiplies each window by the probe and takes the
``(2m-1) x (2m-1)`` oversampled DFT.  Fixing one factor gives the linear
measurement matrices used by the solvers:

* object side ``A_nu g = F(nu, g)`` (probe fixed),
* probe side ``B_g nu = F(nu, g)`` (object fixed).

Both have orthogonal columns, so the Gram matrix is diagonal and the
pseudo-inverse is an adjoint followed by an entrywise division.
"""

from __future__ import annotations

import json
import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError, SingularityError
from .grids import CDTYPE, norm2

BOUNDARIES = ("periodic", "dark", "bright")
SCAN_KINDS = ("raster", "rank-one", "full-rank")


# --------------------------------------------------------------------------
# scan schemes
# --------------------------------------------------------------------------


@dataclass
class ScanScheme:
    """Ordered list of integer probe shifts over an ``n x n`` object."""

    n: int
    m: int
    tau: int
    shifts: np.ndarray
    kind: str = "raster"
    perturb_range: int = 0
    seed: int | None = None
    boundary: str = "periodic"
    grid_dims: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.shifts = np.asarray(self.shifts, dtype=np.int64).reshape(-1, 2)
        if len({tuple(t) for t in self.shifts}) != len(self.shifts):
            raise ConfigurationError("scan shifts must be distinct")
        if self.boundary not in BOUNDARIES:
            raise ConfigurationError(f"unknown boundary {self.boundary!r}")

    def __len__(self):
        return len(self.shifts)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "tau": self.tau,
            "kind": self.kind,
            "perturb_range": self.perturb_range,
            "seed": self.seed,
            "boundary": self.boundary,
            "grid_dims": list(self.grid_dims),
            "shifts": self.shifts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScanScheme":
        return cls(
            n=int(d["n"]),
            m=int(d["m"]),
            tau=int(d["tau"]),
            shifts=np.asarray(d["shifts"], dtype=np.int64),
            kind=d.get("kind", "raster"),
            perturb_range=int(d.get("perturb_range", 0)),
            seed=d.get("seed"),
            boundary=d.get("boundary", "periodic"),
            grid_dims=tuple(d.get("grid_dims", (0, 0))),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "ScanScheme":
        return cls.from_dict(json.loads(Path(path).read_text()))


def make_scan(n, m, tau, kind="full-rank", perturb_range=4, rng_seed=0,
              boundary="periodic", max_redraws=100) -> ScanScheme:
    """Perturbed raster scan.

    The base raster is ``tau * (k, l)``.  ``rank-one`` adds one integer
    offset per row index and one per column index; ``full-rank`` adds an
    independent offset pair per position.  Offsets are uniform on
    ``[-perturb_range, perturb_range]``.  Under the periodic boundary the
    raster covers the torus (``tau`` must divide ``n``) and shifts are taken
    mod ``n``; otherwise windows are kept inside the object.  Draws that
    produce colliding shifts are repeated.
    """
    if not 2 <= m < n:
        raise ConfigurationError(f"need 2 <= m < n, got m={m}, n={n}")
    if tau < 1:
        raise ConfigurationError("tau must be >= 1")
    if perturb_range < 0:
        raise ConfigurationError("perturb_range must be >= 0")
    if kind not in SCAN_KINDS:
        raise ConfigurationError(f"unknown scan kind {kind!r}")
    if boundary not in BOUNDARIES:
        raise ConfigurationError(f"unknown boundary {boundary!r}")

    if boundary == "periodic":
        if n % tau:
            raise ConfigurationError(f"tau={tau} does not divide n={n} under periodic boundary")
        q = n // tau
    else:
        q = (n - m) // tau + 1
    base = tau * np.stack(np.meshgrid(np.arange(q), np.arange(q), indexing="ij"), axis=-1)
    base = base.reshape(-1, 2)

    rng = np.random.default_rng(rng_seed)
    r = int(perturb_range)
    for _ in range(max_redraws):
        if kind == "raster" or r == 0:
            delta = np.zeros_like(base)
        elif kind == "rank-one":
            d1 = rng.integers(-r, r + 1, size=q)
            d2 = rng.integers(-r, r + 1, size=q)
            delta = np.stack(np.meshgrid(d1, d2, indexing="ij"), axis=-1).reshape(-1, 2)
        else:
            delta = rng.integers(-r, r + 1, size=base.shape)
        shifts = base + delta
        shifts = shifts - shifts.min(axis=0)
        if boundary == "periodic":
            shifts = shifts % n
        else:
            shifts = np.clip(shifts, 0, n - m)
        if len({tuple(t) for t in shifts}) == len(shifts):
            break
    else:
        raise ConfigurationError("could not draw a collision-free perturbed scan")

    return ScanScheme(n=n, m=m, tau=tau, shifts=shifts, kind=kind,
                      perturb_range=r, seed=rng_seed, boundary=boundary,
                      grid_dims=(q, q))


# --------------------------------------------------------------------------
# oversampled transform
# --------------------------------------------------------------------------


def oversampled_dft(patch) -> np.ndarray:
    """``(2m-1) x (2m-1)`` DFT of the zero-padded ``m x m`` patch.

    Works on stacks: the transform acts on the last two axes.
    """
    patch = np.asarray(patch, dtype=CDTYPE)
    m = patch.shape[-1]
    if patch.shape[-2] != m:
        raise DimensionError(f"square patch expected, got {patch.shape[-2:]}")
    M = 2 * m - 1
    return np.fft.fft2(patch, s=(M, M))


def oversampled_dft_adjoint(y, m) -> np.ndarray:
    """Conjugate transpose of :func:`oversampled_dft`."""
    M = y.shape[-1]
    return (M * M) * np.fft.ifft2(y)[..., :m, :m]


# --------------------------------------------------------------------------
# measurement operators
# --------------------------------------------------------------------------


class MeasurementOp:
    """Linear measurement map with one factor of ``F`` held fixed.

    Use :meth:`object_side`, :meth:`probe_side` or :meth:`coded_diffraction`
    rather than the constructor.

    Attributes
    ----------
    role : {"object", "probe"}
        Which argument is free.
    shifts : (T, 2) int array
    gram : real array
        Diagonal of ``A^* A`` over the free domain.
    """

    def __init__(self, role, n, m, shifts, factor, boundary="periodic",
                 bright_value=1.0):
        if role not in ("object", "probe"):
            raise ConfigurationError(f"unknown role {role!r}")
        if boundary not in BOUNDARIES:
            raise ConfigurationError(f"unknown boundary {boundary!r}")
        self.role = role
        self.n = int(n)
        self.m = int(m)
        self.M = 2 * self.m - 1
        self.shifts = np.asarray(shifts, dtype=np.int64).reshape(-1, 2)
        self.boundary = boundary
        self.bright_value = complex(bright_value)
        self.T = len(self.shifts)

        ar = np.arange(self.m)
        rows = (self.shifts[:, 0, None] + ar) % self.n
        cols = (self.shifts[:, 1, None] + ar) % self.n
        self._rows = rows[:, :, None]
        self._cols = cols[:, None, :]
        self._flat = (self._rows * self.n + self._cols).ravel()

        factor = np.asarray(factor, dtype=CDTYPE)
        if role == "object":
            if factor.shape == (self.m, self.m):
                factor = np.broadcast_to(factor, (self.T, self.m, self.m))
            if factor.shape != (self.T, self.m, self.m):
                raise DimensionError(f"probe factor has shape {factor.shape}")
            self.factor = np.ascontiguousarray(factor)
            self._mult = self.factor
            w = np.abs(self.factor) ** 2
            g = np.bincount(self._flat, weights=w.ravel(), minlength=self.n * self.n)
            self.gram = (self.M ** 2) * g.reshape(self.n, self.n)
        else:
            if factor.shape != (self.n, self.n):
                raise DimensionError(f"object factor has shape {factor.shape}")
            self.factor = factor
            self._mult = factor[self._rows, self._cols]
            self.gram = (self.M ** 2) * np.sum(np.abs(self._mult) ** 2, axis=0)

        if role == "object" and self.size_data <= 2 * self.n ** 2:
            warnings.warn(f"N={self.size_data} <= 2n^2={2 * self.n ** 2}; "
                          "object recovery is underdetermined", stacklevel=3)

    # -- constructors ---------------------------------------------------

    @classmethod
    def object_side(cls, probe, scheme: ScanScheme, bright_value=1.0):
        probe = np.asarray(probe, dtype=CDTYPE)
        return cls("object", scheme.n, scheme.m, scheme.shifts, probe,
                   boundary=scheme.boundary, bright_value=bright_value)

    @classmethod
    def probe_side(cls, obj, scheme: ScanScheme):
        return cls("probe", scheme.n, scheme.m, scheme.shifts, obj,
                   boundary=scheme.boundary)

    @classmethod
    def coded_diffraction(cls, masks):
        """Non-ptychographic phase retrieval: one full-size mask per pattern."""
        masks = np.asarray(masks, dtype=CDTYPE)
        T, n, _ = masks.shape
        return cls("object", n, n, np.zeros((T, 2), dtype=np.int64), masks)

    # -- shapes ---------------------------------------------------------

    @property
    def in_shape(self):
        return (self.n, self.n) if self.role == "object" else (self.m, self.m)

    @property
    def out_shape(self):
        return (self.T, self.M, self.M)

    @property
    def size_data(self):
        return self.T * self.M * self.M

    def _check(self, a, shape, what):
        a = np.asarray(a, dtype=CDTYPE)
        if a.shape != shape:
            raise DimensionError(f"{what} has shape {a.shape}, expected {shape}")
        return a

    # -- actions --------------------------------------------------------

    def forward(self, x) -> np.ndarray:
        x = self._check(x, self.in_shape, "input")
        if self.role == "object":
            patches = x[self._rows, self._cols] * self._mult
        else:
            patches = self._mult * x
        return oversampled_dft(patches)

    def adjoint(self, u) -> np.ndarray:
        u = self._check(u, self.out_shape, "transform-domain input")
        back = oversampled_dft_adjoint(u, self.m) * np.conj(self._mult)
        if self.role == "probe":
            return back.sum(axis=0)
        nn = self.n * self.n
        re = np.bincount(self._flat, weights=back.real.ravel(), minlength=nn)
        im = np.bincount(self._flat, weights=back.imag.ravel(), minlength=nn)
        return (re + 1j * im).reshape(self.n, self.n)

    def _divide(self, y, fill):
        out = np.zeros_like(y)
        covered = self.gram > 0
        out[covered] = y[covered] / self.gram[covered]
        if not covered.all():
            if fill is None:
                idx = tuple(int(i) for i in np.argwhere(~covered)[0])
                raise SingularityError(f"zero Gram entry at {self.role} pixel {idx}", index=idx)
            out[~covered] = fill
        return out

    def pinv(self, u) -> np.ndarray:
        """``A^+ u``; uncovered pixels get the boundary value."""
        if self.role == "probe" or self.boundary == "periodic":
            fill = None
        elif self.boundary == "dark":
            fill = 0.0
        else:
            fill = self.bright_value
        return self._divide(self.adjoint(u), fill)

    def project(self, u) -> np.ndarray:
        """Orthogonal projection onto the range, ``A A^+ u``."""
        fill = None if (self.role == "probe" or self.boundary == "periodic") else 0.0
        return self.forward(self._divide(self.adjoint(u), fill))

    def reflect(self, u) -> np.ndarray:
        return 2.0 * self.project(u) - u

    def dense(self) -> np.ndarray:
        """Explicit matrix (columns ``forward(e_j)``); small problems only."""
        k = int(np.prod(self.in_shape))
        cols = np.empty((self.size_data, k), dtype=CDTYPE)
        e = np.zeros(k, dtype=CDTYPE)
        for j in range(k):
            e[j] = 1.0
            cols[:, j] = self.forward(e.reshape(self.in_shape)).ravel()
            e[j] = 0.0
        return cols


# module-level aliases matching the operation names
def forward(op: MeasurementOp, x):
    return op.forward(x)


def adjoint(op: MeasurementOp, u):
    return op.adjoint(u)


def pseudo_inverse_apply(op: MeasurementOp, u):
    return op.pinv(u)


def project_range(op: MeasurementOp, u):
    return op.project(u)


# --------------------------------------------------------------------------
# simulated measurements
# --------------------------------------------------------------------------


@dataclass
class MeasurementData:
    """Diffraction magnitudes, pattern-major ``(T, 2m-1, 2m-1)``."""

    b: np.ndarray
    nsr: float = 0.0
    noise: dict = field(default_factory=lambda: {"kind": "none"})

    def save(self, path) -> None:
        from .grids import save_npy
        save_npy(path, self.b, dtype=np.float64)


def measure(op: MeasurementOp, x, noise=None, rng=None) -> MeasurementData:
    """Magnitudes ``|A x|``, optionally with Poisson counting noise.

    ``noise`` is ``None`` / ``{"kind": "none"}`` or
    ``{"kind": "poisson", "scale": s}``; the intensities ``s |Ax|^2`` are
    replaced by Poisson draws and ``b = sqrt(draw / s)``.
    """
    clean = np.abs(op.forward(x))
    noise = dict(noise or {"kind": "none"})
    kind = noise.get("kind", "none")
    if kind == "none":
        return MeasurementData(b=clean, nsr=0.0, noise=noise)
    if kind != "poisson":
        raise ConfigurationError(f"unknown noise kind {kind!r}")
    scale = float(noise["scale"])
    if scale <= 0:
        raise ConfigurationError("poisson scale must be positive")
    rng = np.random.default_rng(rng)
    counts = rng.poisson(clean ** 2 * scale)
    b = np.sqrt(counts / scale)
    return MeasurementData(b=b, nsr=norm2(b - clean) / norm2(clean), noise=noise)


def poisson_scale_for_nsr(clean_b, nsr) -> float:
    """Photon scale giving roughly the requested NSR.

    Uses ``Var(sqrt(Poisson(lam))) ~ 1/4`` so the expected squared deviation
    is ``N / (4 s)``.
    """
    clean_b = np.asarray(clean_b)
    return clean_b.size / (4.0 * nsr ** 2 * norm2(clean_b) ** 2)


# --------------------------------------------------------------------------
# connectivity
# --------------------------------------------------------------------------


@dataclass
class Connectivity:
    connected: bool
    components: list
    overlap: np.ndarray


def connectivity_graph(scheme: ScanScheme, support) -> Connectivity:
    """Overlap graph of the scan against an object support.

    Two windows are joined when they share at least two pixels of the
    support.  Components are found by breadth-first search from each
    unvisited shift, in scheme order.
    """
    support = np.asarray(support, dtype=bool)
    n, m = scheme.n, scheme.m
    if support.shape != (n, n):
        raise DimensionError(f"support shape {support.shape} != {(n, n)}")
    ar = np.arange(m)
    T = len(scheme)
    W = np.zeros((T, n, n), dtype=np.int64)
    for i, (r, c) in enumerate(scheme.shifts):
        W[i][np.ix_((r + ar) % n, (c + ar) % n)] = 1
    W = (W * support).reshape(T, -1)
    overlap = W @ W.T
    adj = overlap >= 2
    np.fill_diagonal(adj, False)

    seen = np.zeros(T, dtype=bool)
    components = []
    for s in range(T):
        if seen[s]:
            continue
        seen[s] = True
        comp, queue = [], deque([s])
        while queue:
            i = queue.popleft()
            comp.append(i)
            for j in np.flatnonzero(adj[i] & ~seen):
                seen[j] = True
                queue.append(int(j))
        components.append(sorted(comp))
    return Connectivity(connected=len(components) == 1, components=components,
                        overlap=overlap)
