"""Test objects and probes.

Objects: a complex pair image ("CiB" style, real part + i * imaginary part
from two grayscale images), the modified Shepp-Logan phantom, the randomly
phased phantom (RPP) and its salted variant.  Probes: unit-modulus random
phase, either i.i.d. or correlated by box filtering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigurationError
from .grids import CDTYPE, sgn

OBJECT_KINDS = ("cib", "shepp_logan", "rpp", "salted_rpp")
PROBE_KINDS = ("iid", "correlated")

# modified Shepp-Logan (Toft): value, semi-axes a, b, centre x0, y0, angle (deg)
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


@dataclass
class PhantomSpec:
    """Which test object to build.

    ``real_path``/``imag_path`` are only used by ``cib``; without them a
    procedural pair is generated.  ``salt_value=None`` uses the phantom's
    maximum magnitude.  ``extent`` is the fraction of the field covered by
    the phantom's outer ellipse (smaller leaves thicker dark margins).
    """

    kind: str = "rpp"
    n: int = 64
    seed: int = 0
    real_path: str | None = None
    imag_path: str | None = None
    phase_range: float = np.pi / 2
    p: float = 0.02
    salt_value: float | None = None
    extent: float = 0.8
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OBJECT_KINDS:
            raise ConfigurationError(f"unknown object kind {self.kind!r}")
        if self.n < 2:
            raise ConfigurationError("n must be >= 2")
        if not 0 < self.phase_range <= 2 * np.pi:
            raise ConfigurationError("phase_range must lie in (0, 2pi]")
        if not 0 <= self.p <= 1:
            raise ConfigurationError("p must lie in [0, 1]")
        if not 0 < self.extent <= 1:
            raise ConfigurationError("extent must lie in (0, 1]")


def shepp_logan(n: int, extent: float = 0.8) -> np.ndarray:
    """Modified Shepp-Logan phantom on an ``n x n`` grid, values in [0, 1]."""
    c = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    y, x = np.meshgrid(-c, c, indexing="ij")
    x, y = x / extent, y / extent
    img = np.zeros((n, n))
    for val, a, b, x0, y0, ang in _SHEPP_LOGAN:
        t = np.deg2rad(ang)
        xr = (x - x0) * np.cos(t) + (y - y0) * np.sin(t)
        yr = -(x - x0) * np.sin(t) + (y - y0) * np.cos(t)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    img = np.clip(img, 0.0, None)
    top = img.max()
    return img / top if top > 0 else img


def rpp(n: int, seed: int = 0, extent: float = 0.8) -> np.ndarray:
    """Phantom magnitudes with i.i.d. uniform phases on [0, 2pi)."""
    rng = np.random.default_rng(seed)
    return shepp_logan(n, extent) * np.exp(2j * np.pi * rng.random((n, n)))


def salted_rpp(n: int, seed: int = 0, p: float = 0.02, salt_value=None,
               extent: float = 0.8) -> np.ndarray:
    """RPP with Bernoulli(p) pixels replaced by ``a(1+i)``."""
    f = rpp(n, seed, extent)
    a = float(np.abs(f).max()) if salt_value is None else float(salt_value)
    rng = np.random.default_rng([seed, 1])
    salt = rng.random((n, n)) < p
    f[salt] = a * (1 + 1j)
    return f


def _normalize01(img):
    img = np.asarray(img, dtype=float)
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)


def load_gray(path) -> np.ndarray:
    """8/16-bit grayscale image (PGM, PNG, ...) as float scaled to [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        arr = arr[..., :3].mean(axis=-1)
    return _normalize01(arr)


def synthetic_pair(n: int, seed: int = 0):
    """Procedural stand-ins for two natural images: one smooth, one textured."""
    rng = np.random.default_rng(seed)
    c = np.arange(n) / n
    y, x = np.meshgrid(c, c, indexing="ij")
    smooth = np.zeros((n, n))
    for _ in range(6):
        cx, cy = rng.random(2)
        s = 0.08 + 0.2 * rng.random()
        smooth += rng.uniform(0.3, 1.0) * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s))
    smooth += 0.3 * y
    tex = np.zeros((n, n))
    for _ in range(4):
        k = rng.uniform(3, 12, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        tex += np.cos(2 * np.pi * (k[0] * x + k[1] * y) + ph)
    tex += 0.5 * rng.standard_normal((n, n))
    tex = fftconvolve(tex, np.ones((3, 3)) / 9.0, mode="same")
    tex *= 0.5 + 0.5 * np.cos(np.pi * x) ** 2
    return _normalize01(smooth), _normalize01(tex)


def cib(n: int, real_path=None, imag_path=None, phase_range=np.pi / 2, seed=0) -> np.ndarray:
    """``g1 + i g2`` from two grayscale images, phases rescaled to ``phase_range``.

    With images in [0, 1] the phase of ``g1 + i g2`` lies in ``[0, pi/2]``;
    it is stretched linearly so the range becomes ``phase_range``.
    """
    if (real_path is None) != (imag_path is None):
        raise ConfigurationError("cib needs both image paths or neither")
    if real_path is None:
        g1, g2 = synthetic_pair(n, seed)
    else:
        g1, g2 = load_gray(real_path), load_gray(imag_path)
        if g1.shape != g2.shape:
            raise ConfigurationError(f"image shapes differ: {g1.shape} vs {g2.shape}")
        if g1.shape != (n, n):
            raise ConfigurationError(f"images are {g1.shape}, expected {(n, n)}")
    z = g1 + 1j * g2
    return np.abs(z) * np.exp(1j * np.angle(z) * (phase_range / (np.pi / 2)))


def generate(spec: PhantomSpec) -> np.ndarray:
    if spec.kind == "cib":
        f = cib(spec.n, spec.real_path, spec.imag_path, spec.phase_range, spec.seed)
    elif spec.kind == "shepp_logan":
        f = shepp_logan(spec.n, spec.extent).astype(CDTYPE)
    elif spec.kind == "rpp":
        f = rpp(spec.n, spec.seed, spec.extent)
    else:
        f = salted_rpp(spec.n, spec.seed, spec.p, spec.salt_value, spec.extent)
    return np.ascontiguousarray(f, dtype=CDTYPE)


def generate_probe(kind: str = "iid", m: int = 16, c: float = 1.0, seed: int = 0) -> np.ndarray:
    """Unit-modulus random-phase probe.

    ``correlated`` box-filters the i.i.d. field with the indicator of
    ``max(|k1|, |k2|) <= c m`` (zero padding outside the probe) and keeps
    only the phase of the result.
    """
    if m < 2:
        raise ConfigurationError("m must be >= 2")
    if kind not in PROBE_KINDS:
        raise ConfigurationError(f"unknown probe kind {kind!r}")
    rng = np.random.default_rng(seed)
    mu = np.exp(2j * np.pi * rng.random((m, m)))
    if kind == "iid":
        return mu
    if not 0 < c <= 1:
        raise ConfigurationError("c must lie in (0, 1]")
    w = int(np.floor(c * m))
    box = np.ones((2 * w + 1, 2 * w + 1))
    return sgn(fftconvolve(mu, box, mode="same"))


def embed_bright(roi, margin: int, value=1.0) -> tuple[np.ndarray, np.ndarray]:
    """Place ``roi`` in the middle of a constant ``value`` frame.

    Returns ``(object, mask)`` where ``mask`` is True on the known frame.
    """
    roi = np.asarray(roi, dtype=CDTYPE)
    if margin < 1:
        raise ConfigurationError("margin must be >= 1")
    n = roi.shape[0] + 2 * margin
    f = np.full((n, n), complex(value), dtype=CDTYPE)
    f[margin:-margin, margin:-margin] = roi
    mask = np.ones((n, n), dtype=bool)
    mask[margin:-margin, margin:-margin] = False
    return f, mask
