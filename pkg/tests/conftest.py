import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from drsptycho import datasets, forward  # noqa: E402


def crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_problem(n, m, tau, seed=0, kind="full-rank", r=1, obj="rand"):
    rng = np.random.default_rng(seed)
    scheme = forward.make_scan(n, m, tau, kind=kind, perturb_range=r, rng_seed=seed)
    probe = datasets.generate_probe("iid", m, seed=seed + 1)
    f = crandn(rng, (n, n)) if obj == "rand" else datasets.generate(datasets.PhantomSpec(kind=obj, n=n, seed=seed))
    op = forward.MeasurementOp.object_side(probe, scheme)
    return op, f, probe, scheme


@pytest.fixture
def tiny():
    """n=4, m=2, tau=1 raster: 16 shifts."""
    return make_problem(4, 2, 1, kind="raster", r=0)


@pytest.fixture
def small():
    """n=8, m=4, tau=2 perturbed scan."""
    return make_problem(8, 4, 2, r=1)


@pytest.fixture
def two_pattern():
    def build(n, seed=0):
        rng = np.random.default_rng(seed)
        masks = np.stack([np.ones((n, n)), np.exp(2j * np.pi * rng.random((n, n)))])
        op = forward.MeasurementOp.coded_diffraction(masks)
        f = datasets.generate(datasets.PhantomSpec(kind="rpp", n=n, seed=seed + 1))
        return op, f
    return build
