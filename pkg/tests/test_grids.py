import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drsptycho import grids
from drsptycho.errors import DimensionError

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, finite, finite)


def test_sgn_examples():
    out = grids.sgn(np.array([3 + 4j, 0, -2]))
    np.testing.assert_allclose(out, [0.6 + 0.8j, 1, -1], atol=1e-15)
    assert out[1] == 1 + 0j


@given(arrays(np.complex128, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=cplx))
@settings(max_examples=60, deadline=None)
def test_sgn_unit_modulus_and_phase(u):
    s = grids.sgn(u)
    np.testing.assert_allclose(np.abs(s), 1.0, atol=1e-12)
    nz = u != 0
    np.testing.assert_allclose(s[nz] * np.abs(u[nz]), u[nz], rtol=1e-12, atol=1e-12)
    assert np.all(s[~nz] == 1)


def test_hadamard():
    assert grids.hadamard(np.array([1 + 1j]), np.array([1 - 1j]))[0] == 2
    assert grids.hadamard(np.array([1j]), np.array([1j]))[0] == -1
    a = np.arange(4.0).reshape(2, 2) + 1j
    np.testing.assert_array_equal(grids.hadamard(a, np.ones((2, 2))), a)
    with pytest.raises(DimensionError):
        grids.hadamard(np.ones((2, 2)), np.ones((3, 2)))


def test_norm_and_inner():
    u = np.array([3 + 4j, 0])
    assert grids.norm2(u) == pytest.approx(5.0)
    assert grids.rinner(u, 1j * u) == pytest.approx(0.0)


def test_npy_roundtrip(tmp_path, rng):
    a = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    p = grids.save_npy(tmp_path / "a.npy", a)
    np.testing.assert_array_equal(grids.load_npy(p), a)
    assert not list(tmp_path.glob("*.tmp"))
    with open(p, "rb") as fh:
        assert np.lib.format.read_magic(fh) == (1, 0)
