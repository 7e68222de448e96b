import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from drsptycho import prox
from drsptycho.errors import ConfigurationError, EvaluationError

pos = st.floats(1e-3, 1e3, allow_nan=False)


def test_loss_examples():
    b = np.array([1.0, 2.0, 3.0])
    assert prox.loss("gaussian", b.astype(complex), b) == 0
    assert prox.loss("gaussian", np.zeros(3, complex), b) == pytest.approx(0.5 * 14)
    assert prox.loss("poisson", np.ones(5, complex), np.ones(5)) == pytest.approx(5.0)
    with pytest.raises(EvaluationError) as exc:
        prox.loss("poisson", np.array([1, 0j]), np.array([1.0, 1.0]))
    assert exc.value.index == (1,)


def test_project_magnitude():
    assert prox.project_magnitude(np.array([2 + 0j]), np.array([5.0]))[0] == 5
    assert prox.project_magnitude(np.array([0j]), np.array([3.0]))[0] == 3
    u = np.array([1 + 2j, -3 + 0.5j])
    b = np.array([2.0, 0.5])
    p = prox.project_magnitude(u, b)
    np.testing.assert_array_equal(prox.project_magnitude(p, b), p)
    np.testing.assert_allclose(np.abs(p), b)


def test_gaussian_prox_examples():
    assert prox.prox_gaussian(np.array([2 + 0j]), np.array([4.0]), 1.0)[0] == pytest.approx(3.0)
    u = np.array([1 + 1j, -2j])
    b = np.array([3.0, 1.0])
    np.testing.assert_array_equal(prox.prox_gaussian(u, b, 0.0), prox.project_magnitude(u, b))


def test_poisson_prox_examples():
    assert prox.prox_poisson(np.array([0j]), np.array([3.0]), 1.0)[0] == pytest.approx(np.sqrt(6.0))
    u = np.array([2 - 1j, 0.5j])
    out = prox.prox_poisson(u, np.zeros(2), 0.7)
    np.testing.assert_allclose(out, 0.7 * u / 2.7)
    with pytest.raises(ConfigurationError):
        prox.prox_poisson(u, np.zeros(2), 0.0)


def test_zero_data_zero_input():
    z = np.zeros(3, complex)
    assert np.all(prox.prox_gaussian(z, np.zeros(3), 1.0) == 0)
    assert np.all(prox.prox_poisson(z, np.zeros(3), 1.0) == 0)


@pytest.mark.parametrize("kind", ["gaussian", "poisson"])
def test_prox_matches_golden_section(kind):
    rng = np.random.default_rng(7)
    N = 10_000
    a = rng.exponential(2.0, N)
    b = rng.exponential(2.0, N)
    rho = rng.exponential(1.0, N) + 1e-3
    want = oracles.prox_magnitude_oracle(kind, a, b, rho).astype(float)
    got = np.abs(prox.prox(kind, a.astype(complex), b, rho))
    assert np.max(np.abs(got - want) / np.maximum(1.0, want)) < 1e-8


@given(pos, pos, pos)
@settings(max_examples=200, deadline=None)
def test_poisson_magnitude_quadratic(a, b, rho):
    r = prox.poisson_magnitude(a, b, rho)
    q = (2 + rho) * r * r - rho * a * r - 2 * b * b
    scale = (2 + rho) * r * r + rho * a * r + 2 * b * b
    assert abs(q) <= 1e-12 * scale
    assert r > 0


@given(st.floats(-10, 10), st.floats(-10, 10), pos, pos)
@settings(max_examples=200, deadline=None)
def test_prox_preserves_phase(x, y, b, rho):
    u = np.array([complex(x, y)])
    if abs(u[0]) < 1e-9:
        return
    for kind in ("gaussian", "poisson"):
        p = prox.prox(kind, u, np.array([b]), rho)
        np.testing.assert_allclose(p / np.abs(p), u / np.abs(u), atol=1e-12)


def test_gaussian_prox_tends_to_projection():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    b = rng.random(50)
    errs = [np.abs(prox.prox_gaussian(u, b, r) - prox.project_magnitude(u, b)).max() for r in (1e-1, 1e-3, 1e-6)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-5


def test_relaxed_reflect():
    b = np.array([2.0, 1.0])
    u = np.array([2j, -1.0 + 0j])
    np.testing.assert_allclose(prox.relaxed_reflect("gaussian", u, b, 1.0), u)
    v = np.array([1 + 1j, 3.0 + 0j])
    np.testing.assert_allclose(prox.relaxed_reflect("gaussian", v, b, 0.0), 2 * b * v / np.abs(v) - v)


def test_relaxed_reflect_is_not_an_involution():
    rng = np.random.default_rng(3)
    u = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    b = np.abs(u) + 0.5
    twice = prox.relaxed_reflect("gaussian", prox.relaxed_reflect("gaussian", u, b, 1.0), b, 1.0)
    assert np.linalg.norm(twice - u) > 1e-3
