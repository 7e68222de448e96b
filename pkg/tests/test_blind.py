import numpy as np
import pytest

from drsptycho import blind, datasets, forward, metrics, solvers
from drsptycho.errors import ConfigurationError, SingularityError
from drsptycho.grids import norm2


@pytest.fixture(scope="module")
def problem():
    n, m = 32, 8
    f = datasets.generate(datasets.PhantomSpec(kind="cib", n=n, seed=2))
    mu = datasets.generate_probe("iid", m, seed=1)
    scheme = forward.make_scan(n, m, m // 2, kind="full-rank", perturb_range=1, rng_seed=0)
    b = np.abs(forward.MeasurementOp.object_side(mu, scheme).forward(f))
    return b, scheme, f, mu


# ------------------------------------------------------------------ PPC

def test_ppc_zero_delta_is_identity():
    mu = datasets.generate_probe("iid", 10, seed=0)
    np.testing.assert_array_equal(blind.ppc_init(mu, delta=0.0), mu)


def test_ppc_relative_error_at_half():
    mu = datasets.generate_probe("iid", 60, seed=0)
    errs = [norm2(blind.ppc_init(mu, 0.5, seed=s) - mu) / norm2(mu) for s in range(5)]
    assert all(0.80 <= e <= 0.90 for e in errs)
    assert np.mean(errs) == pytest.approx(np.sqrt(2 * (1 - 2 / np.pi)), abs=0.01)


@pytest.mark.parametrize("delta", [0.1, 0.5])
def test_ppc_phase_constraint(delta):
    mu = datasets.generate_probe("iid", 16, seed=3)
    k = (1, -2)
    nu = blind.ppc_init(mu, delta, ramp_k=k, seed=7, n=64)
    j = np.arange(16)
    ramp = np.exp(2j * np.pi * (k[0] * j[:, None] + k[1] * j[None, :]) / 64)
    assert np.all(np.abs(np.angle(nu * np.conj(mu * ramp))) < delta * np.pi)
    np.testing.assert_array_equal(nu, blind.ppc_init(mu, delta, ramp_k=k, seed=7, n=64))
    with pytest.raises(ConfigurationError):
        blind.ppc_init(mu, 0.6)


# ------------------------------------------------------------------ init

def test_initial_object(problem):
    b, scheme, f, mu = problem
    f1 = blind.initial_object(b, mu, scheme, "flat")
    A = forward.MeasurementOp.object_side(mu, scheme)
    assert norm2(A.forward(f1)) == pytest.approx(norm2(b))
    assert np.ptp(np.abs(f1)) == 0
    g = blind.initial_object(b, mu, scheme, "pinv", seed=3)
    np.testing.assert_array_equal(g, blind.initial_object(b, mu, scheme, "pinv", seed=3))
    with pytest.raises(ConfigurationError):
        blind.initial_object(b, mu, scheme, "zeros")


# ------------------------------------------------------------------ epochs

def test_inner_cap_zero_is_noop(problem):
    b, scheme, f, mu = problem
    mu1 = blind.ppc_init(mu, 0.5, seed=0)
    f1 = blind.initial_object(b, mu1, scheme)
    cfg = blind.BlindConfig(inner_cap=0, normalize_probe=False)
    st = blind.BlindState(f=f1.copy(), mu=mu1.copy())
    blind.epoch(st, b, scheme, cfg)
    np.testing.assert_array_equal(st.f, f1)
    np.testing.assert_array_equal(st.mu, mu1)
    assert st.inner_iters == [(0, 0)] and st.epoch == 1


def test_exact_probe_epoch_is_a_nonblind_solve(problem):
    b, scheme, f, mu = problem
    cap = 300
    cfg = blind.BlindConfig(inner=solvers.SolverConfig(rho=1.0), inner_cap=cap, inner_tol=None)
    f1 = blind.initial_object(b, mu, scheme)
    st = blind.BlindState(f=f1.copy(), mu=mu.copy(), mu_norm0=norm2(mu))
    blind.epoch(st, b, scheme, cfg, truth=(f, mu))
    A = forward.MeasurementOp.object_side(mu, scheme)
    ref = solvers.run(solvers.SolverConfig(rho=1.0, max_iters=cap, tol=None), A, b, u0=A.forward(f1))
    fr = A.pinv(ref.u)
    assert metrics.re(fr, st.f)[0] < 1e-8
    assert metrics.re(f, fr)[0] < 1e-6
    # the probe barely moves: it is already consistent with the data
    assert metrics.probe_re(mu, st.mu, scheme.n)[0] < 1e-5


def test_zero_probe_entry_raises(problem):
    b, scheme, f, mu = problem
    bad = mu.copy()
    bad[2, 3] = 0
    st = blind.BlindState(f=f.copy(), mu=bad)
    with pytest.raises(SingularityError) as exc:
        blind.epoch(st, b, scheme, blind.BlindConfig())
    assert exc.value.index == (2, 3)


def test_max_epochs_one(problem):
    b, scheme, f, mu = problem
    st = blind.run_blind(b, scheme, blind.BlindConfig(max_epochs=1), truth=(f, mu))
    assert st.epoch == 1 and len(st.trace) == 1


def test_run_blind_needs_a_probe(problem):
    b, scheme, f, _ = problem
    with pytest.raises(ConfigurationError):
        blind.run_blind(b, scheme, blind.BlindConfig(max_epochs=1))
    with pytest.raises(ConfigurationError):
        blind.run_blind(b, scheme, blind.BlindConfig(max_epochs=1), truth=(f, None))


def test_blind_cib_geometric_decay(problem):
    b, scheme, f, mu = problem
    st = blind.run_blind(b, scheme, blind.BlindConfig(max_epochs=40), truth=(f, mu))
    re = np.array([row[1] for row in st.trace])
    assert re[-1] < 1e-7
    phase = re[(re < 1e-2) & (re > 1e-12)]
    rate, _ = metrics.fit_geometric_rate(phase)
    assert rate < 0.9
    # probe normalization keeps the probe norm fixed
    assert norm2(st.mu) == pytest.approx(st.mu_norm0)


def test_bright_field_pinning(problem):
    _, _, f, mu = problem
    roi = f[:24, :24]
    fb, mask = datasets.embed_bright(roi, 4)
    scheme = forward.make_scan(32, 8, 4, kind="full-rank", perturb_range=1, rng_seed=0, boundary="bright")
    b = np.abs(forward.MeasurementOp.object_side(mu, scheme).forward(fb))
    cfg = blind.BlindConfig(inner=solvers.SolverConfig(method="poisson-drs", rho=1.0), boundary_enforce="bright",
                            max_epochs=3, inner_tol=1e-5, inner_cap=80)
    st = blind.run_blind(b, scheme, cfg, truth=(fb, mu), bright_mask=mask)
    assert np.all(st.f[mask] == 1.0)
    with pytest.raises(ConfigurationError):
        blind.epoch(st, b, scheme, cfg)


def test_trace_and_checkpoints(tmp_path, problem):
    b, scheme, f, mu = problem
    cfg = blind.BlindConfig(max_epochs=4, checkpoint_every=2, checkpoint_dir=str(tmp_path / "ck"))
    st = blind.run_blind(b, scheme, cfg, truth=(f, mu))
    st.write_trace(tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "epoch,re,re2,rr,probe_re" and len(lines) == 5
    names = sorted(p.name for p in (tmp_path / "ck").iterdir())
    assert names == ["f_0002.npy", "f_0004.npy", "mu_0002.npy", "mu_0004.npy",
                     "u_0002.npy", "u_0004.npy", "v_0002.npy", "v_0004.npy"]
    np.testing.assert_array_equal(np.load(tmp_path / "ck" / "f_0004.npy"), st.f)


def test_config_validation():
    for kw in ({"inner": {"method": "ap"}}, {"ppc_delta": 0.0}, {"ppc_delta": 0.7}, {"inner_cap": -1},
               {"boundary_enforce": "dark"}, {"boundary_enforce": "bright", "bright_value": 0},
               {"init_object": "random"}, {"warm_start": "reset"}, {"max_epochs": -2}):
        with pytest.raises(ConfigurationError):
            blind.BlindConfig(**kw)
    cfg = blind.BlindConfig(inner={"method": "poisson-drs", "rho": 0.5}, probe_rho=2.0, inner_cap=7)
    assert cfg.loop_config("object").rho == 0.5 and cfg.loop_config("probe").rho == 2.0
    assert cfg.loop_config("object").max_iters == 7
