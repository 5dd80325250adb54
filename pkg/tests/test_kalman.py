import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from spikelds.analytics import DivergenceError
from spikelds.codec import CodecConfig
from spikelds.kalman import (
    KfModel,
    KinematicTask,
    Trial,
    fit_kinematic_model,
    generate_kinematic_trials,
    kalman_filter,
    kf_step,
    kinematic_phi,
    leave_one_out,
    normalize_trials,
    pearson,
    read_dataset,
    run_sskf,
    solve_dare,
    spiking_sskf,
    sskf_matrices,
    strip_bias,
    write_dataset,
)


def scalar_model(phi=0.5, q=1.0, r=1.0):
    return KfModel([[phi]], [[q]], [[1.0]], [[r]])


def scalar_dare_oracle(phi, q, r):
    # P = phi^2 r P / (P + r) + q  ->  P^2 + (r - phi^2 r - q) P - q r = 0
    b = r - phi**2 * r - q
    return (-b + np.sqrt(b * b + 4 * q * r)) / 2


def random_stable_model(rng, m, n):
    Phi = rng.normal(size=(m, m))
    Phi *= rng.uniform(0.3, 0.95) / np.max(np.abs(np.linalg.eigvals(Phi)))
    G = rng.normal(size=(m, m))
    Q = G @ G.T / m + 0.1 * np.eye(m)
    H = rng.normal(size=(n, m))
    F = rng.normal(size=(n, n))
    R = F @ F.T / n + 0.5 * np.eye(n)
    return KfModel(Phi, Q, H, R)


def test_model_validation():
    with pytest.raises(ValueError):
        KfModel(np.eye(2), np.eye(3), np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        KfModel([[0.5]], [[1.0]], [[1.0]], [[0.0]])
    with pytest.raises(ValueError):
        KfModel([[0.5]], [[-1.0]], [[1.0]], [[1.0]])
    with pytest.raises(ValueError):
        KfModel(np.eye(2), [[1.0, 0.5], [0.0, 1.0]], np.eye(2), np.eye(2))


def test_kf_step_scalar_values():
    model = KfModel([[1.0]], [[0.25]], [[1.0]], [[1.0]], x0_mean=[0.0], P0=[[1.0]])
    x, P = kf_step(model, model.x0_mean, model.P0, [1.0])
    assert x[0] == pytest.approx(5 / 9)
    assert P[0, 0] == pytest.approx(5 / 9)


def test_scalar_dare_frozen_values():
    P = solve_dare(scalar_model())
    assert P[0, 0] == pytest.approx(1.1327822185, abs=1e-10)
    assert P[0, 0] == pytest.approx(scalar_dare_oracle(0.5, 1.0, 1.0), abs=1e-10)
    ss = sskf_matrices(scalar_model())
    assert ss.K_ss[0, 0] == pytest.approx(0.5311288741, abs=1e-9)
    assert ss.A_sskf[0, 0] == pytest.approx(0.5 * (1 - 0.5311288741), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.99), st.floats(0.01, 10), st.floats(0.01, 10))
def test_scalar_dare_matches_quadratic_formula(phi, q, r):
    P = solve_dare(scalar_model(phi, q, r))[0, 0]
    assert P == pytest.approx(scalar_dare_oracle(phi, q, r), rel=1e-9, abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_dare_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    model = random_stable_model(rng, 4, 3)
    P = solve_dare(model)
    ref = scipy.linalg.solve_discrete_are(model.Phi.T, model.H.T, model.Q, model.R)
    assert np.allclose(P, ref, atol=1e-9)


def test_dare_does_not_depend_on_measurements():
    """The covariance track of the full filter converges to the DARE whatever y is."""
    model = random_stable_model(np.random.default_rng(7), 3, 2)
    rng = np.random.default_rng(0)
    _, P1 = kalman_filter(model, rng.normal(size=(300, 2)))
    _, P2 = kalman_filter(model, 100 * rng.normal(size=(300, 2)))
    assert np.array_equal(P1, P2)
    ss = sskf_matrices(model)
    P_post = (np.eye(3) - ss.K_ss @ model.H) @ ss.P_ss_minus
    assert np.allclose(P1[-1], P_post, atol=1e-9)


def test_dare_iteration_limit():
    with pytest.raises(DivergenceError):
        solve_dare(scalar_model(0.99), max_iter=3)


@pytest.mark.parametrize("seed", range(5))
def test_full_filter_converges_to_steady_state(seed):
    rng = np.random.default_rng(100 + seed)
    model = random_stable_model(rng, 3, 2)
    Y = rng.normal(size=(400, 2))
    xs, _ = kalman_filter(model, Y)
    ss = sskf_matrices(model)
    xss = run_sskf(ss, Y, model.x0_mean)
    assert np.abs(xs[200:] - xss[200:]).max() < 1e-6


def test_unstable_steady_state_raises():
    # unobservable unstable mode
    model = KfModel([[1.2, 0.0], [0.0, 0.5]], np.eye(2), [[0.0, 1.0]], [[1.0]])
    with pytest.raises(DivergenceError):
        sskf_matrices(model)


def test_strip_bias_reproduces_augmented_trajectory():
    rng = np.random.default_rng(3)
    A = rng.uniform(-0.4, 0.4, (2, 2))
    a = rng.normal(size=(2, 1))
    B = rng.normal(size=(2, 3))
    A_aug = np.block([[A, a], [np.zeros((1, 2)), np.eye(1)]])
    B_aug = np.vstack([B, np.zeros((1, 3))])
    Y = rng.normal(size=(50, 3))
    X_aug = run_sskf_plain(A_aug, B_aug, Y, np.r_[0.0, 0.0, 1.0])
    A2, B2 = strip_bias(A_aug, B_aug)
    X = run_sskf_plain(A2, B2, np.hstack([Y, np.ones((50, 1))]), np.zeros(2))
    assert np.allclose(X, X_aug[:, :2])
    with pytest.raises(ValueError):
        strip_bias(np.eye(3) * 0.5, B_aug)


def run_sskf_plain(A, B, Y, x):
    out = []
    for y in Y:
        x = A @ x + B @ y
        out.append(x)
    return np.array(out)


def test_pearson():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert np.isnan(pearson([1, 1, 1], [1, 2, 3]))


def test_kinematic_phi_and_fit_recovers_decay():
    Phi = kinematic_phi(0.5, 0.8)
    assert np.array_equal(Phi, [[1, 0.5, 0], [0, 0.8, 0], [0, 0, 1]])
    trials = generate_kinematic_trials(KinematicTask(n_trials=30, n_steps=200, n_obs=5, phi=0.8))
    model = fit_kinematic_model(trials)
    assert model.Phi[1, 1] == pytest.approx(0.8, abs=0.03)
    assert model.n_constant == 1
    assert model.Q[2, 2] == 0 and model.P0[2, 2] == 0
    assert model.Q[1, 1] == pytest.approx(0.05, rel=0.1)


def test_bias_stays_exact_in_steady_state():
    trials = generate_kinematic_trials(KinematicTask(n_trials=5, n_steps=80, n_obs=4))
    model = fit_kinematic_model(trials)
    ss = sskf_matrices(model)
    assert np.allclose(ss.P_ss_minus[2], 0, atol=1e-12)
    assert np.allclose(ss.A_sskf[2], [0, 0, 1])


def test_dataset_roundtrip(tmp_path):
    trials = generate_kinematic_trials(KinematicTask(n_trials=3, n_steps=7, n_obs=2))
    path = tmp_path / "data.csv"
    write_dataset(path, trials)
    back = read_dataset(path)
    assert len(back) == 3
    for a, b in zip(trials, back):
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.measurements, b.measurements)
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x0,y0\n0,1,2\n")
    with pytest.raises(ValueError):
        read_dataset(bad)


def test_normalize_trials_peak():
    cfg = CodecConfig(frame_len=10, pop_size=3, eta=0.8)
    trials = [Trial(np.array([[2.0, 1.0], [-4.0, 0.0]]), np.array([[1.0], [-0.5]]))]
    out = normalize_trials(trials, cfg)
    assert np.abs(out[0].states[:, 0]).max() == pytest.approx(cfg.scale)
    assert np.abs(out[0].measurements).max() == pytest.approx(cfg.scale)


def test_spiking_sskf_tracks_exact_filter():
    cfg = CodecConfig(frame_len=25, pop_size=21)
    trials = normalize_trials(generate_kinematic_trials(KinematicTask(n_trials=6, n_steps=100, n_obs=8)), cfg)
    model = fit_kinematic_model(trials[1:])
    res = spiking_sskf(model, cfg, trials[0].measurements)
    assert res.correlation[0] > 0.99
    assert res.estimates.shape == (100, 2)
    with pytest.raises(ValueError):
        spiking_sskf(model, cfg, trials[0].measurements * 10)


def test_leave_one_out_fields_and_determinism():
    cfg = CodecConfig(frame_len=10, pop_size=3)
    trials = normalize_trials(generate_kinematic_trials(KinematicTask(n_trials=4, n_steps=60, n_obs=6)), cfg)
    a = leave_one_out(trials, cfg, which=[0, 2])
    b = leave_one_out(trials, cfg, which=[0, 2])
    assert [r.trial for r in a] == [0, 2]
    for x, y in zip(a, b):
        assert x.r_spiking == y.r_spiking
        assert np.array_equal(x.spiking, y.spiking)
        assert x.r_kf > 0.9 and len(x.true) == 60
