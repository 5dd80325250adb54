import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikelds.analytics import (
    DivergenceError,
    correlation_time,
    covariance_report,
    effective_samples,
    f_lag,
    gen_assumption_inputs,
    matvec_error_cov,
    perturbation_estimate,
    remainder,
    residual_autocov_theory,
    sample_cov,
    scalar_error_stats,
    series_sum,
    series_sum_truncated,
    spectrum_mismatch,
    stability_check,
    theory_cov,
    theory_cov_unnormalized,
)
from spikelds.codec import CodecConfig
from spikelds.compiler.approx import RationalWeight
from spikelds.lds import LdsSpec, ResidualSeries, simulate_reference
from spikelds.neuron import frame_multiply

ROTATION = np.array([[0.5, -0.7], [0.7, 0.5]])


def test_lag_kernel_and_scalar_stats():
    assert [f_lag(d) for d in (0, 1, -1, 2, 5)] == [1.0, -0.5, -0.5, 0.0, 0.0]
    assert scalar_error_stats() == (0.0, 1 / 6, -1 / 12, 0.0)
    assert matvec_error_cov(6, 0) == 1.0
    assert matvec_error_cov(6, 1) == -0.5
    with pytest.raises(ValueError):
        matvec_error_cov(0, 0)


def test_scalar_theory_value():
    # m = n = 1, A = 0.5: (3/6) * (1 - 0.5) / (1 - 0.25) = 1/3
    assert theory_cov_unnormalized([[0.5]], 1, 1)[0, 0] == pytest.approx(1 / 3)
    cfg = CodecConfig(frame_len=10, pop_size=1, eta=0.5)
    assert theory_cov([[0.5]], 1, 1, cfg)[0, 0] == pytest.approx(1 / 3 / 25)


def test_theory_is_linear_in_n_and_inverse_square_in_ell():
    A = np.array([[0.4, 0.2], [-0.1, 0.3]])
    base = theory_cov_unnormalized(A, 2, 3)
    per_column = theory_cov_unnormalized(A, 0, 6) / 6
    assert np.allclose(theory_cov_unnormalized(A, 2, 9) - base, 6 * per_column)
    c1 = np.trace(theory_cov(A, 2, 3, CodecConfig(frame_len=10)))
    c2 = np.trace(theory_cov(A, 2, 3, CodecConfig(frame_len=20)))
    assert c1 / c2 == pytest.approx(4.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000), st.floats(0.05, 0.95))
def test_series_sum_closed_form_matches_truncation(m, seed, rho):
    A = np.random.default_rng(seed).normal(size=(m, m))
    A *= rho / np.max(np.abs(np.linalg.eigvals(A)))
    S = series_sum(A)
    assert np.allclose(S, series_sum_truncated(A), atol=1e-8)
    # Lyapunov identity S = I + A S A^T
    assert np.allclose(S, np.eye(m) + A @ S @ A.T, atol=1e-8)


def test_series_sum_defective_matrix_falls_back():
    J = np.array([[0.5, 1.0], [0.0, 0.5]])
    assert np.allclose(series_sum(J), series_sum_truncated(J))


def test_unstable_raises():
    with pytest.raises(DivergenceError):
        series_sum([[1.0]])
    with pytest.raises(DivergenceError):
        correlation_time([[1.2]])


def test_correlation_time_and_effective_samples():
    A = np.diag([0.9, 0.2])
    assert correlation_time(A) == pytest.approx(9.4912, abs=1e-4)
    assert effective_samples(A, 2400) == pytest.approx(252.87, abs=0.01)
    assert effective_samples(np.zeros((2, 2)), 10) == np.inf


def test_autocov_propagates_with_A():
    A = np.array([[0.5, 0.1], [0.0, 0.3]])
    C0 = np.eye(2)
    assert np.allclose(residual_autocov_theory(A, C0, 2), A @ A)
    with pytest.raises(ValueError):
        residual_autocov_theory(A, C0, -1)


def test_sample_cov_without_mean_subtraction():
    r = np.array([[1.0, 0.0], [1.0, 2.0]])
    rep = sample_cov(ResidualSeries(r, r))
    assert np.allclose(rep.sample_cov, [[1.0, 1.0], [1.0, 2.0]])
    assert rep.sample_mse == pytest.approx(3.0)


def test_covariance_report_fields():
    cfg = CodecConfig()
    r = np.random.default_rng(0).normal(size=(500, 2))
    rep = covariance_report(ResidualSeries(r, r / cfg.scale), np.diag([0.5, 0.5]), 2, 2, cfg)
    assert rep.theory_mse == pytest.approx(np.trace(rep.theory_cov))
    assert rep.rel_frobenius >= 0
    assert rep.mse_ratio == pytest.approx(rep.sample_mse / rep.theory_mse)


def test_stability_of_rotation_counterexample():
    rho, rho_abs, ok = stability_check(ROTATION)
    assert rho == pytest.approx(np.sqrt(0.74))
    assert rho_abs == pytest.approx(1.2)
    assert ok is False
    assert stability_check(np.diag([0.5, -0.3]))[2] is True


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 7), st.integers(0, 10_000))
def test_doubled_spectrum_is_union(m, seed):
    A = np.random.default_rng(seed).uniform(-1, 1, (m, m))
    stability_check(A)  # raises on mismatch


def test_spectrum_mismatch():
    assert spectrum_mismatch([1, 2j], [2j, 1]) == 0.0
    assert spectrum_mismatch([1, 2], [1, 2.5]) == pytest.approx(0.5)
    assert spectrum_mismatch([1], [1, 2]) == np.inf


def test_remainder():
    assert np.allclose(remainder(np.array([2.25, -0.25])), [0.25, 0.75])


@pytest.mark.parametrize("alpha,beta", [(3, 7), (100, 255), (1, 2), (0, 9)])
def test_assumption_inputs_make_uniform_remainders(alpha, beta):
    w = RationalWeight(alpha, beta)
    n = gen_assumption_inputs(w, 50_000, seed=1)
    assert n.min() >= 0
    r = remainder(alpha * n / beta)
    if alpha:
        g = np.gcd(alpha, beta)
        hist = np.bincount(np.round(r * beta / g).astype(int), minlength=beta // g)
        assert hist.min() > 0.8 * hist.mean()
    assert np.array_equal(n, gen_assumption_inputs(w, 50_000, seed=1))
    with pytest.raises(ValueError):
        gen_assumption_inputs(RationalWeight(1, 1), 10, 0)


def test_scalar_multiplier_error_moments():
    """Frame error of one multiplier: mean 0, variance (1 - 1/b^2)/6, lag-1 half of it negated."""
    alpha, beta = 37, 101
    n = gen_assumption_inputs(RationalWeight(alpha, beta), 400_000, seed=4)
    out, _ = frame_multiply(alpha, beta, n)
    e = out - alpha * n / beta
    var = np.mean(e * e)
    assert abs(e.mean()) < 3 * np.sqrt(var / len(e))
    assert var == pytest.approx((1 - 1 / beta**2) / 6, rel=0.01)
    lag1 = np.mean(e[1:] * e[:-1])
    assert lag1 == pytest.approx(-var / 2, rel=0.02)
    assert abs(np.mean(e[2:] * e[:-2])) < 0.003


def test_perturbation_estimate_first_order():
    rng = np.random.default_rng(0)
    A = np.array([[0.6, 0.2], [-0.1, 0.5]])
    B = np.array([[1.0, 0.0], [0.5, 1.0]])
    P = rng.normal(size=(2, 2))
    u = rng.normal(size=(80, 2))
    base = simulate_reference(LdsSpec(A, B), u)
    for h in (1e-4, 1e-5):
        diff = simulate_reference(LdsSpec(A + h * P, B), u) - base
        est = h * perturbation_estimate(A, B, P, u)
        assert np.abs(diff - est).max() < 50 * h * h * np.abs(base).max()


def test_perturbation_estimate_scalar_closed_form():
    a, pert = 0.7, 1.0
    u = np.zeros((6, 1))
    u[0] = 1.0
    est = perturbation_estimate([[a]], [[1.0]], [[pert]], u)[:, 0]
    # impulse at t=0: d x_t = t a^(t-1)
    assert np.allclose(est, [k * a ** (k - 1) if k else 0.0 for k in range(6)])
