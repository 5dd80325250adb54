import numpy as np
import pytest

from spikelds.codec import CodecConfig
from spikelds.lds import (
    GenParams,
    LdsSpec,
    gen_random_lds,
    normalize_input_matrix,
    random_signed_matrix,
    residuals,
    simulate_reference,
    sinusoid_inputs,
    spectral_radius,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        LdsSpec(np.ones((2, 3)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        LdsSpec(np.eye(2), np.ones((3, 1)))
    lds = LdsSpec([[0.5, -0.7], [0.7, 0.5]], [[1], [0]])
    assert (lds.m, lds.n) == (2, 1)
    assert lds.rho == pytest.approx(np.sqrt(0.74))
    assert lds.rho_abs == pytest.approx(1.2)


def test_gen_params_validation():
    with pytest.raises(ValueError):
        GenParams(rho0=1.0)
    with pytest.raises(ValueError):
        GenParams(T=0)


def test_simulate_reference_scalar():
    x = simulate_reference(LdsSpec([[0.5]], [[2.0]]), [[1], [0], [0], [4]])
    assert x[:, 0].tolist() == [2.0, 1.0, 0.5, 8.25]
    with pytest.raises(ValueError):
        simulate_reference(LdsSpec([[0.5]], [[2.0]]), np.ones((3, 2)))


def test_random_signed_matrix_diagonal_positive():
    rng = np.random.default_rng(0)
    M = random_signed_matrix(rng, 6, 6, flip_diagonal=False)
    assert np.all(np.diag(M) > 0)
    assert np.all((np.abs(M) >= 0.1) & (np.abs(M) <= 1.0))


def test_sinusoid_inputs_shape_and_range():
    u = sinusoid_inputs(np.random.default_rng(1), 3, 200, 100.0)
    assert u.shape == (200, 3)
    assert u.dtype.kind == "i"
    assert np.abs(u).max() <= 100


def test_gen_random_lds_properties():
    cfg = CodecConfig(frame_len=25, pop_size=21, eta=0.9)
    lds, u = gen_random_lds(GenParams(m=5, n=5, rho0=0.9, T=2400, seed=0, codec=cfg))
    assert lds.rho == pytest.approx(0.9)
    assert u.shape == (2400, 5)
    assert np.abs(simulate_reference(lds, u)).max() == pytest.approx(cfg.scale)
    lds2, u2 = gen_random_lds(GenParams(seed=0, codec=cfg))
    assert np.array_equal(lds.A, lds2.A) and np.array_equal(u, u2)


def test_normalize_input_matrix_hits_target():
    A = np.array([[0.5]])
    B = np.array([[1.0]])
    u = np.ones((50, 1))
    B2 = normalize_input_matrix(A, B, u, 10.0)
    assert np.abs(simulate_reference(LdsSpec(A, B2), u)).max() == pytest.approx(10.0)


def test_residuals_normalized_by_scale():
    cfg = CodecConfig(frame_len=10, pop_size=2, eta=0.5)
    r = residuals([[3.0], [1.0]], [[1.0], [1.0]], cfg)
    assert r.residuals[:, 0].tolist() == [2.0, 0.0]
    assert r.normalized[:, 0].tolist() == [0.2, 0.0]
    assert r.n_frames == 2
    with pytest.raises(ValueError):
        residuals([[1.0]], [[1.0, 2.0]], cfg)


def test_spectral_radius_empty_and_rotation():
    assert spectral_radius(np.zeros((0, 0))) == 0.0
    th = 0.3
    R = 0.8 * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert spectral_radius(R) == pytest.approx(0.8)
