import numpy as np
import pytest

from spikelds.codec import CodecConfig
from spikelds.experiments import recurrent_strength, run_spiking_lds, sweep, validate_covariance, worker_count
from spikelds.lds import GenParams, gen_random_lds

SMALL = GenParams(m=2, n=2, rho0=0.8, T=300, seed=1, codec=CodecConfig(frame_len=10, pop_size=3))


def test_run_spiking_lds_residual_is_small():
    lds, u = gen_random_lds(SMALL)
    run = run_spiking_lds(lds, u, SMALL.codec)
    assert run.spiking_states.shape == run.reference_states.shape == (300, 2)
    assert np.sqrt(np.mean(run.series.residuals**2)) < 5
    assert run.n_neurons > 0


def test_validate_covariance_deterministic():
    run1, rep1 = validate_covariance(SMALL)
    run2, rep2 = validate_covariance(SMALL)
    assert np.array_equal(run1.spiking_states, run2.spiking_states)
    assert rep1.sample_mse == rep2.sample_mse
    assert rep1.theory_cov.shape == (2, 2)


def test_recurrent_strength_of_zero_matrix():
    assert recurrent_strength(np.zeros((3, 3))) == pytest.approx(3.0)
    assert recurrent_strength(np.diag([0.5])) == pytest.approx(0.5 / 0.75)


def test_worker_count(monkeypatch):
    monkeypatch.delenv("SPIKELDS_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("SPIKELDS_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("SPIKELDS_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("SPIKELDS_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()


@pytest.mark.parametrize(
    "axis,grid",
    [("input_dim", [2, 4]), ("frame_len", [8, 16]), ("recurrent_strength", [2.0, 3.0])],
)
def test_sweep_axes(axis, grid):
    pts = sweep(axis, grid, SMALL, workers=1)
    assert [p.value for p in pts] == [float(g) for g in grid]
    assert all(p.report.theory_mse > 0 for p in pts)
    if axis == "frame_len":
        # theory MSE scales as 1/l^2
        assert pts[0].report.theory_mse / pts[1].report.theory_mse == pytest.approx(4.0)


def test_sweep_recurrent_strength_hits_target():
    pts = sweep("recurrent_strength", [2.5], SMALL, workers=1)
    m, n = SMALL.m, SMALL.n
    # theory MSE = (2m + n)/6 * strength / scale^2, up to rational rounding of A
    strength = pts[0].report.theory_mse * SMALL.codec.scale**2 * 6 / (2 * m + n)
    assert strength == pytest.approx(2.5, rel=0.02)


def test_sweep_threads_match_serial():
    a = sweep("frame_len", [8, 12, 16], SMALL, workers=1)
    b = sweep("frame_len", [8, 12, 16], SMALL, workers=3)
    assert [p.report.sample_mse for p in a] == [p.report.sample_mse for p in b]


def test_sweep_errors():
    with pytest.raises(ValueError):
        sweep("bogus", [1], SMALL)
    with pytest.raises(ValueError):
        sweep("frame_len", [], SMALL)
    with pytest.raises(ValueError):
        sweep("recurrent_strength", [1e6], SMALL)
