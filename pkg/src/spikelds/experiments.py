"""End-to-end runs: spiking LDS vs reference, covariance validation, parameter sweeps."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .analytics import CovarianceReport, covariance_report, series_sum, sym
from .circuits import build_spiking_lds, decode_states, rationalize, transform_lds
from .codec import CodecConfig, encode_events
from .lds import (
    GenParams,
    LdsSpec,
    ResidualSeries,
    gen_random_lds,
    normalize_input_matrix,
    random_dynamics,
    random_signed_matrix,
    residuals,
    simulate_reference,
    sinusoid_inputs,
    spectral_radius,
)
from .neuron import run_network

log = logging.getLogger(__name__)


@dataclass
class SpikingRun:
    lds: LdsSpec
    approx_lds: LdsSpec
    inputs: np.ndarray
    spiking_states: np.ndarray
    reference_states: np.ndarray
    series: ResidualSeries
    n_overflow: int
    n_neurons: int


def run_spiking_lds(lds: LdsSpec, inputs, codec: CodecConfig, use_cancellation: bool = True) -> SpikingRun:
    """Simulate the spiking implementation of ``lds`` spike-for-spike.

    The reference trajectory uses the rational (hardware) matrices so the
    residual isolates the error due to spiking computation.
    """
    u = np.atleast_2d(np.asarray(inputs, dtype=np.int64))
    T = u.shape[0]
    approx, aw, bw = rationalize(lds, codec.pop_size)
    graph = build_spiking_lds(transform_lds(lds), codec, use_cancellation, weights=(aw, bw))
    latency = graph.meta["latency"]
    ell = codec.frame_len
    record = [i for k in range(lds.m) for i in graph.outputs[f"x+{k}"] + graph.outputs[f"x-{k}"]]
    result = run_network(
        graph,
        encode_events(u, codec),
        T * ell + latency,
        record=record,
        bin_len=ell,
        bin_offset=latency,
    )
    states = decode_states(result, graph)[:T]
    ref = simulate_reference(approx, u)
    log.debug("spiking run: %d neurons, %d overflow events", len(graph.neurons), result.n_overflow)
    return SpikingRun(
        lds,
        approx,
        u,
        states,
        ref,
        residuals(states, ref, codec),
        result.n_overflow,
        len(graph.neurons),
    )


def validate_covariance(params: GenParams, use_cancellation: bool = True):
    """Random system, spiking run, and sample-vs-theory covariance of the residuals."""
    lds, u = gen_random_lds(params)
    run = run_spiking_lds(lds, u, params.codec, use_cancellation)
    report = covariance_report(run.series, run.approx_lds.A, lds.m, lds.n, params.codec)
    return run, report


def recurrent_strength(A) -> float:
    """Trace of sym((I - A) sum_k A^k A^kT), the A-dependent factor of the residual MSE."""
    A = np.asarray(A, dtype=float)
    return float(np.trace(sym((np.eye(A.shape[0]) - A) @ series_sum(A))))


@dataclass
class SweepPoint:
    axis: str
    value: float
    report: CovarianceReport
    n_overflow: int


def _scale_for_strength(A0, target, hi=None):
    """Scale factor c with recurrent_strength(c * A0) == target.

    The strength starts at m for c = 0 and may dip below m before growing
    without bound as c * rho(A0) -> 1, so the search runs on the rising
    branch past the minimum of a coarse scan; bisection does the rest.
    """
    rho0 = spectral_radius(A0)
    hi = (1 - 1e-9) / rho0 if hi is None else hi
    f = lambda c: recurrent_strength(c * A0) - target
    scan = np.linspace(0.0, hi, 101)
    vals = np.array([f(c) for c in scan])
    k = int(np.argmin(vals))
    lo = scan[k]
    if vals[k] > 0 or f(hi) < 0:
        raise ValueError(f"recurrent strength {target} not reachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def worker_count() -> int:
    """Parallelism cap from ``SPIKELDS_THREADS`` (default 1)."""
    raw = os.environ.get("SPIKELDS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SPIKELDS_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def sweep(
    axis: str, grid, base: GenParams, use_cancellation: bool = True, workers: int | None = None
) -> list[SweepPoint]:
    """Vary one parameter of the random-system experiment and compare MSEs.

    ``input_dim`` keeps one dynamics matrix and draws a fresh B and inputs
    per point; ``recurrent_strength`` scales a single A (strength is the
    trace of the matrix factor of the predicted covariance) with shared
    inputs and a shared B rescaled per point; ``frame_len`` changes l only.
    Points run on up to ``workers`` threads; results keep grid order.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    jobs = []
    rng = np.random.default_rng(base.seed)
    A0 = random_dynamics(rng, base.m, base.rho0)
    if axis == "input_dim":
        for k, n in enumerate(grid):
            r = np.random.default_rng([base.seed, k])
            B = random_signed_matrix(r, base.m, int(n), flip_diagonal=True)
            u = sinusoid_inputs(r, int(n), base.T, base.codec.scale)
            B = normalize_input_matrix(A0, B, u, base.codec.scale)
            jobs.append((n, LdsSpec(A0, B), u, base.codec))
    elif axis == "recurrent_strength":
        A1 = A0 / base.rho0
        B0 = random_signed_matrix(rng, base.m, base.n, flip_diagonal=True)
        u = sinusoid_inputs(rng, base.n, base.T, base.codec.scale)
        for s in grid:
            A = _scale_for_strength(A1, float(s)) * A1
            B = normalize_input_matrix(A, B0, u, base.codec.scale)
            jobs.append((s, LdsSpec(A, B), u, base.codec))
    elif axis == "frame_len":
        for ell in grid:
            codec = replace(base.codec, frame_len=int(ell))
            lds, u = gen_random_lds(replace(base, codec=codec))
            jobs.append((ell, lds, u, codec))
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    workers = worker_count() if workers is None else max(1, workers)

    def run(job):
        value, lds, u, codec = job
        return _point(axis, value, lds, u, codec, use_cancellation)

    if workers == 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(run, jobs))


def _point(axis, value, lds, u, codec, use_cancellation):
    run = run_spiking_lds(lds, u, codec, use_cancellation)
    rep = covariance_report(run.series, run.approx_lds.A, lds.m, lds.n, codec)
    log.info("%s=%s sample=%.4g theory=%.4g", axis, value, rep.sample_mse, rep.theory_mse)
    return SweepPoint(axis, float(value), rep, run.n_overflow)
