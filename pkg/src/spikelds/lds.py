"""Linear dynamical systems: system container, random generation, reference runs, residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import CodecConfig, round_half_away


@dataclass
class LdsSpec:
    """x_t = A x_{t-1} + B u_t with x_0 = 0."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        m = self.A.shape[0]
        if self.A.shape != (m, m):
            raise ValueError("A must be square")
        if self.B.shape[0] != m:
            raise ValueError("B must have as many rows as A")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.B.shape[1]

    @property
    def rho(self) -> float:
        return spectral_radius(self.A)

    @property
    def rho_abs(self) -> float:
        return spectral_radius(np.abs(self.A))


@dataclass(frozen=True)
class GenParams:
    m: int = 5
    n: int = 5
    rho0: float = 0.9
    T: int = 2400
    seed: int = 0
    codec: CodecConfig = CodecConfig()

    def __post_init__(self):
        if not 0 < self.rho0 < 1:
            raise ValueError("rho0 must lie in (0, 1)")
        if self.m < 1 or self.n < 1 or self.T < 1:
            raise ValueError("dimensions and T must be positive")


def spectral_radius(A) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def simulate_reference(lds: LdsSpec, inputs) -> np.ndarray:
    """Exact floating-point recursion from x_0 = 0; returns ``(T, m)`` states x_1..x_T."""
    u = np.atleast_2d(np.asarray(inputs, dtype=float))
    if u.shape[1] != lds.n:
        raise ValueError(f"inputs have {u.shape[1]} components, B expects {lds.n}")
    drive = u @ lds.B.T
    x = np.zeros(lds.m)
    out = np.empty((u.shape[0], lds.m))
    for t in range(u.shape[0]):
        x = lds.A @ x + drive[t]
        out[t] = x
    return out


def random_signed_matrix(rng, rows, cols, flip_diagonal: bool):
    M = rng.uniform(0.1, 1.0, size=(rows, cols))
    flips = rng.random((rows, cols)) < 0.5
    if not flip_diagonal:
        k = min(rows, cols)
        flips[np.arange(k), np.arange(k)] = False
    return np.where(flips, -M, M)


def random_dynamics(rng, m, rho0, max_tries=1000):
    """Random A with spectral radius ``rho0``, redrawn until every |A_ij| <= 1.

    Multipliers only implement weights up to one, and a matrix whose
    eigenvalues nearly cancel can need large entries to reach ``rho0``.
    """
    for _ in range(max_tries):
        A = random_signed_matrix(rng, m, m, flip_diagonal=False)
        A *= rho0 / spectral_radius(A)
        if np.abs(A).max() <= 1:
            return A
    raise ValueError(f"no dynamics matrix with entries in [-1, 1] after {max_tries} draws")


def sinusoid_inputs(rng, n, T, amplitude):
    """Integer-quantized sinusoids, phase 0 or pi, frequency in [1/50, 1/4] cycles per frame."""
    freqs = rng.uniform(1 / 50, 1 / 4, size=n)
    phases = np.where(rng.random(n) < 0.5, 0.0, np.pi)
    t = np.arange(1, T + 1)[:, None]
    return round_half_away(amplitude * np.sin(2 * np.pi * freqs * t + phases))


def normalize_input_matrix(A, B, u, target):
    """Rescale B so the peak |state| driven by ``u`` equals ``target``."""
    peak = np.max(np.abs(simulate_reference(LdsSpec(A, B), u)))
    if peak == 0:
        return B
    return B * (target / peak)


def gen_random_lds(params: GenParams):
    """Random stable LDS and integer sinusoidal inputs normalized to the code range.

    Returns ``(lds, inputs)`` with ``inputs`` of shape ``(T, n)``.
    """
    rng = np.random.default_rng(params.seed)
    A = random_dynamics(rng, params.m, params.rho0)
    B = random_signed_matrix(rng, params.m, params.n, flip_diagonal=True)
    target = params.codec.scale
    u = sinusoid_inputs(rng, params.n, params.T, target)
    B = normalize_input_matrix(A, B, u, target)
    return LdsSpec(A, B), u


@dataclass
class ResidualSeries:
    residuals: np.ndarray
    normalized: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.residuals.shape[0]


def residuals(spiking_states, reference_states, cfg: CodecConfig) -> ResidualSeries:
    s = np.asarray(spiking_states, dtype=float)
    x = np.asarray(reference_states, dtype=float)
    if s.shape != x.shape:
        raise ValueError(f"state sequences differ in shape: {s.shape} vs {x.shape}")
    r = s - x
    return ResidualSeries(r, r / cfg.scale)
