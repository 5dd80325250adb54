"""Closed-form residual statistics of spiking computation and their estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import transform_lds
from .codec import CodecConfig
from .compiler.approx import RationalWeight
from .lds import LdsSpec, ResidualSeries, spectral_radius

EIGVEC_COND_MAX = 1e8
SERIES_TOL = 1e-12


class DivergenceError(ArithmeticError):
    """The requested quantity needs rho(A) < 1."""


def f_lag(dt: int) -> float:
    dt = abs(int(dt))
    return 1.0 if dt == 0 else (-0.5 if dt == 1 else 0.0)


def scalar_error_stats():
    """(mean, variance, lag-1 autocovariance, lag-2 autocovariance) of one multiplier's error."""
    return 0.0, 1 / 6, -1 / 12, 0.0


def matvec_error_cov(n: int, dt: int) -> float:
    """Scalar factor of the identity in Cov(eps_{t+dt}, eps_t) for an n-column matvec."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return n / 6 * f_lag(dt)


def _require_stable(A):
    rho = spectral_radius(A)
    if rho >= 1:
        raise DivergenceError(f"spectral radius {rho:.6g} >= 1")
    return rho


def series_sum_truncated(A, tol: float = SERIES_TOL, max_terms: int = 1_000_000):
    """sum_k A^k (A^k)^T by accumulation until the next term is below ``tol``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _require_stable(A)
    S = np.zeros_like(A)
    P = np.eye(A.shape[0])
    for _ in range(max_terms):
        term = P @ P.T
        S += term
        if np.linalg.norm(term) < tol:
            return S
        P = A @ P
    raise DivergenceError("series did not converge")


def series_sum(A, tol: float = SERIES_TOL):
    """sum_{k>=0} A^k (A^k)^T.

    Uses the eigendecomposition A = V diag(l) V^-1, which turns the series
    into ``V ((V^T V)^-1 o 1/(1 - l l^T)) V^T``; falls back to direct
    summation when V is too ill-conditioned to trust.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _require_stable(A)
    lam, V = np.linalg.eig(A)
    if np.linalg.cond(V) > EIGVEC_COND_MAX:
        return series_sum_truncated(A, tol)
    G = np.linalg.inv(V.T @ V)
    S = V @ (G / (1 - np.outer(lam, lam))) @ V.T
    return np.real(S)


def sym(X):
    return 0.5 * (X + X.T)


def theory_cov_unnormalized(A, m: int, n: int):
    """Steady-state residual covariance in spike units."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    I = np.eye(A.shape[0])
    return (2 * m + n) / 6 * sym((I - A) @ series_sum(A))


def theory_cov(A, m: int, n: int, cfg: CodecConfig):
    """Predicted covariance of the residuals divided by eta*p*l."""
    return theory_cov_unnormalized(A, m, n) / cfg.scale**2


def residual_autocov_theory(A, cov0, dt: int):
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return np.linalg.matrix_power(A, dt) @ np.asarray(cov0, dtype=float)


def correlation_time(A) -> float:
    rho = _require_stable(A)
    if rho == 0:
        return 0.0
    return 1.0 / np.log(1.0 / rho)


def effective_samples(A, T: int) -> float:
    tau = correlation_time(A)
    return np.inf if tau == 0 else T / tau


@dataclass
class CovarianceReport:
    sample_cov: np.ndarray | None = None
    sample_mse: float | None = None
    theory_cov: np.ndarray | None = None
    theory_mse: float | None = None
    n_eff: float | None = None

    @property
    def rel_frobenius(self) -> float:
        return float(
            np.linalg.norm(self.sample_cov - self.theory_cov) / np.linalg.norm(self.theory_cov)
        )

    @property
    def mse_ratio(self) -> float:
        return self.sample_mse / self.theory_mse


def sample_cov(series: ResidualSeries) -> CovarianceReport:
    """(1/T) sum r~ r~^T, deliberately without mean subtraction."""
    r = np.atleast_2d(series.normalized)
    if r.shape[0] < 1:
        raise ValueError("need at least one residual")
    S = r.T @ r / r.shape[0]
    S = sym(S)
    return CovarianceReport(sample_cov=S, sample_mse=float(np.trace(S)))


def covariance_report(series: ResidualSeries, A, m: int, n: int, cfg: CodecConfig) -> CovarianceReport:
    rep = sample_cov(series)
    rep.theory_cov = theory_cov(A, m, n, cfg)
    rep.theory_mse = float(np.trace(rep.theory_cov))
    rep.n_eff = effective_samples(A, series.n_frames)
    return rep


def stability_check(A, tol: float = 1e-8):
    """(rho(A), rho(|A|), spiking_stable) plus a spectrum audit of the doubled matrix.

    Raises ``AssertionError`` if the doubled matrix's spectrum is not the
    union of the spectra of A and |A| to within ``tol``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rho_a, rho_abs = spectral_radius(A), spectral_radius(np.abs(A))
    doubled = transform_lds(LdsSpec(A, np.zeros((A.shape[0], 1)))).a_tilde
    err = spectrum_mismatch(np.linalg.eigvals(doubled), np.concatenate([np.linalg.eigvals(A), np.linalg.eigvals(np.abs(A))]))
    if err > tol * max(1.0, rho_abs):
        raise AssertionError(f"doubled spectrum deviates by {err:.3g}")
    return rho_a, rho_abs, bool(rho_abs < 1)


def spectrum_mismatch(a, b) -> float:
    """Largest distance in an optimal one-to-one matching of two eigenvalue sets."""
    from scipy.optimize import linear_sum_assignment

    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return np.inf
    D = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(D)
    return float(D[rows, cols].max()) if a.size else 0.0


def remainder(x):
    return x - np.floor(x)


def gen_assumption_inputs(w: RationalWeight, T: int, seed: int, max_count: int | None = None):
    """Frame counts whose scaled remainders r(w n) are uniform and independent.

    Draws each frame's residue class of ``alpha*n mod beta`` uniformly and
    picks a count in ``[0, max_count]`` (default ``beta - 1``) realising it.
    With coprime alpha, beta every remainder k/beta is hit equally often.
    """
    alpha, beta = int(w.numerator), int(w.denominator)
    if beta < 2:
        raise ValueError("beta = 1 gives a degenerate (always zero) remainder")
    g = np.gcd(alpha, beta)
    b_red = beta // g
    a_red = alpha // g
    top = b_red - 1 if max_count is None else int(max_count)
    if top < b_red - 1:
        raise ValueError(f"max_count must be at least {b_red - 1} to reach every remainder")
    rng = np.random.default_rng(seed)
    if a_red == 0:
        return rng.integers(0, top + 1, size=T)
    base = rng.integers(0, b_red, size=T)
    # n * a_red mod b_red is a bijection on residues; add random multiples of b_red
    n = base + b_red * rng.integers(0, (top - base) // b_red + 1)
    return n.astype(np.int64)


def perturbation_estimate(A, B, P, inputs):
    """First-order change in the state sequence when A is replaced by A + P.

    ``x'_t - x_t ~ sum_{k=1}^{t-1} sum_{j=0}^{k-1} A^j P A^{k-1-j} B u_{t-k}``,
    which for commuting A and P collapses to ``sum_k k A^{k-1} P B u_{t-k}``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    u = np.atleast_2d(np.asarray(inputs, dtype=float))
    _require_stable(A)
    m = A.shape[0]
    x = np.zeros(m)
    dx = np.zeros(m)
    out = np.empty((u.shape[0], m))
    # tangent recursion: d x_t = A d x_{t-1} + P x_{t-1}
    for t in range(u.shape[0]):
        dx = A @ dx + P @ x
        x = A @ x + B @ u[t]
        out[t] = dx
    return out
