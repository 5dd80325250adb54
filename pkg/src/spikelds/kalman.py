"""Kalman filtering: full filter, steady-state limit and its spiking implementation."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .analytics import DivergenceError
from .codec import CodecConfig, round_half_away
from .experiments import run_spiking_lds
from .lds import LdsSpec, ResidualSeries, spectral_radius

DARE_TOL = 1e-12
DARE_MAX_ITER = 1_000_000
DARE_BLOWUP = 1e100


def _sym(X):
    return 0.5 * (X + X.T)


@dataclass
class KfModel:
    """x_t = Phi x_{t-1} + w_t, y_t = H x_t + v_t with w ~ N(0, Q), v ~ N(0, R).

    The last ``n_constant`` state components are deterministic constants
    (a bias fixed at one); they are excluded from stability checks.
    """

    Phi: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray
    x0_mean: np.ndarray | None = None
    P0: np.ndarray | None = None
    n_constant: int = 0

    def __post_init__(self):
        self.Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        m, n = self.Phi.shape[0], self.H.shape[0]
        if self.Phi.shape != (m, m) or self.Q.shape != (m, m):
            raise ValueError("Phi and Q must be m x m")
        if self.H.shape != (n, m) or self.R.shape != (n, n):
            raise ValueError("H must be n x m and R n x n")
        self.x0_mean = np.zeros(m) if self.x0_mean is None else np.asarray(self.x0_mean, dtype=float)
        self.P0 = np.eye(m) if self.P0 is None else np.atleast_2d(np.asarray(self.P0, dtype=float))
        for name in ("Q", "R", "P0"):
            M = getattr(self, name)
            if not np.allclose(M, M.T):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < -1e-10 * max(1.0, np.abs(M).max()):
                raise ValueError(f"{name} must be positive semidefinite")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be positive definite")

    @property
    def m(self) -> int:
        return self.Phi.shape[0]

    @property
    def n(self) -> int:
        return self.H.shape[0]


def kf_step(model: KfModel, x_hat, P, y):
    """One propagate / gain / correct cycle. Returns ``(x_hat', P')``."""
    x_prior = model.Phi @ x_hat
    P_prior = model.Phi @ P @ model.Phi.T + model.Q
    K = _gain(model, P_prior)
    x_post = x_prior + K @ (np.asarray(y, dtype=float) - model.H @ x_prior)
    P_post = _sym((np.eye(model.m) - K @ model.H) @ P_prior)
    return x_post, P_post


def _gain(model, P_prior):
    S = model.H @ P_prior @ model.H.T + model.R
    try:
        return np.linalg.solve(S, model.H @ P_prior).T
    except np.linalg.LinAlgError as e:
        raise np.linalg.LinAlgError("singular innovation covariance") from e


def kalman_filter(model: KfModel, measurements):
    """Run the full filter from ``(x0_mean, P0)``; returns estimates and posterior covariances."""
    Y = np.atleast_2d(np.asarray(measurements, dtype=float))
    x, P = model.x0_mean.copy(), model.P0.copy()
    xs = np.empty((Y.shape[0], model.m))
    Ps = np.empty((Y.shape[0], model.m, model.m))
    for t, y in enumerate(Y):
        x, P = kf_step(model, x, P, y)
        xs[t], Ps[t] = x, P
    return xs, Ps


def riccati_map(model: KfModel, P):
    """One step of the prior-covariance recursion."""
    H = model.H
    S = H @ P @ H.T + model.R
    inner = P - P @ H.T @ np.linalg.solve(S, H @ P)
    return _sym(model.Phi @ inner @ model.Phi.T + model.Q)


def solve_dare(model: KfModel, tol: float = DARE_TOL, max_iter: int = DARE_MAX_ITER):
    """Steady-state prior covariance by fixed-point iteration of the Riccati map.

    Starts from ``P0`` so that exactly-known components (zero prior variance
    and no process noise) stay exact. Convergence is declared when successive
    iterates differ by less than ``tol`` in Frobenius norm.
    """
    P = model.P0.copy()
    for _ in range(int(max_iter)):
        nxt = riccati_map(model, P)
        if not np.all(np.abs(nxt) < DARE_BLOWUP):
            raise DivergenceError("Riccati iterates diverge (undetectable unstable mode?)")
        if np.linalg.norm(nxt - P) < tol:
            return nxt
        P = nxt
    raise DivergenceError(f"Riccati iteration did not converge in {max_iter} steps")


@dataclass
class SskfMatrices:
    A_sskf: np.ndarray
    B_sskf: np.ndarray
    P_ss_minus: np.ndarray
    K_ss: np.ndarray


def sskf_matrices(model: KfModel, tol: float = DARE_TOL, max_iter: int = DARE_MAX_ITER) -> SskfMatrices:
    P = solve_dare(model, tol, max_iter)
    K = _gain(model, P)
    A = model.Phi - K @ model.H @ model.Phi
    k = model.m - model.n_constant
    rho = spectral_radius(A[:k, :k])
    if rho >= 1:
        raise AssertionError(f"steady-state filter is unstable (spectral radius {rho:.6g})")
    return SskfMatrices(A, K, P, K)


def run_sskf(sskf: SskfMatrices, measurements, x0=None):
    """x_t = A x_{t-1} + B y_t from ``x0`` (zero by default)."""
    Y = np.atleast_2d(np.asarray(measurements, dtype=float))
    x = np.zeros(sskf.A_sskf.shape[0]) if x0 is None else np.asarray(x0, dtype=float)
    out = np.empty((Y.shape[0], x.size))
    drive = Y @ sskf.B_sskf.T
    for t in range(Y.shape[0]):
        x = sskf.A_sskf @ x + drive[t]
        out[t] = x
    return out


def strip_bias(A_aug, B_aug, n_constant: int = 1):
    """Move constant state components into the inputs.

    ``A_aug = [[A', a_bias], [0, I]]`` and ``B_aug = [[B'], [0]]`` with the
    constant block last. Returns ``(A', [B' | a_bias])``: driving the reduced
    system with an extra input fixed at one, from a zero state, reproduces
    the leading components of the augmented system started with the
    constants at one.
    """
    A_aug = np.atleast_2d(np.asarray(A_aug, dtype=float))
    B_aug = np.atleast_2d(np.asarray(B_aug, dtype=float))
    m = A_aug.shape[0]
    k = m - n_constant
    if n_constant < 1 or k < 1:
        raise ValueError("need at least one constant and one dynamic component")
    if not (np.all(A_aug[k:, :k] == 0) and np.array_equal(A_aug[k:, k:], np.eye(n_constant))):
        raise ValueError("constant components must evolve as identity with no coupling")
    if np.any(B_aug[k:] != 0):
        raise ValueError("constant components must not be driven by inputs")
    return A_aug[:k, :k], np.hstack([B_aug[:k], A_aug[:k, k:]])


def pearson(a, b) -> float:
    a, b = np.ravel(a).astype(float), np.ravel(b).astype(float)
    if a.std() == 0 or b.std() == 0:
        return float("nan")
    return float(np.corrcoef(a, b)[0, 1])


def _split_wide_columns(B, u):
    """Replicate input channels whose weights exceed one, dividing the weights."""
    cols, ins = [], []
    for j in range(B.shape[1]):
        k = max(1, int(np.ceil(np.abs(B[:, j]).max() - 1e-12)))
        for _ in range(k):
            cols.append(B[:, j] / k)
            ins.append(u[:, j])
    return np.stack(cols, axis=1), np.stack(ins, axis=1)


@dataclass
class SpikingKfResult:
    estimates: np.ndarray
    reference: np.ndarray
    series: ResidualSeries
    correlation: np.ndarray
    n_overflow: int
    n_neurons: int


def spiking_sskf(model: KfModel, cfg: CodecConfig, measurements, use_cancellation: bool = True) -> SpikingKfResult:
    """Steady-state filter run spike-for-spike on the frame code.

    ``measurements`` must already lie in [-eta*p*l, eta*p*l]; they are
    rounded to integers. Constant components are stripped and fed as an
    input held at ``round(eta*p*l)`` spikes per frame. ``correlation``
    holds the Pearson r between spiking and exact steady-state estimates,
    per dynamic component.
    """
    Y = np.atleast_2d(np.asarray(measurements, dtype=float))
    y_int = round_half_away(Y)
    if np.any(np.abs(y_int) > cfg.capacity):
        raise ValueError(f"measurements exceed the code range +-{cfg.capacity}")
    sskf = sskf_matrices(model)
    k = model.m - model.n_constant
    x0 = np.concatenate([np.zeros(k), np.ones(model.n_constant)])
    exact = run_sskf(sskf, Y, x0)[:, :k]
    if model.n_constant:
        A, B = strip_bias(sskf.A_sskf, sskf.B_sskf, model.n_constant)
        level = int(round_half_away(cfg.scale))
        u = np.hstack([y_int, np.full((Y.shape[0], model.n_constant), level)])
        B = np.hstack([B[:, : model.n], B[:, model.n :] / level])
    else:
        A, B, u = sskf.A_sskf, sskf.B_sskf, y_int
    if np.any(np.abs(A) > 1):
        raise ValueError("steady-state dynamics have entries above one; rescale the state")
    B, u = _split_wide_columns(B, u)
    run = run_spiking_lds(LdsSpec(A, B), u, cfg, use_cancellation)
    r = np.array([pearson(run.spiking_states[:, i], exact[:, i]) for i in range(k)])
    return SpikingKfResult(run.spiking_states.astype(float), exact, run.series, r, run.n_overflow, run.n_neurons)


# kinematic model fitting and synthetic data


def kinematic_phi(dt: float, phi: float) -> np.ndarray:
    """[[1, dt, 0], [0, phi, 0], [0, 0, 1]] for (position, velocity, bias)."""
    return np.array([[1.0, dt, 0.0], [0.0, phi, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class Trial:
    states: np.ndarray  # (T, 2) position, velocity
    measurements: np.ndarray  # (T, n)


def _augment(states):
    return np.hstack([states, np.ones((states.shape[0], 1))])


def fit_kinematic_model(trials, dt: float = 1.0) -> KfModel:
    """Closed-form maximum-likelihood fit with the kinematic sparsity on Phi.

    Only the velocity decay ``phi`` is free in Phi; Q and R are the residual
    covariances, H the least-squares map from (position, velocity, 1) to the
    measurements. The returned model starts from the mean initial state,
    with the bias known exactly.
    """
    prev, nxt, X, Y = [], [], [], []
    for tr in trials:
        S = np.asarray(tr.states, dtype=float)
        prev.append(S[:-1])
        nxt.append(S[1:])
        X.append(_augment(S))
        Y.append(np.asarray(tr.measurements, dtype=float))
    prev, nxt = np.vstack(prev), np.vstack(nxt)
    X, Y = np.vstack(X), np.vstack(Y)
    v0, v1 = prev[:, 1], nxt[:, 1]
    phi = float(v0 @ v1 / (v0 @ v0)) if v0 @ v0 > 0 else 0.0
    Phi = kinematic_phi(dt, phi)
    W = nxt - _augment(prev)[:, :2] @ Phi[:2, :2].T
    Q = np.zeros((3, 3))
    Q[:2, :2] = _sym(W.T @ W / W.shape[0])
    H = np.linalg.lstsq(X, Y, rcond=None)[0].T
    V = Y - X @ H.T
    R = _sym(V.T @ V / V.shape[0])
    starts = np.array([np.asarray(tr.states, dtype=float)[0] for tr in trials])
    x0 = np.concatenate([starts.mean(axis=0), [1.0]])
    P0 = np.zeros((3, 3))
    P0[:2, :2] = np.cov(starts.T) if len(trials) > 1 else np.eye(2)
    P0[:2, :2] += 1e-9 * np.eye(2)
    return KfModel(Phi, Q, H, R, x0, P0, n_constant=1)


@dataclass
class KinematicTask:
    """Generative settings for synthetic position/velocity tracking data."""

    n_trials: int = 38
    n_steps: int = 120
    n_obs: int = 73
    dt: float = 1.0
    phi: float = 0.9
    q_pos: float = 0.01
    q_vel: float = 0.05
    obs_noise: float = 1.0
    seed: int = 0


def generate_kinematic_trials(task: KinematicTask) -> list[Trial]:
    rng = np.random.default_rng(task.seed)
    H = rng.normal(size=(task.n_obs, 3))
    Phi = kinematic_phi(task.dt, task.phi)[:2, :2]
    chol_q = np.diag([np.sqrt(task.q_pos), np.sqrt(task.q_vel)])
    trials = []
    for _ in range(task.n_trials):
        s = np.zeros(2)
        S = np.empty((task.n_steps, 2))
        for t in range(task.n_steps):
            s = Phi @ s + chol_q @ rng.normal(size=2)
            S[t] = s
        Y = _augment(S) @ H.T + task.obs_noise * rng.normal(size=(task.n_steps, task.n_obs))
        trials.append(Trial(S, Y))
    return trials


def normalize_trials(trials, cfg: CodecConfig):
    """Scale positions and measurements onto the [-eta*p*l, eta*p*l] code range.

    Velocity shares the position scale so the kinematic relation is kept.
    Values stay real; the spiking filter quantizes its inputs itself.
    """
    pos = np.concatenate([t.states[:, 0] for t in trials])
    s_pos = cfg.scale / np.max(np.abs(pos))
    s_y = cfg.scale / np.max(np.abs(np.vstack([t.measurements for t in trials])))
    return [Trial(t.states * s_pos, t.measurements * s_y) for t in trials]


def write_dataset(path, trials) -> None:
    """CSV with columns time, x0..x{m-1}, y0..y{n-1}; time restarts at 0 for each trial."""
    m, n = trials[0].states.shape[1], trials[0].measurements.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"x{i}" for i in range(m)] + [f"y{j}" for j in range(n)])
        for tr in trials:
            for t in range(tr.states.shape[0]):
                w.writerow([t] + [repr(float(v)) for v in tr.states[t]] + [repr(float(v)) for v in tr.measurements[t]])


def read_dataset(path) -> list[Trial]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "time":
        raise ValueError("dataset must start with a 'time' column")
    xi = [i for i, h in enumerate(header) if h.startswith("x")]
    yi = [i for i, h in enumerate(header) if h.startswith("y")]
    if not xi or not yi:
        raise ValueError("dataset needs x* state and y* measurement columns")
    trials, cur, last = [], [], None
    for row in body:
        t = float(row[0])
        if last is not None and t <= last:
            trials.append(cur)
            cur = []
        cur.append([float(row[i]) for i in xi + yi])
        last = t
    if cur:
        trials.append(cur)
    out = []
    for rows_ in trials:
        a = np.array(rows_)
        out.append(Trial(a[:, : len(xi)], a[:, len(xi) :]))
    return out


@dataclass
class TrialResult:
    trial: int
    r_kf: float
    r_sskf: float
    r_spiking: float
    r_spiking_vs_sskf: float
    n_overflow: int
    true: np.ndarray
    kf: np.ndarray
    sskf: np.ndarray
    spiking: np.ndarray


def leave_one_out(trials, cfg: CodecConfig, dt: float = 1.0, use_cancellation: bool = True, which=None):
    """Fit on all other trials, decode the held-out one with KF, SSKF and spiking SSKF.

    Correlations are against the true position, plus spiking vs SSKF.
    """
    results = []
    idx = range(len(trials)) if which is None else which
    for i in idx:
        model = fit_kinematic_model([t for j, t in enumerate(trials) if j != i], dt)
        held = trials[i]
        kf, _ = kalman_filter(model, held.measurements)
        sskf = sskf_matrices(model)
        ss = run_sskf(sskf, held.measurements, model.x0_mean * np.r_[0, 0, 1])
        spk = spiking_sskf(model, cfg, held.measurements, use_cancellation)
        pos = held.states[:, 0]
        results.append(
            TrialResult(
                i,
                pearson(pos, kf[:, 0]),
                pearson(pos, ss[:, 0]),
                pearson(pos, spk.estimates[:, 0]),
                float(spk.correlation[0]),
                spk.n_overflow,
                pos,
                kf[:, 0],
                ss[:, 0],
                spk.estimates[:, 0],
            )
        )
    return results
