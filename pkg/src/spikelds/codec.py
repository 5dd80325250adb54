"""Frame coding: signed values as spike counts on p-neuron populations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neuron import InputEvents

MAX_COMPILED_P = 21


@dataclass(frozen=True)
class CodecConfig:
    frame_len: int = 25
    pop_size: int = 21
    eta: float = 0.9

    def __post_init__(self):
        if self.frame_len < 1:
            raise ValueError("frame_len must be >= 1")
        if self.pop_size < 1:
            raise ValueError("pop_size must be >= 1")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")

    @property
    def capacity(self) -> int:
        """Largest count one channel can carry per frame (p * l)."""
        return self.pop_size * self.frame_len

    @property
    def scale(self) -> float:
        """Peak signal amplitude in spikes, eta * p * l."""
        return self.eta * self.capacity


@dataclass
class SignedChannelPair:
    """Per-frame counts for the positive and negative halves of a signal.

    Arrays are ``(n_frames, dim)`` or ``(dim,)`` for a single frame.
    """

    plus: np.ndarray
    minus: np.ndarray


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def encode(u, cfg: CodecConfig) -> SignedChannelPair:
    u = np.asarray(u, dtype=np.int64)
    if np.any(np.abs(u) > cfg.capacity):
        raise ValueError(f"value outside [-{cfg.capacity}, {cfg.capacity}]")
    return SignedChannelPair(np.maximum(u, 0), np.maximum(-u, 0))


def decode(pair: SignedChannelPair) -> np.ndarray:
    return np.asarray(pair.plus, dtype=np.int64) - np.asarray(pair.minus, dtype=np.int64)


def normalize_signal(x, cfg: CodecConfig, scale: float | None = None):
    """Scale ``x`` so its peak magnitude is eta*p*l, then quantize.

    Returns ``(ints, scale)`` with ``ints = round(x * scale)``. Pass ``scale``
    explicitly to reuse a previously fitted mapping.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("signal must be finite")
    if scale is None:
        peak = np.max(np.abs(x)) if x.size else 0.0
        scale = 1.0 if peak == 0 else cfg.scale / peak
    return round_half_away(x * scale), float(scale)


def spike_times(count: int, cfg: CodecConfig, phase: int = 0):
    """Evenly spread ``count`` spikes over one frame of a p-population.

    Returns ``(step_in_frame, channel)`` arrays. At most one spike per
    channel per step; channels are filled round-robin starting at ``phase``.
    """
    p, ell = cfg.pop_size, cfg.frame_len
    if not 0 <= count <= p * ell:
        raise ValueError(f"count {count} outside [0, {p * ell}]")
    s = np.arange(ell)
    per_step = (s + 1) * count // ell - s * count // ell
    steps = np.repeat(s, per_step)
    channels = (phase + np.arange(count)) % p
    return steps, channels


def frame_events(counts, cfg: CodecConfig, channel_offset: int = 0, start_step: int = 0) -> InputEvents:
    """Spike events for a ``(n_frames,)`` count sequence on one p-population."""
    counts = np.asarray(counts, dtype=np.int64)
    p, ell = cfg.pop_size, cfg.frame_len
    if np.any(counts < 0) or np.any(counts > p * ell):
        raise ValueError("frame counts out of range")
    # vectorised version of spike_times applied frame by frame, with the
    # round-robin pointer carried across frames
    n_frames = counts.size
    s = np.arange(ell)
    per_step = (s[None, :] + 1) * counts[:, None] // ell - s[None, :] * counts[:, None] // ell
    flat = per_step.ravel()
    steps = np.repeat(start_step + np.arange(n_frames * ell), flat)
    channels = np.arange(flat.sum()) % p
    return InputEvents(steps.astype(np.int64), (channel_offset + channels).astype(np.int64))


def encode_events(u, cfg: CodecConfig, start_step: int = 0) -> InputEvents:
    """Spike stimulus for a signed ``(n_frames, n)`` integer signal.

    Channel layout: population ``j`` carries ``ReLU(u[:, j])`` and population
    ``n + j`` carries ``ReLU(-u[:, j])``; each population has ``p`` channels.
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.int64))
    pair = encode(u, cfg)
    n = u.shape[1]
    p = cfg.pop_size
    parts = []
    for j in range(n):
        parts.append(frame_events(pair.plus[:, j], cfg, j * p, start_step))
        parts.append(frame_events(pair.minus[:, j], cfg, (n + j) * p, start_step))
    return InputEvents.concat(parts)
