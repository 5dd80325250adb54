"""Integer integrate-and-fire neurons and the deterministic network stepper.

Timing convention: a spike fired (or injected on an input channel) at step
``i`` is integrated by its targets at step ``i + 1 + delay``, where ``delay``
is the route delay plus the sender's ``output_delay``. Each neuron fires at
most once per step; super-threshold potential carries over.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _engine
from .graph import CircuitGraph, ConfigurationError, NeuronSpec

__all__ = [
    "ConfigurationError",
    "InputEvents",
    "NeuronSpec",
    "NeuronState",
    "SimResult",
    "SpikeFrame",
    "frame_multiply",
    "run_network",
    "step_neuron",
]


@dataclass
class NeuronState:
    potential: int = 0


@dataclass(frozen=True)
class SpikeFrame:
    counts: tuple[int, ...]
    frame_index: int

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("spike counts must be nonnegative")
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")


def step_neuron(spec: NeuronSpec, state: NeuronState, inputs: Sequence[int]) -> tuple[NeuronState, bool]:
    """Advance one neuron by one time-step.

    Integrates ``weights . inputs``; if the result reaches the threshold the
    neuron emits a single spike and the threshold is subtracted once.
    """
    x = np.asarray(inputs)
    if x.shape != (len(spec.weights),):
        raise ConfigurationError(
            f"expected {len(spec.weights)} inputs, got shape {x.shape}"
        )
    if np.any((x != 0) & (x != 1)):
        raise ConfigurationError("inputs must be binary")
    v = state.potential + int(np.dot(spec.weights, x.astype(np.int64)))
    if abs(v) > _engine.POTENTIAL_LIMIT:
        raise OverflowError("membrane potential exceeds the 32-bit register")
    if v >= spec.threshold:
        return NeuronState(v - spec.threshold), True
    return NeuronState(v), False


def frame_multiply(alpha: int, beta: int, counts, v0: int = 0):
    """Frame-level output of a single multiplication neuron.

    Returns ``(out_counts, potentials)`` where ``potentials[t]`` is the
    membrane potential at the end of frame ``t``. Exact whenever the weight
    ``alpha / beta`` is at most one, since then every spike owed for a frame
    is fired inside that frame regardless of input timing.
    """
    counts = np.asarray(counts, dtype=np.int64)
    total = v0 + alpha * np.cumsum(counts)
    emitted = total // beta
    out = np.diff(emitted, prepend=v0 // beta)
    return out, total - beta * emitted


class InputEvents(NamedTuple):
    """Sparse external stimulus: parallel arrays of (step, channel) spikes."""

    steps: np.ndarray
    channels: np.ndarray

    @classmethod
    def from_dense(cls, raster) -> "InputEvents":
        steps, channels = np.nonzero(np.asarray(raster))
        return cls(steps.astype(np.int64), channels.astype(np.int64))

    @classmethod
    def concat(cls, parts) -> "InputEvents":
        parts = list(parts)
        if not parts:
            return cls(np.zeros(0, np.int64), np.zeros(0, np.int64))
        return cls(
            np.concatenate([p.steps for p in parts]).astype(np.int64),
            np.concatenate([p.channels for p in parts]).astype(np.int64),
        )


@dataclass
class SimResult:
    """Output of :func:`run_network`.

    ``counts[b, r]`` is the number of spikes fired by neuron ``record[r]``
    during bin ``b`` (steps ``bin_offset + b*bin_len`` onward). With the
    default ``bin_len=1`` this is the spike raster itself.
    """

    counts: np.ndarray
    record: np.ndarray
    bin_len: int
    bin_offset: int
    potentials: np.ndarray | None
    final_potentials: np.ndarray
    overflow_events: list[tuple[int, int]]
    n_overflow: int

    @property
    def raster(self) -> np.ndarray:
        return self.counts

    def pop_counts(self, ids) -> np.ndarray:
        """Total spikes per bin over a population of recorded neurons."""
        pos = {int(n): k for k, n in enumerate(self.record)}
        cols = [pos[int(i)] for i in ids]
        return self.counts[:, cols].sum(axis=1)


def run_network(
    graph: CircuitGraph,
    input_spikes,
    n_steps: int,
    *,
    record=None,
    bin_len: int = 1,
    bin_offset: int = 0,
    record_potentials: bool = False,
    initial_potentials=None,
) -> SimResult:
    """Step ``graph`` for ``n_steps`` steps driven by ``input_spikes``.

    ``input_spikes`` is either a binary ``(n_steps, n_inputs)`` matrix or an
    :class:`InputEvents`. ``record`` selects neurons to keep (default: all);
    ``bin_len``/``bin_offset`` aggregate the raster into frame counts on the
    fly, which is how long runs avoid materialising the full raster.
    """
    net = graph.arrays()
    n = len(graph.neurons)
    if isinstance(input_spikes, InputEvents):
        events = input_spikes
    else:
        dense = np.asarray(input_spikes)
        if dense.size and dense.ndim != 2:
            raise ConfigurationError("input raster must be 2-D (steps, channels)")
        if dense.size and dense.shape[1] != graph.n_inputs:
            raise ConfigurationError(
                f"input raster has {dense.shape[1]} channels, graph expects {graph.n_inputs}"
            )
        if dense.size and np.any((dense != 0) & (dense != 1)):
            raise ConfigurationError("input raster must be binary")
        events = InputEvents.from_dense(dense) if dense.size else InputEvents.concat([])
    ev_ptr, ev_ch = _event_csr(events, n_steps, graph.n_inputs)

    rec = np.arange(n, dtype=np.int64) if record is None else np.asarray(record, dtype=np.int64)
    if rec.size and (rec.min() < 0 or rec.max() >= n):
        raise ConfigurationError("record names an unknown neuron")
    if bin_len < 1 or bin_offset < 0:
        raise ConfigurationError("bin_len must be >= 1 and bin_offset >= 0")
    n_bins = max(0, -(-(n_steps - bin_offset) // bin_len))
    v0 = (
        np.zeros(n, dtype=np.int64)
        if initial_potentials is None
        else np.asarray(initial_potentials, dtype=np.int64).copy()
    )
    counts, trace, v, ovf_step, ovf_group, n_ovf, stopped, status = _engine.simulate(
        net.thresholds,
        v0,
        *net.syn,
        *net.inp,
        ev_ptr,
        ev_ch,
        int(n_steps),
        net.max_delay + 2,
        rec,
        int(bin_len),
        int(bin_offset),
        int(n_bins),
        bool(record_potentials),
        net.group_of,
        net.group_unit,
        len(net.group_unit),
        _engine.POTENTIAL_LIMIT,
    )
    if status:
        raise OverflowError(
            f"membrane potential left the 32-bit register at step {stopped}"
        )
    heads = [graph.blocks[b].pops[k].ids[0] for b, k in net.groups]
    events_out = [(heads[g], int(s)) for s, g in zip(ovf_step, ovf_group)]
    return SimResult(
        counts=counts,
        record=rec,
        bin_len=bin_len,
        bin_offset=bin_offset,
        potentials=trace if record_potentials else None,
        final_potentials=v,
        overflow_events=events_out,
        n_overflow=int(n_ovf),
    )


def _event_csr(events: InputEvents, n_steps: int, n_inputs: int):
    steps = np.asarray(events.steps, dtype=np.int64)
    channels = np.asarray(events.channels, dtype=np.int64)
    if channels.size and (channels.min() < 0 or channels.max() >= n_inputs):
        raise ConfigurationError("input event on an unknown channel")
    keep = (steps >= 0) & (steps < n_steps)
    steps, channels = steps[keep], channels[keep]
    order = np.lexsort((channels, steps))
    steps, channels = steps[order], channels[order]
    ptr = np.zeros(n_steps + 1, dtype=np.int64)
    np.add.at(ptr, steps + 1, 1)
    return np.cumsum(ptr), np.ascontiguousarray(channels)
