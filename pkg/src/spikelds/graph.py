"""Abstract spiking network representation shared by the stepper and builders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a neuron, circuit or compiled core is malformed."""


@dataclass(frozen=True)
class NeuronSpec:
    """Integer integrate-and-fire neuron: one weight per ingoing synapse."""

    weights: tuple[int, ...]
    threshold: int
    output_delay: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))
        if int(self.threshold) < 1:
            raise ConfigurationError(f"threshold must be >= 1, got {self.threshold}")
        if int(self.output_delay) < 0:
            raise ConfigurationError(f"output_delay must be >= 0, got {self.output_delay}")
        object.__setattr__(self, "threshold", int(self.threshold))
        object.__setattr__(self, "output_delay", int(self.output_delay))


class Route(NamedTuple):
    """Spike route. ``source`` is a neuron index, or an input channel when ``external``."""

    source: int
    target: int
    synapse: int
    delay: int = 0
    external: bool = False


class Pop(NamedTuple):
    """A p-dimensional spike train: neuron indices, or input channels when ``external``."""

    ids: tuple[int, ...]
    external: bool = False

    @property
    def p(self) -> int:
        return len(self.ids)


class Port(NamedTuple):
    source: Pop
    delay: int


@dataclass
class Block:
    """One circuit instance (mult / add / cancel / relay) inside a graph.

    ``pops`` are the block's output populations (one, or two for cancellation:
    positive then negative). ``ports`` lists the populations feeding each
    input slot, in slot order; unconnected slots are ``None``.
    """

    kind: str
    pops: tuple[Pop, ...]
    params: dict
    ports: list
    unit: int = 1

    @property
    def neurons(self) -> tuple[int, ...]:
        return tuple(i for pop in self.pops for i in pop.ids)


@dataclass
class CircuitGraph:
    neurons: list[NeuronSpec] = field(default_factory=list)
    routes: list[Route] = field(default_factory=list)
    n_inputs: int = 0
    outputs: dict[str, tuple[int, ...]] = field(default_factory=dict)
    blocks: list[Block] = field(default_factory=list)
    inputs: dict[str, Pop] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        n = len(self.neurons)
        for r in self.routes:
            if r.external:
                if not 0 <= r.source < self.n_inputs:
                    raise ConfigurationError(f"route from unknown input channel {r.source}")
            elif not 0 <= r.source < n:
                raise ConfigurationError(f"route from unknown neuron {r.source}")
            if not 0 <= r.target < n:
                raise ConfigurationError(f"route to unknown neuron {r.target}")
            if not 0 <= r.synapse < len(self.neurons[r.target].weights):
                raise ConfigurationError(
                    f"synapse {r.synapse} out of range for neuron {r.target}"
                )
            if r.delay < 0:
                raise ConfigurationError("route delays must be nonnegative")
        for label, ids in self.outputs.items():
            if any(not 0 <= i < n for i in ids):
                raise ConfigurationError(f"output {label!r} names an unknown neuron")

    def arrays(self) -> "FlatNetwork":
        """Flatten to CSR arrays for the stepper."""
        self.validate()
        return FlatNetwork.from_graph(self)


class FlatNetwork(NamedTuple):
    thresholds: np.ndarray
    syn: tuple  # (ptr, tgt, w, delay) grouped by source neuron
    inp: tuple  # (ptr, tgt, w, delay) grouped by input channel
    group_of: np.ndarray
    group_unit: np.ndarray
    groups: list  # (block index, pop index) per group
    max_delay: int

    @classmethod
    def from_graph(cls, g: CircuitGraph) -> "FlatNetwork":
        n = len(g.neurons)
        thresholds = np.array([s.threshold for s in g.neurons], dtype=np.int64)
        out_delay = np.array([s.output_delay for s in g.neurons], dtype=np.int64)
        internal, external = [], []
        for r in g.routes:
            w = g.neurons[r.target].weights[r.synapse]
            if w == 0:
                continue
            if r.external:
                external.append((r.source, r.target, w, r.delay))
            else:
                internal.append((r.source, r.target, w, r.delay + out_delay[r.source]))
        syn = _csr(internal, n)
        inp = _csr(external, g.n_inputs)
        group_of = np.full(n, -1, dtype=np.int64)
        units, groups = [], []
        for b, block in enumerate(g.blocks):
            if block.kind not in ("add", "cancel"):
                continue
            for k, pop in enumerate(block.pops):
                group_of[list(pop.ids)] = len(units)
                units.append(block.unit)
                groups.append((b, k))
        max_delay = max((int(a[3].max()) if len(a[3]) else 0) for a in (syn, inp))
        return cls(
            thresholds,
            syn,
            inp,
            group_of,
            np.array(units, dtype=np.int64),
            groups,
            max_delay,
        )


def _csr(edges, n_sources):
    if edges:
        arr = np.array(edges, dtype=np.int64)
        order = np.argsort(arr[:, 0], kind="stable")
        arr = arr[order]
        src, tgt, w, d = arr.T
    else:
        src = tgt = w = d = np.zeros(0, dtype=np.int64)
    ptr = np.zeros(n_sources + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    return (np.cumsum(ptr), np.ascontiguousarray(tgt), np.ascontiguousarray(w), np.ascontiguousarray(d))
