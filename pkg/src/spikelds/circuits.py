"""Constructors for the abstract spiking circuits.

Every circuit is a population of ``p`` neurons with ascending thresholds
``u, 2u, ..., pu``, symmetric inhibition ``-u`` between members and
self-excitation ``(i-1)u`` for member ``i``; this keeps the members'
potentials in lockstep so the population fires ``floor(v/u)`` spikes in one
step. Multiplication uses ``u = beta`` and input weight ``alpha``;
addition and cancellation use ``u = 1``. With ``p = 1`` this reduces to the
plain single-neuron circuits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import CodecConfig
from .compiler.approx import RationalWeight, approx_weight, bounds_for
from .graph import Block, CircuitGraph, ConfigurationError, NeuronSpec, Pop, Port, Route
from .lds import LdsSpec
from .neuron import SimResult

__all__ = [
    "CircuitBuilder",
    "TransformedLds",
    "build_addition",
    "build_cancellation",
    "build_matvec",
    "build_scalar_mult",
    "build_spiking_lds",
    "decode_states",
    "detect_overflow",
    "rationalize",
    "transform_lds",
]

MULT_LATENCY = 1
ADD_LATENCY = 1
CANCEL_LATENCY = 1


def _population(p, unit, port_weights, extra_synapses=0):
    """Neuron specs for one lockstep population.

    ``port_weights`` gives the weight of each input port; each port occupies
    ``p`` synapses. The recurrent block follows, then ``extra_synapses``
    trailing synapses (cross-excitation in the cancellation circuit).
    """
    specs = []
    for i in range(p):
        w = []
        for pw in port_weights:
            w.extend([pw] * p)
        w.extend(i * unit if j == i else -unit for j in range(p))
        w.extend([unit] * extra_synapses)
        specs.append(NeuronSpec(w, (i + 1) * unit))
    return specs


class CircuitBuilder:
    """Incremental construction of a :class:`CircuitGraph` from circuit blocks."""

    def __init__(self):
        self.graph = CircuitGraph()

    def _add_neurons(self, specs) -> tuple[int, ...]:
        start = len(self.graph.neurons)
        self.graph.neurons.extend(specs)
        return tuple(range(start, start + len(specs)))

    def _recurrent(self, pop: Pop, offset: int):
        for j, src in enumerate(pop.ids):
            for tgt in pop.ids:
                self.graph.routes.append(Route(src, tgt, offset + j))

    def input_pop(self, p: int, label: str | None = None) -> Pop:
        start = self.graph.n_inputs
        self.graph.n_inputs += p
        pop = Pop(tuple(range(start, start + p)), external=True)
        if label is not None:
            self.graph.inputs[label] = pop
        return pop

    def mult(self, w: RationalWeight, p: int) -> Block:
        alpha, beta = int(w.numerator), int(w.denominator)
        if p < 1:
            raise ConfigurationError("population size p must be >= 1")
        if alpha > beta:
            raise ConfigurationError(
                f"weight {alpha}/{beta} exceeds 1; the frame-exactness guarantee needs w <= 1"
            )
        pop = Pop(self._add_neurons(_population(p, beta, [alpha])))
        self._recurrent(pop, p)
        block = Block("mult", (pop,), {"alpha": alpha, "beta": beta, "p": p}, [None], unit=beta)
        self.graph.blocks.append(block)
        return block

    def adder(self, n_inputs: int, p: int) -> Block:
        if n_inputs < 0 or p < 1:
            raise ConfigurationError("adder needs n_inputs >= 0 and p >= 1")
        pop = Pop(self._add_neurons(_population(p, 1, [1] * n_inputs)))
        self._recurrent(pop, n_inputs * p)
        block = Block("add", (pop,), {"n_inputs": n_inputs, "p": p}, [None] * n_inputs)
        self.graph.blocks.append(block)
        return block

    def cancel(self, p: int, n_plus: int = 1, n_minus: int = 1) -> Block:
        """Summing cancellation circuit: two mirrored populations with cross-excitation.

        Ports ``0..n_plus-1`` add to the positive side, the next ``n_minus``
        ports to the negative side. Each population is excited by the other's
        spikes, so their potentials stay equal and opposite and only the net
        count is emitted.
        """
        if p < 1:
            raise ConfigurationError("population size p must be >= 1")
        if n_plus < 0 or n_minus < 0:
            raise ConfigurationError("port counts must be nonnegative")
        n_ports = n_plus + n_minus
        plus = Pop(self._add_neurons(_population(p, 1, [1] * n_plus + [-1] * n_minus, extra_synapses=p)))
        minus = Pop(self._add_neurons(_population(p, 1, [-1] * n_plus + [1] * n_minus, extra_synapses=p)))
        self._recurrent(plus, n_ports * p)
        self._recurrent(minus, n_ports * p)
        cross = (n_ports + 1) * p
        for j in range(p):
            for i in range(p):
                self.graph.routes.append(Route(minus.ids[j], plus.ids[i], cross + j))
                self.graph.routes.append(Route(plus.ids[j], minus.ids[i], cross + j))
        block = Block(
            "cancel",
            (plus, minus),
            {"p": p, "n_plus": n_plus, "n_minus": n_minus},
            [None] * n_ports,
        )
        self.graph.blocks.append(block)
        return block

    def connect(self, src: Pop, block: Block, port: int, delay: int = 0) -> None:
        p = block.pops[0].p
        if src.p != p:
            raise ConfigurationError(f"population of size {src.p} feeding a p={p} circuit")
        if block.ports[port] is not None:
            raise ConfigurationError(f"port {port} of {block.kind} block already connected")
        block.ports[port] = Port(src, delay)
        for tgt_pop in block.pops:
            for q, s in enumerate(src.ids):
                for t in tgt_pop.ids:
                    self.graph.routes.append(Route(s, t, port * p + q, delay, src.external))


def build_scalar_mult(w: RationalWeight, p: int = 1) -> CircuitGraph:
    b = CircuitBuilder()
    src = b.input_pop(p, "in")
    block = b.mult(w, p)
    b.connect(src, block, 0)
    b.graph.outputs["out"] = block.pops[0].ids
    b.graph.meta["latency"] = MULT_LATENCY
    return b.graph


def build_addition(n_inputs: int, p: int = 1) -> CircuitGraph:
    if n_inputs < 1:
        raise ConfigurationError("addition needs at least one input")
    b = CircuitBuilder()
    block = b.adder(n_inputs, p)
    for k in range(n_inputs):
        b.connect(b.input_pop(p, f"in{k}"), block, k)
    b.graph.outputs["out"] = block.pops[0].ids
    b.graph.meta["latency"] = ADD_LATENCY
    return b.graph


def build_cancellation(p: int = 1) -> CircuitGraph:
    b = CircuitBuilder()
    block = b.cancel(p)
    b.connect(b.input_pop(p, "plus"), block, 0)
    b.connect(b.input_pop(p, "minus"), block, 1)
    b.graph.outputs["plus"] = block.pops[0].ids
    b.graph.outputs["minus"] = block.pops[1].ids
    b.graph.meta["latency"] = CANCEL_LATENCY
    return b.graph


def _as_rational(w, p) -> RationalWeight:
    if isinstance(w, RationalWeight):
        return w
    if isinstance(w, tuple):
        return RationalWeight(*w)
    return approx_weight(float(w), bounds_for(float(w), p))


def build_matvec(W, p: int = 1) -> CircuitGraph:
    """Nonnegative matrix-vector circuit: one multiplier per nonzero entry, one adder per row.

    ``W`` holds floats (approximated on the hardware grid) or
    :class:`RationalWeight` entries.
    """
    W = np.asarray(W, dtype=object)
    if W.ndim != 2:
        raise ConfigurationError("W must be a matrix")
    m, n = W.shape
    b = CircuitBuilder()
    inputs = [b.input_pop(p, f"in{j}") for j in range(n)]
    for i in range(m):
        row = []
        for j in range(n):
            w = W[i, j]
            value = w.value if isinstance(w, RationalWeight) else float(
                w[0] / w[1] if isinstance(w, tuple) else w
            )
            if value < 0:
                raise ConfigurationError(f"negative entry W[{i},{j}] = {value}")
            if value == 0:
                continue
            mult = b.mult(_as_rational(w, p), p)
            b.connect(inputs[j], mult, 0)
            row.append(mult)
        adder = b.adder(len(row), p)
        for k, mult in enumerate(row):
            b.connect(mult.pops[0], adder, k)
        b.graph.outputs[f"out{i}"] = adder.pops[0].ids
    b.graph.meta["latency"] = MULT_LATENCY + ADD_LATENCY
    b.graph.meta["shape"] = (m, n)
    return b.graph


@dataclass
class TransformedLds:
    """Doubled nonnegative system [[A+, A-], [A-, A+]] and likewise for B."""

    a_tilde: np.ndarray
    b_tilde: np.ndarray
    source: LdsSpec


def _double(M):
    pos, neg = np.maximum(M, 0), np.maximum(-M, 0)
    return np.block([[pos, neg], [neg, pos]])


def transform_lds(lds: LdsSpec) -> TransformedLds:
    return TransformedLds(_double(lds.A), _double(lds.B), lds)


def rationalize(lds: LdsSpec, p: int):
    """Hardware-representable version of ``lds``.

    Returns ``(approx_lds, a_weights, b_weights)`` where the weight arrays
    hold the :class:`RationalWeight` used for each entry's magnitude.
    """

    def one(M):
        W = np.empty(M.shape, dtype=object)
        vals = np.zeros(M.shape)
        for idx, x in np.ndenumerate(M):
            rw = approx_weight(abs(x), bounds_for(abs(x), p))
            if rw.value > 1.0 / p and abs(x) <= 1.0 / p:
                rw = approx_weight(abs(x))
            W[idx] = rw
            vals[idx] = np.sign(x) * rw.value
        return W, vals

    aw, av = one(lds.A)
    bw, bv = one(lds.B)
    return LdsSpec(av, bv), aw, bw


def build_spiking_lds(
    t: TransformedLds,
    codec: CodecConfig,
    use_cancellation: bool = True,
    weights=None,
) -> CircuitGraph:
    """Recurrent spiking circuit for the doubled system.

    Input channel layout matches :func:`spikelds.codec.encode_events`.
    ``weights`` optionally supplies ``(a_weights, b_weights)`` magnitudes as
    returned by :func:`rationalize`; by default they are approximated here.
    State frame ``t`` is read from steps ``[t*l + latency, (t+1)*l + latency)``.
    """
    p, ell = codec.pop_size, codec.frame_len
    m, n = t.source.m, t.source.n
    latency = MULT_LATENCY + (CANCEL_LATENCY if use_cancellation else ADD_LATENCY)
    delay = ell - latency
    if delay < 0:
        raise ConfigurationError(
            f"frame length {ell} shorter than the pipeline latency {latency}"
        )
    if weights is None:
        _, aw, bw = rationalize(t.source, p)
    else:
        aw, bw = weights
    aw, bw = np.asarray(aw, dtype=object), np.asarray(bw, dtype=object)
    for M, name in ((t.source.A, "A"), (t.source.B, "B")):
        if np.any(np.abs(M) > 1):
            raise ConfigurationError(f"|{name}| has entries above 1; rescale the system")

    b = CircuitBuilder()
    ins = [b.input_pop(p, f"u+{j}") for j in range(n)]
    ins += [b.input_pop(p, f"u-{j}") for j in range(n)]

    def sign_parts(M, W, i, j):
        # entry (i, j) of the doubled matrix, as a weight magnitude or None
        rows, cols = M.shape
        ii, jj = i % rows, j % cols
        same = (i < rows) == (j < cols)
        x = M[ii, jj]
        if x == 0 or (x > 0) != same:
            return None
        return W[ii, jj]

    rows = []
    a_mults = {}
    for i in range(2 * m):
        row = []
        for j in range(2 * m):
            w = sign_parts(t.source.A, aw, i, j)
            if w is not None and w.numerator > 0:
                mult = b.mult(w, p)
                a_mults[(i, j)] = mult
                row.append(mult)
        for j in range(2 * n):
            w = sign_parts(t.source.B, bw, i, j)
            if w is not None and w.numerator > 0:
                mult = b.mult(w, p)
                b.connect(ins[j], mult, 0)
                row.append(mult)
        rows.append(row)

    states = [None] * (2 * m)
    if use_cancellation:
        for i in range(m):
            c = b.cancel(p, len(rows[i]), len(rows[i + m]))
            for k, mult in enumerate(rows[i] + rows[i + m]):
                b.connect(mult.pops[0], c, k)
            states[i], states[i + m] = c.pops
    else:
        for i in range(2 * m):
            adder = b.adder(len(rows[i]), p)
            for k, mult in enumerate(rows[i]):
                b.connect(mult.pops[0], adder, k)
            states[i] = adder.pops[0]

    for (i, j), mult in a_mults.items():
        b.connect(states[j], mult, 0, delay)

    g = b.graph
    for i in range(m):
        g.outputs[f"x+{i}"] = states[i].ids
        g.outputs[f"x-{i}"] = states[i + m].ids
    g.meta.update(
        latency=latency,
        frame_len=ell,
        p=p,
        m=m,
        n=n,
        feedback_delay=delay,
        cancellation=use_cancellation,
    )
    return g


def decode_states(result: SimResult, graph: CircuitGraph) -> np.ndarray:
    """Per-frame decoded states ``n+ - n-`` from a frame-binned run."""
    m = graph.meta["m"]
    cols = []
    for i in range(m):
        cols.append(result.pop_counts(graph.outputs[f"x+{i}"]) - result.pop_counts(graph.outputs[f"x-{i}"]))
    return np.stack(cols, axis=1).astype(np.int64)


def detect_overflow(graph: CircuitGraph, raster: SimResult, inputs=None) -> list[tuple[int, int]]:
    """Replay addition/cancellation populations from a full raster.

    Flags ``(head_neuron, step)`` wherever a population still holds at least
    one unit of potential after firing, i.e. spikes were deferred. Needs a
    per-step raster of every neuron; ``inputs`` (dense binary) is required
    only if such a population is fed directly by external channels.
    """
    if raster.bin_len != 1 or raster.bin_offset != 0:
        raise ValueError("detect_overflow needs an unbinned raster")
    n = len(graph.neurons)
    if len(raster.record) != n or np.any(raster.record != np.arange(n)):
        raise ValueError("detect_overflow needs every neuron recorded")
    spikes = raster.counts.astype(np.int64)
    T = spikes.shape[0]
    ext = None if inputs is None else np.asarray(inputs, dtype=np.int64)
    by_target: dict[int, list[Route]] = {}
    for r in graph.routes:
        by_target.setdefault(r.target, []).append(r)
    events = []
    for block in graph.blocks:
        if block.kind not in ("add", "cancel"):
            continue
        for pop in block.pops:
            head = pop.ids[0]
            spec = graph.neurons[head]
            drive = np.zeros(T, dtype=np.int64)
            for r in by_target.get(head, []):
                w = spec.weights[r.synapse]
                if w == 0:
                    continue
                if r.external:
                    if ext is None:
                        raise ValueError("population fed by external inputs; pass inputs")
                    src = ext[:, r.source]
                    lag = 1 + r.delay
                else:
                    src = spikes[:, r.source]
                    lag = 1 + r.delay + graph.neurons[r.source].output_delay
                if lag < T:
                    drive[lag:] += w * src[: T - lag]
            fired_head = spikes[:, head]
            k = spikes[:, list(pop.ids)].sum(axis=1)
            # head potential just before thresholding at each step
            v_end = np.cumsum(drive - spec.threshold * fired_head)
            pre = v_end + spec.threshold * fired_head
            shared = pre - k * block.unit
            for step in np.flatnonzero(shared >= block.unit):
                events.append((head, int(step)))
    return sorted(events, key=lambda e: (e[1], e[0]))
