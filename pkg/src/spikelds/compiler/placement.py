"""Lowering abstract circuit graphs onto 256x256 cores.

Each abstract block becomes one or more crossbar fragments (trees when a sum
is too wide for one core). Sources with several consumers get a splitter,
since a neuron routes to a single axon. Retiming then picks, per block, how
many steps later its compiled output fires than the abstract one, such that
every edge can be realised with nonnegative delays. Recurrent edges absorb
the extra pipeline depth out of their frame-length delay. Delays above the
per-neuron maximum go through relay chains.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from ..codec import CodecConfig
from ..graph import CircuitGraph, ConfigurationError, NeuronSpec, Route
from ..neuron import InputEvents, run_network
from .approx import WEIGHT_MAX, RationalWeight
from .crossbar import (
    CORE_SIZE,
    DELAY_MAX,
    MAX_CORES,
    Fragment,
    adder_fan_in,
    cancel_fan_in,
    synth_adder_crossbar,
    synth_cancel_crossbar,
    synth_mult_crossbar,
    synth_small_w_crossbar,
    synth_splitter,
)
from .tree import build_adder_tree, build_cancel_tree

log = logging.getLogger(__name__)

@dataclass
class CoreConfig:
    """One core: axon types, weight registers, crossbar, neuron parameters, routing.

    ``routing[j]`` is the ``(core, axon)`` neuron ``j`` sends to, or
    ``(-1, -1)`` for unused neurons and off-chip readouts.
    """

    axon_types: np.ndarray
    weight_regs: np.ndarray
    connections: np.ndarray
    thresholds: np.ndarray
    delays: np.ndarray
    routing: np.ndarray
    n_neurons: int = 0
    n_axons: int = 0
    fragments: list = field(default_factory=list)

    @classmethod
    def empty(cls) -> "CoreConfig":
        return cls(
            np.zeros(CORE_SIZE, dtype=np.int64),
            np.zeros((CORE_SIZE, 4), dtype=np.int64),
            np.zeros((CORE_SIZE, CORE_SIZE), dtype=bool),
            np.ones(CORE_SIZE, dtype=np.int64),
            np.zeros(CORE_SIZE, dtype=np.int64),
            np.full((CORE_SIZE, 2), -1, dtype=np.int64),
        )

    def effective_weights(self) -> np.ndarray:
        """``w_ij = b_ij * s^{G_i}_j`` as an axon-by-neuron matrix."""
        return np.where(self.connections, self.weight_regs[:, self.axon_types].T, 0)


@dataclass
class PlacementReport:
    n_cores: int
    n_neurons: int
    n_axons: int
    adder_fan_in: int
    cancel_fan_in: int
    fragments: dict
    blocks: dict
    max_delay: int


@dataclass
class CompiledNetwork:
    cores: list
    input_axons: dict
    outputs: dict
    latency_offset: int
    codec: CodecConfig
    report: PlacementReport
    n_inputs: int


@dataclass
class _Sink:
    block: int
    frag: int
    port: int
    delay: int
    kappa: int  # steps from axon arrival to the block's output firing


def _mult_fragment(params, p, name):
    w = RationalWeight(params["alpha"], params["beta"])
    if w.denominator > WEIGHT_MAX or (p > 1 and w.numerator * p <= w.denominator):
        return synth_small_w_crossbar(w, p, name), 0
    return synth_mult_crossbar(w, p, name), 1


class _Compiler:
    def __init__(self, graph: CircuitGraph, cfg: CodecConfig):
        graph.validate()
        self.graph = graph
        self.cfg = cfg
        self.frags: list[Fragment] = []
        self.block_out: dict[int, list] = {}
        self.sinks: dict[tuple, list] = {}
        self.readouts: dict[tuple, list] = {}
        self.owner = {}
        for b, blk in enumerate(graph.blocks):
            for k, pop in enumerate(blk.pops):
                self.owner[pop.ids] = (b, k)

    def add(self, frag: Fragment) -> int:
        self.frags.append(frag)
        return len(self.frags) - 1

    def source_key(self, pop):
        if pop.external:
            return ("in", pop.ids)
        if pop.ids not in self.owner:
            raise ConfigurationError("port fed by a population that is not a block output")
        return ("blk",) + self.owner[pop.ids]

    # synthesis

    def synthesize(self):
        for b, blk in enumerate(self.graph.blocks):
            p = blk.pops[0].p
            if any(self.graph.neurons[i].output_delay for i in blk.neurons):
                raise ConfigurationError(f"block {b}: output delays are not supported by the compiler")
            if blk.kind == "mult":
                frag, kappa = _mult_fragment(blk.params, p, f"mult[{b}]")
                fi = self.add(frag)
                self.block_out[b] = [(fi, 0)]
                self._sink(blk, b, 0, fi, 0, kappa)
            elif blk.kind == "add":
                self._tree(blk, b, p, [1] * len(blk.ports))
            elif blk.kind == "cancel":
                n_plus = blk.params["n_plus"]
                self._tree(blk, b, p, [1 if k < n_plus else -1 for k in range(len(blk.ports))])
            else:
                raise ConfigurationError(f"block {b}: no crossbar for kind {blk.kind!r}")

    def _sink(self, blk, b, port, fi, fport, kappa):
        src = blk.ports[port]
        if src is None:
            raise ConfigurationError(f"block {b} ({blk.kind}) has unconnected port {port}")
        self.sinks.setdefault(self.source_key(src.source), []).append(
            _Sink(b, fi, fport, src.delay, kappa)
        )

    def _tree(self, blk, b, p, signs):
        n = len(signs)
        if n == 0:
            raise ConfigurationError(f"block {b} ({blk.kind}) has no inputs")
        cancel = blk.kind == "cancel"
        if cancel:
            # interleave signs so partial sums stay small
            plus = [k for k in range(n) if signs[k] > 0]
            minus = [k for k in range(n) if signs[k] < 0]
            order = [x for pair in zip(plus, minus) for x in pair]
            order += plus[len(minus):] + minus[len(plus):]
            tree = build_cancel_tree(n, cancel_fan_in(p))
        else:
            order = list(range(n))
            tree = build_adder_tree(n, adder_fan_in(p))
        nodes = tree.nodes or [[("leaf", 0)]]
        frag_of = []
        for i, children in enumerate(nodes):
            node_signs = []
            for kind, c in children:
                if kind == "leaf":
                    node_signs.append(signs[order[c]])
                else:
                    node_signs += [1, -1] if cancel else [1]
            name = f"{blk.kind}[{b}].{i}" if len(nodes) > 1 else f"{blk.kind}[{b}]"
            if cancel:
                frag = synth_cancel_crossbar(node_signs, p, name)
            else:
                frag = synth_adder_crossbar(len(node_signs), p, name)
            frag_of.append(self.add(frag))
        root = len(nodes) - 1
        # kappa per node, from the root down; inner edges padded by edge_delay levels
        kappa = [0] * len(nodes)
        kappa[root] = 1
        parent = {}
        for i, children in enumerate(nodes):
            for kind, c in children:
                if kind == "node":
                    parent[c] = i
        for i in range(root - 1, -1, -1):
            pad = 2 * tree.edge_delay[(i, parent[i])]
            if pad > DELAY_MAX:
                raise ConfigurationError(f"block {b}: tree padding {pad} exceeds the delay register")
            kappa[i] = kappa[parent[i]] + 2 + pad
        for i, children in enumerate(nodes):
            port = 0
            for kind, c in children:
                if kind == "leaf":
                    self._sink(blk, b, order[c], frag_of[i], port, kappa[i])
                    port += 1
                else:
                    child = self.frags[frag_of[c]]
                    pad = 2 * tree.edge_delay[(c, i)]
                    for side, outs in enumerate(child.outputs):
                        target = self.frags[frag_of[i]].ports[port + side]
                        for ch, j in enumerate(outs):
                            child.routes[j] = ("frag", frag_of[i], target[ch])
                            child.delays[j] = pad
                    port += len(child.outputs)
        self.block_out[b] = [(frag_of[root], k) for k in range(len(self.frags[frag_of[root]].outputs))]

    # retiming

    def _fan_out(self, key):
        return len(self.sinks.get(key, [])) + len(self.readouts.get(key, []))

    def retime(self):
        for label, ids in self.graph.outputs.items():
            if ids not in self.owner:
                raise ConfigurationError(f"output {label!r} is not a block output population")
            self.readouts.setdefault(("blk",) + self.owner[ids], []).append(label)
        cons = []  # (x, y, c): o[y] >= o[x] + c; x None = external (offset 0)
        for key, sinks in self.sinks.items():
            split = int(self._fan_out(key) > 1)
            x = None if key[0] == "in" else key[1]
            for s in sinks:
                cons.append((x, s.block, split + s.kappa - s.delay))
        outs = [(key[1], int(self._fan_out(key) > 1)) for key in self.readouts]
        for (x, sx), (z, sz) in zip(outs, outs[1:] + outs[:1]):
            cons.append((x, z, sx - sz))
        o = {b: 0 for b in range(len(self.graph.blocks))}
        for _ in range(len(o) + 2):
            changed = False
            for x, y, c in cons:
                v = (0 if x is None else o[x]) + c
                if v > o[y]:
                    o[y] = v
                    changed = True
            if not changed:
                break
        else:
            raise ConfigurationError(
                "no consistent retiming: a recurrent loop is shorter than its compiled latency "
                f"(frame length {self.cfg.frame_len})"
            )
        self.offset = o
        self.latency = (outs[0][1] + o[outs[0][0]]) if outs else 0

    # wiring

    def _source_neurons(self, key):
        if key[0] == "in":
            return None, list(key[1])
        fi, k = self.block_out[key[1]][key[2]]
        return fi, list(self.frags[fi].outputs[k])

    def wire(self):
        self.input_axons = {}
        self.output_map = {}
        self.max_delay = 0
        keys = list(self.sinks) + [k for k in self.readouts if k not in self.sinks]
        for key in keys:
            sinks = self.sinks.get(key, [])
            labels = self.readouts.get(key, [])
            fi, chans = self._source_neurons(key)
            external = fi is None
            width = len(chans)
            fan = len(sinks) + len(labels)
            # heads[t][ch]: (frag, neuron) emitting channel ch towards target t;
            # for external sources the head is (None, channel)
            if fan > 1:
                if fan * width > CORE_SIZE:
                    raise ConfigurationError(
                        f"source {key[:1] + key[1:2]} needs fan-out {fan} of {width} channels; "
                        f"a splitter core holds {CORE_SIZE // width}"
                    )
                split = self.add(synth_splitter(width, fan, f"split[{len(self.frags)}]"))
                sp = self.frags[split]
                for ch in range(width):
                    self._connect(fi, chans[ch], split, sp.ports[0][ch], 0)
                heads = [[(split, j) for j in sp.outputs[t]] for t in range(fan)]
            else:
                heads = [[(fi, c) for c in chans]]
            for t, s in enumerate(sinks):
                self._route_sink(key, s, heads[t], fan > 1, external)
            for t, label in enumerate(labels, start=len(sinks)):
                self.output_map[label] = heads[t]
                for f, j in heads[t]:
                    self.frags[f].routes[j] = ("out", label)

    def _connect(self, src_frag, src, dst_frag, axon, delay):
        if src_frag is None:
            if delay:
                raise AssertionError("external channels carry no delay")
            if src in self.input_axons:
                raise ConfigurationError(f"input channel {src} routed twice")
            self.input_axons[src] = (dst_frag, axon)
            return
        frag = self.frags[src_frag]
        if frag.routes[src] is not None:
            raise ConfigurationError(f"neuron {src} of {frag.name} routed twice")
        frag.routes[src] = ("frag", dst_frag, axon)
        frag.delays[src] = delay
        self.max_delay = max(self.max_delay, delay)

    def _route_sink(self, key, s, head, split, external):
        x = 0 if key[0] == "in" else self.offset[key[1]]
        total = s.delay + self.offset[s.block] - x - s.kappa
        head_cap = int(split or not external)
        chain = max(0, ceil((total - int(split) - DELAY_MAX * head_cap) / (DELAY_MAX + 1)))
        slack = total - int(split) - chain
        if slack < 0:
            raise AssertionError(f"retiming left a negative delay on an edge into block {s.block}")
        # delay register per hop: the head (if it has one), then each chain relay
        delays = []
        for pos in range(chain + 1):
            d = 0 if (pos == 0 and not head_cap) else min(DELAY_MAX, slack)
            delays.append(d)
            slack -= d
        assert slack == 0
        cur = head
        for d in delays[:-1]:
            relay = self.add(synth_splitter(len(head), 1, f"delay[{len(self.frags)}]"))
            rf = self.frags[relay]
            for ch, (f, j) in enumerate(cur):
                self._connect(f, j, relay, rf.ports[0][ch], d)
            cur = [(relay, j) for j in rf.outputs[0]]
        dst = self.frags[s.frag].ports[s.port]
        for ch, (f, j) in enumerate(cur):
            self._connect(f, j, s.frag, dst[ch], delays[-1])

    # packing

    def pack(self):
        order = sorted(range(len(self.frags)), key=lambda i: -self.frags[i].size)
        cores, used = [], []
        place = {}
        for fi in order:
            f = self.frags[fi]
            for c, (nn, na) in enumerate(used):
                if nn + f.n_neurons <= CORE_SIZE and na + f.n_axons <= CORE_SIZE:
                    break
            else:
                c = len(used)
                used.append((0, 0))
                cores.append(CoreConfig.empty())
            nn, na = used[c]
            place[fi] = (c, nn, na)
            used[c] = (nn + f.n_neurons, na + f.n_axons)
        if len(cores) > MAX_CORES:
            raise ConfigurationError(f"{len(cores)} cores needed, the chip has {MAX_CORES}")
        for fi, (c, n0, a0) in place.items():
            f, core = self.frags[fi], cores[c]
            sl_n, sl_a = slice(n0, n0 + f.n_neurons), slice(a0, a0 + f.n_axons)
            core.axon_types[sl_a] = f.axon_types
            core.weight_regs[sl_n] = f.weight_regs
            core.connections[sl_a, sl_n] = f.connections
            core.thresholds[sl_n] = f.thresholds
            core.delays[sl_n] = f.delays
            core.fragments.append(f.name)
            for j, r in enumerate(f.routes):
                if r is None or r[0] == "out":
                    continue
                if r[0] == "local":
                    core.routing[n0 + j] = (c, a0 + r[1])
                else:
                    tc, _, ta0 = place[r[1]]
                    core.routing[n0 + j] = (tc, ta0 + r[2])
        for c, (nn, na) in enumerate(used):
            cores[c].n_neurons, cores[c].n_axons = nn, na
        self.place = place
        self.cores = cores

    def result(self) -> CompiledNetwork:
        def loc(fi, j, axon=False):
            c, n0, a0 = self.place[fi]
            return (c, (a0 if axon else n0) + j)

        inputs = {ch: loc(fi, a, axon=True) for ch, (fi, a) in sorted(self.input_axons.items())}
        outputs = {
            label: [loc(fi, j) for fi, j in self.output_map[label]] for label in self.graph.outputs
        }
        kinds, blocks = {}, {}
        for fi, f in enumerate(self.frags):
            kinds[f.kind] = kinds.get(f.kind, 0) + 1
            head = f.name.split(".")[0]
            blocks.setdefault(head, set()).add(self.place[fi][0])
        p = self.cfg.pop_size
        report = PlacementReport(
            n_cores=len(self.cores),
            n_neurons=sum(c.n_neurons for c in self.cores),
            n_axons=sum(c.n_axons for c in self.cores),
            adder_fan_in=adder_fan_in(p),
            cancel_fan_in=cancel_fan_in(p),
            fragments=dict(sorted(kinds.items())),
            blocks={k: sorted(v) for k, v in blocks.items()},
            max_delay=int(max((c.delays.max() for c in self.cores), default=0)),
        )
        return CompiledNetwork(
            self.cores, inputs, outputs, self.latency, self.cfg, report, self.graph.n_inputs
        )


def compile_graph(graph: CircuitGraph, cfg: CodecConfig) -> CompiledNetwork:
    """Lower ``graph`` onto cores.

    The compiled network reproduces the abstract per-step output counts
    ``latency_offset`` steps later, as long as no population is asked to
    fire more than p spikes in one step.
    """
    c = _Compiler(graph, cfg)
    c.synthesize()
    c.retime()
    c.wire()
    c.pack()
    net = c.result()
    log.info("compiled %d fragments onto %d cores", len(c.frags), net.report.n_cores)
    return net


def to_graph(net: CompiledNetwork) -> CircuitGraph:
    """Flatten compiled cores back into a neuron graph the stepper can run."""
    gid = {}
    neurons = []
    weights = []
    for c, core in enumerate(net.cores):
        W = core.effective_weights()
        weights.append(W)
        for j in range(core.n_neurons):
            gid[(c, j)] = len(neurons)
            neurons.append(NeuronSpec(W[:, j], core.thresholds[j], core.delays[j]))
    targets = []
    for c, core in enumerate(net.cores):
        targets.append([np.flatnonzero(core.connections[a, : core.n_neurons]) for a in range(CORE_SIZE)])
    routes = []
    for c, core in enumerate(net.cores):
        for j in range(core.n_neurons):
            tc, ta = core.routing[j]
            if tc < 0:
                continue
            for v in targets[tc][ta]:
                routes.append(Route(gid[(c, j)], gid[(int(tc), int(v))], int(ta)))
    for ch, (c, a) in net.input_axons.items():
        for v in targets[c][a]:
            routes.append(Route(ch, gid[(c, int(v))], a, 0, True))
    outputs = {label: tuple(gid[x] for x in locs) for label, locs in net.outputs.items()}
    return CircuitGraph(neurons, routes, net.n_inputs, outputs, meta={"latency": net.latency_offset})


@dataclass
class EquivalenceReport:
    equivalent: bool
    latency_offset: int
    n_frames: int
    first_divergent_frame: int | None = None
    output: str | None = None
    abstract_counts: dict = field(default_factory=dict)
    compiled_counts: dict = field(default_factory=dict)


def verify_equivalence(
    graph: CircuitGraph, compiled: CompiledNetwork, stimulus: InputEvents, n_frames: int
) -> EquivalenceReport:
    """Compare per-frame output counts of the abstract and compiled networks."""
    ell = compiled.codec.frame_len
    base = graph.meta.get("latency", 0)
    D = compiled.latency_offset
    labels = list(graph.outputs)
    if set(labels) != set(compiled.outputs):
        raise ConfigurationError("abstract and compiled networks expose different outputs")
    flat = to_graph(compiled)

    def counts(g, offset):
        rec = sorted({i for label in labels for i in g.outputs[label]})
        res = run_network(g, stimulus, n_frames * ell + offset, record=rec, bin_len=ell, bin_offset=offset)
        return {label: res.pop_counts(g.outputs[label])[:n_frames] for label in labels}

    a = counts(graph, base)
    b = counts(flat, base + D)
    report = EquivalenceReport(True, D, n_frames, abstract_counts=a, compiled_counts=b)
    first = None
    for label in labels:
        bad = np.flatnonzero(a[label] != b[label])
        if bad.size and (first is None or bad[0] < first[0]):
            first = (int(bad[0]), label)
    if first is not None:
        report.equivalent = False
        report.first_divergent_frame, report.output = first
    return report
