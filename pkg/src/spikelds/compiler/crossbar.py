"""Crossbar fragments: the per-circuit slices of a 256x256 neurosynaptic core.

A core has 256 axons (rows) and 256 neurons (columns). Axon ``i`` has a type
``G_i`` in 0..3, neuron ``j`` has four signed weight registers ``s^0..s^3``,
and the binary crossbar ``b`` selects which axons reach which neurons, so the
effective weight is ``w_ij = b_ij * s^{G_i}_j``. Every neuron sends its
spikes to exactly one axon, which is why population members are replicated
when their spikes are needed on several rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..graph import ConfigurationError
from .approx import THRESHOLD_MAX, WEIGHT_MAX, RationalWeight

CORE_SIZE = 256
N_AXON_TYPES = 4
DELAY_MAX = 15
MAX_CORES = 4096


def n_mult(p: int) -> int:
    """Neurons (and axons) used by a p-dimensional multiplication crossbar."""
    return (p * p + 3 * p) // 2


def adder_fan_in(p: int) -> int:
    """Largest number of p-dimensional trains one adder crossbar can sum."""
    return (CORE_SIZE - 2 * p + 1) // p


def cancel_fan_in(p: int) -> int:
    """Input trains (plus and minus together) one cancellation crossbar can take."""
    return (CORE_SIZE - 4 * p + 2) // p


@dataclass
class Fragment:
    """A self-contained piece of crossbar, later placed at an offset inside a core.

    ``routes[j]`` is ``("local", axon)`` for intra-fragment feedback, or
    ``None`` until the compiler wires the neuron to another fragment.
    ``ports[k]`` lists the axon receiving each channel of input port ``k``;
    ``outputs`` lists the neurons emitting each output channel, per output
    population.
    """

    name: str
    kind: str
    axon_types: np.ndarray
    connections: np.ndarray
    weight_regs: np.ndarray
    thresholds: np.ndarray
    delays: np.ndarray
    routes: list
    ports: list
    outputs: list
    meta: dict = field(default_factory=dict)

    @property
    def n_axons(self) -> int:
        return len(self.axon_types)

    @property
    def n_neurons(self) -> int:
        return len(self.thresholds)

    @property
    def size(self) -> int:
        return max(self.n_axons, self.n_neurons)

    def effective_weights(self) -> np.ndarray:
        """``(n_axons, n_neurons)`` matrix of ``b_ij * s^{G_i}_j``."""
        regs = self.weight_regs[:, self.axon_types].T
        return np.where(self.connections, regs, 0)

    def check(self) -> None:
        if self.n_axons > CORE_SIZE or self.n_neurons > CORE_SIZE:
            raise ConfigurationError(
                f"fragment {self.name} needs {self.n_neurons} neurons and "
                f"{self.n_axons} axons; a core has {CORE_SIZE}"
            )
        if np.any(np.abs(self.weight_regs) > WEIGHT_MAX):
            raise ConfigurationError(f"fragment {self.name}: weight register outside +-{WEIGHT_MAX}")
        if np.any(self.thresholds < 1) or np.any(self.thresholds > THRESHOLD_MAX):
            raise ConfigurationError(f"fragment {self.name}: threshold outside 1..{THRESHOLD_MAX}")
        if np.any(self.delays < 0) or np.any(self.delays > DELAY_MAX):
            raise ConfigurationError(f"fragment {self.name}: delay outside 0..{DELAY_MAX}")


class _Layout:
    """Incremental fragment construction."""

    def __init__(self):
        self.types = []
        self.regs = []
        self.thr = []
        self.links = []  # (axon, neuron)
        self.routes = []

    def axon(self, g: int) -> int:
        self.types.append(g)
        return len(self.types) - 1

    def neuron(self, threshold: int, regs=(0, 0, 0, 0), route=None) -> int:
        self.thr.append(threshold)
        self.regs.append(list(regs))
        self.routes.append(route)
        return len(self.thr) - 1

    def link(self, axons, neuron):
        for a in axons:
            self.links.append((a, neuron))

    def build(self, name, kind, ports, outputs, **meta) -> Fragment:
        n_ax, n_nr = len(self.types), len(self.thr)
        b = np.zeros((n_ax, n_nr), dtype=bool)
        for a, j in self.links:
            b[a, j] = True
        frag = Fragment(
            name,
            kind,
            np.array(self.types, dtype=np.int64),
            b,
            np.array(self.regs, dtype=np.int64).reshape(n_nr, N_AXON_TYPES),
            np.array(self.thr, dtype=np.int64),
            np.zeros(n_nr, dtype=np.int64),
            self.routes,
            ports,
            outputs,
            dict(meta),
        )
        frag.check()
        return frag


def synth_mult_crossbar(w: RationalWeight, p: int, name: str = "mult") -> Fragment:
    """Multiplication by alpha/beta on a p-dimensional train.

    Axon type 0 carries the input (register alpha), type 1 the off-diagonal
    inhibition (register -beta) and type 2 the self-excitation, split into
    rows of beta because member i needs (i-1)*beta and registers stop at 255.
    Member i therefore has i copies (one per row it drives) and each output
    channel gets a relay neuron, which adds one step of latency.
    """
    alpha, beta = int(w.numerator), int(w.denominator)
    if not 1 <= p <= 21:
        raise ConfigurationError(f"p={p}: a multiplication crossbar needs n_mult(p) <= 256, so p <= 21")
    if alpha > WEIGHT_MAX or beta > WEIGHT_MAX:
        raise ConfigurationError(f"weight {alpha}/{beta} exceeds the 8-bit register range")
    if alpha > beta:
        raise ConfigurationError(f"weight {alpha}/{beta} exceeds 1")
    L = _Layout()
    inputs = [L.axon(0) for _ in range(p)]
    off = [L.axon(1) for _ in range(p)]
    diag = [[L.axon(2) for _ in range(k)] for k in range(p)]
    regs = (alpha, -beta, beta, 0)
    for k in range(p):
        rows = inputs + [off[j] for j in range(p) if j != k] + diag[k]
        for target in [off[k]] + diag[k]:
            L.link(rows, L.neuron((k + 1) * beta, regs, ("local", target)))
    relays = []
    for k in range(p):
        r = L.neuron(1, (0, 1, 0, 0))
        L.link([off[k]], r)
        relays.append(r)
    return L.build(name, "mult", [inputs], [relays], alpha=alpha, beta=beta, p=p)


def synth_small_w_crossbar(w: RationalWeight, p: int, name: str = "mult_small") -> Fragment:
    """Multiplication by w <= 1/p with a single neuron.

    The population would never fire more than once per step, so one neuron
    with threshold beta (up to 18 bits) reproduces it. Its output is a
    one-channel train.
    """
    alpha, beta = int(w.numerator), int(w.denominator)
    if p < 1:
        raise ConfigurationError("p must be >= 1")
    if alpha * p > beta:
        raise ConfigurationError(f"weight {alpha}/{beta} is above 1/p = 1/{p}")
    if alpha > WEIGHT_MAX or beta > THRESHOLD_MAX:
        raise ConfigurationError(f"weight {alpha}/{beta} outside the register ranges")
    L = _Layout()
    inputs = [L.axon(0) for _ in range(p)]
    j = L.neuron(beta, (alpha, 0, 0, 0))
    L.link(inputs, j)
    return L.build(name, "mult_small", [inputs], [[j]], alpha=alpha, beta=beta, p=p)


def synth_adder_crossbar(n_inputs: int, p: int, name: str = "add") -> Fragment:
    """Sum of ``n_inputs`` p-dimensional trains.

    Member i's self-excitation i-1 fits one register, so a single twin per
    member (except the first) drives its diagonal row.
    """
    if n_inputs < 1 or p < 1:
        raise ConfigurationError("adder needs n_inputs >= 1 and p >= 1")
    if n_inputs > adder_fan_in(p):
        raise ConfigurationError(
            f"{n_inputs} inputs exceed the adder fan-in {adder_fan_in(p)} for p={p}"
        )
    L = _Layout()
    ports = [[L.axon(0) for _ in range(p)] for _ in range(n_inputs)]
    off = [L.axon(1) for _ in range(p)]
    diag = [None] + [L.axon(2) for _ in range(1, p)]
    all_in = [a for port in ports for a in port]
    for k in range(p):
        rows = all_in + [off[j] for j in range(p) if j != k] + ([diag[k]] if k else [])
        regs = (1, -1, k, 0)
        for target in [off[k]] + ([diag[k]] if k else []):
            L.link(rows, L.neuron(k + 1, regs, ("local", target)))
    relays = []
    for k in range(p):
        r = L.neuron(1, (0, 1, 0, 0))
        L.link([off[k]], r)
        relays.append(r)
    return L.build(name, "add", ports, [relays], p=p)


def synth_cancel_crossbar(signs, p: int, name: str = "cancel") -> Fragment:
    """Cancellation of summed positive and negative trains.

    ``signs[k]`` is +1 or -1 for input port k. Type 0 rows excite the
    positive population and inhibit the negative one, type 3 rows do the
    opposite. The positive population's off-diagonal rows are type 3, so one
    row both inhibits its siblings and excites every negative neuron (and
    symmetrically for the negative side). Type 2 rows hold self-excitation.
    """
    signs = [int(s) for s in signs]
    if p < 1 or any(s not in (1, -1) for s in signs):
        raise ConfigurationError("cancellation needs p >= 1 and port signs of +-1")
    if len(signs) > cancel_fan_in(p):
        raise ConfigurationError(
            f"{len(signs)} inputs exceed the cancellation fan-in {cancel_fan_in(p)} for p={p}"
        )
    L = _Layout()
    ports = [[L.axon(0 if s > 0 else 3) for _ in range(p)] for s in signs]
    all_in = [a for port in ports for a in port]
    off_p = [L.axon(3) for _ in range(p)]
    off_m = [L.axon(0) for _ in range(p)]
    diag_p = [None] + [L.axon(2) for _ in range(1, p)]
    diag_m = [None] + [L.axon(2) for _ in range(1, p)]
    for own_off, other_off, diag, sign in ((off_p, off_m, diag_p, 1), (off_m, off_p, diag_m, -1)):
        for k in range(p):
            rows = all_in + [own_off[j] for j in range(p) if j != k] + other_off
            rows += [diag[k]] if k else []
            regs = (sign, 0, k, -sign)
            for target in [own_off[k]] + ([diag[k]] if k else []):
                L.link(rows, L.neuron(k + 1, regs, ("local", target)))
    relays = []
    for off, regs in ((off_p, (0, 0, 0, 1)), (off_m, (1, 0, 0, 0))):
        side = []
        for k in range(p):
            r = L.neuron(1, regs)
            L.link([off[k]], r)
            side.append(r)
        relays.append(side)
    return L.build(name, "cancel", ports, relays, p=p, signs=signs)


def synth_splitter(width: int, fan_out: int, name: str = "split") -> Fragment:
    """Identity relays duplicating a ``width``-channel train onto ``fan_out`` routes."""
    if width < 1 or fan_out < 1:
        raise ConfigurationError("splitter needs width >= 1 and fan_out >= 1")
    L = _Layout()
    axons = [L.axon(0) for _ in range(width)]
    outputs = []
    for _ in range(fan_out):
        copy = []
        for a in axons:
            j = L.neuron(1, (1, 0, 0, 0))
            L.link([a], j)
            copy.append(j)
        outputs.append(copy)
    return L.build(name, "split", [axons], outputs, fan_out=fan_out)
