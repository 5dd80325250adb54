"""Lowering of abstract spiking circuits onto 256x256 neurosynaptic cores."""

from .approx import (
    RationalApproxBounds,
    RationalWeight,
    approx_weight,
    approx_weight_bruteforce,
    bounds_for,
)
from .crossbar import (
    CORE_SIZE,
    DELAY_MAX,
    Fragment,
    adder_fan_in,
    cancel_fan_in,
    n_mult,
    synth_adder_crossbar,
    synth_cancel_crossbar,
    synth_mult_crossbar,
    synth_small_w_crossbar,
    synth_splitter,
)
from .placement import (
    CompiledNetwork,
    CoreConfig,
    EquivalenceReport,
    PlacementReport,
    compile_graph,
    to_graph,
    verify_equivalence,
)
from .io import dumps, network_to_dict, write_core_config
from .tree import AdderTree, build_adder_tree, build_cancel_tree
