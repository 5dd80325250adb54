"""JSON serialization of compiled core configurations."""

from __future__ import annotations

import json
from dataclasses import asdict

from .placement import CompiledNetwork


def core_to_dict(core, index: int) -> dict:
    n = core.n_neurons
    return {
        "core": index,
        "axon_types": core.axon_types.tolist(),
        "connections": ["".join("1" if x else "0" for x in row) for row in core.connections],
        "neurons": [
            {
                "threshold": int(core.thresholds[j]),
                "delay": int(core.delays[j]),
                "weight_regs": core.weight_regs[j].tolist(),
                "route": core.routing[j].tolist(),
            }
            for j in range(n)
        ],
        "fragments": list(core.fragments),
    }


def network_to_dict(net: CompiledNetwork) -> dict:
    return {
        "latency_offset": net.latency_offset,
        "frame_len": net.codec.frame_len,
        "pop_size": net.codec.pop_size,
        "inputs": [[ch, c, a] for ch, (c, a) in sorted(net.input_axons.items())],
        "outputs": {label: [list(x) for x in locs] for label, locs in net.outputs.items()},
        "report": asdict(net.report),
        "cores": [core_to_dict(core, i) for i, core in enumerate(net.cores)],
    }


def dumps(net: CompiledNetwork, indent: int | None = None) -> str:
    return json.dumps(network_to_dict(net), indent=indent)


def write_core_config(net: CompiledNetwork, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(net))
        fh.write("\n")
