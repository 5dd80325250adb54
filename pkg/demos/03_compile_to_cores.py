"""Compiling a spiking LDS onto 256x256 crossbar cores and checking it.

The compiler lowers every block to crossbar fragments, inserts splitters and
delay relays, retimes the pipeline and packs fragments into cores. The compiled
network is then simulated and compared frame by frame with the abstract one.
"""

import json

import numpy as np

from spikelds.circuits import build_spiking_lds, rationalize, transform_lds
from spikelds.codec import CodecConfig, encode_events
from spikelds.compiler import compile_graph, network_to_dict, verify_equivalence
from spikelds.lds import LdsSpec

cfg = CodecConfig(frame_len=12, pop_size=3, eta=0.5)
lds = LdsSpec(np.array([[0.5, -0.3], [0.2, 0.4]]), np.array([[0.6, -0.2], [0.1, 0.5]]))
_, aw, bw = rationalize(lds, cfg.pop_size)
graph = build_spiking_lds(transform_lds(lds), cfg, True, weights=(aw, bw))

net = compile_graph(graph, cfg)
report = network_to_dict(net)["report"]
report.pop("blocks")
print(json.dumps(report, indent=2))

t = np.arange(40)[:, None]
u = np.round(8 * np.sin(2 * np.pi * np.array([0.05, 0.11]) * t)).astype(int)
rep = verify_equivalence(graph, net, encode_events(u, cfg), 40)
print(f"equivalent: {rep.equivalent}, extra latency {rep.latency_offset} steps")
print("x+0 abstract:", rep.abstract_counts["x+0"][:10])
print("x+0 compiled:", rep.compiled_counts["x+0"][:10])
