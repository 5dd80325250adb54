"""Multiplying spike counts by a fraction with one integrate-and-fire neuron.

A neuron with input weight alpha and threshold beta fires floor((carry + alpha*n) / beta)
spikes for a frame carrying n input spikes, and keeps the remainder in its membrane.
The per-frame error is therefore bounded and anti-correlated from frame to frame.
"""

import numpy as np

from spikelds.analytics import gen_assumption_inputs, scalar_error_stats
from spikelds.circuits import build_scalar_mult
from spikelds.codec import CodecConfig, frame_events
from spikelds.compiler import approx_weight
from spikelds.neuron import frame_multiply, run_network

# a real weight is first replaced by the closest alpha/beta the hardware can hold
w = approx_weight(0.3719)
print(f"0.3719 -> {w.numerator}/{w.denominator} (error {0.3719 - w.value:.2e})")

# run a p=4 population for a few frames and compare with the frame recurrence
p, ell = 4, 10
cfg = CodecConfig(frame_len=ell, pop_size=p)
counts = np.array([40, 13, 0, 27, 33, 5, 40, 21])
g = build_scalar_mult(w, p)
ids = list(g.outputs["out"])
res = run_network(g, frame_events(counts, cfg), len(counts) * ell + 1, record=ids, bin_len=ell, bin_offset=1)
spiking = res.pop_counts(ids)[: len(counts)]
print("input counts   ", counts)
print("spiking output ", spiking)
print("frame recurrence", frame_multiply(w.numerator, w.denominator, counts)[0])
print("exact product  ", np.round(w.value * counts, 2))

# error statistics over a long stream with uniformly spread remainders
n = gen_assumption_inputs(w, 200_000, seed=0)
out, _ = frame_multiply(w.numerator, w.denominator, n)
e = out - w.value * n
mean, var, lag1, lag2 = scalar_error_stats()
print(f"mean  {e.mean():+.4f}  (model {mean:+.4f})")
print(f"var   {e.var():.4f}   (model {var:.4f})")
print(f"lag-1 {np.mean(e[1:] * e[:-1]):+.4f}  (model {lag1:+.4f})")
print(f"lag-2 {np.mean(e[2:] * e[:-2]):+.4f}  (model {lag2:+.4f})")
