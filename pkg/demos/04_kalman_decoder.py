"""A steady-state Kalman decoder on spiking neurons.

Synthetic reaching trials provide hand position and noisy neural features. A
kinematic Kalman model is fitted on all but one trial, its steady-state form is
run both in floating point and as a spiking LDS, and the held-out trajectories
are compared. Smaller populations and frames give coarser spiking estimates.
"""

import numpy as np

from spikelds.codec import CodecConfig
from spikelds.kalman import KinematicTask, generate_kinematic_trials, leave_one_out, normalize_trials

raw = generate_kinematic_trials(KinematicTask(n_trials=10))
results = {}
for p, ell in ((21, 25), (5, 10), (2, 5)):
    cfg = CodecConfig(frame_len=ell, pop_size=p)
    res = leave_one_out(normalize_trials(raw, cfg), cfg, which=range(3))
    results[p] = res
    r = np.array([t.r_spiking_vs_sskf for t in res])
    print(f"p={p:2d} l={ell:2d}  r(spiking, steady-state KF) per trial: {np.round(r, 4)}")

t = results[21][0]
print("p=21, held-out trial 0, every tenth frame (true, KF, steady-state KF, spiking):")
for k in range(0, 100, 10):
    print(f"  {t.true[k]:8.2f} {t.kf[k]:8.2f} {t.sskf[k]:8.2f} {t.spiking[k]:8.2f}")
