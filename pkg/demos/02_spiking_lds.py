"""Running a random linear dynamical system on spiking neurons.

The system x_t = A x_{t-1} + B u_t is split into positive and negative halves,
every weight becomes a multiplication neuron, and the halves are kept small by
cancelling matched spikes. Decoded states are compared with a float simulation,
and the residual covariance with its analytical prediction.
"""

import numpy as np

from spikelds.experiments import validate_covariance
from spikelds.lds import GenParams

params = GenParams(m=3, n=3, T=1200, seed=1)
run, rep = validate_covariance(params)

print(f"{run.n_neurons} neurons, {run.n_overflow} overflow events")
print("first frames, state 0: spiking vs reference")
for t in range(5):
    print(f"  t={t}  {run.spiking_states[t, 0]:8.0f}  {run.reference_states[t, 0]:10.2f}")

# residuals are normalized by the coding scale, so show them in units of 1e-6
np.set_printoptions(precision=2, suppress=True)
print("sample residual covariance x 1e6\n", rep.sample_cov * 1e6)
print("theory residual covariance x 1e6\n", rep.theory_cov * 1e6)
print(f"relative Frobenius error {rep.rel_frobenius:.3f}, sample/theory MSE {rep.mse_ratio:.3f}")
print(f"effective independent samples ~{rep.n_eff:.0f}")
