"""Compiled inner loop for the integer integrate-and-fire stepper.

Everything here works on flat arrays; :mod:`spikelds.neuron` owns the
user-facing types and the translation from graphs to these arrays.
"""

import numpy as np
from numba import njit

# Signed 32-bit membrane registers; anything outside is a hard error.
POTENTIAL_LIMIT = 2**31 - 1

_OVERFLOW_CAP = 1_000_000


@njit(cache=True, nogil=True)
def simulate(
    thresholds,
    v0,
    syn_ptr,
    syn_tgt,
    syn_w,
    syn_delay,
    in_ptr,
    in_tgt,
    in_w,
    in_delay,
    ev_ptr,
    ev_ch,
    n_steps,
    ring,
    record,
    bin_len,
    bin_offset,
    n_bins,
    record_potentials,
    group_of,
    group_unit,
    n_groups,
    limit,
):
    n = thresholds.shape[0]
    n_rec = record.shape[0]
    v = v0.copy()
    pending = np.zeros((ring, n), dtype=np.int64)
    counts = np.zeros((n_bins, n_rec), dtype=np.int32)
    if record_potentials:
        trace = np.zeros((n_steps, n_rec), dtype=np.int64)
    else:
        trace = np.zeros((0, n_rec), dtype=np.int64)
    fired = np.zeros(n, dtype=np.uint8)
    group_pre = np.zeros(n_groups, dtype=np.int64)
    group_seen = np.zeros(n_groups, dtype=np.uint8)
    group_k = np.zeros(n_groups, dtype=np.int64)
    ovf_step = np.zeros(_OVERFLOW_CAP, dtype=np.int64)
    ovf_group = np.zeros(_OVERFLOW_CAP, dtype=np.int64)
    n_ovf = 0
    status = 0
    for t in range(n_steps):
        slot = t % ring
        for g in range(n_groups):
            group_seen[g] = 0
            group_k[g] = 0
        for i in range(n):
            vi = v[i] + pending[slot, i]
            pending[slot, i] = 0
            if vi > limit or vi < -limit:
                status = 1
            g = group_of[i]
            if g >= 0 and group_seen[g] == 0:
                group_seen[g] = 1
                group_pre[g] = vi
            if vi >= thresholds[i]:
                vi -= thresholds[i]
                fired[i] = 1
                if g >= 0:
                    group_k[g] += 1
            else:
                fired[i] = 0
            v[i] = vi
        if status != 0:
            return counts, trace, v, ovf_step[:0], ovf_group[:0], n_ovf, t, status
        if t >= bin_offset:
            row = (t - bin_offset) // bin_len
            if row < n_bins:
                for r in range(n_rec):
                    counts[row, r] += fired[record[r]]
        if record_potentials:
            for r in range(n_rec):
                j = record[r]
                trace[t, r] = v[j] + fired[j] * thresholds[j]
        for g in range(n_groups):
            if group_seen[g] == 1:
                if group_pre[g] - group_k[g] * group_unit[g] >= group_unit[g]:
                    if n_ovf < _OVERFLOW_CAP:
                        ovf_step[n_ovf] = t
                        ovf_group[n_ovf] = g
                    n_ovf += 1
        for i in range(n):
            if fired[i] == 1:
                for e in range(syn_ptr[i], syn_ptr[i + 1]):
                    s = (t + 1 + syn_delay[e]) % ring
                    pending[s, syn_tgt[e]] += syn_w[e]
        for k in range(ev_ptr[t], ev_ptr[t + 1]):
            c = ev_ch[k]
            for e in range(in_ptr[c], in_ptr[c + 1]):
                s = (t + 1 + in_delay[e]) % ring
                pending[s, in_tgt[e]] += in_w[e]
    m = min(n_ovf, _OVERFLOW_CAP)
    return counts, trace, v, ovf_step[:m], ovf_group[:m], n_ovf, n_steps, status
