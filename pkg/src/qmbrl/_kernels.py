"""Compiled closed-loop roll-outs of a circuit policy on a circuit surrogate.

Mirrors :func:`qmbrl.vqc.evaluate` (same block-unitary formulation and qubit
order) one sample at a time, so every particle's fitness is computed by the
same scalar code path no matter how particles are batched or distributed.
"""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _circuit(blocks, scale, n_qubits, u, n_out, psi, tmp, out):
    dim = blocks.shape[1]
    n_in = u.shape[0]
    for i in range(dim):
        amp = 1.0
        for q in range(n_qubits):
            bit = (i >> (n_qubits - 1 - q)) & 1
            if q < n_in:
                a = u[q] * scale * 0.5
                amp *= np.sin(a) if bit else np.cos(a)
            elif bit:
                amp = 0.0
        psi[i] = amp
    for b in range(blocks.shape[0]):
        if b > 0:
            for q in range(n_in):
                a = u[q] * scale * 0.5
                c = np.cos(a)
                s = np.sin(a)
                mask = 1 << (n_qubits - 1 - q)
                for i in range(dim):
                    if i & mask == 0:
                        a0 = psi[i]
                        a1 = psi[i | mask]
                        psi[i] = c * a0 - s * a1
                        psi[i | mask] = s * a0 + c * a1
        w = blocks[b]
        for i in range(dim):
            acc = 0j
            for j in range(dim):
                acc += w[i, j] * psi[j]
            tmp[i] = acc
        for i in range(dim):
            psi[i] = tmp[i]
    for o in range(n_out):
        out[o] = 0.0
    for i in range(dim):
        p = psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
        for o in range(n_out):
            if (i >> (n_qubits - 1 - o)) & 1:
                out[o] -= p
            else:
                out[o] += p
    for o in range(n_out):
        out[o] = min(max(out[o], -1.0), 1.0)


@numba.njit(cache=True)
def _reward(x, theta, x_limit, theta_limit, x_center, theta_upright):
    ax = abs(x)
    at = abs(theta)
    if ax > x_limit or at > theta_limit:
        return 0.0
    if ax < x_center and at < theta_upright:
        return 1.0
    return 0.5


@numba.njit(cache=True)
def rollout_returns(policy_blocks, policy_qubits, policy_scale, policy_in_scale, policy_in_offset,
                    model_blocks, model_qubits, model_scale, model_in_scale, model_in_offset,
                    target_scale, target_offset, starts, horizon, limits):
    """Undiscounted model returns from each start state.

    Inputs are scaled as ``clip(s * in_scale + in_offset, -1, 1)`` and deltas
    recovered as ``(y - target_offset) / target_scale``.  ``limits`` is
    ``(x_limit, theta_limit, x_center, theta_upright)``.  Returns
    ``(returns, nonfinite)`` where a flagged roll-out stopped scoring at the
    first non-finite state.
    """
    dim = max(policy_blocks.shape[1], model_blocks.shape[1])
    psi = np.empty(dim, dtype=np.complex128)
    tmp = np.empty(dim, dtype=np.complex128)
    pol_u = np.empty(4)
    mod_u = np.empty(5)
    pol_out = np.empty(1)
    mod_out = np.empty(4)
    state = np.empty(4)
    returns = np.zeros(starts.shape[0])
    bad = np.zeros(starts.shape[0], dtype=np.bool_)
    for k in range(starts.shape[0]):
        for d in range(4):
            state[d] = starts[k, d]
        total = 0.0
        for t in range(horizon):
            for d in range(4):
                pol_u[d] = min(max(state[d] * policy_in_scale[d] + policy_in_offset[d], -1.0), 1.0)
            _circuit(policy_blocks, policy_scale, policy_qubits, pol_u, 1, psi, tmp, pol_out)
            action = 1.0 if pol_out[0] >= 0.0 else 0.0
            for d in range(4):
                mod_u[d] = min(max(state[d] * model_in_scale[d] + model_in_offset[d], -1.0), 1.0)
            mod_u[4] = 2.0 * action - 1.0
            _circuit(model_blocks, model_scale, model_qubits, mod_u, 4, psi, tmp, mod_out)
            finite = True
            for d in range(4):
                state[d] = state[d] + (mod_out[d] - target_offset[d]) / target_scale[d]
                if not np.isfinite(state[d]):
                    finite = False
            if not finite:
                bad[k] = True
                break
            total += _reward(state[0], state[2], limits[0], limits[1], limits[2], limits[3])
        returns[k] = total
    return returns, bad
