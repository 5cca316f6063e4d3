"""Data re-uploading circuit templates and their batched evaluation.

A template is ``num_uploads`` blocks.  Each block angle-encodes the inputs
(``RY(encoding_scale * u_i)`` on qubit ``i``, one radian per unit by default)
and then applies
``layers_per_upload`` variational layers, each one ``Rot`` per qubit followed
by a CNOT entangler.  Readout is ``<Z>`` on qubits ``0 .. num_outputs-1``.

The variational part of a block does not depend on the inputs, so it is
collapsed into a single ``2^n x 2^n`` unitary per block; only the encodings
are applied per sample.  :func:`CircuitSpec`-based execution through
:mod:`qmbrl.qsim` (see :meth:`VqcTemplate.circuit_spec`) is the gate-by-gate
reference path for the same circuit.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import qsim
from .exceptions import ConfigurationError

SHIFT = np.pi / 2
ENTANGLERS = ("ring", "none")
GRADIENT_METHODS = ("parameter-shift", "parameter-shift-naive", "adjoint")


@dataclass(frozen=True)
class VqcTemplate:
    num_qubits: int = 5
    num_inputs: int = 5
    reuploads: int = 3
    layers_per_upload: int = 5
    num_outputs: int = 4
    encoding_scale: float = 1.0
    entangler: str = "ring"

    def __post_init__(self):
        if not 1 <= self.num_qubits <= qsim.MAX_QUBITS:
            raise ConfigurationError(f"num_qubits must be in [1, {qsim.MAX_QUBITS}]")
        if not 1 <= self.num_inputs <= self.num_qubits:
            raise ConfigurationError(
                f"num_inputs={self.num_inputs} must be between 1 and num_qubits={self.num_qubits}"
            )
        if not 1 <= self.num_outputs <= self.num_qubits:
            raise ConfigurationError("num_outputs must be between 1 and num_qubits")
        if self.reuploads < 0 or self.layers_per_upload < 1:
            raise ConfigurationError("reuploads must be >= 0 and layers_per_upload >= 1")
        if self.entangler not in ENTANGLERS:
            raise ConfigurationError(f"entangler must be one of {ENTANGLERS}")

    @property
    def num_uploads(self) -> int:
        return self.reuploads + 1

    @property
    def param_shape(self) -> tuple[int, int, int, int]:
        return (self.num_uploads, self.layers_per_upload, self.num_qubits, 3)

    @property
    def num_params(self) -> int:
        return int(np.prod(self.param_shape))

    @property
    def readout(self) -> tuple[int, ...]:
        return tuple(range(self.num_outputs))

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    def circuit_spec(self) -> qsim.CircuitSpec:
        """Gate-level description of the same circuit for :func:`qsim.run_circuit`."""
        ins = []
        k = 0
        for _ in range(self.num_uploads):
            for i in range(self.num_inputs):
                ins.append(qsim.Instruction("RY", i, None, (qsim.Angle("input", i, self.encoding_scale),)))
            for _ in range(self.layers_per_upload):
                for q in range(self.num_qubits):
                    angles = tuple(qsim.Angle("param", k + j) for j in range(3))
                    ins.append(qsim.Instruction("Rot", q, None, angles))
                    k += 3
                for c, t in entangler_pairs(self.num_qubits, self.entangler):
                    ins.append(qsim.Instruction("CNOT", t, c))
        return qsim.CircuitSpec(
            self.num_qubits, tuple(ins), self.num_inputs, self.num_params, self.readout
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VqcTemplate":
        return cls(**d)


def build_model_template(
    num_qubits=5, reuploads=3, layers_per_upload=5, num_inputs=5, num_outputs=4, **kw
) -> VqcTemplate:
    """Surrogate dynamics circuit: (4 state dims + action) -> 4 state deltas."""
    return VqcTemplate(num_qubits, num_inputs, reuploads, layers_per_upload, num_outputs, **kw)


def build_policy_template(
    num_qubits=5, reuploads=3, layers_per_upload=3, num_inputs=4, num_outputs=1, **kw
) -> VqcTemplate:
    """Policy circuit: 4 state dims -> one <Z> readout (180 parameters by default)."""
    return VqcTemplate(num_qubits, num_inputs, reuploads, layers_per_upload, num_outputs, **kw)


def entangler_pairs(num_qubits: int, kind: str = "ring") -> list[tuple[int, int]]:
    """(control, target) pairs of one entangling layer, in application order.

    The ring closes with ``CNOT(n-1, 0)`` only for three or more qubits; with two
    qubits a single ``CNOT(0, 1)`` is used.
    """
    if kind == "none" or num_qubits < 2:
        return []
    pairs = [(i, i + 1) for i in range(num_qubits - 1)]
    if num_qubits > 2:
        pairs.append((num_qubits - 1, 0))
    return pairs


@lru_cache(maxsize=None)
def _entangler_perm(num_qubits: int, kind: str) -> np.ndarray:
    # P|i> = |perm[i]>
    n = num_qubits
    idx = np.arange(2**n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))) & 1
    for c, t in entangler_pairs(n, kind):
        bits[:, t] ^= bits[:, c]
    perm = bits @ (1 << (n - 1 - np.arange(n)))
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=None)
def _z_signs(num_qubits: int) -> np.ndarray:
    n = num_qubits
    idx = np.arange(2**n)
    bits = (idx[None, :] >> (n - 1 - np.arange(n))[:, None]) & 1
    signs = (1 - 2 * bits).astype(float)
    signs.setflags(write=False)
    return signs


def check_params(template: VqcTemplate, params) -> np.ndarray:
    p = np.asarray(params, dtype=float).reshape(-1)
    if p.size != template.num_params:
        raise ConfigurationError(f"expected {template.num_params} parameters, got {p.size}")
    return p


def _check_inputs(template: VqcTemplate, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != template.num_inputs:
        raise ConfigurationError(
            f"expected inputs of shape (n, {template.num_inputs}), got {np.shape(inputs)}"
        )
    return x


def rot_matrices(phi, theta, omega) -> np.ndarray:
    """Vectorised ``RZ(phi) RY(theta) RZ(omega)``; returns shape ``(..., 2, 2)``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    ps, ms = (phi + omega) / 2, (phi - omega) / 2
    out = np.empty(np.shape(c) + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(-1j * ps) * c
    out[..., 0, 1] = -np.exp(-1j * ms) * s
    out[..., 1, 0] = np.exp(1j * ms) * s
    out[..., 1, 1] = np.exp(1j * ps) * c
    return out


def kron_layer(mats: np.ndarray) -> np.ndarray:
    """Kronecker product over axis -3 of ``(..., n, 2, 2)``: qubit 0 is the slowest index."""
    out = mats[..., 0, :, :]
    for q in range(1, mats.shape[-3]):
        m = mats[..., q, :, :]
        d = out.shape[-1]
        out = (out[..., :, None, :, None] * m[..., None, :, None, :]).reshape(
            out.shape[:-2] + (2 * d, 2 * d)
        )
    return out


def _permute_rows(mat: np.ndarray, perm: np.ndarray) -> np.ndarray:
    out = np.empty_like(mat)
    out[..., perm, :] = mat
    return out


def layer_unitaries(template: VqcTemplate, params) -> np.ndarray:
    """Unitaries of every variational layer, shape ``(..., uploads, layers, D, D)``.

    ``params`` may carry leading batch axes: ``(..., num_params)``.
    """
    p = np.asarray(params, dtype=float)
    p = p.reshape(p.shape[:-1] + template.param_shape)
    rots = rot_matrices(p[..., 0], p[..., 1], p[..., 2])
    return _permute_rows(kron_layer(rots), _entangler_perm(template.num_qubits, template.entangler))


def block_unitaries(template: VqcTemplate, params) -> np.ndarray:
    """Variational unitary of every upload block, shape ``(..., uploads, D, D)``."""
    layers = layer_unitaries(template, params)
    out = layers[..., 0, :, :]
    for l in range(1, template.layers_per_upload):
        out = layers[..., l, :, :] @ out
    return out


def encoding_angles(template: VqcTemplate, inputs) -> np.ndarray:
    """Clamp scaled inputs to [-1, 1] and convert to RY angles."""
    return np.clip(inputs, -1.0, 1.0) * template.encoding_scale


def encoding_matrices(angles: np.ndarray, num_qubits: int) -> np.ndarray:
    """Per-sample ``RY(a_0) x RY(a_1) x ...`` (identity on qubits without an input).

    ``angles`` is ``(..., n_inputs)``; the result is complex ``(..., D, D)``.
    """
    half = angles / 2
    c, s = np.cos(half), np.sin(half)
    mats = np.zeros(angles.shape[:-1] + (num_qubits, 2, 2))
    k = angles.shape[-1]
    mats[..., :k, 0, 0] = c
    mats[..., :k, 0, 1] = -s
    mats[..., :k, 1, 0] = s
    mats[..., :k, 1, 1] = c
    mats[..., k:, 0, 0] = 1.0
    mats[..., k:, 1, 1] = 1.0
    return kron_layer(mats).astype(complex)


def _matvec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return (mat @ vec[..., None])[..., 0]


def _final_states(template: VqcTemplate, blocks: np.ndarray, angles: np.ndarray) -> np.ndarray:
    enc = encoding_matrices(angles, template.num_qubits)
    state = enc[..., :, 0]  # encoding applied to |0...0>
    for b in range(template.num_uploads):
        if b:
            state = _matvec(enc, state)
        state = state @ np.swapaxes(blocks[..., b, :, :], -1, -2)
    return state


def readout(template: VqcTemplate, states: np.ndarray) -> np.ndarray:
    probs = states.real**2 + states.imag**2
    z = probs @ _z_signs(template.num_qubits)[list(template.readout)].T
    return np.clip(z, -1.0, 1.0)


EVAL_CHUNK = 2048


def evaluate(template: VqcTemplate, inputs, params, *, blocks: np.ndarray | None = None) -> np.ndarray:
    """Readouts for a batch of inputs, shape ``(n_samples, num_outputs)``.

    Inputs outside [-1, 1] are clamped.  Pass precomputed ``blocks`` (from
    :func:`block_unitaries`) to skip rebuilding the unitaries on repeated calls.
    """
    x = _check_inputs(template, inputs)
    if blocks is None:
        blocks = block_unitaries(template, check_params(template, params))
    angles = encoding_angles(template, x)
    out = [
        readout(template, _final_states(template, blocks, angles[i : i + EVAL_CHUNK]))
        for i in range(0, x.shape[0], EVAL_CHUNK)
    ]
    return np.concatenate(out, axis=0)


def evaluate_stacked(template: VqcTemplate, inputs: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """Like :func:`evaluate` for inputs ``(..., B, num_inputs)`` and blocks with
    matching leading axes ``(..., uploads, D, D)``; no validation or chunking."""
    return readout(template, _final_states(template, blocks, encoding_angles(template, inputs)))


def _shifted_layer_kron(rots: np.ndarray) -> np.ndarray:
    """For one layer's ``(n, 3)`` angles, the 2*3n kron unitaries with a single
    angle shifted by +pi/2 (even rows) or -pi/2 (odd rows), ordered (qubit, angle, sign)."""
    n = rots.shape[0]
    shifted = np.broadcast_to(rots, (n, 3, 2, n, 3)).copy()
    for q in range(n):
        for j in range(3):
            shifted[q, j, 0, q, j] += SHIFT
            shifted[q, j, 1, q, j] -= SHIFT
    mats = rot_matrices(shifted[..., 0], shifted[..., 1], shifted[..., 2])
    return kron_layer(mats.reshape(6 * n, n, 2, 2))


def gradient(template: VqcTemplate, inputs, params, loss_weights, method: str = "parameter-shift") -> np.ndarray:
    """Parameter-shift gradient of ``sum_{s,o} w[s,o] * f_o(x_s; params)``.

    Every variational angle is a Pauli rotation, so
    ``df/dp_k = [f(p + pi/2 e_k) - f(p - pi/2 e_k)] / 2`` exactly.  With
    ``loss_weights = dL/df`` the result is ``dL/dparams`` by the chain rule.

    Methods (all return the same numbers up to rounding):

    ``"parameter-shift"``
        Evaluates both shifted expectation values of every parameter by
        contracting the state in front of the shifted layer with the
        observable propagated back from the readout.
    ``"parameter-shift-naive"``
        Re-simulates the full circuit for each of the ``2 P`` shifts.
    ``"adjoint"``
        Uses the closed form of the shift difference for a Pauli generator
        ``G``: ``f(+pi/2) - f(-pi/2) = 2 Im <lambda|G|xi>``, where ``xi`` is the
        state at the gate and ``lambda`` the back-propagated bra.  Costs one
        backward sweep over state vectors, so training uses it by default.
    """
    if method not in GRADIENT_METHODS:
        raise ConfigurationError(f"method must be one of {GRADIENT_METHODS}")
    x = _check_inputs(template, inputs)
    p = check_params(template, params)
    w = np.asarray(loss_weights, dtype=float).reshape(x.shape[0], template.num_outputs)
    if method == "parameter-shift-naive":
        return _gradient_naive(template, x, p, w)
    if method == "adjoint":
        return _gradient_adjoint(template, x, p, w)
    return _gradient_shift(template, x, p, w)


def _gradient_naive(template, x, p, w, chunk=64):
    grad = np.empty(p.size)
    for start in range(0, p.size, chunk):
        k = np.arange(start, min(start + chunk, p.size))
        shifted = np.repeat(p[None, :], 2 * k.size, axis=0)
        rows = np.arange(k.size)
        shifted[2 * rows, k] += SHIFT
        shifted[2 * rows + 1, k] -= SHIFT
        f = evaluate_stacked(template, x[None], block_unitaries(template, shifted))
        val = np.einsum("kbo,bo->k", f, w)
        grad[k] = (val[0::2] - val[1::2]) / 2
    return grad


def _forward_layer_states(template, enc, layers, batch):
    """States in front of every variational layer, ``(U, L, B, D)``, and the output state."""
    chis = np.empty((template.num_uploads, template.layers_per_upload, batch, template.dim), dtype=complex)
    state = enc[:, :, 0]
    for b in range(template.num_uploads):
        if b:
            state = _matvec(enc, state)
        for l in range(template.layers_per_upload):
            chis[b, l] = state
            state = state @ layers[b, l].T
    return chis, state


def _gradient_shift(template, x, p, w):
    n, d = template.num_qubits, template.dim
    enc = encoding_matrices(encoding_angles(template, x), n)
    layers = layer_unitaries(template, p)  # (U, L, D, D)
    perm = _entangler_perm(n, template.entangler)
    pr = p.reshape(template.param_shape)
    chis, _ = _forward_layer_states(template, enc, layers, x.shape[0])

    # weighted observable sum_o w_o Z_o, diagonal per sample
    diag = w @ _z_signs(n)[list(template.readout)]
    obs = np.zeros((x.shape[0], d, d), dtype=complex)
    obs[:, np.arange(d), np.arange(d)] = diag

    grad = np.empty(template.param_shape)
    for b in reversed(range(template.num_uploads)):
        for l in reversed(range(template.layers_per_upload)):
            obs = obs[:, perm][:, :, perm]
            kshift = _shifted_layer_kron(pr[b, l])  # (6n, D, D)
            phi = np.transpose(kshift @ chis[b, l].T, (2, 1, 0))  # (B, D, 6n)
            vals = np.real(np.sum(phi.conj() * (obs @ phi), axis=(0, 1)))
            grad[b, l] = ((vals[0::2] - vals[1::2]) / 2).reshape(n, 3)
            rot = kron_layer(rot_matrices(pr[b, l, :, 0], pr[b, l, :, 1], pr[b, l, :, 2]))
            obs = rot.conj().T @ obs @ rot
        if b:
            obs = np.swapaxes(enc, 1, 2) @ obs @ enc
    return grad.reshape(-1)


def _gradient_adjoint(template, x, p, w):
    n, d = template.num_qubits, template.dim
    enc = encoding_matrices(encoding_angles(template, x), n)
    layers = layer_unitaries(template, p)
    perm = _entangler_perm(n, template.entangler)
    pr = p.reshape(template.param_shape)
    signs = _z_signs(n)  # (n, D)
    flip = np.arange(d)[None, :] ^ (1 << (n - 1 - np.arange(n)))[:, None]  # (n, D)
    chis, psi = _forward_layer_states(template, enc, layers, x.shape[0])

    lam = psi * (w @ signs[list(template.readout)])
    grad = np.empty(template.param_shape)
    for b in reversed(range(template.num_uploads)):
        for l in reversed(range(template.layers_per_upload)):
            lam = lam[:, perm]  # bra just after the Rot layer
            phi, theta, omega = pr[b, l, :, 0], pr[b, l, :, 1], pr[b, l, :, 2]
            # Rot = A B with A = RZ(phi), B = RY(theta) RZ(omega)
            a_diag = kron_layer(rot_matrices(phi, np.zeros(n), np.zeros(n)))
            a_phase = np.diagonal(a_diag).copy()
            b_mat = kron_layer(rot_matrices(np.zeros(n), theta, omega))
            chi = chis[b, l]
            xi = chi @ b_mat.T
            out = xi * a_phase
            nu = lam * a_phase.conj()  # A^dagger lambda
            mu = lam @ (a_diag @ b_mat).conj()  # K^dagger lambda
            # z_phi = <lam|Z_q out>, z_omega = <mu|Z_q chi>, z_theta = <A^dag lam|Y_q xi>
            z_phi = (lam.conj() * out) @ signs.T
            z_omega = (mu.conj() * chi) @ signs.T
            y_xi = -1j * signs[None, :, :] * xi[:, flip]  # (B, n, D)
            z_theta = np.einsum("bd,bqd->bq", nu.conj(), y_xi)
            grad[b, l, :, 0] = np.imag(z_phi).sum(axis=0)
            grad[b, l, :, 1] = np.imag(z_theta).sum(axis=0)
            grad[b, l, :, 2] = np.imag(z_omega).sum(axis=0)
            lam = mu
        if b:
            lam = _matvec(np.swapaxes(enc, 1, 2), lam)
    return grad.reshape(-1)


def to_json_dict(template: VqcTemplate, params) -> dict:
    return {"template": template.to_dict(), "params": check_params(template, params).tolist()}


def from_json_dict(d: dict) -> tuple[VqcTemplate, np.ndarray]:
    template = VqcTemplate.from_dict(d["template"])
    return template, check_params(template, d["params"])
