"""Dense statevector simulator for the small gate set used by the circuits.

Qubit 0 is the most significant bit of the computational-basis index, so the
amplitude of ``|q0 q1 ... q_{n-1}>`` lives at ``int("q0q1...", 2)``.  Global
phase is not tracked.

``Rot(phi, theta, omega)`` is the matrix product ``RZ(phi) @ RY(theta) @ RZ(omega)``
(``RZ(omega)`` acts first).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import ConfigurationError

MAX_QUBITS = 12
NORM_ATOL = 1e-10

SINGLE_QUBIT_KINDS = ("H", "RX", "RY", "RZ", "Rot")
GATE_KINDS = SINGLE_QUBIT_KINDS + ("CNOT",)
_ARITY = {"H": 0, "RX": 1, "RY": 1, "RZ": 1, "Rot": 3, "CNOT": 0}

_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)


def rx_matrix(t: float) -> np.ndarray:
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry_matrix(t: float) -> np.ndarray:
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(t: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * t), 0.0], [0.0, np.exp(0.5j * t)]], dtype=complex)


def rot_matrix(phi: float, theta: float, omega: float) -> np.ndarray:
    return rz_matrix(phi) @ ry_matrix(theta) @ rz_matrix(omega)


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: int | None = None
    angles: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigurationError(f"unsupported gate kind {self.kind!r}")
        if len(self.angles) != _ARITY[self.kind]:
            raise ConfigurationError(
                f"{self.kind} takes {_ARITY[self.kind]} angle(s), got {len(self.angles)}"
            )
        if (self.kind == "CNOT") != (self.control is not None):
            raise ConfigurationError("a control qubit is required for CNOT and only for CNOT")
        if self.control is not None and self.control == self.target:
            raise ConfigurationError("control and target must differ")

    def matrix(self) -> np.ndarray:
        """2x2 unitary of a single-qubit gate (4x4 for CNOT, control first)."""
        if self.kind == "H":
            return _H.copy()
        if self.kind == "RX":
            return rx_matrix(*self.angles)
        if self.kind == "RY":
            return ry_matrix(*self.angles)
        if self.kind == "RZ":
            return rz_matrix(*self.angles)
        if self.kind == "Rot":
            return rot_matrix(*self.angles)
        m = np.eye(4, dtype=complex)
        m[2:, 2:] = [[0, 1], [1, 0]]
        return m


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise ConfigurationError(f"num_qubits must be in [1, {MAX_QUBITS}]")
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.num_qubits,):
            raise ConfigurationError(
                f"expected {2**self.num_qubits} amplitudes, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _check_qubit(qubit: int, num_qubits: int) -> None:
    if not 0 <= qubit < num_qubits:
        raise ConfigurationError(f"qubit index {qubit} out of range for {num_qubits} qubits")


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Return the state after applying ``gate``; the input is left untouched."""
    n = state.num_qubits
    _check_qubit(gate.target, n)
    psi = state.amplitudes.reshape((2,) * n)
    if gate.kind == "CNOT":
        _check_qubit(gate.control, n)
        out = psi.copy()
        sel = [slice(None)] * n
        sel[gate.control] = 1
        # after fixing the control axis, the target axis shifts left if it came later
        t_axis = gate.target - (gate.target > gate.control)
        out[tuple(sel)] = np.flip(psi[tuple(sel)], axis=t_axis)
    else:
        out = np.moveaxis(np.tensordot(gate.matrix(), psi, axes=([1], [gate.target])), 0, gate.target)
    return StateVector(n, out.reshape(-1))


def expectation_z(state: StateVector, qubit: int) -> float:
    """Exact <Z> on ``qubit``: +1 weight for bit 0, -1 for bit 1."""
    n = state.num_qubits
    _check_qubit(qubit, n)
    probs = np.abs(state.amplitudes.reshape((2,) * n)) ** 2
    marg = probs.sum(axis=tuple(a for a in range(n) if a != qubit))
    return float(np.clip(marg[0] - marg[1], -1.0, 1.0))


class Angle(NamedTuple):
    """Reference to a gate angle: ``scale * inputs[index]``, ``scale * params[index]``
    or the constant ``scale`` (``source="const"``)."""

    source: str
    index: int = 0
    scale: float = 1.0


class Instruction(NamedTuple):
    kind: str
    target: int
    control: int | None = None
    angles: tuple[Angle, ...] = ()


@dataclass(frozen=True)
class CircuitSpec:
    """Declarative gate list whose angles are bound at run time."""

    num_qubits: int
    instructions: tuple[Instruction, ...]
    num_inputs: int = 0
    num_params: int = 0
    readout: tuple[int, ...] = ()

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise ConfigurationError(f"num_qubits must be in [1, {MAX_QUBITS}]")
        for q in self.readout:
            _check_qubit(q, self.num_qubits)
        for ins in self.instructions:
            _check_qubit(ins.target, self.num_qubits)
            if ins.control is not None:
                _check_qubit(ins.control, self.num_qubits)
            for a in ins.angles:
                if a.source == "input" and not 0 <= a.index < self.num_inputs:
                    raise ConfigurationError(f"input reference {a.index} out of range")
                if a.source == "param" and not 0 <= a.index < self.num_params:
                    raise ConfigurationError(f"parameter reference {a.index} out of range")
                if a.source not in ("input", "param", "const"):
                    raise ConfigurationError(f"unknown angle source {a.source!r}")

    def bind(self, inputs: Sequence[float], params: Sequence[float]) -> list[Gate]:
        inputs = np.asarray(inputs, dtype=float).reshape(-1)
        params = np.asarray(params, dtype=float).reshape(-1)
        if inputs.size != self.num_inputs or params.size != self.num_params:
            raise ConfigurationError(
                f"circuit expects {self.num_inputs} inputs and {self.num_params} params, "
                f"got {inputs.size} and {params.size}"
            )

        def value(a: Angle) -> float:
            if a.source == "const":
                return float(a.scale)
            src = inputs if a.source == "input" else params
            return float(a.scale * src[a.index])

        return [
            Gate(ins.kind, ins.target, ins.control, tuple(value(a) for a in ins.angles))
            for ins in self.instructions
        ]


def simulate(num_qubits: int, gates: Sequence[Gate]) -> StateVector:
    state = StateVector.zero(num_qubits)
    for g in gates:
        state = apply_gate(state, g)
    return state


def run_circuit(spec: CircuitSpec, inputs: Sequence[float], params: Sequence[float]) -> np.ndarray:
    """Run ``spec`` from |0...0> and return <Z> on each readout qubit."""
    state = simulate(spec.num_qubits, spec.bind(inputs, params))
    return np.array([expectation_z(state, q) for q in spec.readout])
