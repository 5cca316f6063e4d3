import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from qmbrl import qsim
from qmbrl.exceptions import ConfigurationError

angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


@st.composite
def circuits(draw, max_qubits=3, max_gates=30):
    n = draw(st.integers(1, max_qubits))
    gates = []
    for _ in range(draw(st.integers(0, max_gates))):
        kinds = ["H", "RX", "RY", "RZ", "Rot"] + (["CNOT"] if n > 1 else [])
        kind = draw(st.sampled_from(kinds))
        target = draw(st.integers(0, n - 1))
        control = None
        if kind == "CNOT":
            control = draw(st.sampled_from([q for q in range(n) if q != target]))
        arity = {"H": 0, "RX": 1, "RY": 1, "RZ": 1, "Rot": 3, "CNOT": 0}[kind]
        gates.append((kind, target, control, tuple(draw(angles) for _ in range(arity))))
    return n, gates


def test_rot_is_zyz():
    phi, theta, omega = 0.3, -1.2, 2.0
    np.testing.assert_allclose(qsim.rot_matrix(phi, theta, omega), oracles.rot(phi, theta, omega), atol=1e-15)


def test_ry_pi_flips_zero():
    s = qsim.apply_gate(qsim.StateVector.zero(1), qsim.Gate("RY", 0, angles=(math.pi,)))
    np.testing.assert_allclose(np.abs(s.amplitudes), [0.0, 1.0], atol=1e-15)
    assert qsim.expectation_z(s, 0) == pytest.approx(-1.0)


def test_ry_zero_is_identity(rng):
    amps = rng.normal(size=4) + 1j * rng.normal(size=4)
    s = qsim.StateVector(2, amps / np.linalg.norm(amps))
    out = qsim.apply_gate(s, qsim.Gate("RY", 1, angles=(0.0,)))
    np.testing.assert_array_equal(out.amplitudes, s.amplitudes)


def test_cnot_makes_bell_state():
    s = qsim.StateVector(2, np.array([1, 0, 1, 0]) / math.sqrt(2))
    out = qsim.apply_gate(s, qsim.Gate("CNOT", 1, control=0))
    np.testing.assert_allclose(out.amplitudes, np.array([1, 0, 0, 1]) / math.sqrt(2), atol=1e-15)


def test_cnot_reversed_direction():
    # |01> with control 1, target 0 -> |11>
    s = qsim.StateVector(2, [0, 1, 0, 0])
    out = qsim.apply_gate(s, qsim.Gate("CNOT", 0, control=1))
    np.testing.assert_array_equal(out.amplitudes, [0, 0, 0, 1])


def test_expectation_basics():
    assert qsim.expectation_z(qsim.StateVector.zero(1), 0) == 1.0
    s = qsim.apply_gate(qsim.StateVector.zero(1), qsim.Gate("RY", 0, angles=(math.pi / 2,)))
    assert abs(qsim.expectation_z(s, 0)) < 1e-10


@pytest.mark.parametrize("theta", [0.3, 1.1, 2.9])
def test_expectation_after_ry_is_cos(theta):
    s = qsim.apply_gate(qsim.StateVector.zero(1), qsim.Gate("RY", 0, angles=(theta,)))
    psi = oracles.ry(theta) @ np.array([1, 0], dtype=complex)
    assert qsim.expectation_z(s, 0) == pytest.approx(math.cos(theta), abs=1e-12)
    assert qsim.expectation_z(s, 0) == pytest.approx(oracles.z_expectation(1, psi, 0), abs=1e-12)


def test_hadamard_only_circuit_reads_zero():
    ins = tuple(qsim.Instruction("H", q) for q in range(3))
    spec = qsim.CircuitSpec(3, ins, readout=(0, 1, 2))
    np.testing.assert_allclose(qsim.run_circuit(spec, [], []), 0.0, atol=1e-15)


def test_run_circuit_arity_errors():
    spec = qsim.CircuitSpec(1, (qsim.Instruction("RY", 0, None, (qsim.Angle("param", 0),)),), 0, 1, (0,))
    with pytest.raises(ConfigurationError):
        qsim.run_circuit(spec, [], [0.1, 0.2])
    with pytest.raises(ConfigurationError):
        qsim.run_circuit(spec, [1.0], [0.1])


def test_bad_indices_raise():
    s = qsim.StateVector.zero(2)
    with pytest.raises(ConfigurationError):
        qsim.apply_gate(s, qsim.Gate("H", 2))
    with pytest.raises(ConfigurationError):
        qsim.apply_gate(s, qsim.Gate("CNOT", 0, control=5))
    with pytest.raises(ConfigurationError):
        qsim.expectation_z(s, -1)
    with pytest.raises(ConfigurationError):
        qsim.Gate("CNOT", 1, control=1)
    with pytest.raises(ConfigurationError):
        qsim.Gate("Rot", 0, angles=(0.1,))
    with pytest.raises(ConfigurationError):
        qsim.StateVector(2, [1, 0, 0])


def test_state_is_immutable():
    s = qsim.StateVector.zero(1)
    with pytest.raises(ValueError):
        s.amplitudes[0] = 0


@given(circuits())
def test_matches_matrix_oracle(circ):
    n, gates = circ
    got = qsim.simulate(n, [qsim.Gate(k, t, c, a) for k, t, c, a in gates]).amplitudes
    np.testing.assert_allclose(got, oracles.circuit_state(n, gates), atol=1e-9, rtol=0)


@given(circuits(max_qubits=4, max_gates=60))
def test_norm_and_readout_bounds(circ):
    n, gates = circ
    s = qsim.simulate(n, [qsim.Gate(k, t, c, a) for k, t, c, a in gates])
    assert abs(s.norm - 1.0) < 1e-10
    for q in range(n):
        assert -1.0 <= qsim.expectation_z(s, q) <= 1.0


@given(circuits())
def test_deterministic(circ):
    n, gates = circ
    g = [qsim.Gate(k, t, c, a) for k, t, c, a in gates]
    np.testing.assert_array_equal(qsim.simulate(n, g).amplitudes, qsim.simulate(n, g).amplitudes)
