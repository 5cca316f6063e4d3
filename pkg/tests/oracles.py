"""Reference implementations written independently of the package under test.

Everything here is deliberately naive: full 2^n x 2^n matrices built with
``np.kron``, scalar ``math`` physics, and if/else rewards.
"""
import math

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)


def ry(t):
    return np.array([[math.cos(t / 2), -math.sin(t / 2)], [math.sin(t / 2), math.cos(t / 2)]], dtype=complex)


def rx(t):
    c, s = math.cos(t / 2), math.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def hadamard():
    return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def rot(phi, theta, omega):
    return rz(phi) @ ry(theta) @ rz(omega)


def single(n, target, u):
    """Full matrix of a one-qubit gate; qubit 0 is the leftmost kron factor."""
    out = np.array([[1.0 + 0j]])
    for q in range(n):
        out = np.kron(out, u if q == target else I2)
    return out


def cnot(n, control, target):
    a = np.array([[1.0 + 0j]])
    b = np.array([[1.0 + 0j]])
    for q in range(n):
        a = np.kron(a, P0 if q == control else I2)
        b = np.kron(b, P1 if q == control else (X if q == target else I2))
    return a + b


def gate_matrix(n, kind, target, control=None, angles=()):
    if kind == "CNOT":
        return cnot(n, control, target)
    u = {"H": lambda: hadamard(), "RX": lambda: rx(*angles), "RY": lambda: ry(*angles),
         "RZ": lambda: rz(*angles), "Rot": lambda: rot(*angles)}[kind]()
    return single(n, target, u)


def circuit_state(n, gates):
    """``gates`` are (kind, target, control, angles) tuples applied left to right."""
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    u = np.eye(2**n, dtype=complex)
    for kind, target, control, angles in gates:
        u = gate_matrix(n, kind, target, control, angles) @ u
    return u @ psi


def z_expectation(n, psi, qubit):
    return float(np.real(psi.conj() @ single(n, qubit, np.diag([1.0, -1.0]).astype(complex)) @ psi))


def reuploading_circuit(n, n_inputs, uploads, layers, inputs, params, scale, ring=True):
    """Gate list of the re-uploading template from a flat parameter vector."""
    p = np.asarray(params).reshape(uploads, layers, n, 3)
    gates = []
    for b in range(uploads):
        for i in range(n_inputs):
            gates.append(("RY", i, None, (scale * max(-1.0, min(1.0, inputs[i])),)))
        for layer in range(layers):
            for q in range(n):
                gates.append(("Rot", q, None, tuple(p[b, layer, q])))
            if ring and n == 2:
                gates.append(("CNOT", 1, 0, ()))
            elif ring and n > 2:
                for q in range(n):
                    gates.append(("CNOT", (q + 1) % n, q, ()))
    return gates


# cart-pole with the classic benchmark constants, written out step by step
GRAVITY, M_CART, M_POLE, HALF_LEN, FORCE, TAU = 9.8, 1.0, 0.1, 0.5, 10.0, 0.02


def cartpole_step(state, action):
    x, x_dot, theta, theta_dot = state
    force = FORCE if action == 1 else -FORCE
    total_mass = M_CART + M_POLE
    pml = M_POLE * HALF_LEN
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    temp = (force + pml * theta_dot**2 * sin_t) / total_mass
    theta_acc = (GRAVITY * sin_t - cos_t * temp) / (HALF_LEN * (4.0 / 3.0 - M_POLE * cos_t**2 / total_mass))
    x_acc = temp - pml * theta_acc * cos_t / total_mass
    return (x + TAU * x_dot, x_dot + TAU * x_acc, theta + TAU * theta_dot, theta_dot + TAU * theta_acc)


def cartpole_reward(x, theta):
    if abs(x) > 2.4 or abs(theta) > 0.2095:
        return 0.0
    if abs(x) < 0.5 and abs(theta) < 0.05:
        return 1.0
    return 0.5


def episode_length(policy_fn, s0, max_steps=500):
    """Steps until |x| > 2.4 or |theta| > 0.2095 (inclusive of the failing step), capped."""
    s = tuple(s0)
    for t in range(1, max_steps + 1):
        s = cartpole_step(s, policy_fn(s))
        if abs(s[0]) > 2.4 or abs(s[2]) > 0.2095:
            return t
    return max_steps
