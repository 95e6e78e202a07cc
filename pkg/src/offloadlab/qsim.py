"""Exact statevector simulation of the encode / entangle / variational circuit.

Qubit 0 is the least significant bit of the amplitude index.  Every function
accepts either a single state of shape ``(2**n,)`` or a batch ``(B, 2**n)``;
rotation angles may be scalars or one angle per batch row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ENCODING_SCALES = (math.pi, math.pi / 2.0)
_SHIFT = math.pi / 2.0


@dataclass
class CircuitConfig:
    n_qubits: int = 8
    encoding_axes: tuple[str, str] = ("X", "Y")
    variational_axis: str = "Y"
    theta: np.ndarray | None = None

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        for ax in (*self.encoding_axes, self.variational_axis):
            if ax not in ("X", "Y", "Z"):
                raise ValueError(f"unknown rotation axis {ax!r}")
        if self.theta is None:
            self.theta = np.zeros(self.n_qubits)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.n_qubits,):
            raise ValueError("theta must have one angle per qubit")

    @property
    def encoding_scales(self) -> tuple[float, float]:
        return ENCODING_SCALES


def zero_state(n_qubits: int, batch: int | None = None) -> np.ndarray:
    dim = 2 ** n_qubits
    if batch is None:
        s = np.zeros(dim, dtype=complex)
        s[0] = 1.0
    else:
        s = np.zeros((batch, dim), dtype=complex)
        s[:, 0] = 1.0
    return s


def _n_qubits(state: np.ndarray) -> int:
    n = int(round(math.log2(state.shape[-1])))
    if 2 ** n != state.shape[-1]:
        raise ValueError("state length must be a power of two")
    return n


def rotation_matrix(axis: str, angle) -> np.ndarray:
    """``exp(-i angle sigma/2)`` as ``(..., 2, 2)`` for scalar or array angles."""
    t = np.asarray(angle, dtype=float) / 2.0
    c, s = np.cos(t), np.sin(t)
    m = np.zeros(t.shape + (2, 2), dtype=complex)
    if axis == "X":
        m[..., 0, 0] = c
        m[..., 1, 1] = c
        m[..., 0, 1] = -1j * s
        m[..., 1, 0] = -1j * s
    elif axis == "Y":
        m[..., 0, 0] = c
        m[..., 1, 1] = c
        m[..., 0, 1] = -s
        m[..., 1, 0] = s
    elif axis == "Z":
        m[..., 0, 0] = np.exp(-1j * t)
        m[..., 1, 1] = np.exp(1j * t)
    else:
        raise ValueError(f"unknown rotation axis {axis!r}")
    return m


def apply_rotation(state: np.ndarray, qubit: int, axis: str, angle) -> np.ndarray:
    n = _n_qubits(state)
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n} qubits")
    single = state.ndim == 1
    st = state[None, :] if single else state
    B = st.shape[0]
    angle = np.asarray(angle, dtype=float)
    mats = rotation_matrix(axis, angle)
    if mats.ndim == 2:
        mats = np.broadcast_to(mats, (B, 2, 2))
    v = st.reshape(B, 2 ** (n - qubit - 1), 2, 2 ** qubit)
    out = np.einsum("bij,bajc->baic", mats, v).reshape(B, -1)
    return out[0] if single else out


def apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    n = _n_qubits(state)
    single = state.ndim == 1
    st = (state[None, :] if single else state).copy()
    idx = np.arange(2 ** n)
    sel = ((idx >> control) & 1 == 1) & ((idx >> target) & 1 == 0)
    src = idx[sel]
    dst = src | (1 << target)
    st[:, src], st[:, dst] = st[:, dst].copy(), st[:, src].copy()
    return st[0] if single else st


def apply_cnot_chain(state: np.ndarray) -> np.ndarray:
    """CNOT(i, i+1) for i = 0..n-2 in order; a no-op on one qubit."""
    n = _n_qubits(state)
    for i in range(n - 1):
        state = apply_cnot(state, i, i + 1)
    return state


def z_expectations(state: np.ndarray) -> np.ndarray:
    n = _n_qubits(state)
    probs = np.abs(state) ** 2
    idx = np.arange(2 ** n)
    signs = 1.0 - 2.0 * ((idx[:, None] >> np.arange(n)[None, :]) & 1)
    return probs @ signs


def _gate_list(x: np.ndarray, config: CircuitConfig):
    """Parametrized gates in circuit order as ``(qubit, axis, angle)``; ``None`` marks the CNOT chain."""
    ax1, ax2 = config.encoding_axes
    s1, s2 = ENCODING_SCALES
    gates = []
    for i in range(config.n_qubits):
        gates.append((i, ax1, s1 * x[..., i]))
        gates.append((i, ax2, s2 * x[..., i]))
    gates.append(None)
    for i in range(config.n_qubits):
        gates.append((i, config.variational_axis, np.broadcast_to(config.theta[i], x.shape[:-1])))
    return gates


def _measured_prefix(gates) -> int:
    """Length of the gate list that affects Z-basis probabilities.

    Trailing Z rotations are diagonal and commute with every Z measurement,
    so they are dropped; their parameter-shift derivatives are exactly 0.
    """
    end = len(gates)
    while end > 0 and gates[end - 1] is not None and gates[end - 1][1] == "Z":
        end -= 1
    return end


def _run(gates, n: int, batch: int | None, shift_at: int | None = None, shift: float = 0.0,
         on_gate=None):
    state = zero_state(n, batch)
    for g, gate in enumerate(gates):
        if gate is None:
            for i in range(n - 1):
                state = apply_cnot(state, i, i + 1)
                if on_gate is not None:
                    on_gate(state)
            continue
        q, axis, angle = gate
        if g == shift_at:
            angle = angle + shift
        state = apply_rotation(state, q, axis, angle)
        if on_gate is not None:
            on_gate(state)
    return state


def encode_forward(x_reduced, config: CircuitConfig, on_gate=None) -> tuple[np.ndarray, np.ndarray]:
    """Prepare the circuit state for input ``x'`` and return it with the per-qubit Z expectations.

    ``on_gate(state)`` is called after every gate (CNOTs included).
    """
    x = np.asarray(x_reduced, dtype=float)
    if x.shape[-1] != config.n_qubits:
        raise ValueError(f"expected {config.n_qubits} reduced features, got {x.shape[-1]}")
    batch = None if x.ndim == 1 else x.shape[0]
    state = _run(_gate_list(x, config), config.n_qubits, batch, on_gate=on_gate)
    return state, z_expectations(state)


def gradients(x_reduced, config: CircuitConfig) -> tuple[np.ndarray, np.ndarray]:
    """Parameter-shift Jacobians ``dq/dtheta`` and ``dq/dx'``.

    Entry ``[..., i, j]`` is the derivative of ``q_i`` with respect to
    parameter ``j``.  Each input feature drives two encoding gates, so its
    derivative is the scale-weighted sum of both gates' shift terms.
    """
    x = np.asarray(x_reduced, dtype=float)
    n = config.n_qubits
    if x.shape[-1] != n:
        raise ValueError(f"expected {n} reduced features, got {x.shape[-1]}")
    batch = None if x.ndim == 1 else x.shape[0]
    gates = _gate_list(x, config)
    keep = _measured_prefix(gates)
    gates = gates[:keep]
    lead = x.shape[:-1]
    d_theta = np.zeros(lead + (n, n))
    d_x = np.zeros(lead + (n, n))

    def shifted(g):
        if g >= keep:
            return 0.0
        plus = z_expectations(_run(gates, n, batch, g, _SHIFT))
        minus = z_expectations(_run(gates, n, batch, g, -_SHIFT))
        return 0.5 * (plus - minus)

    s1, s2 = ENCODING_SCALES
    for j in range(n):
        d_x[..., :, j] = s1 * shifted(2 * j) + s2 * shifted(2 * j + 1)
        d_theta[..., :, j] = shifted(2 * n + 1 + j)
    return d_theta, d_x
