"""Slow, independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import expm

from offloadlab.env import SystemParams, local_rate, offload_rate, sample_channels

PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_rotation(n: int, qubit: int, axis: str, angle: float) -> np.ndarray:
    """Full unitary of exp(-i angle sigma / 2) on ``qubit`` (qubit 0 = least significant bit)."""
    u = expm(-0.5j * angle * PAULI[axis])
    out = np.array([[1.0 + 0j]])
    for q in reversed(range(n)):
        out = np.kron(out, u if q == qubit else np.eye(2))
    return out


def dense_cnot(n: int, control: int, target: int) -> np.ndarray:
    dim = 2 ** n
    out = np.zeros((dim, dim))
    for i in range(dim):
        j = i ^ (1 << target) if (i >> control) & 1 else i
        out[j, i] = 1.0
    return out


def dense_circuit(x, theta, var_axis="Y", enc_axes=("X", "Y")) -> np.ndarray:
    n = len(x)
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = 1.0
    for i in range(n):
        psi = dense_rotation(n, i, enc_axes[0], np.pi * x[i]) @ psi
        psi = dense_rotation(n, i, enc_axes[1], np.pi / 2 * x[i]) @ psi
    for i in range(n - 1):
        psi = dense_cnot(n, i, i + 1) @ psi
    for i in range(n):
        psi = dense_rotation(n, i, var_axis, theta[i]) @ psi
    return psi


def pauli_z_expectation(psi, qubit: int) -> float:
    n = int(np.log2(psi.size))
    zq = np.array([[1.0]])
    for q in reversed(range(n)):
        zq = np.kron(zq, PAULI["Z"] if q == qubit else np.eye(2))
    return float(np.real(np.conj(psi) @ zq @ psi))


def _simplex(k: int, step: float, center=None, radius=None):
    """Points ``f`` with ``sum f = 1`` on a grid of pitch ``step`` (optionally near ``center``)."""
    m = int(round(1 / step))
    if k == 1:
        return np.ones((1, 1))
    axes = []
    for i in range(k - 1):
        if center is None:
            axes.append(np.arange(m + 1))
        else:
            c = int(round(center[i] / step))
            r = int(round(radius / step))
            axes.append(np.arange(max(0, c - r), min(m, c + r) + 1))
    pts = np.array(list(itertools.product(*axes)), dtype=float)
    pts = pts[pts.sum(axis=1) <= m]
    last = m - pts.sum(axis=1, keepdims=True)
    return np.hstack([pts, last]) * step


def _grid_values(g, x, params: SystemParams, a_vals, fracs):
    """Objective on the product of ``a_vals`` and upload-share fractions ``fracs`` (full budget used)."""
    w = params.weight_array
    loc = x == 0
    local = np.array([np.sum(w[loc] * local_rate(g[loc], a, params, params.k_array[loc])) for a in a_vals])
    off = np.flatnonzero(x == 1)
    if off.size == 0:
        return local[:, None] + np.zeros((1, len(fracs)))
    out = np.zeros((len(a_vals), len(fracs)))
    for i, a in enumerate(a_vals):
        tau = fracs * (1.0 - a)
        r = offload_rate(g[off][None, :], np.full(tau.shape, a), tau, params)
        out[i] = local[i] + (w[off][None, :] * r).sum(axis=1)
    return out


def grid_search_p2(g, x, params: SystemParams, step: float = 1e-3) -> float:
    """Dense grid maximum over ``(a, tau)`` at pitch ``step``.

    Upload time is always spent in full (the upload rate increases with
    ``tau``), so the search runs over ``a`` and the split of ``1 - a``.
    A pitch-10 pass locates the peak, then the ``step`` pass searches a window
    around it.
    """
    g = np.asarray(g, dtype=float)
    x = np.asarray(x)
    k = int(x.sum())
    coarse = 10 * step
    a_c = np.arange(0.0, 1.0 + 1e-12, coarse)
    f_c = _simplex(max(k, 1), coarse)
    vals = _grid_values(g, x, params, a_c, f_c)
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    best = vals[i, j]
    radius = 3 * coarse
    a_f = np.arange(max(0.0, a_c[i] - radius), min(1.0, a_c[i] + radius) + 1e-12, step)
    f_f = _simplex(max(k, 1), step, center=f_c[j], radius=radius)
    return float(max(best, _grid_values(g, x, params, a_f, f_f).max()))


def numeric_grad(f, arr: np.ndarray, idx, h: float = 1e-4) -> float:
    """Fourth-order central difference (truncation O(h^4), round-off ~eps/h)."""
    old = arr[idx]
    vals = []
    for k in (2, 1, -1, -2):
        arr[idx] = old + k * h
        vals.append(f())
    arr[idx] = old
    f2, f1, m1, m2 = vals
    return (-f2 + 8 * f1 - 8 * m1 + m2) / (12 * h)


def random_channel(n: int, seed: int):
    p = SystemParams(n_devices=n)
    return p, sample_channels(np.random.default_rng(seed), p)


def rel_err(a, b, floor: float = 1e-6) -> float:
    """Symmetric relative error; ``floor`` keeps entries near zero from dividing by round-off."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def fd_check(loss_fn, analytic: dict, arrays: dict, rng, n_checks: int = 12, h: float = 1e-4,
             floor: float = 1e-6) -> float:
    """Worst relative error between ``analytic[name]`` and central differences of ``loss_fn``.

    ``arrays[name]`` is perturbed in place at ``n_checks`` random entries.
    """
    worst = 0.0
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        picks = rng.choice(flat.size, size=min(n_checks, flat.size), replace=False)
        for i in picks:
            idx = np.unravel_index(i, arr.shape)
            num = numeric_grad(loss_fn, arr, idx, h)
            worst = max(worst, rel_err(analytic[name][idx], num, floor))
    return worst
