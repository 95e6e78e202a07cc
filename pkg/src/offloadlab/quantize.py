"""Relaxed decision vector -> K binary candidate decisions.

Two generators:

* ``op`` - order-preserving thresholds at the entries closest to 0.5;
* ``ugq`` - uncertainty-guided: pivots near 0.5 pulled towards 0.5, a
  uniform threshold perturbation, and a single-bit flip on duplicates.

Thresholds use strict ``>``, so an entry equal to the threshold maps to 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_SHRINK = 0.7
DEFAULT_SIGMA = 0.1


@dataclass
class CandidateSet:
    actions: list[np.ndarray]
    generator: str
    noise_sigma: float = 0.0

    def __len__(self):
        return len(self.actions)

    def as_array(self) -> np.ndarray:
        return np.array(self.actions, dtype=np.int8)


def _threshold(m: np.ndarray, t: float) -> np.ndarray:
    return (m > t).astype(np.int8)


def op_quantize(m, K: int) -> CandidateSet:
    m = np.asarray(m, dtype=float)
    n = m.size
    if not 1 <= K <= n + 1:
        raise ValueError(f"K must lie in [1, {n + 1}] for order-preserving quantization")
    actions = [_threshold(m, 0.5)]
    order = np.argsort(np.abs(m - 0.5), kind="stable")
    for k in range(K - 1):
        p = m[order[k]]
        if p <= 0.5:
            actions.append((m >= p).astype(np.int8))
        else:
            actions.append((m > p).astype(np.int8))
    return CandidateSet(actions, "op", 0.0)


def ugq_quantize(m, K: int, sigma: float = DEFAULT_SIGMA, rng: np.random.Generator | None = None) -> CandidateSet:
    m = np.asarray(m, dtype=float)
    n = m.size
    if K < 1:
        raise ValueError("K must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = rng if rng is not None else np.random.default_rng(0)
    actions = [_threshold(m, 0.5)]
    if K == 1:
        return CandidateSet(actions, "ugq", sigma)
    idx = np.argsort(np.abs(m - 0.5), kind="stable")
    seen = {actions[0].tobytes()}
    for i in range(1, K):
        p = m[idx[i % n]]
        tau = 0.5 + (p - 0.5) * PIVOT_SHRINK + rng.uniform(-sigma, sigma)
        x = _threshold(m, tau)
        if x.tobytes() in seen:
            f = idx[(i + 1) % n]
            x[f] = 1 - x[f]
        # appended even when the single flip still collides with another member
        actions.append(x)
        seen.add(x.tobytes())
    return CandidateSet(actions, "ugq", sigma)


def quantize(m, K: int, method: str = "ugq", sigma: float = DEFAULT_SIGMA,
             rng: np.random.Generator | None = None) -> CandidateSet:
    if method == "op":
        return op_quantize(m, K)
    if method == "ugq":
        return ugq_quantize(m, K, sigma, rng)
    raise ValueError(f"unknown quantizer {method!r}")
