"""Wireless-powered MEC network: channel generation and per-device rate formulas.

All time quantities are fractions of a unit-length frame, so the energy
transfer share ``a`` and the upload shares ``tau`` satisfy ``a + sum(tau) <= 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 3.0e8


def _default_weights(n: int) -> list[float]:
    # devices are numbered from 1: odd-numbered get 1.0, even-numbered 1.5
    return [1.0 if i % 2 == 0 else 1.5 for i in range(n)]


def _default_distances(n: int) -> list[float]:
    return np.linspace(2.5, 5.2, n).tolist()


@dataclass
class SystemParams:
    n_devices: int = 10
    power_P: float = 3.0
    mu: float = 0.51
    k: list[float] | None = None
    phi: float = 100.0
    bandwidth_B: float = 2.0e6
    noise_N0: float = 1.0e-10
    vu: float = 1.1
    weights: list[float] | None = None
    distances: list[float] | None = None
    antenna_gain_Ad: float = 4.11
    carrier_freq: float = 915.0e6
    pathloss_exp: float = 2.8
    frame_T: float = 1.0

    def __post_init__(self):
        n = int(self.n_devices)
        if n < 1:
            raise ValueError("n_devices must be >= 1")
        self.n_devices = n
        if self.k is None:
            self.k = [1.0e-26] * n
        if self.weights is None:
            self.weights = _default_weights(n)
        if self.distances is None:
            self.distances = _default_distances(n)
        self.k = [float(v) for v in self.k]
        self.weights = [float(v) for v in self.weights]
        self.distances = [float(v) for v in self.distances]
        self.validate()

    def validate(self) -> None:
        n = self.n_devices
        for name in ("k", "weights", "distances"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have length n_devices={n}")
        if not 0.0 < self.mu <= 1.0:
            raise ValueError("mu must lie in (0, 1]")
        checks = {
            "power_P": self.power_P,
            "phi": self.phi,
            "bandwidth_B": self.bandwidth_B,
            "noise_N0": self.noise_N0,
            "pathloss_exp": self.pathloss_exp,
            "frame_T": self.frame_T,
        }
        for name, value in checks.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.pathloss_exp <= 0:
            raise ValueError("pathloss_exp must be positive")
        if self.vu < 1:
            raise ValueError("vu must be >= 1")
        if min(self.k) <= 0 or min(self.weights) <= 0 or min(self.distances) <= 0:
            raise ValueError("k, weights and distances must be strictly positive")
        if not (math.isfinite(self.eta1) and self.eta1 > 0):
            raise ValueError("derived eta1 is not finite and positive")

    @property
    def eta1(self) -> float:
        return (self.mu * self.power_P) ** (1.0 / 3.0) / self.phi

    @property
    def k_array(self) -> np.ndarray:
        return np.asarray(self.k, dtype=float)

    @property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def distance_array(self) -> np.ndarray:
        return np.asarray(self.distances, dtype=float)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemParams":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown SystemParams fields: {sorted(unknown)}")
        return cls(**data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SystemParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ChannelRealization:
    gains: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        if self.gains.ndim != 1 or not np.all(self.gains > 0):
            raise ValueError("channel gains must be a 1-D vector of positive values")


@dataclass
class Rates:
    local_rate: float
    offload_rate: float


@dataclass
class Allocation:
    """Time split for one frame: energy transfer share ``a`` and upload shares ``tau``."""

    a: float
    tau: np.ndarray
    value: float = float("nan")

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)


def mean_channel_gain(distance, params: SystemParams):
    """Free-space path-loss mean gain ``A_d * (c / (4 pi f_c d)) ** d_e``."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    base = SPEED_OF_LIGHT / (4.0 * math.pi * params.carrier_freq * d)
    out = params.antenna_gain_Ad * base ** params.pathloss_exp
    return float(out) if out.ndim == 0 else out


def sample_channels(rng: np.random.Generator, params: SystemParams, frame_index: int = 0,
                    fading: np.ndarray | None = None) -> ChannelRealization:
    """Rayleigh block fading: mean gain times an independent Exp(1) factor per device.

    ``fading`` overrides the random factors (used by tests to pin them).
    """
    mean = mean_channel_gain(params.distance_array, params)
    if fading is None:
        fading = rng.exponential(1.0, size=params.n_devices)
    return ChannelRealization(gains=mean * np.asarray(fading, dtype=float), frame_index=frame_index)


def _check_fraction(name: str, value) -> None:
    v = np.asarray(value, dtype=float)
    if np.any(v < 0) or np.any(v > 1):
        raise ValueError(f"{name} must lie in [0, 1]")


def harvested_energy(h, a, params: SystemParams):
    _check_fraction("a", a)
    if np.any(np.asarray(h) < 0):
        raise ValueError("channel gain must be nonnegative")
    return params.mu * params.power_P * h * a * params.frame_T


def local_rate(h, a, params: SystemParams, k: float | None = None):
    """Maximum local computing rate ``eta1 * (h/k)^(1/3) * a^(1/3)``."""
    _check_fraction("a", a)
    if np.any(np.asarray(h) <= 0):
        raise ValueError("channel gain must be positive")
    if k is None:
        k = params.k[0]
    return params.eta1 * np.cbrt(h / k) * np.cbrt(a)


def offload_rate(h, a, tau, params: SystemParams):
    """Upload rate ``(B tau / vu) log2(1 + mu P h^2 a / (tau N0))``, taken as 0 at ``tau = 0``."""
    _check_fraction("a", a)
    _check_fraction("tau", tau)
    if np.any(np.asarray(h) <= 0):
        raise ValueError("channel gain must be positive")
    h, a, tau = np.broadcast_arrays(np.asarray(h, float), np.asarray(a, float), np.asarray(tau, float))
    out = np.zeros(h.shape)
    pos = tau > 0
    snr = params.mu * params.power_P * h[pos] ** 2 * a[pos] / (tau[pos] * params.noise_N0)
    out[pos] = params.bandwidth_B * tau[pos] / params.vu * np.log1p(snr) / math.log(2.0)
    return float(out) if out.ndim == 0 else out


def device_rates(h, a, tau, params: SystemParams, k: float) -> Rates:
    return Rates(float(local_rate(h, a, params, k)), float(offload_rate(h, a, tau, params)))


def weighted_sum_rate(h: ChannelRealization, x, alloc: Allocation, params: SystemParams) -> float:
    """Objective of the joint problem for a given decision and time split."""
    gains = h.gains if isinstance(h, ChannelRealization) else np.asarray(h, dtype=float)
    x = np.asarray(x)
    tau = np.asarray(alloc.tau, dtype=float)
    a = float(alloc.a)
    if a < 0 or np.any(tau < 0) or a + tau.sum() > 1.0 + 1e-9:
        raise ValueError("allocation violates the frame time budget")
    a = min(a, 1.0)
    tau = np.minimum(tau, 1.0)
    w = params.weight_array
    rl = local_rate(gains, a, params, params.k_array)
    ro = offload_rate(gains, a, tau, params)
    return float(np.sum(w * np.where(x == 1, ro, rl)))
