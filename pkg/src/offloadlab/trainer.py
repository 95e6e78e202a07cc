"""Online loop: observe channel, propose candidates, keep the best, learn from it."""
from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .env import ChannelRealization, SystemParams, sample_channels
from .nn import AdamState
from .policies import Policy, make_policy, scale_input, train_step
from .quantize import DEFAULT_SIGMA, quantize
from .solver import (
    MAX_ENUM_DEVICES,
    FrameTerms,
    exhaustive_best,
    local_search_best,
    normalized_rate,
    solve_batch,
)

log = logging.getLogger(__name__)

REFERENCE_MODES = ("exhaustive", "local-search", "auto")


class FrameError(RuntimeError):
    def __init__(self, frame_index: int, message: str):
        super().__init__(f"frame {frame_index}: {message}")
        self.frame_index = frame_index


@dataclass
class Experience:
    state: np.ndarray
    best_action: np.ndarray
    best_value: float
    frame_index: int


class ReplayBuffer:
    """Fixed-capacity ring; the oldest entry is overwritten first."""

    def __init__(self, capacity: int = 1024):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Experience] = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def push(self, exp: Experience) -> None:
        if len(self._items) < self.capacity:
            self._items.append(exp)
        else:
            self._items[self._next] = exp
        self._next = (self._next + 1) % self.capacity

    def newest(self) -> Experience:
        return self._items[(self._next - 1) % len(self._items)]

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if not self._items:
            raise RuntimeError("cannot sample from an empty replay buffer")
        return rng.integers(0, len(self._items), size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        """Uniform draws with replacement."""
        return [self._items[i] for i in self.sample_indices(batch_size, rng)]

    def __getitem__(self, i):
        return self._items[i]


@dataclass
class FrameMetrics:
    frame_index: int
    chosen_value: float
    reference_value: float
    normalized_rate: float
    training_loss: float | None
    decision_time_seconds: float


def score_candidates(candidates, h, params: SystemParams, terms: FrameTerms | None = None):
    """Solve every candidate; returns ``(values, converged)``."""
    X = np.asarray(candidates, dtype=np.int8)
    sol = solve_batch(h, X, params, terms=terms)
    return sol.values, sol.converged


def best_candidate(candidates, h, params: SystemParams, terms: FrameTerms | None = None):
    """Argmax over candidates (first wins ties); candidates whose solve failed are skipped."""
    X = np.asarray(candidates, dtype=np.int8)
    values, ok = score_candidates(X, h, params, terms)
    if not ok.any():
        raise RuntimeError("resource allocation failed for every candidate")
    scored = np.where(ok, values, -np.inf)
    i = int(np.argmax(scored))
    return X[i].copy(), float(scored[i]), values


def select_action(m, h, K: int, quantizer, params: SystemParams, sigma: float = DEFAULT_SIGMA,
                  rng: np.random.Generator | None = None):
    """Generate ``K`` candidates from ``m`` and return the best ``(decision, value)``.

    ``quantizer`` is ``"op"``, ``"ugq"`` or a callable ``(m, K) -> candidates``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if callable(quantizer):
        cands = quantizer(m, K)
    else:
        cands = quantize(m, K, quantizer, sigma, rng).actions
    x, v, _ = best_candidate(cands, h, params)
    return x, v


@dataclass
class OnlineConfig:
    variant: str = "rnn"
    quantizer: str = "ugq"
    n_devices: int = 10
    frames: int = 10000
    K: int | None = None
    sigma: float = DEFAULT_SIGMA
    seed: int = 0
    reference: str = "auto"
    lr: float = 1e-3
    buffer_capacity: int = 1024
    batch_size: int = 128
    train_interval: int = 10
    window: int = 10
    hidden_reset: int = 1000
    local_search_starts: int = 16
    checkpoint_interval: int = 5000
    checkpoint_dir: str | None = None
    params: SystemParams | None = None

    def resolved_params(self) -> SystemParams:
        return self.params if self.params is not None else SystemParams(n_devices=self.n_devices)

    def resolved_K(self) -> int:
        return self.K if self.K is not None else self.n_devices


class _Streams:
    """Independent seeded generators; the channel stream depends on the seed only."""

    def __init__(self, seed: int):
        ss = np.random.SeedSequence(seed)
        ch, pol, noise, batch, search = ss.spawn(5)
        self.channel = np.random.default_rng(ch)
        self.policy_seed = int(pol.generate_state(1)[0])
        self.noise = np.random.default_rng(noise)
        self.batch = np.random.default_rng(batch)
        self.search = np.random.default_rng(search)


def channel_stream(seed: int, params: SystemParams, frames: int) -> Iterator[ChannelRealization]:
    """The exact channel sequence :func:`run_online` sees for ``seed``."""
    rng = _Streams(seed).channel
    for t in range(1, frames + 1):
        yield sample_channels(rng, params, frame_index=t)


def reference_value(h, params: SystemParams, mode: str, candidate_best: float,
                    starts: int, rng: np.random.Generator) -> float:
    if mode not in REFERENCE_MODES:
        raise ValueError(f"unknown reference mode {mode!r}")
    if mode == "auto":
        mode = "exhaustive" if params.n_devices <= MAX_ENUM_DEVICES else "local-search"
    if mode == "exhaustive":
        return exhaustive_best(h, params)[1]
    return max(local_search_best(h, params, starts, rng)[1], candidate_best)


def run_online(config: OnlineConfig, policy: Policy | None = None,
               on_train: Callable[[int, float], None] | None = None,
               reference_fn: Callable[[ChannelRealization, float], float] | None = None,
               ) -> Iterator[FrameMetrics]:
    """Yield one :class:`FrameMetrics` per frame; deterministic for a given config.

    ``reference_fn(h, best_candidate_value)`` replaces the configured reference
    maximizer (e.g. to reuse cached exhaustive values across algorithms that
    share a seed, hence a channel sequence).
    """
    params = config.resolved_params()
    if params.n_devices != config.n_devices:
        raise ValueError("config.n_devices does not match the system parameters")
    K = config.resolved_K()
    streams = _Streams(config.seed)
    if policy is None:
        kwargs = {"window": config.window} if config.variant == "rnn" else {}
        policy = make_policy(config.variant, config.n_devices, streams.policy_seed, **kwargs)
    opt = AdamState(lr=config.lr)
    buffer = ReplayBuffer(config.buffer_capacity)
    recurrent = policy.window > 1
    history: deque[np.ndarray] = deque(maxlen=policy.window)

    for t in range(1, config.frames + 1):
        h = sample_channels(streams.channel, params, frame_index=t)
        s = scale_input(h.gains)
        history.append(s)
        if recurrent:
            pad = [history[0]] * (policy.window - len(history))
            state = np.array(pad + list(history))
            # only matters for stateful recurrent inference
            if config.hidden_reset and (t - 1) % config.hidden_reset == 0:
                policy.reset_state()
        else:
            state = s

        start = time.perf_counter()
        m = policy.act(state)
        cands = quantize(m, K, config.quantizer, config.sigma, streams.noise).actions
        terms = FrameTerms(h, params)
        try:
            x, value, _ = best_candidate(cands, h, params, terms)
        except RuntimeError as exc:
            raise FrameError(t, str(exc)) from exc
        elapsed = time.perf_counter() - start

        if reference_fn is not None:
            ref = reference_fn(h, value)
        else:
            ref = reference_value(h, params, config.reference, value, config.local_search_starts, streams.search)
        buffer.push(Experience(state=state, best_action=x, best_value=value, frame_index=t))

        loss = None
        if t % config.train_interval == 0:
            assert buffer.newest().frame_index == t
            batch = buffer.sample(min(config.batch_size, len(buffer)), streams.batch)
            inputs = np.array([e.state for e in batch])
            targets = np.array([e.best_action for e in batch], dtype=float)
            loss = train_step(policy, inputs, targets, opt)
            if on_train is not None:
                on_train(t, loss)

        if config.checkpoint_dir and config.checkpoint_interval and t % config.checkpoint_interval == 0:
            policy.save(Path(config.checkpoint_dir) / f"frame_{t:06d}.ckpt")

        yield FrameMetrics(
            frame_index=t,
            chosen_value=value,
            reference_value=ref,
            normalized_rate=normalized_rate(value, ref),
            training_loss=loss,
            decision_time_seconds=elapsed,
        )
