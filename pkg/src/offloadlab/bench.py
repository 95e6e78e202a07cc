"""Experiment runner and comparison table.

Output files of one run (``out_dir``)::

    config.json    resolved configuration, defaults included
    metrics.csv    frame,chosen_value,reference_value,normalized_rate,loss
    timing.csv     frame,decision_time_s
    smoothed.csv   frame,normalized_rate_ma,loss_ma (trailing moving averages)
    summary.json   average normalized rate, average decision time, total decision time

``metrics.csv`` holds only seeded quantities so reruns are byte-identical;
timings live in ``timing.csv``.  ``loss`` is empty on frames without a
training step.  Floats are written with ``repr`` (round-trip exact).
"""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .env import SystemParams
from .quantize import DEFAULT_SIGMA
from .trainer import REFERENCE_MODES, FrameMetrics, OnlineConfig, run_online

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METRICS_COLUMNS = ("frame", "chosen_value", "reference_value", "normalized_rate", "loss")
TIMING_COLUMNS = ("frame", "decision_time_s")
OUT_ROOT_ENV = "OFFLOADLAB_OUT_ROOT"

# algo name -> (policy variant, quantizer)
ALGOS = {
    "dnn-op": ("dnn", "op"),
    "dnn-ugq": ("dnn", "ugq"),
    "rnn-op": ("rnn", "op"),
    "rnn-ugq": ("rnn", "ugq"),
    "qdnn-ugq": ("quantum_dnn", "ugq"),
    "qattn-ugq": ("quantum_attention", "ugq"),
}


def default_frames(devices: int) -> int:
    return 10000 if devices < 20 else 30000


@dataclass
class ExperimentConfig:
    devices: int = 10
    frames: int | None = None
    algo: str = "rnn-ugq"
    candidates_K: int | None = None
    sigma: float = DEFAULT_SIGMA
    seed: int = 0
    out_dir: str = "runs/default"
    params_file: str | None = None
    reference: str = "auto"
    smooth_window: int = 200

    def resolve(self) -> "ExperimentConfig":
        if self.devices < 1:
            raise ValueError("devices must be >= 1")
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}; choose from {sorted(ALGOS)}")
        if self.reference not in REFERENCE_MODES:
            raise ValueError(f"unknown reference {self.reference!r}")
        frames = default_frames(self.devices) if self.frames is None else self.frames
        if frames < 0:
            raise ValueError("frames must be >= 0")
        if self.smooth_window < 1:
            raise ValueError("smooth window must be >= 1")
        K = self.devices if self.candidates_K is None else self.candidates_K
        if K < 1:
            raise ValueError("candidates must be >= 1")
        return ExperimentConfig(self.devices, frames, self.algo, K, self.sigma, self.seed,
                                self.out_dir, self.params_file, self.reference, self.smooth_window)

    def system_params(self) -> SystemParams:
        if self.params_file is None:
            return SystemParams(n_devices=self.devices)
        params = SystemParams.load(self.params_file)
        if params.n_devices != self.devices:
            raise ValueError(f"params file describes {params.n_devices} devices, expected {self.devices}")
        return params

    def online_config(self) -> OnlineConfig:
        variant, quantizer = ALGOS[self.algo]
        return OnlineConfig(variant=variant, quantizer=quantizer, n_devices=self.devices,
                            frames=self.frames, K=self.candidates_K, sigma=self.sigma,
                            seed=self.seed, reference=self.reference, params=self.system_params(),
                            checkpoint_dir=str(Path(self.out_dir) / "checkpoints"))


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean over ``min(window, i + 1)`` points."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return x
    # direct window sums; cumulative-sum differencing drifts on long series
    w = min(window, x.size)
    padded = np.concatenate([np.full(w - 1, np.nan), x])
    return np.nanmean(np.lib.stride_tricks.sliding_window_view(padded, w), axis=1)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _mean_or_none(xs):
    return float(np.mean(xs)) if len(xs) else None


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one configuration, write every output file and return the summary."""
    cfg = cfg.resolve()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    online = cfg.online_config()
    params = online.params

    resolved = asdict(cfg)
    resolved["schema_version"] = SCHEMA_VERSION
    resolved["system_params"] = params.to_dict()
    (out / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")

    rows: list[FrameMetrics] = []
    started = time.perf_counter()
    with open(out / "metrics.csv", "w", newline="") as fm, open(out / "timing.csv", "w", newline="") as ft:
        mw, tw = csv.writer(fm, lineterminator="\n"), csv.writer(ft, lineterminator="\n")
        mw.writerow(METRICS_COLUMNS)
        tw.writerow(TIMING_COLUMNS)
        for m in run_online(online):
            rows.append(m)
            mw.writerow([m.frame_index, _fmt(m.chosen_value), _fmt(m.reference_value),
                         _fmt(m.normalized_rate), _fmt(m.training_loss)])
            tw.writerow([m.frame_index, _fmt(m.decision_time_seconds)])
    wall = time.perf_counter() - started

    rates = [m.normalized_rate for m in rows]
    times = [m.decision_time_seconds for m in rows]
    losses = [np.nan if m.training_loss is None else m.training_loss for m in rows]
    _write_smoothed(out / "smoothed.csv", rows, rates, losses, cfg.smooth_window)

    summary = {
        "schema_version": SCHEMA_VERSION,
        "algo": cfg.algo,
        "devices": cfg.devices,
        "frames": len(rows),
        "seed": cfg.seed,
        "average_normalized_rate": _mean_or_none(rates),
        "average_time_per_channel_s": _mean_or_none(times),
        "total_time_s": float(np.sum(times)) if times else None,
        "wall_time_s": wall,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _write_smoothed(path: Path, rows, rates, losses, window: int) -> None:
    rate_ma = moving_average(rates, window)
    # loss exists on training frames only (one per 10 frames): smooth over those steps
    loss = np.asarray(losses, dtype=float)
    have = ~np.isnan(loss)
    loss_ma = np.full(loss.shape, np.nan)
    if have.any():
        steps = max(1, window // 10)
        loss_ma[have] = moving_average(loss[have], steps)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("frame", "normalized_rate_ma", "loss_ma"))
        for m, r, l in zip(rows, rate_ma, loss_ma):
            w.writerow([m.frame_index, repr(float(r)), "" if np.isnan(l) else repr(float(l))])


def compare_runs(dirs, out_path=None) -> list[dict]:
    """Merge ``summary.json`` files into a table sorted by descending average normalized rate."""
    table = []
    for d in dirs:
        p = Path(d) / "summary.json"
        if not p.is_file():
            log.warning("skipping %s: no summary.json", d)
            continue
        s = json.loads(p.read_text())
        table.append({
            "run": str(d),
            "algo": s.get("algo"),
            "devices": s.get("devices"),
            "frames": s.get("frames"),
            "average_normalized_rate": s.get("average_normalized_rate"),
            "average_time_per_channel_s": s.get("average_time_per_channel_s"),
            "total_time_s": s.get("total_time_s"),
        })
    table.sort(key=lambda r: -np.inf if r["average_normalized_rate"] is None else r["average_normalized_rate"],
               reverse=True)
    if out_path is not None and table:
        with open(out_path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(table[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(table)
    return table


def format_table(table) -> str:
    head = f"{'algo':<10} {'N':>4} {'frames':>7} {'avg rate':>10} {'avg time (s)':>13} {'total (s)':>10}  run"
    lines = [head]
    for r in table:
        rate = "-" if r["average_normalized_rate"] is None else f"{r['average_normalized_rate']:.6f}"
        at = "-" if r["average_time_per_channel_s"] is None else f"{r['average_time_per_channel_s']:.3e}"
        tt = "-" if r["total_time_s"] is None else f"{r['total_time_s']:.2f}"
        lines.append(f"{r['algo']!s:<10} {r['devices']!s:>4} {r['frames']!s:>7} {rate:>10} {at:>13} {tt:>10}  {r['run']}")
    return "\n".join(lines)


def resolve_out_dir(out: str | None, algo: str, devices: int, seed: int) -> str:
    """Relative paths (and the default) are placed under ``$OFFLOADLAB_OUT_ROOT`` when it is set."""
    if out is None:
        out = str(Path("runs") / f"{algo}_n{devices}_s{seed}")
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not os.path.isabs(out):
        return str(Path(root) / out)
    return out
