"""``offloadlab run`` / ``offloadlab compare``."""
from __future__ import annotations

import argparse
import logging
import sys

from .bench import (
    ALGOS,
    ExperimentConfig,
    compare_runs,
    format_table,
    resolve_out_dir,
    run_experiment,
)
from .quantize import DEFAULT_SIGMA
from .trainer import REFERENCE_MODES, FrameError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="offloadlab", description="Online offloading experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--devices", type=int, default=10)
    r.add_argument("--frames", type=int, default=None,
                   help="default: 10000 below 20 devices, else 30000")
    r.add_argument("--algo", choices=sorted(ALGOS), default="rnn-ugq")
    r.add_argument("--candidates", type=int, default=None, help="K (default: number of devices)")
    r.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("--params", default=None, help="system parameter JSON file")
    r.add_argument("--reference", choices=REFERENCE_MODES, default="auto")
    r.add_argument("--smooth-window", type=int, default=200)

    c = sub.add_parser("compare", help="merge summaries of finished runs")
    c.add_argument("dirs", nargs="+")
    c.add_argument("--out", default="comparison.csv")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "compare":
        table = compare_runs(args.dirs, args.out)
        print(format_table(table))
        return 0

    cfg = ExperimentConfig(
        devices=args.devices, frames=args.frames, algo=args.algo, candidates_K=args.candidates,
        sigma=args.sigma, seed=args.seed,
        out_dir=resolve_out_dir(args.out, args.algo, args.devices, args.seed),
        params_file=args.params, reference=args.reference, smooth_window=args.smooth_window,
    )
    try:
        summary = run_experiment(cfg)
    except FrameError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{cfg.algo} N={cfg.devices} frames={summary['frames']} -> {cfg.out_dir}")
    rate = summary["average_normalized_rate"]
    print(f"average normalized rate: {'-' if rate is None else f'{rate:.6f}'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
