"""Command-line entry point: simulate, converge, audit, distance."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (
    ConfigError, load_config, run_audit, run_converge, run_distance, run_simulate,
)
from .models import ParameterError
from .solver import InvarianceError

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlasov-dgm",
        description="Particle simulations of Vlasov equations on digraph measures.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment configuration file")
        p.add_argument("--out", default=None, help="directory for CSV/text outputs")
        p.add_argument("--assert", dest="check", action="store_true",
                       help="exit with status 1 when a check fails")
        p.add_argument("--dt", type=float, default=None, help="override the time step")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for distance evaluations")

    common(sub.add_parser("simulate", help="integrate one particle system"))
    common(sub.add_parser("converge", help="d_infinity against a high-n reference"))
    common(sub.add_parser("audit", help="boundary, metric and continuity checks"))
    dist = sub.add_parser("distance", help="distances between two measure files")
    dist.add_argument("first")
    dist.add_argument("second")
    dist.add_argument("--metric", choices=("l1", "circle"), default="l1")
    dist.add_argument("--period", type=float, default=1.0)
    common(dist, config=False)
    return parser


def _write(out, files):
    if out is None:
        return
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        (path / name).write_text(content)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("config error: --threads: must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "distance":
            ok, text, files = run_distance(args.first, args.second, args.metric, args.period)
        else:
            cfg = load_config(args.config, args.dt)
            if args.command == "simulate":
                ok, text, files = run_simulate(cfg, args.check)
            elif args.command == "converge":
                ok, text, files = run_converge(cfg, args.check, args.threads)
            else:
                ok, text, files = run_audit(cfg, args.check)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParameterError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvarianceError as exc:
        print(f"invariance failure: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except ValueError as exc:
        if args.command == "distance":
            print(f"config error: measure file: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise
    sys.stdout.write(text)
    _write(args.out, files)
    return EXIT_OK if ok else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
