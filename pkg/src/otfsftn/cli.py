"""
Command-line entry point.

    otfsftn <experiment> --config PATH [--seed S] [--out DIR] [--workers K]

Exit status is 0 on success, 2 for configuration errors and 3 for runtime
errors. ``OTFSFTN_WORKERS`` overrides ``--workers``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from threadpoolctl import threadpool_limits

from .config import EXPERIMENTS, load_config
from .errors import ConfigurationError
from .experiments import run_experiment

log = logging.getLogger("otfsftn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _pin_threads() -> None:
    # one BLAS thread per process keeps floating-point reductions identical
    threadpool_limits(1)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otfsftn", description="OTFS-FTN link simulation experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="YAML experiment description")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", help="output directory (default: output_path from the config)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for Monte Carlo trials")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _workers(arg: int) -> int:
    env = os.environ.get("OTFSFTN_WORKERS")
    if env is None:
        return arg
    try:
        return int(env)
    except ValueError:
        raise ConfigurationError(f"OTFSFTN_WORKERS must be an integer, got {env!r}") from None


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")

    try:
        cfg = load_config(args.config, experiment=args.experiment)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigurationError("--seed: must lie in [0, 2^64)")
            cfg = replace(cfg, seed=args.seed)
        workers = _workers(args.workers)
        if workers < 1:
            raise ConfigurationError("--workers: must be at least 1")
    except ConfigurationError as exc:
        print(f"otfsftn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        with threadpool_limits(1):
            if workers == 1:
                written = run_experiment(cfg, args.out)
            else:
                with ProcessPoolExecutor(max_workers=workers, initializer=_pin_threads) as pool:
                    written = run_experiment(cfg, args.out, mapper=lambda fn, *its: pool.map(fn, *its, chunksize=4))
    except ConfigurationError as exc:
        print(f"otfsftn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every failure maps to the runtime exit code
        log.debug("run failed", exc_info=True)
        print(f"otfsftn: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
