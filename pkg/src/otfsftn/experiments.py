"""
Experiment dispatch and CSV output.

Every experiment writes one CSV per metric plus ``manifest.json``. Monte
Carlo trials fan out through an optional ``map``-like callable; results are
reduced in trial order so the files do not depend on scheduling.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .analysis import (
    bpsk_waveforms,
    psd,
    run_ber,
    run_modeling_error,
    run_nmse,
    run_rate,
    run_sense,
    trial_rng,
)
from .channel import time_domain_channel
from .config import ExperimentConfig
from .equalizer import build_sparse_H, equalize, full_lmmse
from .modem import SystemConfig
from .pulse import build_noise_correlation


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    """UTF-8, comma separated, header row, shortest round-trip float formatting."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def _nmse(cfg: ExperimentConfig, mapper) -> dict[str, tuple[list, list]]:
    pts = run_nmse(cfg.system, cfg.channel, cfg.pilot, cfg.estimator, cfg.snr_db, cfg.trials, cfg.seed, mapper)
    rows = [[p.snr_db, p.value, p.ci_low, p.ci_high, p.trials] for p in pts]
    return {"nmse.csv": (["snr_db", "nmse_db", "ci_low", "ci_high", "trials"], rows)}


def _ber(cfg: ExperimentConfig, mapper) -> dict[str, tuple[list, list]]:
    pts = run_ber(
        cfg.system,
        cfg.channel,
        cfg.ber.mode,
        cfg.snr_db,
        cfg.trials,
        cfg.seed,
        pilot=cfg.pilot,
        est_cfg=cfg.estimator,
        constellation=cfg.ber.constellation,
        whiten=cfg.ber.whiten,
        mapper=mapper,
    )
    rows = [[p.snr_db, p.ber, p.ci_low, p.ci_high, p.trials, p.errors, p.bits] for p in pts]
    return {"ber.csv": (["snr_db", "ber", "ci_low", "ci_high", "trials", "errors", "bits"], rows)}


def _rate(cfg: ExperimentConfig, mapper) -> dict[str, tuple[list, list]]:
    pts = run_rate(cfg.system, cfg.channel, cfg.snr_db, cfg.trials, cfg.seed, mapper)
    rows = [[p.snr_db, p.value, p.ci_low, p.ci_high, p.trials] for p in pts]
    return {"rate.csv": (["snr_db", "rate_bps_hz", "ci_low", "ci_high", "trials"], rows)}


def _psd(cfg: ExperimentConfig, mapper) -> dict[str, tuple[list, list]]:
    waves = bpsk_waveforms(cfg.system, cfg.psd.frames, trial_rng(cfg.seed, 0, 0), cfg.psd.spacing)
    f, S = psd(waves, cfg.system, cfg.psd.nperseg)
    rows = [[float(a), float(b)] for a, b in zip(f, S)]
    return {"psd.csv": (["freq", "psd_db"], rows)}


def _sense(cfg: ExperimentConfig, mapper) -> dict[str, tuple[list, list]]:
    pts = run_sense(
        cfg.system, cfg.channel, cfg.pilot, cfg.estimator, cfg.snr_db, cfg.trials,
        cfg.sense.f_c, cfg.sense.theta, cfg.seed, mapper,
    )
    rows = [[p.snr_db, p.range_nmse_db, p.velocity_nmse_db, p.trials] for p in pts]
    return {"sense.csv": (["snr_db", "range_nmse_db", "velocity_nmse_db", "trials"], rows)}


def _modeling(cfg: ExperimentConfig, mapper) -> dict[str, tuple[list, list]]:
    pts = run_modeling_error(cfg.system, cfg.channel, cfg.snr_db, cfg.trials, cfg.seed, mapper)
    rows = [[p.snr_db, p.eps0, p.eps1, p.trials] for p in pts]
    return {"modeling_error.csv": (["snr_db", "eps0", "eps1", "trials"], rows)}


def best_time(fn: Callable[[], object], repeats: int) -> float:
    """Smallest wall time of ``repeats`` calls."""
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return float(best)


def bench_point(system: SystemConfig, channel, N: int, seed: int, repeats: int, full: bool) -> tuple[float, float | None]:
    """Wall time of ``equalize`` (and optionally ``full_lmmse``) for one frame size."""
    cfg = replace(system, N=N).with_snr(15.0)
    rng = trial_rng(seed, N, 0)
    noise = build_noise_correlation(cfg.pulse, cfg.M, cfg.N, cfg.c, cfg.sigma0_sq)
    ch = channel.realize(cfg, rng)
    z = rng.standard_normal(cfg.MN) + 1j * rng.standard_normal(cfg.MN)
    Hs = build_sparse_H(ch, cfg)
    equalize(z, Hs, noise, cfg)  # compile and warm caches
    t_eq = best_time(lambda: equalize(z, Hs, noise, cfg), repeats)
    t_full = None
    if full:
        H_t = time_domain_channel(ch, cfg)
        G = noise.G
        t_full = best_time(lambda: full_lmmse(z, H_t, G, cfg.sigma0_sq, cfg), repeats)
    return t_eq, t_full


def _bench(cfg: ExperimentConfig, mapper) -> dict[str, tuple[list, list]]:
    # wall times are measurements, so this is the one output that differs between runs
    rows = []
    Ns = sorted(set(cfg.bench.N_list) | set(cfg.bench.full_N_list))
    for N in Ns:
        if cfg.system.M * N <= 4 * cfg.system.c:
            continue
        t_eq, t_full = bench_point(
            cfg.system, cfg.channel, N, cfg.seed, cfg.bench.repeats, N in cfg.bench.full_N_list
        )
        rows.append([N, cfg.system.M * N, t_eq if N in cfg.bench.N_list else "", "" if t_full is None else t_full])
    return {"equalize_bench.csv": (["N", "MN", "equalize_s", "full_lmmse_s"], rows)}


_DISPATCH = {
    "nmse": _nmse,
    "ber": _ber,
    "rate": _rate,
    "psd": _psd,
    "sense": _sense,
    "modeling-error": _modeling,
    "equalize-bench": _bench,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, mapper: Callable | None = None) -> list[Path]:
    """
    Run one experiment and write its CSV files and manifest.

    Returns
    -------
    list of Path
        Written files, manifest last.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_path)
    tables = _DISPATCH[cfg.experiment](cfg, mapper)
    written = [write_csv(out / name, header, rows) for name, (header, rows) in tables.items()]
    manifest = {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "version": __version__,
        "numpy": np.__version__,
        "config": cfg.to_dict(),
        "outputs": sorted(tables),
    }
    path = out / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    written.append(path)
    return written
