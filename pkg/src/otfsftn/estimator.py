"""
Embedded FTN pilot frame and the four-step delay-Doppler channel estimator:
whitened threshold detection of delays, integer Doppler search, fractional
Doppler fit and gain recovery.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erfcinv

from .channel import ChannelRealization, ChannelTap
from .errors import ConfigurationError, DimensionError
from .io_model import rho
from .mapping import random_symbols
from .modem import DDFrame, SystemConfig
from .pulse import NoiseCorrelation, rc_sample

log = logging.getLogger(__name__)

#: Pilot-bin magnitudes below this fraction of the pilot amplitude are rejected.
BIN_FLOOR = 1e-12


@dataclass(frozen=True)
class PilotLayout:
    """
    Embedded pilot and its zero guard.

    Attributes
    ----------
    k0, l0 : int
        Pilot Doppler and delay bins.
    Ng : int
        Doppler guard half-width.
    l_max : int
        Delay guard width on each side of the pilot.
    k_max : int
        Doppler search half-width.
    Ep : float
        Pilot energy.
    """

    k0: int
    l0: int
    Ng: int
    l_max: int
    k_max: int
    Ep: float

    @classmethod
    def default(cls, cfg: SystemConfig, Ng: int, l_max: int, k_max: int, Ep: float | None = None) -> "PilotLayout":
        """Pilot at ``(N//2, 0)`` with energy 30 dB above ``sigma_x^2`` unless given."""
        return cls(cfg.N // 2, 0, Ng, l_max, k_max, 1000.0 * cfg.sigma_x_sq if Ep is None else Ep)

    def validate(self, cfg: SystemConfig) -> None:
        if self.Ng < 2 * self.k_max:
            raise ConfigurationError(f"Ng={self.Ng} must be at least 2*k_max={2 * self.k_max}")
        if 2 * self.Ng + 1 > cfg.N:
            raise ConfigurationError(f"Doppler guard 2Ng+1={2 * self.Ng + 1} exceeds N={cfg.N}")
        if 2 * self.l_max + 1 > cfg.M:
            raise ConfigurationError(f"delay guard 2l_max+1={2 * self.l_max + 1} exceeds M={cfg.M}")
        if not (0 <= self.k0 < cfg.N and 0 <= self.l0 < cfg.M):
            raise ConfigurationError("pilot position outside the grid")
        if self.l0 + self.l_max >= cfg.M:
            raise ConfigurationError("detection window l0+l_max exceeds the delay axis")
        if self.Ep <= 0:
            raise ConfigurationError("pilot energy must be positive")

    def guard_mask(self, cfg: SystemConfig) -> np.ndarray:
        """Boolean (N, M) mask of the guard region including the pilot bin."""
        rows = np.mod(self.k0 + np.arange(-self.Ng, self.Ng + 1), cfg.N)
        cols = np.mod(self.l0 + np.arange(-self.l_max, self.l_max + 1), cfg.M)
        mask = np.zeros((cfg.N, cfg.M), dtype=bool)
        mask[np.ix_(rows, cols)] = True
        return mask

    def window(self, cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
        """Doppler rows and delay columns scanned by the detector."""
        rows = np.mod(self.k0 + np.arange(-self.Ng, self.Ng + 1), cfg.N)
        cols = self.l0 + np.arange(self.l_max + 1)
        return rows, cols


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Detector settings.

    Attributes
    ----------
    p_fa : float
        Per-bin false-alarm probability used to set the threshold.
    kappa_step : float
        Resolution of the fractional Doppler grid.
    kappa_fit : str
        ``"two-sided"`` matches both Doppler neighbours of the peak;
        ``"single"`` uses the lower neighbour only.
    whiten : bool
        Detect on the whitened grid; otherwise normalize by the per-bin noise power.
    cancellation : str
        How paths are separated. ``"none"`` registers every thresholded Doppler
        local maximum at once. ``"doppler"`` accepts paths one at a time and
        subtracts each path's Doppler leakage from the grid before the next
        detection. ``"ftn"`` additionally subtracts the leakage into adjacent
        delay bins caused by the FTN pulse overlap.
    refine : bool
        After detection, jointly re-fit all path responses by least squares over
        the guard window, alternating with fractional Doppler re-fits, and drop
        paths whose fitted response falls below the threshold. Only used with
        cancellation enabled.
    """

    p_fa: float = 0.01
    kappa_step: float = 0.01
    kappa_fit: str = "two-sided"
    whiten: bool = True
    cancellation: str = "ftn"
    refine: bool = True

    def __post_init__(self):
        if not 0.0 < self.p_fa < 0.5:
            raise ConfigurationError(f"p_fa must lie in (0, 0.5), got {self.p_fa}")
        if not 0.0 < self.kappa_step <= 0.1:
            raise ConfigurationError(f"kappa_step must lie in (0, 0.1], got {self.kappa_step}")
        if self.kappa_fit not in ("two-sided", "single"):
            raise ConfigurationError(f"unknown kappa_fit {self.kappa_fit!r}")
        if self.cancellation not in ("none", "doppler", "ftn"):
            raise ConfigurationError(f"unknown cancellation {self.cancellation!r}")

    @property
    def threshold(self) -> float:
        return detection_threshold(self.p_fa)


@dataclass(frozen=True)
class EstimatedChannel:
    """Detected paths with gains on the same phase reference as the true channel."""

    taps: tuple[ChannelTap, ...]
    warnings: tuple[str, ...] = field(default=())

    @property
    def P_hat(self) -> int:
        return len(self.taps)

    def to_realization(self) -> ChannelRealization:
        return ChannelRealization(self.taps)

    def write_csv(self, path: str | Path) -> None:
        """One row per path: delay, integer Doppler, fractional Doppler, gain parts."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["l_hat", "k_hat", "kappa_hat", "h_re", "h_im"])
            for t in self.taps:
                w.writerow([t.delay, t.doppler_int, repr(float(t.doppler_frac)), repr(t.gain.real), repr(t.gain.imag)])


def detection_threshold(p_fa: float) -> float:
    """
    Threshold on the whitened bin power, ``1 + sqrt(2) * Qinv(p_fa)``.

    ``Qinv`` is the inverse Gaussian tail function, ``sqrt(2) * erfcinv(2 p)``.
    """
    if not 0.0 < p_fa <= 0.5:
        raise ConfigurationError(f"p_fa must lie in (0, 0.5], got {p_fa}")
    return float(1.0 + np.sqrt(2.0) * np.sqrt(2.0) * erfcinv(2.0 * p_fa))


def build_pilot_frame(
    layout: PilotLayout,
    data: np.ndarray | None,
    cfg: SystemConfig,
    rng: np.random.Generator | None = None,
    constellation: str = "QPSK",
) -> DDFrame:
    """
    Place the pilot, zero the guard and fill the rest with data.

    Parameters
    ----------
    layout : PilotLayout
    data : numpy.ndarray or None
        Unit-energy data symbols in row-major order of the (N, M) grid outside
        the guard. Drawn from ``constellation`` when None.
    cfg : SystemConfig
    rng : numpy.random.Generator, optional
        Needed when ``data`` is None.
    constellation : str

    Returns
    -------
    DDFrame
    """
    layout.validate(cfg)
    mask = layout.guard_mask(cfg)
    n_data = int((~mask).sum())
    if data is None:
        if rng is None:
            raise ConfigurationError("rng required to draw data symbols")
        _, data = random_symbols(n_data, constellation, rng)
    data = np.asarray(data)
    if data.size != n_data:
        raise DimensionError(f"expected {n_data} data symbols, got {data.size}")
    Xt = np.zeros((cfg.N, cfg.M), dtype=complex)
    Xt[~mask] = np.sqrt(cfg.sigma_x_sq) * data.reshape(-1)
    Xt[layout.k0, layout.l0] = np.sqrt(layout.Ep)
    return DDFrame.from_tilde(Xt)


def detection_statistic(Y_dd: np.ndarray, noise: NoiseCorrelation, cfg: SystemConfig, whiten: bool = True) -> np.ndarray:
    """
    Per-bin power normalized to unit noise variance.

    With ``whiten`` the grid is multiplied by ``Gd^(-1/2)``; otherwise each bin
    is divided by its own noise variance.
    """
    Y_dd = np.asarray(Y_dd)
    if Y_dd.shape != (cfg.N, cfg.M):
        raise DimensionError(f"expected grid shape ({cfg.N}, {cfg.M}), got {Y_dd.shape}")
    if whiten:
        Yw = (noise.whitener @ Y_dd.reshape(-1)).reshape(cfg.N, cfg.M)
        return np.abs(Yw) ** 2
    return np.abs(Y_dd) ** 2 / (noise.sigma0_sq * noise.taps[0])


def threshold_crossings(stat: np.ndarray, layout: PilotLayout, threshold: float, cfg: SystemConfig) -> int:
    """Number of window bins whose statistic exceeds the threshold."""
    rows, cols = layout.window(cfg)
    return int((stat[np.ix_(rows, cols)] > threshold).sum())


def kappa_grid(step: float) -> np.ndarray:
    """Grid over (-1/2, 1/2] with the given step, always containing 0 and 1/2."""
    n = int(round(0.5 / step))
    return np.arange(-n + 1, n + 1) * (0.5 / n)


def _detect(stat: np.ndarray, layout: PilotLayout, threshold: float, cfg: SystemConfig) -> list[tuple[int, int]]:
    rows, cols = layout.window(cfg)
    found = []
    for l in cols:
        col = stat[:, l]
        for k in rows:
            v = col[k]
            if v > threshold and v >= col[(k - 1) % cfg.N] and v >= col[(k + 1) % cfg.N]:
                found.append((int(k), int(l)))
    return found


def _offset(k: int, k0: int, N: int) -> int:
    """Signed circular offset of bin ``k`` from ``k0``."""
    return int((k - k0 + N // 2) % N - N // 2)


class _PathFitter:
    """Steps 3 and 4 for one peak bin, plus the leakage pattern used for cancellation."""

    def __init__(self, layout: PilotLayout, est_cfg: EstimatorConfig, cfg: SystemConfig):
        self.layout, self.est_cfg, self.cfg = layout, est_cfg, cfg
        N = cfg.N
        self.kappas = kappa_grid(est_cfg.kappa_step)
        self.rho0 = rho(0, self.kappas, N)
        self.offsets = np.arange(-(N // 2), N - N // 2)
        # ratios[j, i] = rho(offsets[i], kappa_j) / rho(0, kappa_j)
        self.ratios = rho(self.offsets[None, :], self.kappas[:, None], N) / self.rho0[:, None]
        self.amp = np.sqrt(layout.Ep)
        self.g_l0 = float(rc_sample(layout.l0 * cfg.alpha, cfg.pulse))
        self.isi = np.asarray(rc_sample(np.arange(-2 * cfg.c, 2 * cfg.c + 1) * cfg.alpha, cfg.pulse))

    def fit_kappa(self, column: np.ndarray, k_peak: int) -> int | None:
        """Index into the kappa grid, or None when a ratio bin is below the floor."""
        N = self.cfg.N
        peak = column[k_peak]
        col = {q: self.ratios[:, np.searchsorted(self.offsets, q)] for q in (-1, 1)}
        if self.est_cfg.kappa_fit == "two-sided":
            # bin k0 + k_hat - q carries rho(q, kappa)
            cost = sum(np.abs(column[(k_peak - q) % N] / peak - col[q]) ** 2 for q in (-1, 1))
        else:
            lower = column[(k_peak - 1) % N]
            if abs(lower) < BIN_FLOOR * self.amp:
                return None
            with np.errstate(divide="ignore", invalid="ignore"):
                cost = np.nan_to_num(np.abs(peak / lower - 1.0 / col[1]) ** 2, nan=np.inf)
        return int(np.argmin(cost))

    def tap(self, peak: complex, k_hat: int, l_hat: int, j: int) -> ChannelTap:
        cfg = self.cfg
        kappa = float(self.kappas[j])
        nu = k_hat + kappa
        denom = self.amp / cfg.N * np.exp(2j * np.pi * self.layout.l0 * nu / cfg.MN) * self.g_l0 * self.rho0[j]
        # undo the receive-window phase reference
        gain = peak / denom * np.exp(-2j * np.pi * nu * cfg.c / cfg.MN)
        return ChannelTap(complex(gain), int(l_hat), int(k_hat), kappa)

    def response(self, k_peak: int, l: int, j: int) -> np.ndarray:
        """Predicted (N, M) response of a path whose peak bin holds 1."""
        cfg = self.cfg
        out = np.zeros((cfg.N, cfg.M), dtype=complex)
        rows = np.mod(k_peak - self.offsets, cfg.N)
        pattern = self.ratios[j]
        if self.est_cfg.cancellation == "ftn":
            nu = _offset(k_peak, self.layout.k0, cfg.N) + self.kappas[j]
            band = 2 * cfg.c
            for d in range(-band, band + 1):
                col = l + d
                if 0 <= col < cfg.M and self.isi[d + band] != 0.0:
                    out[rows, col] += self.isi[d + band] * np.exp(2j * np.pi * nu * d / cfg.MN) * pattern
        else:
            out[rows, l] = pattern
        return out


def _refine(Y: np.ndarray, paths: list, fitter: _PathFitter, noise: NoiseCorrelation, threshold: float, sweeps: int = 3) -> list:
    """
    Re-estimate every path after removing the predicted response of all others.

    Each sweep visits the paths in order, re-fits the fractional Doppler and
    re-reads the peak bin on the grid cleaned of the other paths, then drops
    paths whose cleaned peak falls below the detection floor.
    """
    floor = threshold * noise.sigma0_sq * noise.taps[0]
    full = [pk * fitter.response(kp, l, j) for kp, l, j, pk in paths]
    total = np.sum(full, axis=0)
    for _ in range(sweeps):
        for i, (kp, l, j, pk) in enumerate(paths):
            cleaned = Y - total + full[i]
            j_new = fitter.fit_kappa(cleaned[:, l], kp)
            if j_new is not None:
                j = j_new
            pk = cleaned[kp, l]
            paths[i] = [kp, l, j, pk]
            total -= full[i]
            full[i] = pk * fitter.response(kp, l, j)
            total += full[i]
        keep = [abs(p[3]) ** 2 > floor for p in paths]
        if not all(keep):
            paths = [p for p, k in zip(paths, keep) if k]
            full = [f for f, k in zip(full, keep) if k]
            total = np.sum(full, axis=0) if full else np.zeros_like(Y)
    return paths


def estimate_channel(
    Y_dd: np.ndarray,
    noise: NoiseCorrelation,
    layout: PilotLayout,
    est_cfg: EstimatorConfig,
    cfg: SystemConfig,
) -> EstimatedChannel:
    """
    Estimate the channel from one received delay-Doppler grid.

    Step 1 thresholds the whitened window and keeps Doppler local maxima.
    Step 2 takes the strongest unclaimed bin within ``k_max`` of ``k0`` in the
    candidate's delay column, step 3 fits the fractional Doppler to the
    neighbour-to-peak ratios and step 4 scales the peak by the pilot response.
    Steps 2 to 4 use the unwhitened grid. With cancellation enabled, paths are
    accepted strongest first and their predicted response is subtracted before
    the next detection pass.

    Parameters
    ----------
    Y_dd : numpy.ndarray
        Unwhitened received grid, shape (N, M), indexed ``[doppler, delay]``.
    noise : NoiseCorrelation
    layout : PilotLayout
    est_cfg : EstimatorConfig
    cfg : SystemConfig

    Returns
    -------
    EstimatedChannel
        Gains referenced like :class:`otfsftn.channel.ChannelRealization` so
        the estimate can be rebuilt with ``build_effective_H``.
    """
    layout.validate(cfg)
    N = cfg.N
    Y = np.asarray(Y_dd)
    if Y.shape != (N, cfg.M):
        raise DimensionError(f"expected grid shape ({N}, {cfg.M}), got {Y.shape}")
    fitter = _PathFitter(layout, est_cfg, cfg)
    threshold = est_cfg.threshold
    k_range = [(layout.k0 + d) % N for d in range(-layout.k_max, layout.k_max + 1)]
    taps: list[ChannelTap] = []
    paths: list[list] = []
    notes: list[str] = []

    def accept(R, k_peak, l):
        peak = R[k_peak, l]
        if abs(peak) < BIN_FLOOR * fitter.amp:
            notes.append(f"peak bin (k={k_peak}, l={l}) below numerical floor; dropped")
            return None
        j = fitter.fit_kappa(R[:, l], k_peak)
        if j is None:
            notes.append(f"neighbour of bin (k={k_peak}, l={l}) below numerical floor; dropped")
            return None
        taps.append(fitter.tap(peak, _offset(k_peak, layout.k0, N), l - layout.l0, j))
        paths.append([k_peak, l, j, peak])
        return peak, j

    if est_cfg.cancellation == "none":
        stat = detection_statistic(Y, noise, cfg, est_cfg.whiten)
        by_column: dict[int, list[int]] = {}
        for k, l in _detect(stat, layout, threshold, cfg):
            by_column.setdefault(l, []).append(k)
        for l, ks in sorted(by_column.items()):
            power = np.abs(Y[:, l]) ** 2
            # each search bin belongs to the nearest candidate of its column
            owner: dict[int, list[int]] = {}
            for kb in k_range:
                best = min(range(len(ks)), key=lambda i: (abs(_offset(kb, ks[i], N)), -stat[ks[i], l]))
                owner.setdefault(best, []).append(kb)
            for i, kc in enumerate(ks):
                basin = owner.get(i, [])
                if not basin:
                    notes.append(f"candidate (k={kc}, l={l}) owns no bin within k_max; dropped")
                    continue
                accept(Y, max(basin, key=lambda kb: power[kb]), l)
    else:
        R = Y.astype(complex, copy=True)
        claimed: set[tuple[int, int]] = set()
        rejected: set[tuple[int, int]] = set()
        rows, cols = layout.window(cfg)
        for _ in range(4 * len(rows) * len(cols)):
            stat = detection_statistic(R, noise, cfg, est_cfg.whiten)
            cands = [kl for kl in _detect(stat, layout, threshold, cfg) if kl not in rejected]
            if not cands:
                break
            kc, l = max(cands, key=lambda kl: stat[kl])
            free = [kb for kb in k_range if (kb, l) not in claimed]
            k_peak = max(free, key=lambda kb: abs(R[kb, l])) if free else None
            if k_peak is None or stat[k_peak, l] <= threshold:
                rejected.add((kc, l))
                continue
            claimed.add((k_peak, l))
            fit = accept(R, k_peak, l)
            if fit is None:
                rejected.add((kc, l))
                continue
            peak, j = fit
            R -= peak * fitter.response(k_peak, l, j)
        if est_cfg.refine and paths:
            paths = _refine(Y, paths, fitter, noise, threshold)
            taps = [fitter.tap(pk, _offset(kp, layout.k0, N), l - layout.l0, j) for kp, l, j, pk in paths]
    for msg in notes:
        log.debug(msg)
    return EstimatedChannel(tuple(taps), tuple(notes))
