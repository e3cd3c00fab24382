"""
Link metrics and Monte Carlo kernels: channel NMSE, uncoded BER, achievable
information rate, transmission rate, PSD, sensing and modeling errors.

SNR is ``sigma_x^2 / sigma0^2`` per complex symbol before pulse shaping. The
noise density is held fixed and the symbol energy follows the SNR, see
:meth:`otfsftn.modem.SystemConfig.with_snr`.

Monte Carlo kernels take a ``seed`` and a trial index and draw everything from
``numpy.random.default_rng([seed, point, trial])``, so a sweep gives the same
numbers whether trials run in order or on a worker pool.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.signal import welch
from scipy.stats import binomtest

from .channel import (
    ChannelProfile,
    ChannelRealization,
    build_effective_H,
    cp_channel,
    propagate,
    random_channel,
    time_domain_channel,
)
from .equalizer import build_sparse_H, build_W1, equalize, band_to_dense
from .errors import ConfigurationError, InvalidInputError
from .estimator import EstimatedChannel, EstimatorConfig, PilotLayout, build_pilot_frame, estimate_channel
from .mapping import demap, random_symbols
from .modem import DDFrame, SystemConfig, Waveform, demodulate, modulate, synthesize_waveform, transmit_block
from .numeric import EIG_FLOOR, dd_to_td, td_to_dd
from .pulse import NoiseCorrelation, build_noise_correlation

#: Reported NMSE when the estimate is exact.
NMSE_FLOOR_DB = -120.0
#: Speed of light in m/s.
LIGHT_SPEED = 299_792_458.0


# --------------------------------------------------------------------------- specs


@dataclass(frozen=True)
class ChannelSpec:
    """
    How to draw a channel per trial.

    Either a random Jakes channel with ``P`` paths, delays up to ``l_max`` and
    maximum Doppler ``nu_max_hz``, or a fixed profile. ``fading="none"`` keeps
    the random delays, Doppler shifts and phases but gives every path the
    power ``1/P``, which suits plant-and-recover tests.
    """

    P: int = 1
    l_max: int = 0
    nu_max_hz: float = 0.0
    profile: ChannelProfile | None = None
    fading: str = "rayleigh"

    def __post_init__(self):
        if self.fading not in ("rayleigh", "none"):
            raise ConfigurationError(f"unknown fading model {self.fading!r}")

    def realize(self, cfg: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
        if self.profile is not None:
            return self.profile.realize(cfg, rng)
        ch = random_channel(self.P, self.l_max, self.nu_max_hz, cfg, rng)
        if self.fading == "none":
            amp = 1.0 / np.sqrt(self.P)
            ch = ChannelRealization(tuple(replace(t, gain=amp * np.exp(1j * np.angle(t.gain))) for t in ch.taps))
        return ch

    @property
    def max_delay(self) -> int:
        return max(self.profile.delays) if self.profile is not None else self.l_max


@dataclass(frozen=True)
class PilotSpec:
    """
    Pilot layout parameters independent of the SNR.

    ``pilot_db`` is the pilot energy relative to the data symbol energy.
    ``l_max`` defaults to the channel's largest delay.
    """

    Ng: int = 2
    k_max: int = 1
    l_max: int | None = None
    pilot_db: float = 30.0

    def layout(self, cfg: SystemConfig, channel: ChannelSpec) -> PilotLayout:
        l_max = channel.max_delay if self.l_max is None else self.l_max
        Ep = cfg.sigma_x_sq * 10 ** (self.pilot_db / 10)
        return PilotLayout.default(cfg, Ng=self.Ng, l_max=l_max, k_max=self.k_max, Ep=Ep)


@lru_cache(maxsize=8)
def noise_for(cfg: SystemConfig) -> NoiseCorrelation:
    """Noise record of a configuration, cached so matrix factors are built once per process."""
    return build_noise_correlation(cfg.pulse, cfg.M, cfg.N, cfg.c, cfg.sigma0_sq)


def trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial of one swept point."""
    return np.random.default_rng([int(seed), int(point), int(trial)])


def _reduce(mapper: Callable | None, fn: Callable, args: Iterable) -> list:
    """Evaluate ``fn`` over ``args`` with ``mapper`` and keep the input order."""
    args = list(args)
    if mapper is None:
        return [fn(*a) for a in args]
    return list(mapper(fn, *zip(*args))) if args else []


# --------------------------------------------------------------------------- NMSE


def _as_matrix(x, cfg: SystemConfig) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x
    if isinstance(x, EstimatedChannel):
        x = x.to_realization()
    if isinstance(x, ChannelRealization):
        return build_effective_H(x, cfg)
    raise InvalidInputError(f"cannot build a channel matrix from {type(x).__name__}")


def nmse_ratio(estimate, truth, cfg: SystemConfig) -> float:
    """Linear ``||H_hat - H||_F^2 / ||H||_F^2`` over the reconstructed channel matrices."""
    He = _as_matrix(estimate, cfg)
    Ht = _as_matrix(truth, cfg)
    den = np.linalg.norm(Ht) ** 2
    if den == 0:
        raise InvalidInputError("true channel has zero norm")
    return float(np.linalg.norm(He - Ht) ** 2 / den)


def to_db(ratio: float) -> float:
    return float(10 * np.log10(ratio)) if ratio > 10 ** (NMSE_FLOOR_DB / 10) else NMSE_FLOOR_DB


def nmse(estimate, truth, cfg: SystemConfig) -> float:
    """
    Channel NMSE in dB.

    Parameters
    ----------
    estimate, truth : ChannelRealization, EstimatedChannel or numpy.ndarray
        Tap sets are expanded to the ``(MN+2c)``-square effective channel.
    cfg : SystemConfig

    Returns
    -------
    float
        ``10 log10(||H_hat - H||^2 / ||H||^2)``, floored at -120 dB.
    """
    return to_db(nmse_ratio(estimate, truth, cfg))


def nmse_trial(
    cfg: SystemConfig,
    channel: ChannelSpec,
    pilot: PilotSpec,
    est_cfg: EstimatorConfig,
    seed: int,
    point: int,
    trial: int,
) -> float:
    """One estimation trial; returns the linear NMSE."""
    rng = trial_rng(seed, point, trial)
    noise = noise_for(cfg)
    ch = channel.realize(cfg, rng)
    layout = pilot.layout(cfg, channel)
    frame = build_pilot_frame(layout, None, cfg, rng)
    Y = demodulate(propagate(modulate(frame, cfg), ch, noise, cfg, rng), cfg)
    est = estimate_channel(Y, noise, layout, est_cfg, cfg)
    return nmse_ratio(est, ch, cfg)


@dataclass(frozen=True)
class SweepPoint:
    """One swept SNR point of a Monte Carlo metric."""

    snr_db: float
    value: float
    ci_low: float
    ci_high: float
    trials: int


def run_nmse(
    cfg: SystemConfig,
    channel: ChannelSpec,
    pilot: PilotSpec,
    est_cfg: EstimatorConfig,
    snr_list: Sequence[float],
    trials: int,
    seed: int = 0,
    mapper: Callable | None = None,
) -> list[SweepPoint]:
    """
    Channel-estimation NMSE versus SNR.

    The value is ``10 log10`` of the trial-averaged linear NMSE; the interval
    is the mean plus or minus 1.96 standard errors, mapped to dB.
    """
    out = []
    for p, snr in enumerate(snr_list):
        c = cfg.with_snr(snr)
        vals = np.array(_reduce(mapper, nmse_trial, [(c, channel, pilot, est_cfg, seed, p, t) for t in range(trials)]))
        mean = float(np.mean(vals))
        half = 1.96 * float(np.std(vals, ddof=1)) / np.sqrt(trials) if trials > 1 else 0.0
        out.append(SweepPoint(snr, to_db(mean), to_db(max(mean - half, 0.0)), to_db(mean + half), trials))
    return out


# --------------------------------------------------------------------------- BER


def wilson_interval(errors: int, total: int, confidence: float = 0.95) -> tuple[float, float]:
    if total == 0:
        return 0.0, 1.0
    ci = binomtest(int(errors), int(total)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def ber_trial(
    cfg: SystemConfig,
    channel: ChannelSpec,
    est_mode: str,
    pilot: PilotSpec | None,
    est_cfg: EstimatorConfig | None,
    constellation: str,
    whiten: bool,
    seed: int,
    point: int,
    trial: int,
) -> tuple[int, int]:
    """
    One uncoded frame; returns ``(bit errors, data bits)``.

    With ``perfect-csi`` every grid bin carries data. With ``ftnp-estimated``
    the frame carries the embedded pilot and its guard, the channel is
    estimated from the same frame and only data bins are counted.
    """
    rng = trial_rng(seed, point, trial)
    noise = noise_for(cfg)
    ch = channel.realize(cfg, rng)
    if est_mode == "perfect-csi":
        bits, syms = random_symbols(cfg.MN, constellation, rng)
        data_mask = np.ones((cfg.N, cfg.M), dtype=bool)
        frame = DDFrame.from_vector(np.sqrt(cfg.sigma_x_sq) * syms, cfg.M, cfg.N)
    elif est_mode == "ftnp-estimated":
        layout = (pilot or PilotSpec()).layout(cfg, channel)
        data_mask = ~layout.guard_mask(cfg)
        bits, syms = random_symbols(int(data_mask.sum()), constellation, rng)
        frame = build_pilot_frame(layout, syms, cfg)
    else:
        raise ConfigurationError(f"unknown estimation mode {est_mode!r}")
    z = propagate(modulate(frame, cfg), ch, noise, cfg, rng)
    if est_mode == "perfect-csi":
        csi = ch
    else:
        Y = demodulate(z, cfg)
        csi = estimate_channel(Y, noise, layout, est_cfg or EstimatorConfig(), cfg)
    x_hat = equalize(z, build_sparse_H(csi, cfg), noise, cfg, whiten=whiten).reshape(cfg.N, cfg.M)
    decided = demap(x_hat[data_mask], constellation, np.sqrt(cfg.sigma_x_sq))
    return int(np.count_nonzero(decided != bits)), int(bits.size)


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    ber: float
    ci_low: float
    ci_high: float
    trials: int
    errors: int
    bits: int


def run_ber(
    cfg: SystemConfig,
    channel: ChannelSpec,
    est_mode: str,
    snr_list: Sequence[float],
    trials: int,
    seed: int = 0,
    pilot: PilotSpec | None = None,
    est_cfg: EstimatorConfig | None = None,
    constellation: str = "QPSK",
    whiten: bool = True,
    mapper: Callable | None = None,
) -> list[BerPoint]:
    """
    Uncoded BER versus SNR with Wilson 95% intervals.

    Parameters
    ----------
    cfg : SystemConfig
        Noise density and frame geometry; symbol energy is set per SNR point.
    channel : ChannelSpec
    est_mode : str
        ``perfect-csi`` or ``ftnp-estimated``.
    snr_list : sequence of float
    trials : int
        Frames per SNR point.
    seed : int
    pilot, est_cfg
        Pilot layout and detector settings for the estimated mode.
    constellation : str
    whiten : bool
        Let the equalizer account for the noise correlation.
    mapper : callable, optional
        ``map``-like function, e.g. ``Executor.map``, used to fan out trials.
    """
    if trials < 1:
        raise ConfigurationError("trials must be at least 1")
    out = []
    for p, snr in enumerate(snr_list):
        c = cfg.with_snr(snr)
        args = [(c, channel, est_mode, pilot, est_cfg, constellation, whiten, seed, p, t) for t in range(trials)]
        res = _reduce(mapper, ber_trial, args)
        errors = sum(e for e, _ in res)
        total = sum(b for _, b in res)
        lo, hi = wilson_interval(errors, total)
        out.append(BerPoint(snr, errors / total, lo, hi, trials, errors, total))
    return out


# --------------------------------------------------------------------------- rates


@dataclass(frozen=True)
class InfoRateReport:
    """
    Achievable rate of the linear receiver.

    Attributes
    ----------
    xi : numpy.ndarray
        Eigenvalues of the whitened effective channel, descending.
    R : float
        Bits per frame.
    R_N : float
        Bits per second per hertz.
    bandwidth : float
        ``2W(1+beta)`` with ``2W = 1/T0``.
    duration : float
        Frame duration ``MN alpha T0``.
    """

    xi: np.ndarray
    R: float
    R_N: float
    bandwidth: float
    duration: float


def _symbol_map(cfg: SystemConfig) -> np.ndarray:
    # columns are the modulated frames of the unit symbol vectors
    return dd_to_td(np.eye(cfg.MN), cfg.M, cfg.N).T


def detector_matrix(Hs_dense: np.ndarray, W1_dense: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Dense linear map ``z -> x_hat`` of the reduced LMMSE detector."""
    B = Hs_dense.conj().T @ np.linalg.inv(W1_dense)
    return td_to_dd(np.roll(B, -cfg.c, axis=0).T, cfg.M, cfg.N).T


def info_rate(ch: ChannelRealization, noise: NoiseCorrelation, cfg: SystemConfig) -> InfoRateReport:
    """
    Achievable information rate under the reduced LMMSE receiver.

    Builds the detector ``W``, the effective channel ``W H_t Q`` and the
    filtered noise correlation ``Gz = W G W^H``, whitens with the eigenvalue
    floor and sums ``log2(1 + sigma_x^2 xi_i / sigma0^2)``.
    """
    if noise.sigma0_sq <= 0:
        raise ConfigurationError("info_rate needs sigma0_sq > 0")
    bandwidth = 1.0 + cfg.beta
    duration = cfg.MN * cfg.alpha
    if cfg.sigma_x_sq == 0:
        # no transmit energy: the detector weight is undefined but every term of the sum is log2(1)
        return InfoRateReport(xi=np.zeros(cfg.MN), R=0.0, R_N=0.0, bandwidth=bandwidth, duration=duration)
    Hs = build_sparse_H(ch, cfg)
    W = detector_matrix(Hs.dense(), band_to_dense(build_W1(Hs, noise, cfg.sigma_x_sq)), cfg)
    H_eff = W @ time_domain_channel(ch, cfg) @ _symbol_map(cfg)
    Gz = W @ noise.G @ W.conj().T
    lam, V = np.linalg.eigh(0.5 * (Gz + Gz.conj().T))
    if not np.all(np.isfinite(lam)):
        raise InvalidInputError("non-finite eigenvalues in the noise correlation")
    lam = np.maximum(lam, EIG_FLOOR * lam.max())
    D0 = (V.conj().T @ H_eff) / np.sqrt(lam)[:, None]
    xi = np.clip(np.linalg.eigvalsh(D0.conj().T @ D0)[::-1], 0.0, None)
    R = float(np.sum(np.log2(1.0 + cfg.sigma_x_sq * xi / noise.sigma0_sq)))
    return InfoRateReport(xi=xi, R=R, R_N=R / (bandwidth * duration), bandwidth=bandwidth, duration=duration)


def rate_trial(cfg: SystemConfig, channel: ChannelSpec, seed: int, point: int, trial: int) -> float:
    rng = trial_rng(seed, point, trial)
    noise = noise_for(cfg)
    return info_rate(channel.realize(cfg, rng), noise, cfg).R_N


def run_rate(
    cfg: SystemConfig,
    channel: ChannelSpec,
    snr_list: Sequence[float],
    trials: int,
    seed: int = 0,
    mapper: Callable | None = None,
) -> list[SweepPoint]:
    """Mean normalized information rate versus SNR with a 95% normal interval."""
    out = []
    for p, snr in enumerate(snr_list):
        c = cfg.with_snr(snr)
        vals = np.array(_reduce(mapper, rate_trial, [(c, channel, seed, p, t) for t in range(trials)]))
        mean = float(np.mean(vals))
        half = 1.96 * float(np.std(vals, ddof=1)) / np.sqrt(trials) if trials > 1 else 0.0
        out.append(SweepPoint(snr, mean, mean - half, mean + half, trials))
    return out


def transmission_rate(bits: Sequence[int], cfg: SystemConfig, code_rate: float = 0.75) -> float:
    """
    Transmission rate in bits/s/Hz.

    ``code_rate * sum(bits) / ((1 + beta) * MN * alpha)``, which is the bit
    count normalized by the bandwidth ``(1+beta)/T0`` and the frame duration
    ``MN alpha T0``.
    """
    bits = np.asarray(bits)
    if bits.size != cfg.MN:
        raise InvalidInputError(f"expected {cfg.MN} per-symbol bit counts, got {bits.size}")
    return float(code_rate * bits.sum() / ((1.0 + cfg.beta) * cfg.MN * cfg.alpha))


# --------------------------------------------------------------------------- PSD


def psd(waves: Waveform | Sequence[Waveform], cfg: SystemConfig, nperseg: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """
    Welch-averaged PSD normalized to a 0 dB peak.

    Parameters
    ----------
    waves : Waveform or sequence of Waveform
        Realizations on a common sample grid; their periodograms are averaged.
    cfg : SystemConfig
    nperseg : int
        Hann segment length, 50% overlap.

    Returns
    -------
    (numpy.ndarray, numpy.ndarray)
        Frequencies in units of ``1/T0`` in increasing order, and the PSD in dB.
    """
    if isinstance(waves, Waveform):
        waves = [waves]
    if not waves:
        raise InvalidInputError("no waveforms given")
    fs = 1.0 / waves[0].spacing
    acc = None
    for w in waves:
        if not np.isclose(w.spacing, waves[0].spacing):
            raise InvalidInputError("waveforms must share the sample spacing")
        seg = min(nperseg, len(w.samples))
        f, S = welch(w.samples, fs=fs, window="hann", nperseg=seg, noverlap=seg // 2, return_onesided=False)
        acc = S if acc is None else acc + S
    f = np.fft.fftshift(f)
    S = np.fft.fftshift(acc)
    return f, 10 * np.log10(np.maximum(S / S.max(), 1e-30))


def bpsk_waveforms(cfg: SystemConfig, frames: int, rng: np.random.Generator, spacing: float = 0.2) -> list[Waveform]:
    """Random BPSK frames shaped on a grid of ``spacing * T0``."""
    out = []
    for _ in range(frames):
        x = (1.0 - 2.0 * rng.integers(0, 2, cfg.MN)).astype(complex)
        a = transmit_block(DDFrame.from_vector(x, cfg.M, cfg.N), cfg)
        out.append(synthesize_waveform(a, cfg, spacing=spacing))
    return out


def sidelobe_level_db(f: np.ndarray, S_db: np.ndarray, edge: float) -> float:
    """Largest PSD level strictly beyond ``|f| = edge``."""
    beyond = np.abs(f) > edge
    if not beyond.any():
        raise InvalidInputError(f"frequency grid does not extend beyond {edge}")
    return float(S_db[beyond].max())


# --------------------------------------------------------------------------- sensing


@dataclass(frozen=True)
class SensingReport:
    """Per-path range in metres and radial velocity in m/s."""

    ranges: np.ndarray
    velocities: np.ndarray
    f_c: float
    theta: float
    c_l: float = LIGHT_SPEED


def sense_targets(taps, f_c: float, theta: float, cfg: SystemConfig) -> SensingReport:
    """
    Map path delays and Doppler shifts to monostatic range and velocity.

    ``r = c_l * l * Tf / 2`` and ``u = c_l * nu / (f_c cos(theta))`` with
    ``nu = (k + kappa) / (N T)``.
    """
    cos = np.cos(theta)
    if abs(cos) < 1e-12:
        raise ConfigurationError("aspect angle must not be perpendicular to the line of sight")
    if isinstance(taps, (EstimatedChannel, ChannelRealization)):
        taps = taps.taps
    delays = np.array([t.delay for t in taps], dtype=float)
    nus = np.array([t.doppler for t in taps], dtype=float) / (cfg.N * cfg.T)
    ranges = LIGHT_SPEED * delays * cfg.Tf_seconds / 2
    return SensingReport(ranges=ranges, velocities=LIGHT_SPEED * nus / (f_c * cos), f_c=f_c, theta=theta)


def match_taps(est_taps, true_taps) -> list:
    """
    Pair each true path with the closest estimated path.

    Distance is the delay difference plus the Doppler difference in bins.
    Unmatched true paths get None.
    """
    free = list(est_taps)
    out = []
    for t in sorted(true_taps, key=lambda t: -abs(t.gain)):
        if not free:
            out.append((t, None))
            continue
        best = min(free, key=lambda e: abs(e.delay - t.delay) + abs(e.doppler - t.doppler))
        free.remove(best)
        out.append((t, best))
    return out


def sense_trial(
    cfg: SystemConfig,
    channel: ChannelSpec,
    pilot: PilotSpec,
    est_cfg: EstimatorConfig,
    f_c: float,
    theta: float,
    seed: int,
    point: int,
    trial: int,
) -> tuple[float, float, float, float]:
    """
    One plant-and-recover trial.

    Returns squared range error, squared true range, squared velocity error
    and squared true velocity, summed over the true paths. A missed path
    counts as an estimate of zero.
    """
    rng = trial_rng(seed, point, trial)
    noise = noise_for(cfg)
    ch = channel.realize(cfg, rng)
    layout = pilot.layout(cfg, channel)
    frame = build_pilot_frame(layout, None, cfg, rng)
    Y = demodulate(propagate(modulate(frame, cfg), ch, noise, cfg, rng), cfg)
    est = estimate_channel(Y, noise, layout, est_cfg, cfg)
    acc = np.zeros(4)
    for true, hat in match_taps(est.taps, ch.taps):
        rt = sense_targets([true], f_c, theta, cfg)
        if hat is None:
            rh_r, rh_u = 0.0, 0.0
        else:
            rh = sense_targets([hat], f_c, theta, cfg)
            rh_r, rh_u = rh.ranges[0], rh.velocities[0]
        acc += [(rh_r - rt.ranges[0]) ** 2, rt.ranges[0] ** 2, (rh_u - rt.velocities[0]) ** 2, rt.velocities[0] ** 2]
    return tuple(float(v) for v in acc)


@dataclass(frozen=True)
class SensingPoint:
    snr_db: float
    range_nmse_db: float
    velocity_nmse_db: float
    trials: int


def run_sense(
    cfg: SystemConfig,
    channel: ChannelSpec,
    pilot: PilotSpec,
    est_cfg: EstimatorConfig,
    snr_list: Sequence[float],
    trials: int,
    f_c: float = 5e9,
    theta: float = 0.0,
    seed: int = 0,
    mapper: Callable | None = None,
) -> list[SensingPoint]:
    """Range and velocity NMSE versus SNR, each pooled over all trials and paths."""
    out = []
    for p, snr in enumerate(snr_list):
        c = cfg.with_snr(snr)
        args = [(c, channel, pilot, est_cfg, f_c, theta, seed, p, t) for t in range(trials)]
        tot = np.sum(_reduce(mapper, sense_trial, args), axis=0)
        r = to_db(tot[0] / tot[1]) if tot[1] > 0 else NMSE_FLOOR_DB
        u = to_db(tot[2] / tot[3]) if tot[3] > 0 else NMSE_FLOOR_DB
        out.append(SensingPoint(snr, r, u, trials))
    return out


# --------------------------------------------------------------------------- modeling errors


def modeling_errors(ch: ChannelRealization, noise: NoiseCorrelation, cfg: SystemConfig) -> tuple[float, float]:
    """
    Squared Frobenius errors of the band approximations.

    ``eps0 = ||H_t - Hs||^2`` compares the folded channel with its periodic
    band model. ``eps1`` compares the exact and approximated received
    covariances, ``sigma_x^2 H_t H_t^H + sigma0^2 G`` against
    ``sigma_x^2 Hs Hs^H + sigma0^2 Gc``.
    """
    H_t = cp_channel(build_effective_H(ch, cfg), cfg.c)
    Hd = build_sparse_H(ch, cfg).dense()
    eps0 = float(np.linalg.norm(H_t - Hd) ** 2)
    exact = cfg.sigma_x_sq * (H_t @ H_t.conj().T) + noise.sigma0_sq * noise.G
    approx = cfg.sigma_x_sq * (Hd @ Hd.conj().T) + noise.sigma0_sq * noise.Gc
    eps1 = float(np.linalg.norm(exact - approx) ** 2)
    return eps0, eps1


def modeling_error_trial(cfg: SystemConfig, channel: ChannelSpec, seed: int, point: int, trial: int) -> tuple[float, float]:
    rng = trial_rng(seed, point, trial)
    noise = noise_for(cfg)
    return modeling_errors(channel.realize(cfg, rng), noise, cfg)


@dataclass(frozen=True)
class ModelingErrorPoint:
    snr_db: float
    eps0: float
    eps1: float
    trials: int


def run_modeling_error(
    cfg: SystemConfig,
    channel: ChannelSpec,
    snr_list: Sequence[float],
    trials: int,
    seed: int = 0,
    mapper: Callable | None = None,
) -> list[ModelingErrorPoint]:
    """Mean modeling errors per SNR point. The channel draws repeat across points."""
    out = []
    for p, snr in enumerate(snr_list):
        c = cfg.with_snr(snr)
        # point index 0 for every SNR so all points see the same channels
        res = np.array(_reduce(mapper, modeling_error_trial, [(c, channel, seed, 0, t) for t in range(trials)]))
        out.append(ModelingErrorPoint(snr, float(res[:, 0].mean()), float(res[:, 1].mean()), trials))
    return out


# --------------------------------------------------------------------------- fits


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
