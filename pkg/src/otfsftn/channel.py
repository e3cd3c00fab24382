"""
Doubly-selective multipath channels: synthesis, effective FTN-sampled channel
matrices, and propagation in both the matrix model and the waveform model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError
from .modem import SystemConfig, Waveform, add_cp, to_transmit_order
from .numeric import complex_normal, sample_colored_noise
from .pulse import NoiseCorrelation, isi_taps


@dataclass(frozen=True)
class ChannelTap:
    """
    One propagation path.

    Attributes
    ----------
    gain : complex
        Complex path gain.
    delay : int
        Delay in FTN samples.
    doppler_int : int
        Integer Doppler bin.
    doppler_frac : float
        Fractional Doppler in (-1/2, 1/2].
    """

    gain: complex
    delay: int
    doppler_int: int = 0
    doppler_frac: float = 0.0

    @property
    def doppler(self) -> float:
        """Doppler shift in bins of ``1/(N*T)``."""
        return self.doppler_int + self.doppler_frac


@dataclass(frozen=True)
class ChannelRealization:
    """A set of propagation paths."""

    taps: tuple[ChannelTap, ...]

    def __post_init__(self):
        object.__setattr__(self, "taps", tuple(self.taps))

    @property
    def P(self) -> int:
        return len(self.taps)

    @property
    def max_delay(self) -> int:
        return max((t.delay for t in self.taps), default=0)

    def scaled(self, factor: complex) -> "ChannelRealization":
        return ChannelRealization(
            tuple(ChannelTap(t.gain * factor, t.delay, t.doppler_int, t.doppler_frac) for t in self.taps)
        )


def split_doppler(nu_bins: float) -> tuple[int, float]:
    """Split a Doppler value in bins into the nearest integer and a remainder in (-1/2, 1/2]."""
    k = int(np.ceil(nu_bins - 0.5))
    return k, float(nu_bins - k)


def random_channel(
    P: int,
    l_max: int,
    nu_max: float,
    cfg: SystemConfig,
    rng: np.random.Generator,
    allow_replacement: bool = True,
) -> ChannelRealization:
    """
    Draw a Rayleigh multipath channel with a Jakes Doppler profile.

    Parameters
    ----------
    P : int
        Number of paths.
    l_max : int
        Largest delay in FTN samples.
    nu_max : float
        Maximum Doppler shift in Hz.
    cfg : SystemConfig
    rng : numpy.random.Generator
    allow_replacement : bool
        Permit repeated delays when ``P - 1 > l_max``.

    Returns
    -------
    ChannelRealization
        First path at delay 0, gains CN(0, 1/P), Doppler ``nu_max*cos(theta)``.
    """
    if P < 1:
        raise ConfigurationError("P must be at least 1")
    if l_max < 0 or l_max > max(2 * cfg.c - 1, 0):
        raise ConfigurationError(f"l_max must lie in [0, 2c-1], got {l_max}")
    gains = complex_normal(rng, P, 1.0 / P)
    theta = rng.uniform(-np.pi, np.pi, P)
    nu_bins = nu_max * np.cos(theta) * cfg.N * cfg.T
    if P - 1 <= l_max:
        rest = rng.choice(np.arange(1, l_max + 1), size=P - 1, replace=False)
    elif allow_replacement:
        rest = rng.integers(1, l_max + 1, size=P - 1) if l_max > 0 else np.zeros(P - 1, int)
    else:
        raise ConfigurationError(f"cannot place {P - 1} distinct delays in 1..{l_max}")
    delays = np.concatenate([[0], rest]).astype(int)
    taps = []
    for h, l, nu in zip(gains, delays, nu_bins):
        k, kappa = split_doppler(nu)
        taps.append(ChannelTap(complex(h), int(l), k, kappa))
    return ChannelRealization(tuple(taps))


def build_effective_H(ch: ChannelRealization, cfg: SystemConfig) -> np.ndarray:
    """
    Effective channel seen by the FTN sample stream including the prefix.

    ``H[k, m] = sum_i h_i exp(j 2 pi nu_i (k - l_i) / MN) g((k - m - l_i) Tf)``
    with zero-based indices and lags beyond ``2c`` dropped.

    Returns
    -------
    numpy.ndarray
        Square matrix of size ``MN + 2c``.
    """
    size = cfg.MN + 2 * cfg.c
    taps = isi_taps(cfg.pulse, cfg.c)
    band = 2 * cfg.c
    H = np.zeros((size, size), dtype=complex)
    rows = np.arange(size)
    for tap in ch.taps:
        phase = tap.gain * np.exp(2j * np.pi * tap.doppler * (rows - tap.delay) / cfg.MN)
        for d in range(-band, band + 1):
            cols = rows - tap.delay - d
            ok = (cols >= 0) & (cols < size)
            H[rows[ok], cols[ok]] += phase[ok] * taps[abs(d)]
    return H


def cp_channel(H: np.ndarray, c: int) -> np.ndarray:
    """Fold the prefix into the channel, ``R_cp H A_cp``."""
    size = H.shape[0]
    MN = size - 2 * c
    Ht = H[c : c + MN, :MN].copy()
    Ht[:, : 2 * c] += H[c : c + MN, MN:]
    return Ht


def time_domain_channel(ch: ChannelRealization, cfg: SystemConfig) -> np.ndarray:
    """
    Dense MN x MN map from the modulated frame ``s`` to the receive window ``z``.

    Equals ``R_cp H A_cp`` composed with the cyclic delay of
    :func:`otfsftn.modem.to_transmit_order`.
    """
    Ht = cp_channel(build_effective_H(ch, cfg), cfg.c)
    return np.roll(Ht, -cfg.c, axis=1)


def apply_channel(a: np.ndarray, ch: ChannelRealization, cfg: SystemConfig) -> np.ndarray:
    """
    Apply ``H`` to the prefixed stream ``a`` without forming the matrix.

    Works on a single vector or a stack of vectors in the last axis.
    """
    a = np.asarray(a, dtype=complex)
    size = cfg.MN + 2 * cfg.c
    if a.shape[-1] != size:
        raise DimensionError(f"expected length MN+2c={size}, got {a.shape[-1]}")
    taps = isi_taps(cfg.pulse, cfg.c)
    band = 2 * cfg.c
    pad = band + ch.max_delay
    lead = np.zeros(a.shape[:-1] + (pad,), complex)
    tail = np.zeros(a.shape[:-1] + (band,), complex)
    # padded[pad + j] holds a_j, zero outside the block
    padded = np.concatenate([lead, a, tail], axis=-1)
    rows = np.arange(size)
    out = np.zeros_like(a)
    for tap in ch.taps:
        filtered = np.zeros_like(a)
        for d in range(-band, band + 1):
            start = pad - tap.delay - d
            filtered += taps[abs(d)] * padded[..., start : start + size]
        out += tap.gain * np.exp(2j * np.pi * tap.doppler * (rows - tap.delay) / cfg.MN) * filtered
    return out


def propagate(
    s: np.ndarray,
    ch: ChannelRealization,
    noise: NoiseCorrelation,
    cfg: SystemConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """
    Matrix-model propagation of one modulated frame.

    Parameters
    ----------
    s : numpy.ndarray
        Modulated frame of length MN.
    ch : ChannelRealization
    noise : NoiseCorrelation
        Supplies the colored noise ``eta`` with covariance ``sigma0^2 G``.
    cfg : SystemConfig
    rng : numpy.random.Generator, optional
        Required when ``noise.sigma0_sq > 0``.

    Returns
    -------
    numpy.ndarray
        Receive window ``z`` of length MN.
    """
    s = np.asarray(s)
    if s.shape[-1] != cfg.MN:
        raise DimensionError(f"expected frame length {cfg.MN}, got {s.shape[-1]}")
    a = add_cp(to_transmit_order(s, cfg.c), cfg.c)
    z = apply_channel(a, ch, cfg)[..., cfg.c : cfg.c + cfg.MN]
    if noise.sigma0_sq > 0:
        if rng is None:
            raise ConfigurationError("a random generator is required for noisy propagation")
        n = None if z.ndim == 1 else z.shape[0]
        z = z + sample_colored_noise(noise.noise_factor, rng, n)
    return z


def propagate_waveform_oracle(wave: Waveform, ch: ChannelRealization, cfg: SystemConfig) -> Waveform:
    """
    Noiseless continuous-time channel on the oversampled grid.

    Applies ``sum_i h_i exp(j 2 pi nu_i (t - tau_i)) s(t - tau_i)`` with
    ``tau_i = l_i Tf``, an exact shift of ``l_i * oversample`` samples.
    """
    x = wave.samples
    out = np.zeros_like(x)
    t = wave.times
    # Doppler in cycles per T0: (k + kappa) / (N T) with T = M Tf = M alpha T0
    for tap in ch.taps:
        shift = tap.delay * cfg.oversample
        tau = tap.delay * cfg.alpha
        nu = tap.doppler / (cfg.MN * cfg.alpha)
        delayed = np.zeros_like(x)
        if shift < len(x):
            delayed[shift:] = x[: len(x) - shift]
        out += tap.gain * np.exp(2j * np.pi * nu * (t - tau)) * delayed
    return Waveform(samples=out, start_time=wave.start_time, spacing=wave.spacing)


@dataclass(frozen=True)
class ChannelProfile:
    """
    Channel template loaded from a profile file.

    Each record gives a path gain in dB (or ``rayleigh`` for a CN(0, 1/P)
    draw per realization), a delay in FTN samples and a Doppler shift in Hz.
    """

    gains_db: tuple
    delays: tuple[int, ...]
    doppler_hz: tuple[float, ...]

    @property
    def P(self) -> int:
        return len(self.delays)

    def realize(self, cfg: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
        taps = []
        for g_db, l, f in zip(self.gains_db, self.delays, self.doppler_hz):
            if g_db is None:
                gain = complex(complex_normal(rng, 1, 1.0 / self.P)[0])
            else:
                gain = complex(10 ** (g_db / 20))
            k, kappa = split_doppler(f * cfg.N * cfg.T)
            taps.append(ChannelTap(gain, l, k, kappa))
        return ChannelRealization(tuple(taps))


def load_channel_profile(path: str | Path) -> ChannelProfile:
    """
    Read a channel profile.

    The file is CSV with header ``gain_db,delay_bin,doppler_hz``. Lines starting
    with ``#`` are ignored. ``gain_db`` may be the word ``rayleigh``.
    """
    path = Path(path)
    gains, delays, dopplers = [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        rows = csv.DictReader(line for line in fh if line.strip() and not line.lstrip().startswith("#"))
        expected = {"gain_db", "delay_bin", "doppler_hz"}
        if rows.fieldnames is None or set(rows.fieldnames) != expected:
            raise ConfigurationError(f"{path}: header must be gain_db,delay_bin,doppler_hz")
        for lineno, row in enumerate(rows, start=2):
            try:
                g = row["gain_db"].strip()
                gains.append(None if g.lower() == "rayleigh" else float(g))
                delay = int(row["delay_bin"])
                if delay < 0:
                    raise ValueError("negative delay")
                delays.append(delay)
                dopplers.append(float(row["doppler_hz"]))
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"{path}: record {lineno}: {exc}") from exc
    if not delays:
        raise ConfigurationError(f"{path}: no paths defined")
    return ChannelProfile(tuple(gains), tuple(delays), tuple(dopplers))
