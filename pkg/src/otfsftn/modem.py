"""
Delay-Doppler framing, OTFS modulation, cyclic prefix handling and the
oversampled waveform path used for validation and spectra.

Waveform times are expressed in units of the Nyquist interval ``T0``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import upfirdn

from .errors import ConfigurationError, DimensionError
from .numeric import dd_to_td, td_to_dd
from .pulse import PulseConfig, rrc_sample


@dataclass(frozen=True)
class SystemConfig:
    """
    Scalar parameters of one OTFS-FTN link.

    Parameters
    ----------
    M, N : int
        Delay and Doppler bin counts.
    c : int
        Half cyclic-prefix length in FTN samples; the prefix holds ``2c`` samples.
    delta_f : float
        Subcarrier spacing in Hz. Only used to convert bins to physical units.
    alpha, beta : float
        Packing ratio and RRC roll-off.
    sigma_x_sq : float
        Mean data symbol energy.
    sigma0_sq : float
        Noise spectral density.
    oversample : int
        Waveform samples per FTN interval.
    """

    M: int
    N: int
    c: int
    delta_f: float = 30e3
    alpha: float = 1.0
    beta: float = 0.25
    sigma_x_sq: float = 1.0
    sigma0_sq: float = 1.0
    oversample: int = 16

    def __post_init__(self):
        if self.M < 2 or self.N < 2:
            raise ConfigurationError(f"M and N must be at least 2, got M={self.M}, N={self.N}")
        if self.c < 0:
            raise ConfigurationError(f"c must be non-negative, got {self.c}")
        if self.M * self.N <= 4 * self.c:
            raise ConfigurationError(f"need M*N > 4c, got M*N={self.M * self.N}, c={self.c}")
        if self.delta_f <= 0:
            raise ConfigurationError("delta_f must be positive")
        if self.sigma_x_sq < 0 or self.sigma0_sq < 0:
            raise ConfigurationError("symbol energy and noise density must be non-negative")
        if self.oversample < 1:
            raise ConfigurationError("oversample must be positive")
        # validates alpha and beta
        self.pulse  # noqa: B018

    @property
    def MN(self) -> int:
        return self.M * self.N

    @property
    def pulse(self) -> PulseConfig:
        """Pulse parameters on the normalized time axis (``T0 = 1``)."""
        return PulseConfig(beta=self.beta, alpha=self.alpha, T0=1.0)

    @property
    def T(self) -> float:
        """Duration of one block of M samples in seconds, ``1/delta_f``."""
        return 1.0 / self.delta_f

    @property
    def Tf_seconds(self) -> float:
        """FTN sample interval in seconds, ``T/M``."""
        return self.T / self.M

    @property
    def snr_db(self) -> float:
        """``sigma_x^2 / sigma0^2`` in dB."""
        return 10 * np.log10(self.sigma_x_sq / self.sigma0_sq)

    def with_snr(self, snr_db: float) -> "SystemConfig":
        """Copy with ``sigma_x_sq`` set so the SNR is ``snr_db``, keeping the noise density."""
        return replace(self, sigma_x_sq=self.sigma0_sq * 10 ** (snr_db / 10))


@dataclass(frozen=True)
class DDFrame:
    """
    Delay-Doppler symbol grid.

    ``grid`` has shape (M, N) and is indexed ``[delay, doppler]``. The
    transposed view ``tilde`` has shape (N, M) and is indexed ``[doppler, delay]``.
    """

    grid: np.ndarray

    @classmethod
    def from_tilde(cls, tilde: np.ndarray) -> "DDFrame":
        return cls(np.ascontiguousarray(np.asarray(tilde).T))

    @classmethod
    def from_vector(cls, x: np.ndarray, M: int, N: int) -> "DDFrame":
        return cls.from_tilde(np.asarray(x).reshape(N, M))

    @property
    def tilde(self) -> np.ndarray:
        return self.grid.T

    @property
    def M(self) -> int:
        return self.grid.shape[0]

    @property
    def N(self) -> int:
        return self.grid.shape[1]

    def vec(self) -> np.ndarray:
        """Column-wise vectorization, entry ``[l, k]`` at index ``l + M*k``."""
        return self.grid.reshape(-1, order="F")


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled complex baseband waveform; sample ``i`` sits at ``start_time + i*spacing``."""

    samples: np.ndarray
    start_time: float
    spacing: float

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.spacing * np.arange(len(self.samples))


def _check_frame(frame: DDFrame, cfg: SystemConfig) -> None:
    if frame.grid.shape != (cfg.M, cfg.N):
        raise DimensionError(f"frame shape {frame.grid.shape} does not match (M, N)=({cfg.M}, {cfg.N})")


def modulate(frame: DDFrame, cfg: SystemConfig) -> np.ndarray:
    """
    OTFS modulation, ``s = (F_N^H kron I_M) vec(X)``.

    The M-point transforms of the ISFFT and the Heisenberg transform cancel, so
    only N-point inverse FFTs along the Doppler axis are computed.
    """
    _check_frame(frame, cfg)
    return dd_to_td(frame.vec(), cfg.M, cfg.N)


def demodulate(z: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Map received samples back to the (N, M) grid indexed ``[doppler, delay]``."""
    return td_to_dd(z, cfg.M, cfg.N).reshape(cfg.N, cfg.M)


def to_transmit_order(s: np.ndarray, c: int) -> np.ndarray:
    """
    Cyclically delay the frame by ``c`` samples before the prefix is appended.

    Together with :func:`add_cp` this places ``c`` cyclic samples on each side
    of the frame, so the receive window of :func:`remove_cp` is aligned with
    ``s`` itself rather than with ``s`` advanced by ``c``.
    """
    return np.roll(s, c, axis=-1)


def from_transmit_order(s: np.ndarray, c: int) -> np.ndarray:
    """Inverse of :func:`to_transmit_order`."""
    return np.roll(s, -c, axis=-1)


def add_cp(s: np.ndarray, c: int) -> np.ndarray:
    """
    Append the first ``2c`` samples to the end of the frame.

    Returns
    -------
    numpy.ndarray
        ``[s_0, ..., s_{MN-1}, s_0, ..., s_{2c-1}]``.
    """
    s = np.asarray(s)
    if 2 * c > s.shape[-1]:
        raise DimensionError(f"prefix 2c={2 * c} longer than frame {s.shape[-1]}")
    return np.concatenate([s, s[..., : 2 * c]], axis=-1)


def remove_cp(r: np.ndarray, c: int) -> np.ndarray:
    """Drop the first ``c`` and last ``c`` samples."""
    r = np.asarray(r)
    if r.shape[-1] < 2 * c:
        raise DimensionError("received block shorter than the prefix")
    return r[..., c : r.shape[-1] - c]


def transmit_block(frame: DDFrame, cfg: SystemConfig) -> np.ndarray:
    """Full transmit chain up to the FTN sample stream ``a`` of length ``MN + 2c``."""
    return add_cp(to_transmit_order(modulate(frame, cfg), cfg.c), cfg.c)


def _pulse_kernel(cfg: SystemConfig, span: int | None) -> tuple[np.ndarray, int]:
    half = (2 * cfg.c if span is None else span) * cfg.oversample
    dt = cfg.alpha / cfg.oversample
    return np.asarray(rrc_sample(np.arange(-half, half + 1) * dt, cfg.pulse)), half


def synthesize_waveform(
    a: np.ndarray, cfg: SystemConfig, pad: float = 100.0, span: int | None = None, spacing: float | None = None
) -> Waveform:
    """
    Pulse-shape the FTN sample stream on the oversampled grid.

    Parameters
    ----------
    a : numpy.ndarray
        FTN samples, placed at ``t = n*Tf``.
    cfg : SystemConfig
    pad : float
        Guard time in units of ``T0`` added on both sides of the frame.
    span : int, optional
        Pulse truncation in FTN intervals each side; defaults to ``2c``.
    spacing : float, optional
        Sample spacing in units of ``T0``. When given, the waveform is
        evaluated directly on ``t = pad_start + i*spacing`` instead of the
        ``Tf/oversample`` grid, which allows grids that are not a divisor of ``Tf``.

    Returns
    -------
    Waveform
        Covers at least ``[-pad, (len(a) + pad)]`` in units of ``T0``.
    """
    if spacing is not None:
        return _synthesize_direct(np.asarray(a, dtype=complex), cfg, pad, span, spacing)
    if cfg.oversample < 4:
        raise ConfigurationError("waveform synthesis needs oversample >= 4")
    a = np.asarray(a, dtype=complex)
    h, half = _pulse_kernel(cfg, span)
    dt = cfg.alpha / cfg.oversample
    first = -int(np.ceil(pad / dt))
    last = int(np.ceil((len(a) + pad) / dt))
    out = np.zeros(last - first + 1, dtype=complex)
    shaped = upfirdn(h, a, up=cfg.oversample)
    # shaped[i] sits at t = (i - half) * dt
    lo = -half - first
    out[max(lo, 0) : lo + len(shaped)] = shaped[max(-lo, 0) : len(out) - lo]
    return Waveform(samples=out, start_time=first * dt, spacing=dt)


def _synthesize_direct(a: np.ndarray, cfg: SystemConfig, pad: float, span: int | None, spacing: float) -> Waveform:
    if spacing <= 0:
        raise ConfigurationError("spacing must be positive")
    reach = (2 * cfg.c if span is None else span) * cfg.alpha
    t = -pad + spacing * np.arange(int(np.ceil((len(a) * cfg.alpha + 2 * pad) / spacing)) + 1)
    out = np.zeros(len(t), dtype=complex)
    for n in range(len(a)):
        # closed window, matching the symmetric kernel of the oversampled path
        eps = 1e-9 * spacing
        lo = np.searchsorted(t, n * cfg.alpha - reach - eps, side="left")
        hi = np.searchsorted(t, n * cfg.alpha + reach + eps, side="right")
        out[lo:hi] += a[n] * rrc_sample(t[lo:hi] - n * cfg.alpha, cfg.pulse)
    return Waveform(samples=out, start_time=float(t[0]), spacing=spacing)


def receive_front_end(received: Waveform, cfg: SystemConfig, span: int | None = None) -> np.ndarray:
    """
    Matched-filter the waveform and sample the receive window.

    Returns ``z_k = z((k + c) * Tf)`` for ``k = 0..MN-1``.
    """
    h, half = _pulse_kernel(cfg, span)
    dt = received.spacing
    if not np.isclose(dt, cfg.alpha / cfg.oversample):
        raise DimensionError("waveform spacing does not match Tf/oversample")
    offset = int(round(-received.start_time / dt))
    centres = offset + (np.arange(cfg.MN) + cfg.c) * cfg.oversample
    if centres[0] - half < 0 or centres[-1] + half >= len(received.samples):
        raise DimensionError("waveform does not cover the receive window plus the filter span")
    idx = centres[:, None] + np.arange(-half, half + 1)
    return dt * (received.samples[idx] @ h)
