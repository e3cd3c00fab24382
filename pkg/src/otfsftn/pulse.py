"""
Root-raised-cosine pulses and the FTN noise-correlation matrices.

Times are in seconds with the Nyquist interval ``T0`` (1 by default). The FTN
symbol interval is ``Tf = alpha * T0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import circulant, toeplitz

from .errors import ConfigurationError
from .numeric import hermitian_inv_sqrt, hermitian_sqrt, td_to_dd


@dataclass(frozen=True)
class PulseConfig:
    """
    RRC pulse parameters.

    Parameters
    ----------
    beta : float
        Roll-off factor in [0, 1].
    alpha : float
        Packing ratio in (0, 1]; 1 is Nyquist signaling.
    T0 : float
        Nyquist symbol interval in seconds.
    """

    beta: float = 0.25
    alpha: float = 1.0
    T0: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.T0 <= 0:
            raise ConfigurationError(f"T0 must be positive, got {self.T0}")
        if self.alpha < 1.0 / (1.0 + self.beta):
            warnings.warn(
                f"alpha={self.alpha} is below 1/(1+beta); adjacent OTFS frames will overlap in frequency",
                stacklevel=2,
            )

    @property
    def Tf(self) -> float:
        """FTN symbol interval."""
        return self.alpha * self.T0


def rrc_sample(t, cfg: PulseConfig):
    """
    Unit-energy root-raised-cosine impulse response.

    Parameters
    ----------
    t : float or array_like
        Time instants in seconds.
    cfg : PulseConfig

    Returns
    -------
    float or numpy.ndarray
    """
    x = np.asarray(t, dtype=float) / cfg.T0
    b = cfg.beta
    amp = 1.0 / np.sqrt(cfg.T0)
    if b == 0.0:
        return amp * np.sinc(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.sin(np.pi * x * (1 - b)) + 4 * b * x * np.cos(np.pi * x * (1 + b))
        den = np.pi * x * (1 - (4 * b * x) ** 2)
        out = num / den
    at_zero = np.isclose(x, 0.0, atol=1e-12)
    at_pole = np.isclose(np.abs(4 * b * x), 1.0, rtol=0, atol=1e-12)
    out = np.where(at_zero, 1 - b + 4 * b / np.pi, out)
    pole_value = (b / np.sqrt(2)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
    )
    out = np.where(at_pole, pole_value, out)
    out = amp * out
    return out if out.ndim else float(out)


def rc_sample(t, cfg: PulseConfig):
    """
    Raised-cosine autocorrelation of the RRC pulse, normalized to ``g(0) = 1``.

    Parameters
    ----------
    t : float or array_like
        Time lags in seconds.
    cfg : PulseConfig

    Returns
    -------
    float or numpy.ndarray
    """
    x = np.asarray(t, dtype=float) / cfg.T0
    b = cfg.beta
    if b == 0.0:
        out = np.sinc(x)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.sinc(x) * np.cos(np.pi * b * x) / (1 - (2 * b * x) ** 2)
        at_pole = np.isclose(np.abs(2 * b * x), 1.0, rtol=0, atol=1e-12)
        out = np.where(at_pole, np.pi / 4 * np.sinc(1 / (2 * b)), out)
    return out if np.ndim(out) else float(out)


def isi_taps(cfg: PulseConfig, c: int) -> np.ndarray:
    """
    Samples ``g(n*Tf)`` for ``n = 0..2c``.

    Lags beyond ``2c`` are treated as zero everywhere in the package.
    """
    return np.asarray(rc_sample(np.arange(2 * c + 1) * cfg.Tf, cfg), dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class NoiseCorrelation:
    """
    Noise statistics after matched filtering at the FTN rate.

    Matrices are built lazily because the equalizer only needs ``taps``.
    ``G`` carries unit noise density; ``sigma0_sq`` is applied by consumers.

    Attributes
    ----------
    taps : numpy.ndarray
        ``g(n*Tf)`` for ``n = 0..2c``.
    M, N, c : int
        Grid size and half cyclic-prefix length.
    sigma0_sq : float
        Noise spectral density.
    """

    taps: np.ndarray
    M: int
    N: int
    c: int
    sigma0_sq: float

    @property
    def MN(self) -> int:
        return self.M * self.N

    def _first_column(self, circular: bool) -> np.ndarray:
        col = np.zeros(self.MN)
        band = 2 * self.c
        col[: band + 1] = self.taps
        if circular and band:
            col[-band:] = self.taps[1:][::-1]
        return col

    @cached_property
    def G(self) -> np.ndarray:
        """Banded symmetric Toeplitz correlation matrix."""
        return toeplitz(self._first_column(circular=False))

    @cached_property
    def Gc(self) -> np.ndarray:
        """Circulant approximation of ``G``."""
        return circulant(self._first_column(circular=True))

    @cached_property
    def Gd(self) -> np.ndarray:
        """Delay-Doppler noise covariance ``sigma0^2 (F_N kron I_M) G (F_N^H kron I_M)``."""
        B = td_to_dd(self.G.T, self.M, self.N).T
        Gd = np.conj(td_to_dd(np.conj(B), self.M, self.N))
        return self.sigma0_sq * 0.5 * (Gd + Gd.conj().T)

    @cached_property
    def whitener(self) -> np.ndarray:
        """``Gd^(-1/2)``, mapping delay-Doppler noise to unit covariance."""
        return hermitian_inv_sqrt(self.Gd)

    @cached_property
    def noise_factor(self) -> np.ndarray:
        """Square factor ``F`` with ``F F^H = sigma0^2 G``, used to draw noise."""
        cov = self.sigma0_sq * self.G
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            # truncated G can be marginally indefinite for small alpha
            return hermitian_sqrt(cov)


def build_noise_correlation(cfg: PulseConfig, M: int, N: int, c: int, sigma0_sq: float) -> NoiseCorrelation:
    """
    Assemble the noise-correlation record for an M x N frame.

    Parameters
    ----------
    cfg : PulseConfig
    M, N : int
        Delay and Doppler bin counts.
    c : int
        Half cyclic-prefix length; the ISI band spans lags up to ``2c``.
    sigma0_sq : float
        Noise spectral density.

    Returns
    -------
    NoiseCorrelation
    """
    if M * N <= 4 * c:
        raise ConfigurationError(f"need M*N > 4c, got M*N={M * N}, c={c}")
    if sigma0_sq < 0:
        raise ConfigurationError("sigma0_sq must be non-negative")
    taps = isi_taps(cfg, c)
    taps.setflags(write=False)
    return NoiseCorrelation(taps=taps, M=M, N=N, c=c, sigma0_sq=float(sigma0_sq))
