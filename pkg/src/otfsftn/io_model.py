"""
Closed-form delay-Doppler input-output model for RRC-shaped OTFS-FTN and the
cross-ambiguity function of the transmit/receive pulse pair.

The sampled model is unitary, which corresponds to a block duration ``T = 1``
in the scale factor ``T/N`` of the closed form; that factor is therefore ``1/N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, ChannelTap
from .errors import DimensionError
from .modem import SystemConfig
from .pulse import PulseConfig, rc_sample, rrc_sample

@dataclass(frozen=True)
class TheoremParams:
    """
    Truncation of the Doppler-leakage sum.

    ``Ni`` is capped at ``(N - 1) // 2`` when evaluated so every Doppler bin
    enters the sum at most once.
    """

    Ni: int = 5

    def effective_Ni(self, N: int) -> int:
        return max(0, min(self.Ni, (N - 1) // 2))


def rho(q, kappa, N: int):
    """
    Doppler leakage kernel ``sum_{n<N} exp(j 2 pi n (q + kappa) / N)``.

    Evaluated in closed form as ``exp(j pi x (N-1)/N) sin(pi x) / sin(pi x / N)``
    with ``x = q + kappa`` reduced to ``[-N/2, N/2]``, which stays accurate for
    offsets close to a multiple of ``N``.

    Parameters
    ----------
    q : int or array_like
        Integer bin offset.
    kappa : float or array_like
        Fractional Doppler.
    N : int
        Number of Doppler bins.

    Returns
    -------
    complex or numpy.ndarray
    """
    x = np.asarray(q, dtype=float) + np.asarray(kappa, dtype=float)
    r = x - N * np.round(x / N)
    zero = r == 0
    safe = np.where(zero, 1.0, r)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(zero, float(N), np.sin(np.pi * safe) / np.sin(np.pi * safe / N))
    out = np.exp(1j * np.pi * r * (N - 1) / N) * ratio
    return out if out.ndim else complex(out)


def _g(lag, cfg: SystemConfig):
    lag = np.asarray(lag)
    vals = np.asarray(rc_sample(lag * cfg.alpha, cfg.pulse), dtype=float)
    return np.where(np.abs(lag) <= 2 * cfg.c, vals, 0.0)


def gamma(tap: ChannelTap, k, l, q, cfg: SystemConfig):
    """
    Coefficient linking transmit bin ``([k - k_i + q]_N, [l - l_i]_M)`` to receive bin ``(k, l)``.

    Parameters
    ----------
    tap : ChannelTap
    k, l : int or array_like
        Receive Doppler and delay bins, ``0 <= l < M``.
    q : int
        Doppler leakage offset.
    cfg : SystemConfig

    Returns
    -------
    complex or numpy.ndarray
    """
    k = np.asarray(k)
    l = np.asarray(l)
    if np.any(l < 0) or np.any(l >= cfg.M):
        raise DimensionError("delay bin outside [0, M)")
    N = cfg.N
    r = rho(q, tap.doppler_frac, N)
    same_block = l >= tap.delay
    lag = np.where(same_block, l - tap.delay, l - tap.delay + cfg.M)
    wrap = np.exp(-2j * np.pi * np.mod(k - tap.doppler_int + q, N) / N)
    out = _g(lag, cfg) / N * np.where(same_block, r, (r - 1.0) * wrap)
    return out if out.ndim else complex(out)


def reference_gain(tap: ChannelTap, cfg: SystemConfig) -> complex:
    """Tap gain re-referenced from frame start to the start of the receive window."""
    return tap.gain * np.exp(2j * np.pi * tap.doppler * cfg.c / cfg.MN)


def predict_dd_output(
    Xt: np.ndarray, ch: ChannelRealization, params: TheoremParams, cfg: SystemConfig
) -> np.ndarray:
    """
    Noiseless received delay-Doppler grid predicted by the closed-form model.

    Parameters
    ----------
    Xt : numpy.ndarray
        Transmitted grid of shape (N, M), indexed ``[doppler, delay]``.
    ch : ChannelRealization
    params : TheoremParams
    cfg : SystemConfig

    Returns
    -------
    numpy.ndarray
        Shape (N, M).
    """
    Xt = np.asarray(Xt)
    if Xt.shape != (cfg.N, cfg.M):
        raise DimensionError(f"expected grid shape ({cfg.N}, {cfg.M}), got {Xt.shape}")
    N, M, MN = cfg.N, cfg.M, cfg.MN
    kk = np.arange(N)[:, None]
    ll = np.arange(M)[None, :]
    Ni = params.effective_Ni(N)
    Y = np.zeros((N, M), dtype=complex)
    for tap in ch.taps:
        src_l = np.mod(ll - tap.delay, M)
        phase = reference_gain(tap, cfg) * np.exp(2j * np.pi * (ll - tap.delay) * tap.doppler / MN)
        for q in range(-Ni, Ni + 1):
            src_k = np.mod(kk - tap.doppler_int + q, N)
            Y += phase * gamma(tap, kk, ll, q, cfg) * Xt[src_k, src_l]
    return Y


def cross_ambiguity(offset_t: float, offset_f: float, cfg: PulseConfig, span: float = 64.0) -> complex:
    """
    Cross-ambiguity of the RRC pair by numerical quadrature.

    ``A(t, f) = int h(t' - t) h(t') exp(-j 2 pi f (t' - t)) dt'`` evaluated with
    step ``Tf/32`` over the support of pulses truncated to ``|t| <= span*T0``.
    """
    step = cfg.Tf / 32
    lo = max(-span, offset_t - span) * cfg.T0
    hi = min(span, offset_t + span) * cfg.T0
    if hi <= lo:
        return 0j
    tp = np.arange(np.ceil(lo / step), np.floor(hi / step) + 1) * step
    integrand = rrc_sample(tp - offset_t, cfg) * rrc_sample(tp, cfg) * np.exp(-2j * np.pi * offset_f * (tp - offset_t))
    return complex(np.sum(integrand) * step)
