"""
Gray-labelled square constellations.

Each axis of an ``L``-ary PAM uses a binary-reflected Gray code with label 0
on the most positive level. BPSK maps bit 0 to ``+1`` and bit 1 to ``-1``;
QPSK, 16QAM and 64QAM take the first half of each label for the in-phase
axis and the second half for quadrature. Points have unit mean energy.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

BITS_PER_SYMBOL = {"BPSK": 1, "QPSK": 2, "16QAM": 4, "64QAM": 6}


def bits_per_symbol(constellation: str) -> int:
    try:
        return BITS_PER_SYMBOL[constellation.upper()]
    except KeyError:
        raise ConfigurationError(f"unknown constellation {constellation!r}") from None


def _axis_bits(constellation: str) -> tuple[int, bool]:
    b = bits_per_symbol(constellation)
    if b == 1:
        return 1, False
    return b // 2, True


def _pam_levels(m: int) -> tuple[np.ndarray, np.ndarray]:
    L = 2**m
    idx = np.arange(L)
    gray = idx ^ (idx >> 1)
    levels = (L - 1) - 2 * idx
    level_of_label = np.empty(L)
    level_of_label[gray] = levels
    return level_of_label, gray


def _bits_to_int(bits: np.ndarray) -> np.ndarray:
    weights = 1 << np.arange(bits.shape[-1] - 1, -1, -1)
    return bits @ weights


def _int_to_bits(vals: np.ndarray, m: int) -> np.ndarray:
    return (vals[..., None] >> np.arange(m - 1, -1, -1)) & 1


def _scale(constellation: str) -> float:
    m, quad = _axis_bits(constellation)
    L = 2**m
    energy = (L * L - 1) / 3.0
    return 1.0 / np.sqrt(2 * energy if quad else energy)


def map_bits(bits: np.ndarray, constellation: str) -> np.ndarray:
    """
    Map a bit array to unit-energy symbols.

    Parameters
    ----------
    bits : numpy.ndarray
        0/1 integers, length a multiple of the bits per symbol.
    constellation : str
        ``BPSK``, ``QPSK``, ``16QAM`` or ``64QAM``.
    """
    b = bits_per_symbol(constellation)
    m, quad = _axis_bits(constellation)
    bits = np.asarray(bits, dtype=np.int64).reshape(-1, b)
    level_of_label, _ = _pam_levels(m)
    scale = _scale(constellation)
    re = level_of_label[_bits_to_int(bits[:, :m])]
    if not quad:
        return scale * re.astype(complex)
    im = level_of_label[_bits_to_int(bits[:, m:])]
    return scale * (re + 1j * im)


def _slice_axis(v: np.ndarray, m: int) -> np.ndarray:
    L = 2**m
    idx = np.clip(np.round(((L - 1) - v) / 2), 0, L - 1).astype(np.int64)
    return idx ^ (idx >> 1)


def demap(x_hat: np.ndarray, constellation: str, sigma_x: float = 1.0) -> np.ndarray:
    """
    Minimum-distance hard decisions.

    Parameters
    ----------
    x_hat : numpy.ndarray
        Equalized symbols at amplitude scale ``sigma_x``.
    constellation : str
    sigma_x : float
        Symbol amplitude, the square root of the mean symbol energy.

    Returns
    -------
    numpy.ndarray
        Flat 0/1 array, ``bits_per_symbol`` bits per symbol.
    """
    m, quad = _axis_bits(constellation)
    v = np.asarray(x_hat).reshape(-1) / (sigma_x * _scale(constellation))
    out = [_int_to_bits(_slice_axis(v.real, m), m)]
    if quad:
        out.append(_int_to_bits(_slice_axis(v.imag, m), m))
    return np.concatenate(out, axis=-1).reshape(-1)


def random_symbols(n: int, constellation: str, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` random symbols; returns ``(bits, symbols)``."""
    bits = rng.integers(0, 2, n * bits_per_symbol(constellation))
    return bits, map_bits(bits, constellation)
