"""
Numerical primitives: unitary DFT, delay-Doppler/time transforms, Hermitian
matrix functions and colored Gaussian sampling.

Vector convention: a delay-Doppler grid ``X`` of shape (M, N) is vectorized
column-wise, so entry ``X[l, k]`` lands at index ``l + M*k``. The same vector
read row-major as an (N, M) array is the transposed grid ``X.T``.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, InvalidInputError

#: Eigenvalues below this fraction of the largest one are treated as zero.
EIG_FLOOR = 1e-12
#: Relative tolerance of the Hermitian check.
HERMITIAN_TOL = 1e-9


def dft_matrix(n: int) -> np.ndarray:
    """
    Unitary DFT matrix.

    Parameters
    ----------
    n : int
        Size, must be positive.

    Returns
    -------
    numpy.ndarray
        ``F[m, k] = exp(-2j*pi*m*k/n) / sqrt(n)``.
    """
    if n <= 0:
        raise DimensionError(f"DFT size must be positive, got {n}")
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def _check_length(x: np.ndarray, M: int, N: int) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != M * N:
        raise DimensionError(f"expected trailing length M*N={M * N}, got {x.shape[-1]}")
    return x


def dd_to_td(x: np.ndarray, M: int, N: int) -> np.ndarray:
    """
    Map a vectorized delay-Doppler grid to time samples, ``(F_N^H kron I_M) x``.

    Parameters
    ----------
    x : numpy.ndarray
        Vector(s) of length ``M*N`` in the last axis.
    M, N : int
        Delay and Doppler bin counts.

    Returns
    -------
    numpy.ndarray
        Time-domain samples with the same shape as ``x``.
    """
    x = _check_length(x, M, N)
    blocks = x.reshape(x.shape[:-1] + (N, M))
    return np.fft.ifft(blocks, axis=-2, norm="ortho").reshape(x.shape)


def td_to_dd(s: np.ndarray, M: int, N: int) -> np.ndarray:
    """Inverse of :func:`dd_to_td`, ``(F_N kron I_M) s``."""
    s = _check_length(s, M, N)
    blocks = s.reshape(s.shape[:-1] + (N, M))
    return np.fft.fft(blocks, axis=-2, norm="ortho").reshape(s.shape)


def check_hermitian(A: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    """Raise :class:`InvalidInputError` unless ``A`` is square and Hermitian."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
    if np.max(np.abs(A - A.conj().T)) > tol * scale:
        raise InvalidInputError("matrix is not Hermitian")


def hermitian_power(A: np.ndarray, power: float, floor: float = EIG_FLOOR) -> np.ndarray:
    """
    Matrix power of a Hermitian positive semidefinite matrix via ``eigh``.

    Eigenvalues below ``floor * max(eig)`` are clamped to that floor, which
    keeps negative powers finite for nearly singular inputs.
    """
    check_hermitian(A)
    A = 0.5 * (A + np.conj(A).T)
    lam, V = np.linalg.eigh(A)
    lam_max = lam[-1]
    if lam_max <= 0:
        raise InvalidInputError("matrix has no positive eigenvalue")
    lam = np.maximum(lam, floor * lam_max)
    return (V * lam**power) @ V.conj().T


def hermitian_inv_sqrt(A: np.ndarray) -> np.ndarray:
    """Return ``A^(-1/2)`` for Hermitian positive (semi)definite ``A``."""
    return hermitian_power(A, -0.5)


def hermitian_sqrt(A: np.ndarray) -> np.ndarray:
    """Return the Hermitian square root of a positive semidefinite ``A``."""
    check_hermitian(A)
    A = 0.5 * (A + np.conj(A).T)
    lam, V = np.linalg.eigh(A)
    return (V * np.sqrt(np.clip(lam, 0.0, None))) @ V.conj().T


def complex_normal(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    """Draw circularly symmetric CN(0, variance) samples."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_colored_noise(factor: np.ndarray, rng: np.random.Generator, n_samples: int | None = None) -> np.ndarray:
    """
    Draw zero-mean circular Gaussian vectors with covariance ``factor @ factor^H``.

    Parameters
    ----------
    factor : numpy.ndarray
        Square (n, n) covariance factor, e.g. a Cholesky or Hermitian root.
    rng : numpy.random.Generator
    n_samples : int, optional
        Number of vectors. ``None`` returns a single vector of length n.

    Returns
    -------
    numpy.ndarray
        Shape (n,) or (n_samples, n).
    """
    factor = np.asarray(factor)
    if factor.ndim != 2 or factor.shape[0] != factor.shape[1]:
        raise DimensionError(f"covariance factor must be square, got {factor.shape}")
    n = factor.shape[0]
    if n_samples is None:
        return factor @ complex_normal(rng, n)
    w = complex_normal(rng, (n_samples, n))
    return w @ factor.T
