"""
Reduced-complexity LMMSE detection for OTFS-FTN frames.

The receive window is modelled with a periodic band channel ``Hs`` whose row
``r`` touches columns ``r .. r+2c`` (mod MN). The LMMSE weight matrix

    W1 = Hs Hs^H + (sigma0^2 / sigma_x^2) Gc

is then a periodic band of half-width ``2c``. Partitioning it as

    W1 = [[R, A], [B, C]],   R of size MN-2c,

gives ``L = [[L_R, 0], [D, E]]`` and ``U = [[U_R, J], [0, K]]`` with a banded
LU of ``R``, ``J = L_R^-1 A``, ``D = B U_R^-1`` and ``E K = C - D J``. Every
step costs ``O(MN c^2)``.

Index map: the printed channel rows are 1-based (row ``k`` starts after
``k-1`` zeros); storage here is 0-based, so row ``r`` starts at column ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numba import njit

from .channel import ChannelRealization
from .errors import ConditioningError, DimensionError
from .modem import SystemConfig
from .numeric import td_to_dd
from .pulse import NoiseCorrelation, isi_taps

#: Smallest pivot magnitude accepted by the LU kernels.
PIVOT_TOL = 1e-12

#: Fill-in below this magnitude is set to zero. The corner blocks decay
#: geometrically along the band and would otherwise reach subnormal values,
#: which slow the kernels down by orders of magnitude.
FLUSH_TOL = 1e-250

_BAND_DTYPE = np.dtype("<c16")


@dataclass(frozen=True, eq=False)
class SparseChannelMatrix:
    """
    Periodic band channel matrix.

    Attributes
    ----------
    band : numpy.ndarray
        Shape (MN, 2c+1); ``band[r, j]`` is the entry at column ``(r + j) mod MN``.
    c : int
        Half cyclic-prefix length.
    """

    band: np.ndarray
    c: int

    @property
    def MN(self) -> int:
        return self.band.shape[0]

    @property
    def nnz(self) -> int:
        return self.band.size

    def dense(self) -> np.ndarray:
        MN = self.MN
        H = np.zeros((MN, MN), dtype=complex)
        rows = np.arange(MN)
        for j in range(self.band.shape[1]):
            H[rows, (rows + j) % MN] += self.band[:, j]
        return H

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """``Hs @ v`` for a vector or a stack of vectors in the last axis."""
        v = np.asarray(v)
        out = np.zeros(v.shape, dtype=complex)
        for j in range(self.band.shape[1]):
            out += self.band[:, j] * np.roll(v, -j, axis=-1)
        return out

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        """``Hs^H @ v``."""
        v = np.asarray(v)
        out = np.zeros(v.shape, dtype=complex)
        for j in range(self.band.shape[1]):
            out += np.roll(np.conj(self.band[:, j]) * v, j, axis=-1)
        return out


def _as_realization(ch) -> ChannelRealization:
    if isinstance(ch, ChannelRealization):
        return ch
    return ch.to_realization()


def build_sparse_H(ch, cfg: SystemConfig) -> SparseChannelMatrix:
    """
    Periodic band approximation of the channel seen by the receive window.

    Parameters
    ----------
    ch : ChannelRealization or EstimatedChannel
        Estimated channels go through the same path as true ones.
    cfg : SystemConfig

    Returns
    -------
    SparseChannelMatrix
        ``band[r, j] = sum_i h_i exp(j 2 pi nu_i (r + c - l_i) / MN) g((j - c + l_i) Tf)``.
    """
    c, MN = cfg.c, cfg.MN
    if 2 * c >= MN:
        raise DimensionError(f"need 2c < MN, got c={c}, MN={MN}")
    ch = _as_realization(ch)
    taps = isi_taps(cfg.pulse, c)
    rows = np.arange(MN)
    band = np.zeros((MN, 2 * c + 1), dtype=complex)
    for tap in ch.taps:
        phase = tap.gain * np.exp(2j * np.pi * tap.doppler * (rows + c - tap.delay) / MN)
        for j in range(2 * c + 1):
            lag = abs(j - c + tap.delay)
            if lag <= 2 * c:
                band[:, j] += phase * taps[lag]
    return SparseChannelMatrix(band=band, c=c)


def band_to_dense(band: np.ndarray) -> np.ndarray:
    """Expand periodic band storage of half-width ``(width-1)/2`` to a dense matrix."""
    MN, width = band.shape
    half = (width - 1) // 2
    W = np.zeros((MN, MN), dtype=band.dtype)
    rows = np.arange(MN)
    for o in range(width):
        W[rows, (rows + o - half) % MN] += band[:, o]
    return W


def build_W1(
    Hs: SparseChannelMatrix, noise: NoiseCorrelation, sigma_x_sq: float = 1.0, whiten: bool = True
) -> np.ndarray:
    """
    Band storage of ``Hs Hs^H + (sigma0^2 / sigma_x^2) Gc``.

    Parameters
    ----------
    Hs : SparseChannelMatrix
    noise : NoiseCorrelation
    sigma_x_sq : float
        Symbol energy; the noise term is scaled by ``sigma0^2 / sigma_x^2``.
    whiten : bool
        Use the noise correlation ``Gc``. When False the noise is treated as
        white with the same per-sample power, ``g(0) I``.

    Returns
    -------
    numpy.ndarray
        Shape (MN, 4c+1); entry ``[r, o]`` sits at column ``(r + o - 2c) mod MN``.
        The lower half is the conjugate mirror of the upper half, so the
        result is exactly Hermitian.
    """
    c, MN = Hs.c, Hs.MN
    if noise.MN != MN or noise.c != c:
        raise DimensionError("noise record does not match the channel matrix")
    bw = 2 * c
    H = Hs.band
    W = np.zeros((MN, 2 * bw + 1), dtype=complex)
    for d in range(bw + 1):
        acc = np.zeros(MN, dtype=complex)
        shifted = np.roll(H, -d, axis=0)
        for j in range(d, bw + 1):
            acc += H[:, j] * np.conj(shifted[:, j - d])
        W[:, bw + d] = acc
    W[:, bw] = W[:, bw].real
    ratio = noise.sigma0_sq / sigma_x_sq
    if whiten:
        W[:, bw:] += ratio * noise.taps
    else:
        W[:, bw] += ratio * noise.taps[0]
    for d in range(1, bw + 1):
        W[:, bw - d] = np.conj(np.roll(W[:, bw + d], d))
    return W


@njit(cache=True)
def _band_lu(a, bw, tol):
    # in-place Doolittle on band storage a[i, j - i + bw]; unit lower factor
    n = a.shape[0]
    for k in range(n):
        piv = a[k, bw]
        if abs(piv) < tol:
            return k
        for i in range(k + 1, min(k + bw + 1, n)):
            lik = a[i, k - i + bw] / piv
            a[i, k - i + bw] = lik
            for j in range(k + 1, min(k + bw + 1, n)):
                a[i, j - i + bw] -= lik * a[k, j - k + bw]
    return -1


@njit(cache=True)
def _unit_lower_solve(a, bw, rhs, flush):
    # forward substitution with the unit band factor; row i looks back at most 2c rows
    n = a.shape[0]
    x = rhs.copy()
    for i in range(n):
        for k in range(max(0, i - bw), i):
            lik = a[i, k - i + bw]
            for t in range(x.shape[1]):
                x[i, t] -= lik * x[k, t]
        for t in range(x.shape[1]):
            if abs(x[i, t]) < flush:
                x[i, t] = 0.0
    return x


@njit(cache=True)
def _upper_h_solve(a, bw, rhs, flush):
    # forward substitution with U^H, the conjugate transpose of the upper band factor
    n = a.shape[0]
    x = rhs.copy()
    for i in range(n):
        for k in range(max(0, i - bw), i):
            uki = np.conj(a[k, i - k + bw])
            for t in range(x.shape[1]):
                x[i, t] -= uki * x[k, t]
        d = np.conj(a[i, bw])
        for t in range(x.shape[1]):
            x[i, t] /= d
            if abs(x[i, t]) < flush:
                x[i, t] = 0.0
    return x


@njit(cache=True)
def _upper_solve_with_corner(a, bw, J, x2, rhs):
    # back substitution over the band plus the wraparound columns held in J
    n = a.shape[0]
    x = rhs.copy()
    for i in range(n - 1, -1, -1):
        for j in range(i + 1, min(i + bw + 1, n)):
            uij = a[i, j - i + bw]
            for t in range(x.shape[1]):
                x[i, t] -= uij * x[j, t]
        for m in range(J.shape[1]):
            jim = J[i, m]
            for t in range(x.shape[1]):
                x[i, t] -= jim * x2[m, t]
        d = a[i, bw]
        for t in range(x.shape[1]):
            x[i, t] /= d
    return x


@njit(cache=True)
def _dense_lu(S, tol):
    n = S.shape[0]
    E = np.eye(n, dtype=S.dtype)
    K = S.copy()
    for k in range(n):
        if abs(K[k, k]) < tol:
            return E, K, k
        for i in range(k + 1, n):
            lik = K[i, k] / K[k, k]
            E[i, k] = lik
            K[i, k] = 0.0
            for j in range(k + 1, n):
                K[i, j] -= lik * K[k, j]
    return E, K, -1


@njit(cache=True)
def _dense_unit_lower_solve(E, rhs):
    x = rhs.copy()
    for i in range(E.shape[0]):
        for k in range(i):
            for t in range(x.shape[1]):
                x[i, t] -= E[i, k] * x[k, t]
    return x


@njit(cache=True)
def _dense_upper_solve(K, rhs):
    x = rhs.copy()
    for i in range(K.shape[0] - 1, -1, -1):
        for k in range(i + 1, K.shape[0]):
            for t in range(x.shape[1]):
                x[i, t] -= K[i, k] * x[k, t]
        for t in range(x.shape[1]):
            x[i, t] /= K[i, i]
    return x


@dataclass(frozen=True, eq=False)
class LuPartition:
    """
    Block LU factors of ``W1``.

    Attributes
    ----------
    lu : numpy.ndarray
        Band storage (MN-2c, 4c+1) holding ``L_R`` (unit diagonal implied)
        below the diagonal and ``U_R`` on and above it.
    J : numpy.ndarray
        ``L_R^-1 A``, shape (MN-2c, 2c).
    D : numpy.ndarray
        ``B U_R^-1``, shape (2c, MN-2c).
    E, K : numpy.ndarray
        Unit lower and upper factors of the Schur complement ``C - D J``.
    c : int
    """

    lu: np.ndarray
    J: np.ndarray
    D: np.ndarray
    E: np.ndarray
    K: np.ndarray
    c: int

    @property
    def n(self) -> int:
        return self.lu.shape[0]

    @property
    def MN(self) -> int:
        return self.n + 2 * self.c

    def _band_factors(self) -> tuple[np.ndarray, np.ndarray]:
        bw = 2 * self.c
        full = np.zeros((self.n, self.n), dtype=complex)
        rows = np.arange(self.n)
        for o in range(2 * bw + 1):
            cols = rows + o - bw
            ok = (cols >= 0) & (cols < self.n)
            full[rows[ok], cols[ok]] = self.lu[rows[ok], o]
        L = np.tril(full, -1) + np.eye(self.n)
        return L, np.triu(full)

    def dense_L(self) -> np.ndarray:
        L_R, _ = self._band_factors()
        return np.block([[L_R, np.zeros((self.n, 2 * self.c))], [self.D, self.E]])

    def dense_U(self) -> np.ndarray:
        _, U_R = self._band_factors()
        return np.block([[U_R, self.J], [np.zeros((2 * self.c, self.n)), self.K]])


def _partition(W1: np.ndarray, c: int):
    MN = W1.shape[0]
    bw = 2 * c
    n = MN - bw
    rows = np.arange(n)
    R = W1[:n].copy()
    A = np.zeros((n, bw), dtype=complex)
    for o in range(2 * bw + 1):
        cols = rows + o - bw
        outside = (cols < 0) | (cols >= n)
        # entries that leave the leading block land in the last 2c columns
        A[rows[outside], np.mod(cols[outside], MN) - n] += R[outside, o]
        R[outside, o] = 0.0
    return R, A, _corner(W1, c)


def _corner(W1: np.ndarray, c: int) -> np.ndarray:
    MN = W1.shape[0]
    bw = 2 * c
    n = MN - bw
    C = np.zeros((bw, bw), dtype=complex)
    for i in range(bw):
        for o in range(2 * bw + 1):
            col = (n + i + o - bw) % MN
            if col >= n:
                C[i, col - n] += W1[n + i, o]
    return C


def lu_factorize(W1: np.ndarray, c: int) -> LuPartition:
    """
    Block LU of the periodic band matrix ``W1`` without pivoting.

    Parameters
    ----------
    W1 : numpy.ndarray
        Band storage from :func:`build_W1`.
    c : int

    Returns
    -------
    LuPartition

    Raises
    ------
    ConditioningError
        If a pivot falls below ``PIVOT_TOL``.
    """
    W1 = np.asarray(W1, dtype=complex)
    bw = 2 * c
    if W1.ndim != 2 or W1.shape[1] != 2 * bw + 1:
        raise DimensionError(f"expected band storage with {2 * bw + 1} columns, got {W1.shape}")
    MN = W1.shape[0]
    if MN <= 2 * bw:
        raise DimensionError(f"need MN > 4c, got MN={MN}, c={c}")
    n = MN - bw
    R, A, C = _partition(W1, c)
    bad = _band_lu(R, bw, PIVOT_TOL)
    if bad >= 0:
        raise ConditioningError(f"pivot below {PIVOT_TOL:g} at row {bad}")
    J = _unit_lower_solve(R, bw, A, FLUSH_TOL)
    # B = A^H because W1 is Hermitian, so D^H = U_R^-H A
    D = np.conj(_upper_h_solve(R, bw, A, FLUSH_TOL)).T.copy()
    E, K, bad = _dense_lu(C - D @ J, PIVOT_TOL)
    if bad >= 0:
        raise ConditioningError(f"pivot below {PIVOT_TOL:g} at row {n + bad}")
    return LuPartition(lu=R, J=J, D=D, E=E, K=K, c=c)


def _columns(z: np.ndarray, MN: int) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] != MN:
        raise DimensionError(f"expected length {MN}, got {z.shape[-1]}")
    single = z.ndim == 1
    return np.ascontiguousarray(np.atleast_2d(z).T), single


def forward_substitute(part: LuPartition, z: np.ndarray) -> np.ndarray:
    """
    ``W2 = L^-1 z``.

    The band part runs first (rows ramp up to the full band after ``2c``
    steps), then the last ``2c`` rows are dense: ``E^-1 (z2 - D y1)``.
    """
    Z, single = _columns(z, part.MN)
    n, bw = part.n, 2 * part.c
    y1 = _unit_lower_solve(part.lu, bw, Z[:n], 0.0)
    y2 = _dense_unit_lower_solve(part.E, Z[n:] - part.D @ y1)
    out = np.vstack([y1, y2])
    return out[:, 0] if single else out.T


def backward_substitute(part: LuPartition, w2: np.ndarray) -> np.ndarray:
    """
    ``W3 = U^-1 W2``.

    The last ``2c`` unknowns come from ``K``; the band sweep then subtracts
    the wraparound columns ``J`` on every row.
    """
    W, single = _columns(w2, part.MN)
    n, bw = part.n, 2 * part.c
    x2 = _dense_upper_solve(part.K, W[n:])
    x1 = _upper_solve_with_corner(part.lu, bw, part.J, x2, W[:n])
    out = np.vstack([x1, x2])
    return out[:, 0] if single else out.T


def _to_dd(w4: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    # undo the transmit-side cyclic delay, then Q^H
    return td_to_dd(np.roll(w4, -cfg.c, axis=-1), cfg.M, cfg.N)


def equalize(
    z: np.ndarray,
    Hs: SparseChannelMatrix,
    noise: NoiseCorrelation,
    cfg: SystemConfig,
    part: LuPartition | None = None,
    whiten: bool = True,
) -> np.ndarray:
    """
    Reduced-complexity LMMSE estimate of the delay-Doppler symbols.

    Parameters
    ----------
    z : numpy.ndarray
        Receive window(s), length MN in the last axis.
    Hs : SparseChannelMatrix
    noise : NoiseCorrelation
    cfg : SystemConfig
    part : LuPartition, optional
        Reuse a factorization of the same channel.
    whiten : bool
        Account for the noise correlation; see :func:`build_W1`.

    Returns
    -------
    numpy.ndarray
        Symbol estimates in vector order ``l + M*k``, same leading shape as ``z``.
    """
    if part is None:
        part = lu_factorize(build_W1(Hs, noise, cfg.sigma_x_sq, whiten), cfg.c)
    w3 = backward_substitute(part, forward_substitute(part, z))
    return _to_dd(Hs.rmatvec(w3), cfg)


def dense_reduced_lmmse(z: np.ndarray, Hs: SparseChannelMatrix, noise: NoiseCorrelation, cfg: SystemConfig) -> np.ndarray:
    """Dense evaluation of the reduced detector, used as an oracle."""
    H = Hs.dense()
    W = H @ H.conj().T + (noise.sigma0_sq / cfg.sigma_x_sq) * noise.Gc
    w3 = np.linalg.solve(W, np.atleast_2d(z).T)
    x = _to_dd((H.conj().T @ w3).T, cfg)
    return x[0] if np.ndim(z) == 1 else x


def full_lmmse(z: np.ndarray, H_t: np.ndarray, G: np.ndarray, sigma0_sq: float, cfg: SystemConfig) -> np.ndarray:
    """
    Full-complexity LMMSE detector with the exact noise correlation.

    Parameters
    ----------
    z : numpy.ndarray
        Receive window(s).
    H_t : numpy.ndarray
        Dense map from the modulated frame to the receive window, as built by
        :func:`otfsftn.channel.time_domain_channel`.
    G : numpy.ndarray
        Exact noise correlation (Toeplitz).
    sigma0_sq : float
    cfg : SystemConfig

    Returns
    -------
    numpy.ndarray
        Symbol estimates in vector order.
    """
    W = H_t @ H_t.conj().T + (sigma0_sq / cfg.sigma_x_sq) * G
    w = scipy.linalg.solve(W, np.atleast_2d(z).T, assume_a="her")
    x = td_to_dd((H_t.conj().T @ w).T, cfg.M, cfg.N)
    return x[0] if np.ndim(z) == 1 else x


def write_w1(path, W1: np.ndarray, c: int) -> None:
    """
    Dump band storage: little-endian int64 header ``(MN, c)`` followed by the
    row-major band entries as float64 (re, im) pairs.
    """
    W1 = np.asarray(W1)
    with open(path, "wb") as fh:
        fh.write(np.array([W1.shape[0], c], dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(W1, dtype=_BAND_DTYPE).tobytes())


def read_w1(path) -> tuple[np.ndarray, int]:
    """Inverse of :func:`write_w1`; returns ``(band, c)``."""
    raw = open(path, "rb").read()
    MN, c = np.frombuffer(raw[:16], dtype="<i8")
    band = np.frombuffer(raw[16:], dtype=_BAND_DTYPE).reshape(int(MN), 4 * int(c) + 1)
    return band.astype(complex), int(c)
