"""Interleaved real <-> complex conversions for vectors and channel matrices.

The canonical real layout of a length-M complex vector is the length-2M
interleaved vector [Re a_1, Im a_1, ..., Re a_M, Im a_M].  This is the one
layout used everywhere in the package (the per-antenna power selectors pick
entries 2m-1 and 2m, 1-based); no stacked [Re; Im] variant is supported.
All arithmetic is double precision.
"""

import numpy as np

__all__ = ["to_real", "to_complex", "to_real_channel", "rotate_channel"]


def to_real(v):
    """Interleave a complex vector into its real representation.

    [1+2j, 3-1j] -> [1., 2., 3., -1.].  Length doubles; empty stays empty.
    """
    v = np.asarray(v, dtype=np.complex128).ravel()
    out = np.empty(2 * v.size, dtype=np.float64)
    out[0::2] = v.real
    out[1::2] = v.imag
    return out


def to_complex(v):
    """Inverse of :func:`to_real`.  Raises ValueError on odd-length input."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size % 2 != 0:
        raise ValueError(f"interleaved real vector must have even length, got {v.size}")
    return v[0::2] + 1j * v[1::2]


def to_real_channel(H):
    """Real 2K x 2M embedding of a complex K x M channel matrix.

    Each entry h becomes the 2x2 block [[Re h, -Im h], [Im h, Re h]], so that
    to_real_channel(H) @ to_real(x) == to_real(H @ x) for every complex x.
    """
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2:
        raise ValueError("channel must be a 2-D matrix")
    K, M = H.shape
    out = np.empty((2 * K, 2 * M), dtype=np.float64)
    out[0::2, 0::2] = H.real
    out[0::2, 1::2] = -H.imag
    out[1::2, 0::2] = H.imag
    out[1::2, 1::2] = H.real
    return out


def rotate_channel(H, s, tol=1e-9):
    """Per-user symbol rotation diag(conj(s)) @ H.

    Row k of the result is conj(s_k) times row k of H, so the rotated
    noiseless receive vector puts each user's symbol of interest on the
    positive real axis.  Symbols must be unit modulus (PSK).
    """
    H = np.asarray(H, dtype=np.complex128)
    s = np.asarray(s, dtype=np.complex128).ravel()
    if H.ndim != 2 or H.shape[0] != s.size:
        raise ValueError("channel row count must match symbol count")
    if np.any(np.abs(np.abs(s) - 1.0) > tol):
        raise ValueError("rotation requires unit-modulus (PSK) symbols")
    return s.conj()[:, None] * H
