"""PSK constellations, Gray bit mapping and hard sector detection.

Constellation points sit at the odd multiples of pi/order,
point[i] = exp(j*pi*(2*(i+1)+1)/order) for 0-based i, i.e. the offset
(rotated) convention: QPSK points are at 3pi/4, 5pi/4, 7pi/4, pi/4.  The
list order is increasing angle, and the fixed bit mapping is the
binary-reflected Gray code over that order: point i carries the bit pattern
gray(i) = i ^ (i >> 1), MSB first.  Decision regions are the infinite
circle sectors of half-aperture theta = pi/order around each point; exact
boundary ties (and z = 0) resolve to the smaller point index.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PskConstellation",
    "make_constellation",
    "bits_to_symbols",
    "symbols_to_bits",
    "detect",
    "detect_symbols",
    "count_bit_errors",
]


@dataclass(frozen=True)
class PskConstellation:
    order: int
    points: np.ndarray          # unit-modulus complex points, increasing angle
    half_aperture: float        # theta = pi/order
    bits_per_symbol: int
    gray_codes: np.ndarray = field(repr=False)    # gray_codes[i] = bits carried by point i
    index_of_code: np.ndarray = field(repr=False)  # inverse table


def make_constellation(order):
    """Build the order-PSK constellation with Gray bit tables.

    order must be a power of two >= 2.
    """
    if order < 2 or order & (order - 1) != 0:
        raise ValueError(f"PSK order must be a power of two >= 2, got {order}")
    idx = np.arange(1, order + 1)
    points = np.exp(1j * np.pi * (2 * idx + 1) / order)
    gray = np.arange(order) ^ (np.arange(order) >> 1)
    inverse = np.empty(order, dtype=np.int64)
    inverse[gray] = np.arange(order)
    return PskConstellation(
        order=int(order),
        points=points,
        half_aperture=np.pi / order,
        bits_per_symbol=int(np.log2(order)),
        gray_codes=gray,
        index_of_code=inverse,
    )


def bits_to_symbols(bits, constellation):
    """Gray-map a flat 0/1 array onto constellation points, MSB first."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    b = constellation.bits_per_symbol
    if bits.size % b != 0:
        raise ValueError(f"bit count {bits.size} not divisible by {b}")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("bits must be 0 or 1")
    groups = bits.reshape(-1, b)
    codes = groups @ (1 << np.arange(b - 1, -1, -1))
    return constellation.points[constellation.index_of_code[codes]]


def _point_indices(symbols, constellation):
    """Index of the angle-nearest constellation point for each entry.

    Exact angular ties (sector boundaries, z = 0) go to the smaller index.
    """
    z = np.asarray(symbols, dtype=np.complex128).ravel()
    order = constellation.order
    pts = constellation.points
    # point i sits at angle (2*i + 3)*pi/order; bracket the fractional index
    raw = (np.angle(z) * order / np.pi - 3.0) / 2.0
    i_lo = np.floor(raw).astype(np.int64) % order
    i_hi = (i_lo + 1) % order
    d_lo = _angdist(z, pts[i_lo])
    d_hi = _angdist(z, pts[i_hi])
    idx = np.where(d_lo < d_hi, i_lo, i_hi)
    tie = d_lo == d_hi
    idx[tie] = np.minimum(i_lo, i_hi)[tie]
    idx[z == 0] = 0
    return idx


def symbols_to_bits(symbols, constellation):
    """Demap constellation points to their Gray bit patterns (inverse of
    :func:`bits_to_symbols`)."""
    idx = _point_indices(symbols, constellation)
    codes = constellation.gray_codes[idx]
    b = constellation.bits_per_symbol
    shifts = np.arange(b - 1, -1, -1)
    return ((codes[:, None] >> shifts) & 1).astype(np.int64).ravel()


def detect(z, constellation):
    """Hard-detect one received value to the constellation point whose
    sector contains it.

    Scale invariant: detect(beta*z) == detect(z) for beta > 0.  Boundary
    ties and z == 0 go to the smaller point index.
    """
    return complex(constellation.points[_detect_indices(np.array([z]), constellation)[0]])


def detect_symbols(z, constellation):
    """Vectorized hard detection of a received vector."""
    return constellation.points[_detect_indices(z, constellation)]


def _detect_indices(z, constellation):
    z = np.asarray(z, dtype=np.complex128).ravel()
    if not np.all(np.isfinite(z)):
        raise ValueError("received values must be finite")
    return _point_indices(z, constellation)


def _angdist(z, p):
    return np.abs(np.angle(z * np.conj(p)))


def count_bit_errors(detected, bits, constellation):
    """Hamming distance between the transmitted bits and the demapped
    detected symbols."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    detected = np.asarray(detected, dtype=np.complex128).ravel()
    if detected.size * constellation.bits_per_symbol != bits.size:
        raise ValueError("detected symbol count inconsistent with bit count")
    demapped = symbols_to_bits(detected, constellation)
    return int(np.sum(demapped != bits))
