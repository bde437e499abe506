"""Precision-parametric IEEE 754 binary floating-point utilities.

A Python ``float`` is the carrier for values of both supported formats:
every binary32 value is exactly representable in binary64, so binary32
quantities are stored as Python floats whose bit patterns happen to fit
the narrower format. Operations that depend on the format take an
explicit :class:`Precision`.

Only round-to-nearest, ties-to-even is supported, and the radix is 2.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

__all__ = [
    "Precision",
    "BINARY32",
    "BINARY64",
    "FloatParts",
    "decompose",
    "recompose",
    "ulp_of",
    "ulp_distance",
    "next_up",
    "next_down",
    "round_int_scaled",
]


@dataclass(frozen=True)
class Precision:
    """An IEEE 754 binary interchange format."""

    name: str
    p: int  # significand bits, hidden bit included
    emin: int  # smallest normal exponent: the least normal value is 2**emin
    emax: int  # binade [2**emax, 2**(emax+1)) holds the largest finite value

    @property
    def unit_roundoff(self) -> float:
        """u = 2**-p, half of ulp(1)."""
        return math.ldexp(1.0, -self.p)

    @property
    def min_normal(self) -> float:
        return math.ldexp(1.0, self.emin)

    @property
    def max_finite(self) -> float:
        return math.ldexp(2.0 - math.ldexp(1.0, 1 - self.p), self.emax)

    @property
    def min_subnormal_exp(self) -> int:
        """Exponent of the least subnormal; the fixed E of subnormal FloatParts."""
        return self.emin - self.p + 1

    @property
    def exponent_field_bits(self) -> int:
        return (self.emax + 1).bit_length()


BINARY32 = Precision("binary32", 24, -126, 127)
BINARY64 = Precision("binary64", 53, -1022, 1023)


@dataclass(frozen=True)
class FloatParts:
    """Sign/significand/exponent triple with value sign * significand * 2**exponent.

    Normal values carry 2**(p-1) <= significand < 2**p; subnormals carry
    0 < significand < 2**(p-1) with exponent fixed at emin - p + 1.
    """

    sign: int
    significand: int
    exponent: int


def _to_bits(x: float, prec: Precision) -> int:
    """IEEE bit pattern of a non-negative finite float, as an unsigned int."""
    if prec.p == 53:
        return struct.unpack("<Q", struct.pack("<d", x))[0]
    if prec.p == 24:
        try:
            packed = struct.pack("<f", x)
        except OverflowError:
            raise ValueError(f"{x!r} is not representable in binary32") from None
        if struct.unpack("<f", packed)[0] != x:
            raise ValueError(f"{x!r} is not representable in binary32")
        return struct.unpack("<I", packed)[0]
    raise ValueError(f"unsupported precision {prec.name!r}")


def _from_bits(bits: int, prec: Precision) -> float:
    if prec.p == 53:
        return struct.unpack("<d", struct.pack("<Q", bits))[0]
    return float(struct.unpack("<f", struct.pack("<I", bits))[0])


def _rank(x: float, prec: Precision) -> int:
    """Monotone bijection from finite floats to integers; 0 at zero."""
    if x == 0.0:
        return 0
    if x > 0.0:
        return _to_bits(x, prec)
    return -_to_bits(-x, prec)


def _unrank(r: int, prec: Precision) -> float:
    if r == 0:
        return 0.0
    if r > 0:
        return _from_bits(r, prec)
    return -_from_bits(-r, prec)


def _require_finite(x: float, what: str = "argument") -> None:
    if math.isnan(x):
        raise ValueError(f"{what} is NaN")
    if math.isinf(x):
        raise ValueError(f"{what} is infinite")


def decompose(x: float, prec: Precision = BINARY64) -> FloatParts:
    """Split a finite nonzero float into exact sign/significand/exponent fields.

    Rejects NaN, infinities and zeros; raises ValueError if `x` does not
    fit the requested format bit-exactly.
    """
    _require_finite(x)
    if x == 0.0:
        raise ValueError("cannot decompose zero")
    sign = 1 if x > 0.0 else -1
    bits = _to_bits(abs(x), prec)
    frac_bits = prec.p - 1
    frac = bits & ((1 << frac_bits) - 1)
    biased = bits >> frac_bits
    if biased == 0:
        return FloatParts(sign, frac, prec.min_subnormal_exp)
    significand = frac | (1 << frac_bits)
    exponent = (biased - prec.emax) - frac_bits
    return FloatParts(sign, significand, exponent)


def recompose(parts: FloatParts, prec: Precision = BINARY64) -> float:
    """Inverse of :func:`decompose`; exact for in-range parts."""
    if parts.sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    m = parts.significand
    if not 0 < m < (1 << prec.p):
        raise ValueError("significand out of range")
    return math.ldexp(parts.sign * m, parts.exponent)


def ulp_of(x: float, prec: Precision = BINARY64) -> float:
    """Spacing of floats at |x|: 2**(e-p+1) for x in [2**e, 2**(e+1))."""
    _require_finite(x)
    if x == 0.0:
        raise ValueError("ulp of zero is undefined here")
    a = abs(x)
    _to_bits(a, prec)  # representability check
    if a < prec.min_normal:
        return math.ldexp(1.0, prec.min_subnormal_exp)
    _, e = math.frexp(a)  # a in [2**(e-1), 2**e)
    return math.ldexp(1.0, e - prec.p)


def ulp_distance(a: float, b: float, prec: Precision = BINARY64) -> int:
    """Number of floats strictly between a and b, plus one if they differ.

    Symmetric, zero iff a == b. Mixed-sign pairs are rejected (the intended
    operands, reciprocal square roots, are always positive).
    """
    _require_finite(a, "first argument")
    _require_finite(b, "second argument")
    ra = _rank(a, prec)
    rb = _rank(b, prec)
    if (ra > 0 and rb < 0) or (ra < 0 and rb > 0):
        raise ValueError("ulp distance of a mixed-sign pair is not defined")
    return abs(ra - rb)


def next_up(x: float, prec: Precision = BINARY64) -> float:
    """Smallest float of the format strictly greater than x."""
    _require_finite(x)
    return _unrank(_rank(x, prec) + 1, prec)


def next_down(x: float, prec: Precision = BINARY64) -> float:
    """Largest float of the format strictly less than x."""
    _require_finite(x)
    return _unrank(_rank(x, prec) - 1, prec)


def round_int_scaled(m: int, exp2: int, prec: Precision = BINARY64) -> float:
    """Round the exact value m * 2**exp2 to the nearest float, ties to even.

    Handles subnormals and overflow (returns +-inf past the format maximum).
    This is pure integer arithmetic; there is no intermediate rounding.
    """
    if m == 0:
        return 0.0
    sign = 1 if m > 0 else -1
    a = abs(m)
    e_val = exp2 + a.bit_length() - 1  # floor(log2 |value|)
    # Exponent of the target format's least significant bit at this magnitude.
    q = max(e_val - (prec.p - 1), prec.min_subnormal_exp)
    shift = q - exp2
    if shift <= 0:
        sig = a << (-shift)
    else:
        sig = a >> shift
        rem = a & ((1 << shift) - 1)
        half = 1 << (shift - 1)
        if rem > half or (rem == half and (sig & 1)):
            sig += 1
    if sig >= (1 << prec.p):  # carry out of the significand: renormalize
        sig >>= 1
        q += 1
    if sig and q + sig.bit_length() - 1 > prec.emax:
        return math.inf if sign > 0 else -math.inf
    value = math.ldexp(sig, q)
    return value if sign > 0 else -value
