"""Reciprocal square root algorithms built on a fused multiply-add.

Five straight-line kernels plus an exact range-reduction wrapper:

* ``rsqrt_naive``      -- sqrt(1/x), two correctly rounded operations
* ``rsqrt_newton``     -- naive value plus a compensated Newton step
* ``rsqrt_halley``     -- naive value plus a compensated Halley step
* ``rcp_sqrt_331d``    -- square-root-free magic-constant kernel (binary64 only)
* ``rcp_sqrt_331d_halley`` -- same kernel with the Newton tail swapped for
  the Halley compensation (binary64 only)

Operation order inside each kernel is frozen; re-association would change
the bit-exact results this library exists to study.

Platform assumptions, all checked or checkable at runtime:

* division and sqrt are correctly rounded (IEEE 754 requires this);
* ``fma`` performs a genuine fused multiply-add, i.e. a single rounding
  of the exact product-sum (see :func:`fma_sanity_check`).

The fused multiply-add is provided by MPFR through gmpy2 with the context
precision pinned to the target format, which rounds the exact a*b + c
once. CPython 3.10 exposes no ``math.fma``, and emulating a binary32 FMA
with binary64 arithmetic would double-round.
"""

from __future__ import annotations

import math
import struct
from enum import Enum
from typing import Callable, NamedTuple

import gmpy2

from .fp import BINARY32, BINARY64, Precision

__all__ = [
    "AlgorithmId",
    "DomainError",
    "fma",
    "fma_sanity_check",
    "rsqrt_naive",
    "rsqrt_newton",
    "rsqrt_halley",
    "rcp_sqrt_331d",
    "rcp_sqrt_331d_halley",
    "rsqrt_full_range",
    "newton_terms",
    "NewtonTerms",
    "evaluate",
    "safe_window",
]


class DomainError(ValueError):
    """Input outside an algorithm's accepted domain."""


_CTX = {
    53: gmpy2.context(precision=53),
    24: gmpy2.context(precision=24),
}


def fma(a: float, b: float, c: float, prec: Precision = BINARY64) -> float:
    """a*b + c with a single rounding at the target precision.

    Operands must already be values of the target format; this is not
    checked here (the algorithm entry points validate their inputs).
    """
    return float(_CTX[prec.p].fma(a, b, c))


def fma_sanity_check(prec: Precision = BINARY64) -> bool:
    """True iff the fma backend fuses instead of rounding the product.

    With eps = ulp(1), the exact value of (1+eps)**2 - (1+2*eps) is eps**2,
    which a fused multiply-add returns bit-exactly. An emulation that
    rounds a*b first collapses (1+eps)**2 to 1+2*eps and returns 0.
    """
    eps = math.ldexp(1.0, 1 - prec.p)
    got = fma(1.0 + eps, 1.0 + eps, -(1.0 + 2.0 * eps), prec)
    return got == eps * eps and got != 0.0


def _round_b32(v: float) -> float:
    """Round a binary64 value to the nearest binary32 value."""
    return float(struct.unpack("<f", struct.pack("<f", v))[0])


def _div(a: float, b: float, prec: Precision) -> float:
    # For binary32 operands, dividing in binary64 and narrowing once is the
    # correctly rounded binary32 quotient (53 >= 2*24 + 2, so the double
    # rounding is innocuous). The same holds for sqrt below, but NOT for
    # fma, which is why fma goes through a 24-bit MPFR context instead.
    q = a / b
    return q if prec.p == 53 else _round_b32(q)


def _sqrt(v: float, prec: Precision) -> float:
    s = math.sqrt(v)
    return s if prec.p == 53 else _round_b32(s)


def _mul(a: float, b: float, prec: Precision) -> float:
    m = a * b
    return m if prec.p == 53 else _round_b32(m)


def safe_window(prec: Precision) -> tuple[float, float]:
    """Inclusive input range on which the direct kernels run.

    Within [4 * min_normal, max_finite / 4] every intermediate (1/x, y*y,
    -x/2, the residuals) stays normal and finite, which the error analysis
    of the compensated kernels assumes.
    """
    return math.ldexp(1.0, prec.emin + 2), math.ldexp(prec.max_finite, -2)


def _check_direct(x: float, prec: Precision) -> None:
    if math.isnan(x):
        raise DomainError("input is NaN")
    if math.isinf(x):
        raise DomainError("input is infinite")
    if x == 0.0:
        raise DomainError("input is zero")
    if x < 0.0:
        raise DomainError("input is negative")
    if prec.p == 24 and _round_b32(x) != x:
        raise DomainError(f"{x!r} is not representable in binary32")
    if x < prec.min_normal:
        raise DomainError("input is subnormal")
    lo, hi = safe_window(prec)
    if not lo <= x <= hi:
        raise DomainError(
            f"input {x!r} is outside the safe exponent window; use rsqrt_full_range"
        )


def rsqrt_naive(x: float, prec: Precision = BINARY64) -> float:
    """sqrt(1/x): the two-operation baseline, relative error below 1.5u + O(u^2)."""
    _check_direct(x, prec)
    r = _div(1.0, x, prec)
    return _sqrt(r, prec)


class NewtonTerms(NamedTuple):
    """Every intermediate of the compensated Newton step, for exactness audits."""

    r: float  # rounded 1/x
    y0: float  # rounded sqrt(r), the uncompensated estimate
    mxhalf: float  # -x/2, exact
    sigma: float  # fma(mxhalf, r, 0.5) == (1 - x*r)/2, exact in the safe window
    tau: float  # fma(y0, y0, -r) == y0*y0 - r, exact in the safe window
    nu_bar: float  # fma(mxhalf, tau, sigma): rounded (1 - x*y0*y0)/2
    y: float  # fma(y0, nu_bar, y0), the compensated result


def newton_terms(x: float, prec: Precision = BINARY64) -> NewtonTerms:
    """Run the compensated Newton step and return all intermediates."""
    _check_direct(x, prec)
    return _newton_terms_unchecked(x, prec)


def _newton_terms_unchecked(x: float, prec: Precision) -> NewtonTerms:
    r = _div(1.0, x, prec)
    y0 = _sqrt(r, prec)
    mxhalf = -0.5 * x  # exact: power-of-two scaling
    sigma = fma(mxhalf, r, 0.5, prec)
    tau = fma(y0, y0, -r, prec)
    nu_bar = fma(mxhalf, tau, sigma, prec)
    y = fma(y0, nu_bar, y0, prec)
    return NewtonTerms(r, y0, mxhalf, sigma, tau, nu_bar, y)


def rsqrt_newton(x: float, prec: Precision = BINARY64) -> float:
    """Naive estimate refined by one FMA-compensated Newton step.

    The correction term nu_bar is correctly rounded, which makes the
    result weakly rounded: relative error at most u + O(u^2), hence
    faithful and never more than 1 ulp from the correctly rounded value.
    """
    _check_direct(x, prec)
    return _newton_terms_unchecked(x, prec).y


def rsqrt_halley(x: float, prec: Precision = BINARY64) -> float:
    """Naive estimate refined by one FMA-compensated Halley step.

    Costs one multiply and one FMA more than the Newton step; no case is
    known where the result is not correctly rounded, but that remains a
    conjecture, so callers should treat the output as weakly rounded.
    """
    _check_direct(x, prec)
    r = _div(1.0, x, prec)
    y0 = _sqrt(r, prec)
    mxhalf = -0.5 * x
    sigma = fma(mxhalf, r, 0.5, prec)
    tau = fma(y0, y0, -r, prec)
    nu_bar = fma(mxhalf, tau, sigma, prec)
    nu = fma(_mul(1.5, nu_bar, prec), nu_bar, nu_bar, prec)
    return fma(y0, nu, y0, prec)


_BITS64_STRUCT = struct.Struct("<q")
_F64_STRUCT = struct.Struct("<d")


def _bits64(x: float) -> int:
    return _BITS64_STRUCT.unpack(_F64_STRUCT.pack(x))[0]


def _from_bits64(bits: int) -> float:
    return _F64_STRUCT.unpack(_BITS64_STRUCT.pack(bits))[0]


def rcp_sqrt_331d(x: float) -> float:
    """Square-root-free rsqrt: magic-constant seed, two polynomial passes,
    one plain Newton step. binary64 only; constants are format-specific.
    """
    _check_direct(x, BINARY64)
    i = _bits64(x)
    if i & 0x0010000000000000:
        i = 0x5FDB3D14170034B6 - (i >> 1)
        y = _from_bits64(i)
        y = 2.33124735553421569 * y * fma(-x, y * y, 1.07497362654295614)
    else:
        i = 0x5FE33D18A2B9EF5F - (i >> 1)
        y = _from_bits64(i)
        y = 0.82421942523718461 * y * fma(-x, y * y, 2.1499494964450325)
    mxhalf = -0.5 * x
    y = y * fma(mxhalf, y * y, 1.5000000034937999)
    # Final two lines are a single Newton step.
    r = fma(mxhalf, y * y, 0.5)
    return fma(y, r, y)


def rcp_sqrt_331d_halley(x: float) -> float:
    """rcp_sqrt_331d with its Newton tail replaced by the exact-residual
    Halley compensation (three extra FMAs and one divide). binary64 only.
    """
    _check_direct(x, BINARY64)
    i = _bits64(x)
    if i & 0x0010000000000000:
        i = 0x5FDB3D14170034B6 - (i >> 1)
        y = _from_bits64(i)
        y = 2.33124735553421569 * y * fma(-x, y * y, 1.07497362654295614)
    else:
        i = 0x5FE33D18A2B9EF5F - (i >> 1)
        y = _from_bits64(i)
        y = 0.82421942523718461 * y * fma(-x, y * y, 2.1499494964450325)
    mxhalf = -0.5 * x
    y = y * fma(mxhalf, y * y, 1.5000000034937999)
    r = 1.0 / x
    sigma = fma(r, mxhalf, 0.5)
    tau = fma(y, y, -r)
    nu_bar = fma(mxhalf, tau, sigma)
    nu = fma(1.5 * nu_bar, nu_bar, nu_bar)
    return fma(y, nu, y)


class AlgorithmId(Enum):
    """Names for the five kernels, as spelled on the command line."""

    NAIVE = "naive"
    NEWTON = "newton"
    HALLEY = "halley"
    RCP_SQRT_331D = "rcpsqrt331d"
    RCP_SQRT_331D_HALLEY = "rcpsqrt331dhalley"

    @property
    def binary64_only(self) -> bool:
        return self in (AlgorithmId.RCP_SQRT_331D, AlgorithmId.RCP_SQRT_331D_HALLEY)

    def supports(self, prec: Precision) -> bool:
        return prec.p == 53 or not self.binary64_only

    @classmethod
    def parse(cls, name: str) -> "AlgorithmId":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown algorithm {name!r}; expected one of: {valid}") from None


_DISPATCH: dict[AlgorithmId, Callable[[float, Precision], float]] = {
    AlgorithmId.NAIVE: rsqrt_naive,
    AlgorithmId.NEWTON: rsqrt_newton,
    AlgorithmId.HALLEY: rsqrt_halley,
    AlgorithmId.RCP_SQRT_331D: lambda x, prec: rcp_sqrt_331d(x),
    AlgorithmId.RCP_SQRT_331D_HALLEY: lambda x, prec: rcp_sqrt_331d_halley(x),
}


def evaluate(algo: AlgorithmId, x: float, prec: Precision = BINARY64) -> float:
    """Apply a kernel directly (input must be inside the safe window)."""
    if not algo.supports(prec):
        raise DomainError(f"{algo.value} is defined for binary64 only")
    return _DISPATCH[algo](x, prec)


def rsqrt_full_range(x: float, algo: AlgorithmId, prec: Precision = BINARY64) -> float:
    """Kernel wrapper valid for every positive finite input, subnormals included.

    Writes x = x' * 4**k with x' in [1, 4), applies the kernel to x', and
    rescales by 2**-k. Both scalings are exact, and on the safe window the
    kernels commute with them, so this agrees bit-exactly with the direct
    call whenever the direct call is legal.
    """
    if math.isnan(x):
        raise DomainError("input is NaN")
    if math.isinf(x):
        raise DomainError("input is infinite")
    if x == 0.0:
        raise DomainError("input is zero")
    if x < 0.0:
        raise DomainError("input is negative")
    if prec.p == 24 and _round_b32(x) != x:
        raise DomainError(f"{x!r} is not representable in binary32")
    if not algo.supports(prec):
        raise DomainError(f"{algo.value} is defined for binary64 only")
    _, e2 = math.frexp(x)  # x in [2**(e2-1), 2**e2)
    k = (e2 - 1) >> 1
    xr = math.ldexp(x, -2 * k)  # exact; xr in [1, 4)
    yr = _DISPATCH[algo](xr, prec)
    return math.ldexp(yr, -k)  # exact
