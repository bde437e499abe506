"""Exact correct-rounding reference for the reciprocal square root.

Everything here is arbitrary-precision *integer* arithmetic on dyadic
rationals m * 2**k. The key primitive is a sign test: for q > 0,

    sign(q - 1/sqrt(x)) = sign(q*q*x - 1),

and q*q*x is a dyadic rational, so the comparison against 1 is an exact
integer comparison. Rounding decisions reduce to sign tests at the
midpoints between consecutive floats, and the reciprocal square root of a
binary float is never exactly such a midpoint, so every decision is
strict. A midpoint test that returns 0 raises MidpointTieError: it would
mean the implementation, not the mathematics, is wrong.

No extended-precision floating point is involved anywhere, so there is no
double-rounding hazard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from . import algos
from .fp import BINARY64, Precision, next_down, next_up, round_int_scaled, ulp_distance

__all__ = [
    "DyadicRational",
    "VerdictKind",
    "RoundingVerdict",
    "RelativeErrorBound",
    "MidpointTieError",
    "compare_to_rsqrt",
    "oracle_rsqrt",
    "classify",
    "exact_relative_error",
]

_TWO_P53 = 9007199254740992.0  # 2**53


class MidpointTieError(RuntimeError):
    """A float/float midpoint compared exactly equal to 1/sqrt(x).

    This cannot happen for binary inputs; reaching it indicates a bug in
    the caller or in this module, so it is raised rather than tie-broken.
    """


def _float_to_int_exp(x: float) -> tuple[int, int]:
    """Exact (m, e) with x = m * 2**e, for finite nonzero x. Not canonical."""
    fm, fe = math.frexp(x)
    return int(fm * _TWO_P53), fe - 53


@dataclass(frozen=True)
class DyadicRational:
    """Exact m * 2**exp2 with arbitrary-precision integer m.

    Canonical form: mantissa odd, or zero with exp2 == 0. Closed under
    negation, addition and multiplication, which is all the oracle needs;
    every finite float converts exactly.
    """

    mantissa: int
    exp2: int = 0

    def __post_init__(self) -> None:
        m = self.mantissa
        if m == 0:
            object.__setattr__(self, "exp2", 0)
        elif m & 1 == 0:
            shift = (m & -m).bit_length() - 1
            object.__setattr__(self, "mantissa", m >> shift)
            object.__setattr__(self, "exp2", self.exp2 + shift)

    @classmethod
    def from_float(cls, x: float) -> "DyadicRational":
        if math.isnan(x) or math.isinf(x):
            raise ValueError("only finite floats convert to dyadic rationals")
        if x == 0.0:
            return cls(0, 0)
        m, e = _float_to_int_exp(x)
        return cls(m, e)

    @property
    def sign(self) -> int:
        return (self.mantissa > 0) - (self.mantissa < 0)

    def __neg__(self) -> "DyadicRational":
        return DyadicRational(-self.mantissa, self.exp2)

    def __add__(self, other: "DyadicRational") -> "DyadicRational":
        a, b = self, other
        if a.mantissa == 0:
            return b
        if b.mantissa == 0:
            return a
        e = min(a.exp2, b.exp2)
        return DyadicRational((a.mantissa << (a.exp2 - e)) + (b.mantissa << (b.exp2 - e)), e)

    def __sub__(self, other: "DyadicRational") -> "DyadicRational":
        return self + (-other)

    def __mul__(self, other: "DyadicRational") -> "DyadicRational":
        return DyadicRational(self.mantissa * other.mantissa, self.exp2 + other.exp2)

    def _cmp(self, other: "DyadicRational") -> int:
        d = (self - other).mantissa
        return (d > 0) - (d < 0)

    def __lt__(self, other: "DyadicRational") -> bool:
        return self._cmp(other) < 0

    def __le__(self, other: "DyadicRational") -> bool:
        return self._cmp(other) <= 0

    def __gt__(self, other: "DyadicRational") -> bool:
        return self._cmp(other) > 0

    def __ge__(self, other: "DyadicRational") -> bool:
        return self._cmp(other) >= 0

    def as_integer_ratio(self) -> tuple[int, int]:
        if self.exp2 >= 0:
            return self.mantissa << self.exp2, 1
        return self.mantissa, 1 << -self.exp2

    def round_to(self, prec: Precision = BINARY64) -> float:
        """Nearest float of the format, ties to even."""
        return round_int_scaled(self.mantissa, self.exp2, prec)

    def __repr__(self) -> str:
        return f"DyadicRational({self.mantissa}, 2**{self.exp2})"


_ZERO = DyadicRational(0)
_ONE = DyadicRational(1)


def _cmp_rsqrt_ints(mq: int, eq: int, mx: int, ex: int) -> int:
    """sign(q - 1/sqrt(x)) for q = mq*2**eq > 0, x = mx*2**ex > 0."""
    t = 2 * eq + ex
    v = mq * mq * mx
    if t >= 0:
        v <<= t
        return (v > 1) - (v < 1)
    w = 1 << -t
    return (v > w) - (v < w)


def compare_to_rsqrt(q, x: float) -> int:
    """Exact sign of q - 1/sqrt(x); q may be a DyadicRational, float or int.

    Evaluated as sign(q*q*x - 1) in integer arithmetic, valid since q > 0.
    """
    if isinstance(q, DyadicRational):
        mq, eq = q.mantissa, q.exp2
    elif isinstance(q, int):
        mq, eq = q, 0
    else:
        if math.isnan(q) or math.isinf(q):
            raise ValueError("q must be finite")
        mq, eq = _float_to_int_exp(q)
    if mq <= 0:
        raise ValueError("q must be positive")
    _require_positive_finite(x)
    mx, ex = _float_to_int_exp(x)
    return _cmp_rsqrt_ints(mq, eq, mx, ex)


def _require_positive_finite(x: float) -> None:
    if math.isnan(x):
        raise ValueError("input is NaN")
    if math.isinf(x):
        raise ValueError("input is infinite")
    if x == 0.0:
        raise ValueError("input is zero")
    if x < 0.0:
        raise ValueError("input is negative")


def _strict(s: int, q_m: int, q_e: int, x: float) -> int:
    if s == 0:
        raise MidpointTieError(
            f"midpoint {q_m}*2**{q_e} compared equal to rsqrt({x!r}); "
            "this contradicts exactness of the sign test"
        )
    return s


def _midpoint_up_ints(y: float, prec: Precision) -> tuple[int, int]:
    """(m, e) of the exact midpoint between y and next_up(y)."""
    m1, e1 = _float_to_int_exp(y)
    m2, e2 = _float_to_int_exp(next_up(y, prec))
    e = min(e1, e2)
    return (m1 << (e1 - e)) + (m2 << (e2 - e)), e - 1


def _midpoint_down_ints(y: float, prec: Precision) -> tuple[int, int]:
    m1, e1 = _float_to_int_exp(next_down(y, prec))
    m2, e2 = _float_to_int_exp(y)
    e = min(e1, e2)
    return (m1 << (e1 - e)) + (m2 << (e2 - e)), e - 1


def _reduce_by_fours(x: float) -> tuple[int, float]:
    """k, x' with x = x' * 4**k exactly and x' in [1, 4)."""
    _, e2 = math.frexp(x)
    k = (e2 - 1) >> 1
    return k, math.ldexp(x, -2 * k)


def oracle_rsqrt(x: float, prec: Precision = BINARY64, hint: float | None = None) -> float:
    """The round-to-nearest float of 1/sqrt(x), decided by exact sign tests.

    Works for every positive finite x of the format (subnormals are
    pre-scaled by an exact power of 4). Starting from a seed within a few
    ulp (the compensated Newton result, or `hint` when the caller already
    has one), walks neighbors until the midpoints below and above the
    candidate strictly straddle 1/sqrt(x). Ties are impossible and raise.
    """
    _require_positive_finite(x)
    if prec.p == 24 and algos._round_b32(x) != x:
        raise ValueError(f"{x!r} is not representable in binary32")
    k, xr = _reduce_by_fours(x)
    mx, ex = _float_to_int_exp(xr)

    if hint is not None and math.isfinite(hint) and hint > 0.0:
        y = math.ldexp(hint, k)
        if not 0.25 <= y <= 4.0:  # nonsense hint: fall back to the seed below
            y = algos._newton_terms_unchecked(xr, prec).y
    else:
        y = algos._newton_terms_unchecked(xr, prec).y

    # Walk upward while the upper midpoint is still below 1/sqrt(xr),
    # then downward symmetrically. The seed is within 1 ulp, so each
    # loop runs at most once in practice; the bound is pure paranoia.
    for _ in range(128):
        m, e = _midpoint_up_ints(y, prec)
        if _strict(_cmp_rsqrt_ints(m, e, mx, ex), m, e, xr) < 0:
            y = next_up(y, prec)
            continue
        m, e = _midpoint_down_ints(y, prec)
        if _strict(_cmp_rsqrt_ints(m, e, mx, ex), m, e, xr) > 0:
            y = next_down(y, prec)
            continue
        return math.ldexp(y, -k)
    raise RuntimeError(f"oracle walk failed to converge for x={x!r}")


class VerdictKind(Enum):
    CORRECTLY_ROUNDED = "CorrectlyRounded"
    FAITHFUL_LOW = "FaithfulLow"
    FAITHFUL_HIGH = "FaithfulHigh"
    UNFAITHFUL = "Unfaithful"


@dataclass(frozen=True)
class RoundingVerdict:
    """How a candidate compares with the correctly rounded result.

    `correct` is the oracle value; `ulp_distance` the candidate's distance
    from it. Faithful verdicts additionally certify, by exact sign test,
    that 1/sqrt(x) lies strictly between the candidate's two neighbors.
    """

    correct: float
    kind: VerdictKind
    ulp_distance: int

    @property
    def is_faithful(self) -> bool:
        return self.kind is not VerdictKind.UNFAITHFUL


def _verdict_against(candidate: float, correct: float, x: float, prec: Precision) -> RoundingVerdict:
    d = ulp_distance(candidate, correct, prec)
    if d == 0:
        return RoundingVerdict(correct, VerdictKind.CORRECTLY_ROUNDED, 0)
    if d == 1:
        # candidate = neighbor of correct. It is faithful iff the true value
        # lies on the candidate's side of `correct`, i.e. strictly between
        # candidate's own two neighbors.
        side = compare_to_rsqrt(correct, x)
        if candidate < correct and side > 0:
            return RoundingVerdict(correct, VerdictKind.FAITHFUL_LOW, 1)
        if candidate > correct and side < 0:
            return RoundingVerdict(correct, VerdictKind.FAITHFUL_HIGH, 1)
    return RoundingVerdict(correct, VerdictKind.UNFAITHFUL, d)


def classify(candidate: float, x: float, prec: Precision = BINARY64) -> RoundingVerdict:
    """Classify a candidate rsqrt value against the exact oracle."""
    _require_positive_finite(candidate)
    correct = oracle_rsqrt(x, prec)
    return _verdict_against(candidate, correct, x, prec)


@dataclass(frozen=True)
class RelativeErrorBound:
    """sign(nu) plus a verified enclosure lo <= |nu| <= hi, where
    1/sqrt(x) = candidate * (1 + nu). Endpoints are exact dyadic rationals
    certified by sign tests; hi - lo < 2**(-2p)."""

    sign: int
    lo: DyadicRational
    hi: DyadicRational


def _abs_nu_below(candidate_d: DyadicRational, sign: int, z: DyadicRational,
                  mx: int, ex: int) -> bool:
    """Exact test |nu| < z for the candidate, given sign(nu) != 0."""
    if sign > 0:
        # nu < z  <=>  1/sqrt(x) < c*(1+z)
        q = candidate_d * (_ONE + z)
        return _cmp_rsqrt_ints(q.mantissa, q.exp2, mx, ex) > 0
    # -nu < z  <=>  1/sqrt(x) > c*(1-z); for z >= 1 this is trivially true.
    w = _ONE - z
    if w.sign <= 0:
        return True
    q = candidate_d * w
    return _cmp_rsqrt_ints(q.mantissa, q.exp2, mx, ex) < 0


def exact_relative_error(candidate: float, x: float,
                         prec: Precision = BINARY64) -> RelativeErrorBound:
    """Sign of the candidate's relative error and a tight exact enclosure.

    The enclosure is found by bisection on dyadic rationals; every
    endpoint decision is an exact integer sign test, and the final width
    is below 2**(-2p). A float-level estimate only seeds the bracket.
    """
    _require_positive_finite(candidate)
    _require_positive_finite(x)
    s = -compare_to_rsqrt(candidate, x)
    if s == 0:
        return RelativeErrorBound(0, _ZERO, _ZERO)

    c = DyadicRational.from_float(candidate)
    mx, ex = _float_to_int_exp(x)

    # Bracket from a float estimate, then verify; correctness never depends
    # on the estimate's quality.
    t_est = algos.rsqrt_full_range(x, algos.AlgorithmId.NEWTON, prec)
    est = abs(t_est / candidate - 1.0)
    if est > 0.0 and math.isfinite(est):
        hi_exp = max(math.frexp(est)[1] + 2, -2 * prec.p)
    else:
        hi_exp = 2 - prec.p
    hi = DyadicRational(1, hi_exp)
    for _ in range(4200):  # covers the whole exponent range
        if _abs_nu_below(c, s, hi, mx, ex):
            break
        hi = DyadicRational(1, hi.exp2 + 1)
    else:
        raise RuntimeError("failed to bracket the relative error")

    lo = _ZERO
    width_goal = DyadicRational(1, -2 * prec.p)
    while (hi - lo) >= width_goal:
        mid = _half_sum(lo, hi)
        if _abs_nu_below(c, s, mid, mx, ex):
            hi = mid
        else:
            lo = mid
    return RelativeErrorBound(s, lo, hi)


def _half_sum(a: DyadicRational, b: DyadicRational) -> DyadicRational:
    t = a + b
    return DyadicRational(t.mantissa, t.exp2 - 1)
