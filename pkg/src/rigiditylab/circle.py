"""Exact and fixed-point arithmetic for points of the unit circle.

A point ``z = exp(2*pi*i*theta)`` is stored through its angle ``theta``,
measured in turns and normalized into ``[0, 1)``.  Two representations are
supported:

* :class:`RationalAngle` -- ``theta = num/den`` exactly.  Powers reduce the
  exponent modulo ``den`` first, so exponents with thousands of digits cost a
  single big-integer remainder.
* :class:`FixedAngle` -- ``theta ~ mantissa * 2**-bits`` with a certified
  absolute error of ``err * 2**-bits`` turns.  The error is multiplied by
  ``|n|`` on every power and never dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence, Union

import mpmath
import numpy as np

DEFAULT_BITS = 4096
MAX_BITS = 1 << 20
# certified error beyond which a fixed-point result is refused
MAX_ERROR_TURNS = Fraction(1, 2**32)
# float slack added to every chord error bound (rounding of sin/cos)
FLOAT_SLACK = 4e-16


class PrecisionExhausted(ArithmeticError):
    """The certified error of a fixed-point result exceeds 2**-32 turns."""


@dataclass(frozen=True)
class RationalAngle:
    num: int
    den: int

    def __post_init__(self):
        num, den = int(self.num), int(self.den)
        if den <= 0:
            raise ValueError(f"denominator must be positive, got {den}")
        g = math.gcd(num, den)
        den //= g
        object.__setattr__(self, "num", (num // g) % den)
        object.__setattr__(self, "den", den)

    @property
    def exact(self) -> bool:
        return True

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.num, self.den)

    @property
    def error_turns(self) -> float:
        return 0.0

    def times(self, n: int) -> RationalAngle:
        return RationalAngle((int(n) % self.den) * self.num, self.den)

    def add(self, other: Angle) -> Angle:
        if isinstance(other, RationalAngle):
            return RationalAngle(self.num * other.den + other.num * self.den,
                                 self.den * other.den)
        return other.add(self)

    def neg(self) -> RationalAngle:
        return RationalAngle(-self.num, self.den)

    def turns(self) -> float:
        return self.num / self.den if self.den < 2**53 else float(self.fraction)

    def centered(self) -> float:
        """Representative in [-1/2, 1/2)."""
        num = self.num - self.den if 2 * self.num >= self.den else self.num
        return num / self.den if self.den < 2**53 else float(Fraction(num, self.den))

    def to_json(self) -> dict:
        return {"rational": [str(self.num), str(self.den)]}


@dataclass(frozen=True)
class FixedAngle:
    mantissa: int
    bits: int
    err: int = 1

    def __post_init__(self):
        if self.bits <= 0:
            raise ValueError("precision_bits must be positive")
        if self.err < 0:
            raise ValueError("error_ulps must be nonnegative")
        object.__setattr__(self, "mantissa", int(self.mantissa) % (1 << self.bits))

    @classmethod
    def from_real(cls, value, bits: int = DEFAULT_BITS) -> FixedAngle:
        """Round a real (Fraction, int, float, mpf, str or zero-arg callable
        returning an mpf) to a fixed-point angle.

        Callables are evaluated with mpmath at ``bits + 32`` bits of working
        precision, so the stored error is one ulp.
        """
        if callable(value):
            with mpmath.workprec(bits + 32):
                value = value()
        if isinstance(value, (int, Fraction, float)):
            scaled = Fraction(value) * (1 << bits)
            mantissa = round(scaled)
            err = 0 if scaled.denominator == 1 else 1
            return cls(mantissa, bits, err)
        with mpmath.workprec(bits + 32):
            x = mpmath.mpf(value)
            x = x - mpmath.floor(x)
            mantissa = int(mpmath.nint(mpmath.ldexp(x, bits)))
        return cls(mantissa, bits, 1)

    @property
    def exact(self) -> bool:
        return False

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.mantissa, 1 << self.bits)

    @property
    def error_fraction(self) -> Fraction:
        return Fraction(self.err, 1 << self.bits)

    @property
    def error_turns(self) -> float:
        if self.err == 0:
            return 0.0
        # round up so the float is still a bound after underflow
        return max(math.ldexp(self.err, -self.bits), 5e-324)

    def _check(self) -> FixedAngle:
        if self.error_fraction > MAX_ERROR_TURNS:
            raise PrecisionExhausted(
                f"certified error {self.err} ulps at {self.bits} bits exceeds 2^-32 turns")
        return self

    def times(self, n: int) -> FixedAngle:
        n = int(n)
        return FixedAngle(self.mantissa * n, self.bits, self.err * abs(n))._check()

    def rescale(self, bits: int) -> FixedAngle:
        if bits < self.bits:
            raise ValueError("rescaling may only increase precision")
        shift = bits - self.bits
        return FixedAngle(self.mantissa << shift, bits, self.err << shift)

    def add(self, other: Angle) -> FixedAngle:
        if isinstance(other, RationalAngle):
            other = FixedAngle.from_real(other.fraction, self.bits)
        bits = max(self.bits, other.bits)
        a, b = self.rescale(bits), other.rescale(bits)
        return FixedAngle(a.mantissa + b.mantissa, bits, a.err + b.err)._check()

    def neg(self) -> FixedAngle:
        return FixedAngle(-self.mantissa, self.bits, self.err)

    def turns(self) -> float:
        shift = max(self.bits - 62, 0)
        return math.ldexp(self.mantissa >> shift, shift - self.bits)

    def centered(self) -> float:
        t = self.turns()
        return t - 1.0 if t >= 0.5 else t

    def to_json(self) -> dict:
        return {"fixedpoint": {"mantissa": str(self.mantissa), "bits": self.bits,
                               "err": str(self.err)}}


Angle = Union[RationalAngle, FixedAngle]


def angle_from_json(obj: dict) -> Angle:
    if "rational" in obj:
        a, b = obj["rational"]
        return RationalAngle(int(a), int(b))
    if "fixedpoint" in obj:
        fp = obj["fixedpoint"]
        return FixedAngle(int(fp["mantissa"]), int(fp["bits"]), int(fp["err"]))
    raise ValueError(f"unrecognized angle encoding: {obj!r}")


@dataclass(frozen=True)
class UnitPoint:
    """A point of the unit circle, identified with its angle in turns."""

    angle: Angle

    @classmethod
    def rational(cls, num: int, den: int = 1) -> UnitPoint:
        return cls(RationalAngle(num, den))

    @classmethod
    def from_fraction(cls, value) -> UnitPoint:
        f = Fraction(value)
        return cls(RationalAngle(f.numerator, f.denominator))

    @classmethod
    def fixed(cls, value, bits: int = DEFAULT_BITS) -> UnitPoint:
        return cls(FixedAngle.from_real(value, bits))

    @classmethod
    def one(cls) -> UnitPoint:
        return cls(RationalAngle(0, 1))

    @property
    def exact(self) -> bool:
        return self.angle.exact

    @property
    def order(self) -> int | None:
        """Multiplicative order for rational points (they are all roots of
        unity); ``None`` when the angle is only known approximately."""
        return self.angle.den if isinstance(self.angle, RationalAngle) else None

    def is_identity(self) -> bool:
        if isinstance(self.angle, RationalAngle):
            return self.angle.num == 0
        return self.angle.mantissa == 0 and self.angle.err == 0

    def power(self, n: int) -> UnitPoint:
        return UnitPoint(self.angle.times(n))

    def __mul__(self, other: UnitPoint) -> UnitPoint:
        return UnitPoint(self.angle.add(other.angle))

    def inverse(self) -> UnitPoint:
        return UnitPoint(self.angle.neg())

    def turns(self) -> float:
        return self.angle.turns()

    def to_complex(self) -> complex:
        a = self.angle
        if isinstance(a, RationalAngle) and a.den <= 4:
            return _QUARTER_POINTS[(4 // a.den) * a.num] if 4 % a.den == 0 else _generic(a)
        return _generic(a)

    def chord(self) -> float:
        return chord_distance(self)

    def to_json(self) -> dict:
        return self.angle.to_json()

    @classmethod
    def from_json(cls, obj: dict) -> UnitPoint:
        return cls(angle_from_json(obj))

    def __repr__(self) -> str:
        a = self.angle
        if isinstance(a, RationalAngle):
            return f"UnitPoint({a.num}/{a.den})"
        return f"UnitPoint(~{a.turns():.17g}, {a.bits}b, err={a.err})"


_QUARTER_POINTS = {0: complex(1, 0), 1: complex(0, 1), 2: complex(-1, 0), 3: complex(0, -1)}


def _generic(a: Angle) -> complex:
    t = 2 * math.pi * a.centered()
    return complex(math.cos(t), math.sin(t))


def power(z: UnitPoint, n: int) -> UnitPoint:
    """``z**n`` for an arbitrary (big) integer ``n``."""
    return z.power(n)


def chord_distance(z: UnitPoint) -> float:
    """``|z - 1| = 2|sin(pi*theta)|``, exact at 1 and -1."""
    a = z.angle
    if isinstance(a, RationalAngle):
        if a.num == 0:
            return 0.0
        if 2 * a.num == a.den:
            return 2.0
    return abs(2.0 * math.sin(math.pi * a.centered()))


def chord_with_error(z: UnitPoint) -> tuple[float, float]:
    """Chord length together with a certified absolute error bound."""
    value = chord_distance(z)
    if z.exact:
        return value, (0.0 if value in (0.0, 2.0) else FLOAT_SLACK)
    # |d/dtheta 2 sin(pi theta)| <= 2 pi
    return value, 2 * math.pi * z.angle.error_turns + FLOAT_SLACK


def power_with_refinement(make_point: Callable[[int], UnitPoint], n: int,
                          start_bits: int = DEFAULT_BITS,
                          max_bits: int = MAX_BITS) -> UnitPoint:
    """Evaluate ``make_point(bits)**n``, doubling ``bits`` whenever the
    certified error of the result is too large."""
    bits = start_bits
    while True:
        try:
            return make_point(bits).power(n)
        except PrecisionExhausted:
            if bits * 2 > max_bits:
                raise
            bits *= 2


@dataclass(frozen=True)
class DistanceCheck:
    t: float
    dist: float
    chord: float
    lower: float
    upper: float

    @property
    def ok(self) -> bool:
        return self.lower <= self.chord + 1e-12 and self.chord <= self.upper + 1e-12


def dist_to_integers(t) -> DistanceCheck:
    """Distance from ``t`` to the nearest integer, together with the two-sided
    comparison ``4d <= |exp(2 pi i t) - 1| <= 2 pi d``."""
    if isinstance(t, (int, Fraction)):
        f = Fraction(t)
        d = float(abs(f - round(f)))
    else:
        t = float(t)
        d = abs(t - round(t))
    chord = abs(2.0 * math.sin(math.pi * d))
    return DistanceCheck(float(t), d, chord, 4.0 * d, 2.0 * math.pi * d)


# ---------------------------------------------------------------------------
# vectorized helpers for many rational points at once

_INT64_SAFE = 2**62


def reduce_exponents(ns: Sequence[int], dens: np.ndarray) -> np.ndarray:
    """Matrix ``ns[i] mod dens[j]`` as int64 (``dens`` must be < 2**31)."""
    dens = np.asarray(dens, dtype=np.int64)
    ns = [int(n) for n in ns]
    if not ns:
        return np.empty((0, len(dens)), dtype=np.int64)
    if max(abs(min(ns)), abs(max(ns))) >= _INT64_SAFE:
        period = math.lcm(*(int(b) for b in dens)) if len(dens) else 1
        if period < _INT64_SAFE:
            ns = [n % period for n in ns]
        else:
            dl = [int(b) for b in dens]
            uniq = sorted(set(dl))
            cols = {b: [n % b for n in ns] for b in uniq}
            return np.array([cols[b] for b in dl], dtype=np.int64).T.reshape(len(ns), len(dl))
    arr = np.asarray(ns, dtype=np.int64)
    return np.mod(arr[:, None], dens[None, :])


def rational_residues(ns: Sequence[int], nums, dens) -> np.ndarray:
    """Residues ``n*num mod den`` for every exponent and every rational point.

    Returns int64 when all denominators are below 2**31, otherwise an object
    array of Python integers.
    """
    nums = list(nums)
    dens = list(dens)
    if all(b < 2**31 for b in dens):
        d = np.asarray(dens, dtype=np.int64)
        a = np.asarray(nums, dtype=np.int64)
        red = reduce_exponents(ns, d)
        return np.mod(red * a[None, :], d[None, :])
    out = np.empty((len(ns), len(dens)), dtype=object)
    for i, n in enumerate(ns):
        n = int(n)
        out[i] = [(n % b) * a % b for a, b in zip(nums, dens)]
    return out


def _centered_turns(r: np.ndarray, b) -> np.ndarray:
    if r.dtype == object:
        b = np.broadcast_to(np.asarray(b, dtype=object), r.shape)
        out = np.empty(r.shape, dtype=np.float64)
        flat = out.reshape(-1)
        for i, (x, y) in enumerate(zip(r.ravel(), b.ravel())):
            x, y = int(x), int(y)
            c = x - y if 2 * x >= y else x
            # c/y to 2**-62 via integer division, then one float rounding
            flat[i] = math.ldexp((c << 62) // y, -62)
        return out
    b = np.asarray(b, dtype=np.int64)
    c = np.where(2 * r >= b, r - b, r)
    return c / b


def unit_from_residues(r: np.ndarray, b) -> np.ndarray:
    """``exp(2 pi i r/b)`` with the quarter-turn values returned exactly."""
    t = _centered_turns(r, b)
    out = np.exp(2j * np.pi * t)
    if r.dtype != object:
        bb = np.broadcast_to(np.asarray(b, dtype=np.int64), r.shape)
        out = np.where(r == 0, 1 + 0j, out)
        out = np.where(4 * r == bb, 1j, out)
        out = np.where(2 * r == bb, -1 + 0j, out)
        out = np.where(4 * r == 3 * bb, -1j, out)
    else:
        out = np.where(r == 0, 1 + 0j, out)
    return out


def chord_from_residues(r: np.ndarray, b) -> np.ndarray:
    """``|exp(2 pi i r/b) - 1|`` with 0 and 2 returned exactly."""
    t = _centered_turns(r, b)
    out = np.abs(2.0 * np.sin(np.pi * t))
    out = np.where(r == 0, 0.0, out)
    if r.dtype != object:
        bb = np.broadcast_to(np.asarray(b, dtype=np.int64), r.shape)
        out = np.where(2 * r == bb, 2.0, out)
    return out
