"""Finitely supported probability measures on the circle and on the integers."""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .circle import (
    FixedAngle, RationalAngle, UnitPoint, angle_from_json, chord_from_residues,
    rational_residues, unit_from_residues,
)
from .errors import AmbiguousAtom, CapExceeded, InvalidSpec

DEFAULT_CAP = 10**6
WEIGHT_TOL = 1e-9


def _interval(z: UnitPoint) -> tuple[Fraction, Fraction]:
    a = z.angle
    if isinstance(a, RationalAngle):
        return a.fraction, Fraction(0)
    return a.fraction, a.error_fraction


def _circ_gap(x: Fraction, y: Fraction) -> Fraction:
    d = (x - y) % 1
    return min(d, 1 - d)


def _overlap(z: UnitPoint, w: UnitPoint) -> bool:
    (c1, r1), (c2, r2) = _interval(z), _interval(w)
    return _circ_gap(c1, c2) <= r1 + r2


def _widen(rep: UnitPoint, members: list[UnitPoint]) -> UnitPoint:
    """Enlarge the error of a fixed-point representative so it covers every
    merged member."""
    a = rep.angle
    if isinstance(a, RationalAngle):
        return rep
    c0 = a.fraction
    need = max(_circ_gap(c0, _interval(m)[0]) + _interval(m)[1] for m in members)
    err = math.ceil(need * (1 << a.bits))
    return UnitPoint(FixedAngle(a.mantissa, a.bits, max(err, a.err)))


def _canonical(pairs: Iterable[tuple[UnitPoint, object]], exact: bool):
    """Merge equal (or overlapping fixed-point) atoms, drop zero weights,
    renormalize and sort by angle."""
    rational: dict[RationalAngle, object] = {}
    fixed: list[tuple[UnitPoint, object]] = []
    for z, w in pairs:
        if not isinstance(z, UnitPoint):
            z = UnitPoint.from_fraction(z)
        w = Fraction(w) if exact else float(w)
        if w < 0:
            raise InvalidSpec("atom weights must be nonnegative")
        if w == 0:
            continue
        if isinstance(z.angle, RationalAngle):
            rational[z.angle] = rational.get(z.angle, 0) + w
        else:
            fixed.append((z, w))
    atoms = [(UnitPoint(a), w) for a, w in rational.items()]
    # fixed atoms join the first atom whose certified interval they touch
    for z, w in sorted(fixed, key=lambda p: _interval(p[0])[0]):
        for i, (y, v) in enumerate(atoms):
            if _overlap(y, z):
                atoms[i] = (_widen(y, [y, z]), v + w)
                break
        else:
            atoms.append((z, w))
    if not atoms:
        raise InvalidSpec("a probability measure needs at least one atom")
    atoms.sort(key=lambda p: (_interval(p[0])[0], _interval(p[0])[1]))
    if exact:
        total = sum(w for _, w in atoms)
        return tuple((z, w / total) for z, w in atoms)
    ws = np.array([w for _, w in atoms], dtype=np.float64)
    ws = ws / math.fsum(ws)
    heavy = int(np.argmax(ws))
    ws[heavy] = 1.0 - math.fsum(np.delete(ws, heavy))
    return tuple((z, float(w)) for (z, _), w in zip(atoms, ws))


@dataclass(frozen=True, eq=False)
class CircleMeasure:
    """Probability measure ``sum_i w_i delta_{z_i}`` on the circle.

    Build through :meth:`from_atoms`, which merges, renormalizes and sorts.
    With ``exact=True`` weights are kept as :class:`Fraction`.
    """

    atoms: tuple
    exact: bool = False

    @classmethod
    def from_atoms(cls, pairs, exact: bool = False) -> CircleMeasure:
        return cls(_canonical(pairs, exact), exact)

    @classmethod
    def dirac(cls, z: UnitPoint | Fraction | int = 0, exact: bool = False) -> CircleMeasure:
        return cls.from_atoms([(z, 1)], exact)

    @classmethod
    def roots_of_unity(cls, order: int, rotation: Fraction | int = 0,
                       exact: bool = False) -> CircleMeasure:
        """Uniform measure on the ``order``-th roots of unity, rotated by
        ``rotation`` turns."""
        rot = Fraction(rotation)
        return cls.from_atoms([(UnitPoint.from_fraction(Fraction(j, order) + rot),
                                Fraction(1, order)) for j in range(order)], exact)

    def __eq__(self, other) -> bool:
        return isinstance(other, CircleMeasure) and self.atoms == other.atoms

    def __hash__(self):
        return hash(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def points(self) -> list[UnitPoint]:
        return [z for z, _ in self.atoms]

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([float(w) for _, w in self.atoms], dtype=np.float64)

    @cached_property
    def _rational_split(self):
        rat = [i for i, (z, _) in enumerate(self.atoms) if isinstance(z.angle, RationalAngle)]
        fix = [i for i in range(len(self.atoms)) if i not in set(rat)]
        nums = [self.atoms[i][0].angle.num for i in rat]
        dens = [self.atoms[i][0].angle.den for i in rat]
        return np.array(rat, dtype=np.int64), fix, nums, dens

    @property
    def is_rational(self) -> bool:
        return not self._rational_split[1]

    def to_json(self) -> list[dict]:
        return [{"angle": z.to_json(),
                 "weight": (f"{w.numerator}/{w.denominator}" if self.exact else w)}
                for z, w in self.atoms]

    @classmethod
    def from_json(cls, obj) -> CircleMeasure:
        if isinstance(obj, dict):
            exact = bool(obj.get("exact", False))
            obj = obj["atoms"]
        else:
            exact = any(isinstance(a.get("weight"), str) for a in obj)
        pairs = []
        for a in obj:
            ang = a["angle"]
            if isinstance(ang, (list, tuple)):
                ang = {"rational": ang}
            elif isinstance(ang, str):
                f = Fraction(ang)
                ang = {"rational": [f.numerator, f.denominator]}
            pairs.append((UnitPoint(angle_from_json(ang)), Fraction(a["weight"])
                          if exact else float(Fraction(a["weight"]))))
        return cls.from_atoms(pairs, exact)

    # --- transforms -------------------------------------------------------

    def _values(self, ns: Sequence[int], chord: bool) -> np.ndarray:
        """Matrix of ``z_i**n`` (or ``|z_i**n - 1|``) for every n and atom."""
        ns = [int(n) for n in ns]
        rat, fix, nums, dens = self._rational_split
        out = np.empty((len(ns), len(self.atoms)), dtype=np.float64 if chord else np.complex128)
        if len(rat):
            r = rational_residues(ns, nums, dens)
            out[:, rat] = chord_from_residues(r, dens) if chord else unit_from_residues(r, dens)
        for i in fix:
            z = self.atoms[i][0]
            for row, n in enumerate(ns):
                w = z.power(n)
                out[row, i] = w.chord() if chord else w.to_complex()
        return out

    def identity_mask(self, ns: Sequence[int]) -> np.ndarray:
        """True where every atom satisfies ``z**n == 1`` exactly, so the
        Fourier coefficient is exactly 1 (always False with fixed atoms)."""
        rat, fix, nums, dens = self._rational_split
        if fix:
            return np.zeros(len(ns), dtype=bool)
        r = rational_residues([int(n) for n in ns], nums, dens)
        return np.all(r == 0, axis=1)

    def fourier_many(self, ns: Sequence[int]) -> np.ndarray:
        return self._values(ns, chord=False) @ self.weights

    def l1_many(self, ns: Sequence[int]) -> np.ndarray:
        return self._values(ns, chord=True) @ self.weights

    def fourier(self, n: int) -> complex:
        if n == 0:
            return complex(1.0, 0.0)
        return complex(self.fourier_many([n])[0])

    def l1_transform(self, n: int) -> float:
        return float(self.l1_many([n])[0])

    def max_atom(self) -> tuple[UnitPoint, object]:
        """Heaviest atom; ties go to the smallest angle."""
        best = 0
        for i, (_, w) in enumerate(self.atoms):
            if w > self.atoms[best][1]:
                best = i
        return self.atoms[best]

    def atom_at(self, z: UnitPoint):
        """Mass at ``z``.  Exact for rational atoms and rational ``z``."""
        total = Fraction(0) if self.exact else 0.0
        for y, w in self.atoms:
            if y.exact and z.exact:
                if y == z:
                    total += w
            elif y == z:
                total += w
            elif _overlap(y, z):
                raise AmbiguousAtom(f"atom {y!r} cannot be separated from {z!r}")
        return total


def fourier(mu: CircleMeasure, n: int) -> complex:
    return mu.fourier(n)


def l1_transform(mu: CircleMeasure, n: int) -> float:
    return mu.l1_transform(n)


def atom_at(mu: CircleMeasure, z: UnitPoint):
    return mu.atom_at(z)


def max_atom(mu: CircleMeasure):
    return mu.max_atom()


def convolve(mu: CircleMeasure, nu: CircleMeasure, cap: int = DEFAULT_CAP) -> CircleMeasure:
    if len(mu) * len(nu) > cap:
        raise CapExceeded(f"convolution needs {len(mu) * len(nu)} atoms, cap is {cap}")
    exact = mu.exact and nu.exact
    return CircleMeasure.from_atoms(
        [(z * y, w * v) for z, w in mu.atoms for y, v in nu.atoms], exact)


def pushforward(mu: CircleMeasure, p: int) -> CircleMeasure:
    """Image of ``mu`` under ``z -> z**p``."""
    return CircleMeasure.from_atoms([(z.power(p), w) for z, w in mu.atoms], mu.exact)


def mix(components: Sequence[tuple[object, CircleMeasure]]) -> CircleMeasure:
    """Convex combination ``sum_j c_j mu_j``."""
    if not components:
        raise InvalidSpec("mix needs at least one component")
    exact = all(m.exact for _, m in components) and \
        all(isinstance(c, (int, Fraction)) for c, _ in components)
    if any(c <= 0 for c, _ in components):
        raise InvalidSpec("mixture weights must be positive")
    total = sum(Fraction(c) for c, _ in components) if exact else \
        math.fsum(float(c) for c, _ in components)
    if abs(float(total) - 1.0) > WEIGHT_TOL:
        raise InvalidSpec(f"mixture weights sum to {float(total)!r}, not 1")
    pairs = []
    for c, m in components:
        c = Fraction(c) if exact else float(c)
        pairs.extend((z, c * w) for z, w in m.atoms)
    return CircleMeasure.from_atoms(pairs, exact)


# --- Fourier inequality checks ----------------------------------------------

@dataclass
class Fact21Report:
    n: int
    defect: float           # |mu^(n) - 1|
    l1: float               # integral of |z^n - 1|
    upper: float            # sqrt(2) |mu^(n) - 1|^(1/2)
    ok: bool
    m: int | None = None
    sum_defect: float | None = None     # |mu^(m+n) - 1|
    sum_bound: float | None = None      # sqrt2 (|mu^(m)-1|^(1/2) + |mu^(n)-1|^(1/2))


def _fact21_from_values(n, f, l1, slack):
    d = abs(f - 1)
    up = math.sqrt(2.0) * math.sqrt(d)
    return Fact21Report(n, d, l1, up, d <= l1 + slack and l1 <= up + slack)


def fact21_check(mu: CircleMeasure, n: int, m: int | None = None,
                 slack: float = 1e-10) -> Fact21Report:
    """Check ``|mu^(n)-1| <= int|z^n-1| dmu <= sqrt2 |mu^(n)-1|^(1/2)`` and,
    when ``m`` is given, the sum rule for ``m + n``."""
    ns = [n] if m is None else [n, m, m + n]
    fs = mu.fourier_many(ns)
    rep = _fact21_from_values(n, complex(fs[0]), mu.l1_transform(n), slack)
    if m is not None:
        dm, dn = abs(fs[1] - 1), rep.defect
        rep.m = m
        rep.sum_defect = float(abs(fs[2] - 1))
        rep.sum_bound = math.sqrt(2.0) * (math.sqrt(dm) + math.sqrt(dn))
        rep.ok = rep.ok and rep.sum_defect <= rep.sum_bound + slack
    return rep


def fact21_sweep(mu: CircleMeasure, ns: Sequence[int], slack: float = 1e-10) -> list[Fact21Report]:
    """Vectorized :func:`fact21_check` over many exponents."""
    fs = mu.fourier_many(ns)
    ls = mu.l1_many(ns)
    return [_fact21_from_values(int(n), complex(f), float(l), slack)
            for n, f, l in zip(ns, fs, ls)]


@dataclass
class Fact22Report:
    eps: float
    max_defect: float
    bound: float
    worst: tuple
    ok: bool


def fact22_check(mu: CircleMeasure, ns: Sequence[int], ms: Sequence[int],
                 slack: float = 1e-9) -> Fact22Report:
    """With ``eps`` the larger of the two window sup-defects, check that every
    ``|mu^(n +- m) - 1|`` stays below ``2 sqrt(2 eps)``."""
    fn = np.abs(mu.fourier_many(ns) - 1)
    fm = np.abs(mu.fourier_many(ms) - 1)
    eps = float(max(fn.max(initial=0.0), fm.max(initial=0.0)))
    combos = [(n, m, s) for n in ns for m in ms for s in (1, -1)]
    vals = np.abs(mu.fourier_many([n + s * m for n, m, s in combos]) - 1)
    i = int(np.argmax(vals)) if len(vals) else 0
    worst = combos[i] if combos else ()
    top = float(vals[i]) if len(vals) else 0.0
    bound = 2.0 * math.sqrt(2.0 * eps)
    return Fact22Report(eps, top, bound, worst, top <= bound + slack)


# --- measures on the integers -------------------------------------------------

@dataclass(frozen=True, eq=False)
class ZMeasure:
    """Probability measure ``sum_n a_n delta_n`` on the integers."""

    support: tuple
    exact: bool = False

    @classmethod
    def from_pairs(cls, pairs, exact: bool = False) -> ZMeasure:
        acc: dict[int, object] = {}
        for n, w in pairs:
            w = Fraction(w) if exact else float(w)
            if w < 0:
                raise InvalidSpec("weights must be nonnegative")
            if w:
                acc[int(n)] = acc.get(int(n), 0) + w
        if not acc:
            raise InvalidSpec("a probability measure needs at least one atom")
        total = sum(acc.values()) if exact else math.fsum(acc.values())
        return cls(tuple((n, acc[n] / total) for n in sorted(acc)), exact)

    @classmethod
    def dirac(cls, n: int = 0, exact: bool = True) -> ZMeasure:
        return cls.from_pairs([(n, 1)], exact)

    @classmethod
    def half_pair(cls, m: int, exact: bool = True) -> ZMeasure:
        """``(delta_0 + delta_m) / 2``."""
        return cls.from_pairs([(0, Fraction(1, 2)), (m, Fraction(1, 2))], exact)

    def __eq__(self, other):
        return isinstance(other, ZMeasure) and self.support == other.support

    def __len__(self):
        return len(self.support)

    @property
    def points(self) -> list[int]:
        return [n for n, _ in self.support]

    def to_json(self) -> list[dict]:
        return [{"n": str(n), "weight": (f"{w.numerator}/{w.denominator}" if self.exact else w)}
                for n, w in self.support]


def zmeasure_fourier(nu: ZMeasure, z: UnitPoint) -> complex:
    """``sum_n a_n z**n``."""
    ws = np.array([float(w) for _, w in nu.support])
    ns = nu.points
    a = z.angle
    if isinstance(a, RationalAngle):
        r = rational_residues(ns, [a.num], [a.den])[:, 0]
        return complex(unit_from_residues(r, a.den) @ ws)
    return complex(sum(w * z.power(n).to_complex() for n, w in zip(ns, ws)))


def zmeasure_convolve(nu1: ZMeasure, nu2: ZMeasure, cap: int = DEFAULT_CAP) -> ZMeasure:
    if len(nu1) * len(nu2) > cap:
        raise CapExceeded(f"convolution needs {len(nu1) * len(nu2)} atoms, cap is {cap}")
    return ZMeasure.from_pairs([(n + m, w * v) for n, w in nu1.support for m, v in nu2.support],
                               nu1.exact and nu2.exact)


# --- orbit covering and transport distance ------------------------------------

@dataclass
class CoveringReport:
    word_length: int
    grid_size: int
    orbit_size: int
    radius: float       # radians: worst grid point's distance to the orbit


def support_group_covering(mu: CircleMeasure, word_length: int, grid_size: int,
                           cap: int = 200_000) -> CoveringReport:
    """Products of at most ``word_length`` support atoms and their inverses,
    and the largest distance from a point of the ``grid_size`` grid to that
    set of products."""
    gens = set()
    for z, _ in mu.atoms:
        c = _interval(z)[0]
        if c:
            gens.add(c)
            gens.add((-c) % 1)
    orbit = {Fraction(0)}
    frontier = {Fraction(0)}
    for _ in range(word_length):
        new = {(x + g) % 1 for x in frontier for g in gens} - orbit
        if not new:
            break
        orbit |= new
        if len(orbit) > cap:
            raise CapExceeded(f"orbit exceeds {cap} points; lower the word length")
        frontier = new
    pts = np.sort(np.array([float(x) for x in orbit]))
    grid = np.arange(grid_size) / grid_size
    idx = np.searchsorted(pts, grid)
    right = pts[idx % len(pts)] + (idx == len(pts))
    left = pts[(idx - 1) % len(pts)] - (idx == 0)
    dist = np.minimum(right - grid, grid - left)
    return CoveringReport(word_length, grid_size, len(orbit),
                          float(2 * math.pi * dist.max()))


def circle_transport(mu: CircleMeasure, nu: CircleMeasure) -> Fraction:
    """Exact Wasserstein-1 distance on the circle (in turns) between two
    measures with rational atoms and exact weights.

    For circle measures this is ``min_c int_0^1 |F_mu - F_nu - c|``, and the
    minimizing ``c`` is a weighted median of the CDF difference.  It bounds
    Fourier deviations: ``|mu^(n) - nu^(n)| <= 2 pi |n| W1``.
    """
    events: dict[Fraction, Fraction] = {}
    for m, sign in ((mu, 1), (nu, -1)):
        for z, w in m.atoms:
            t = _interval(z)[0]
            events[t] = events.get(t, Fraction(0)) + sign * Fraction(w)
    xs = sorted(events)
    pieces = []     # (value of F_mu - F_nu, length)
    acc = Fraction(0)
    for i, x in enumerate(xs):
        acc += events[x]
        nxt = xs[i + 1] if i + 1 < len(xs) else Fraction(1)
        if nxt > x:
            pieces.append((acc, nxt - x))
    if xs and xs[0] > 0:
        pieces.append((Fraction(0), xs[0]))
    pieces.sort()
    half = sum(length for _, length in pieces) / 2
    run = Fraction(0)
    c = pieces[0][0] if pieces else Fraction(0)
    for v, length in pieces:
        run += length
        if run >= half:
            c = v
            break
    return sum(abs(v - c) * length for v, length in pieces)
