"""Subset-sum families, block bounds and certified convolution witnesses.

Indices of the positive sequence ``p`` are 1-based here (``p_1`` is
``seq[0]``), so block ``I_q`` is the index range ``(2**q, 2**(q+1)]``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .circle import RationalAngle, UnitPoint, chord_from_residues
from .errors import CapExceeded, InvalidSpec, PreconditionError
from .measures import CircleMeasure, ZMeasure, zmeasure_convolve, zmeasure_fourier
from .sequences import IntegerSequence

SUBSET_CAP = 24
SUPPORT_CAP = 1 << 20
GAMMA_LIMIT = Fraction(4, 3)
GAMMA_CAP = 4 / 3 * (1 - 2**-20)
DP_BINS = 1 << 16
_TOL = 1e-12


class InsufficientBlocks(PreconditionError):
    pass


def p_at(p: IntegerSequence, j: int) -> int:
    return p.terms[j - 1]


# --- block scheme ---------------------------------------------------------------

def block_indices(q: int) -> range:
    """``I_q = (2**q, 2**(q+1)]`` as 1-based indices."""
    if q < 0:
        raise InvalidSpec("block index q must be >= 0")
    return range(2**q + 1, 2**(q + 1) + 1)


@dataclass(frozen=True)
class BlockScheme:
    """Blocks ``I_q`` grouped into superblocks ``J_l = U_{q_l <= q < q_{l+1}} I_q``.

    ``starts`` lists ``q_0 < q_1 < ... < q_L``; the last entry closes the
    final superblock, so blocks ``q_0 .. q_L - 1`` are covered.
    """

    starts: tuple

    def __post_init__(self):
        s = tuple(int(x) for x in self.starts)
        if len(s) < 2 or s[0] < 0 or any(b <= a for a, b in zip(s, s[1:])):
            raise InvalidSpec("superblock starts must be >= 0, strictly increasing, length >= 2")
        object.__setattr__(self, "starts", s)

    @classmethod
    def singletons(cls, q_lo: int, q_hi: int) -> BlockScheme:
        """One block per superblock for ``q_lo <= q <= q_hi``."""
        return cls(tuple(range(q_lo, q_hi + 2)))

    @property
    def lengths(self) -> list[int]:
        return [b - a for a, b in zip(self.starts, self.starts[1:])]

    def blocks(self) -> list[int]:
        return list(range(self.starts[0], self.starts[-1]))

    def superblock(self, l: int) -> list[int]:
        lo, hi = self.starts[l], self.starts[l + 1]
        return [j for q in range(lo, hi) for j in block_indices(q)]

    def max_index(self) -> int:
        return 2**self.starts[-1]

    def to_json(self) -> dict:
        return {"starts": list(self.starts), "lengths": self.lengths}


# --- subset sums ------------------------------------------------------------------

def subset_sum_family(p: IntegerSequence, J: Iterable[int], cap: int = SUBSET_CAP) -> list[int]:
    """Sorted distinct ``sum_{j in F} p_j`` over all ``F`` inside ``J`` (1-based)."""
    J = sorted(set(int(j) for j in J))
    if len(J) > cap:
        raise CapExceeded(f"|J| = {len(J)} exceeds the subset enumeration cap {cap}")
    sums = {0}
    for j in J:
        v = p_at(p, j)
        sums |= {s + v for s in sums}
    return sorted(sums)


def is_superincreasing(values: Sequence[int]) -> bool:
    total = 0
    for v in values:
        if v <= total:
            return False
        total += v
    return True


@dataclass(frozen=True)
class SubsetSumSet:
    """The set of subset sums of ``p`` over an index set, with a membership
    test that never enumerates it."""

    p: IntegerSequence
    indices: tuple

    @classmethod
    def over_blocks(cls, p: IntegerSequence, qs: Iterable[int]) -> SubsetSumSet:
        return cls(p, tuple(j for q in sorted(set(qs)) for j in block_indices(q)))

    def __post_init__(self):
        idx = tuple(sorted(set(int(j) for j in self.indices)))
        if idx and (idx[0] < 1 or idx[-1] > len(self.p)):
            raise InvalidSpec("subset-sum indices fall outside the sequence")
        object.__setattr__(self, "indices", idx)

    def _values(self) -> list[int]:
        return [p_at(self.p, j) for j in self.indices]

    def __contains__(self, m: int) -> bool:
        vals = self._values()
        if is_superincreasing(vals):
            for v in reversed(vals):
                if m >= v:
                    m -= v
            return m == 0
        if len(vals) > SUBSET_CAP:
            raise CapExceeded("membership needs enumeration of a non-superincreasing family")
        return m in set(subset_sum_family(self.p, self.indices))

    def covers(self, J: Iterable[int]) -> bool:
        return set(J) <= set(self.indices)

    def to_json(self) -> dict:
        return {"indices": [self.indices[0], self.indices[-1]] if self.indices else [],
                "count": len(self.indices), "superincreasing": is_superincreasing(self._values())}


# --- block lower bound --------------------------------------------------------------

@dataclass
class BlockBound:
    q: int
    z: UnitPoint
    sum: float
    bound: float
    passed: bool

    def to_json(self) -> dict:
        return {"q": self.q, "z": self.z.to_json(), "sum": self.sum, "bound": self.bound,
                "pass": self.passed}


def _chords(p: IntegerSequence, idx: Sequence[int], z: UnitPoint) -> np.ndarray:
    a = z.angle
    if isinstance(a, RationalAngle):
        r = np.array([(p_at(p, j) % a.den) * a.num % a.den for j in idx], dtype=object)
        if a.den < 2**31:
            r = r.astype(np.int64)
        return chord_from_residues(r, a.den)
    return np.array([z.power(p_at(p, j)).chord() for j in idx])


def block_lower_bound(p: IntegerSequence, z: UnitPoint, q: int) -> BlockBound:
    """``sum_{j in I_q} |z**p_j - 1|`` against ``|z - 1| / 8``."""
    idx = block_indices(q)
    if idx[-1] > len(p):
        raise PreconditionError(f"sequence has {len(p)} terms, block {q} needs {idx[-1]}")
    total = math.fsum(_chords(p, idx, z))
    bound = z.chord() / 8
    return BlockBound(q, z, total, bound, total + len(idx) * _TOL >= bound)


@dataclass
class BlockGridReport:
    qs: list
    denom_max: int
    checked: int
    failures: list             # (q, num, den, sum, bound)
    min_ratio: dict            # q -> min over z of sum / bound

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"qs": self.qs, "denom_max": self.denom_max, "checked": self.checked,
                "failures": [list(f) for f in self.failures],
                "min_ratio": {str(k): v for k, v in self.min_ratio.items()},
                "pass": self.passed}


def _grid_for_den(p: IntegerSequence, qs: Sequence[int], b: int):
    hi = 2**(max(qs) + 1)
    res = np.array([t % b for t in p.terms[:hi]], dtype=np.int64)
    a = np.array([x for x in range(1, b) if math.gcd(x, b) == 1], dtype=np.int64)
    table = chord_from_residues(np.arange(b, dtype=np.int64), b)
    bounds = table[a] / 8
    out = []
    for q in qs:
        idx = np.arange(2**q, 2**(q + 1))          # 0-based positions of I_q
        sums = table[(res[idx][:, None] * a[None, :]) % b].sum(axis=0)
        ok = sums + len(idx) * _TOL >= bounds
        fails = [(q, int(a[i]), b, float(sums[i]), float(bounds[i])) for i in np.nonzero(~ok)[0]]
        out.append((q, float(np.min(sums / bounds)), fails, len(a)))
    return out


def block_bound_grid(p: IntegerSequence, qs: Sequence[int], denom_max: int,
                     threads: int = 1) -> BlockGridReport:
    """Check the block bound at every rational ``z = a/b != 1`` with
    ``b <= denom_max`` and every ``q`` in ``qs``."""
    qs = sorted(set(int(q) for q in qs))
    if 2**(qs[-1] + 1) > len(p):
        raise PreconditionError(f"sequence too short for block {qs[-1]}")
    dens = list(range(2, denom_max + 1))
    with ThreadPoolExecutor(max(1, threads)) as ex:
        results = list(ex.map(lambda b: _grid_for_den(p, qs, b), dens))
    failures, min_ratio, checked = [], {q: math.inf for q in qs}, 0
    for per_b in results:
        for q, ratio, fails, n in per_b:
            failures.extend(fails)
            min_ratio[q] = min(min_ratio[q], ratio)
            checked += n
    failures.sort()
    return BlockGridReport(qs, denom_max, checked, failures, min_ratio)


# --- subset-product chord inequality --------------------------------------------------------------------------

@dataclass
class FactS2Report:
    hypothesis: bool
    max_subset_chord: float
    lhs: float
    rhs: float
    passed: bool | None        # None when the hypothesis fails
    same_sign: bool            # all centered angles on one side of 0

    def to_json(self) -> dict:
        return {"hypothesis": self.hypothesis, "max_subset_chord": self.max_subset_chord,
                "lhs": self.lhs, "rhs": self.rhs, "pass": self.passed,
                "same_sign": self.same_sign}


def _subset_turn_sums(turns: Sequence[float]) -> np.ndarray:
    sums = np.zeros(1)
    for t in turns:
        sums = np.concatenate([sums, sums + t])
    return sums


def fact_s2(points: Sequence[UnitPoint], cap: int = SUBSET_CAP) -> FactS2Report:
    """Checks ``sum |a_j - 1| <= (pi/2) |prod a_j - 1|`` given that every
    subset product stays within chord ``4/3`` of 1.

    The implication can fail when the centered angles have mixed signs
    (``a`` and ``conj(a)`` multiply to 1); ``same_sign`` records whether the
    input lies in the one-sided case where it always holds.
    """
    if len(points) > cap:
        raise CapExceeded(f"{len(points)} points exceed the subset cap {cap}")
    turns = [z.angle.centered() for z in points]
    sums = _subset_turn_sums(turns)
    chords = np.abs(2 * np.sin(np.pi * sums))
    worst = float(chords.max())
    hyp = worst < 4 / 3
    lhs = math.fsum(z.chord() for z in points)
    prod = UnitPoint.one()
    for z in points:
        prod = prod * z
    rhs = math.pi / 2 * prod.chord()
    same = all(t >= 0 for t in turns) or all(t <= 0 for t in turns)
    return FactS2Report(hyp, worst, lhs, rhs, (lhs <= rhs + _TOL) if hyp else None, same)


# --- heavy subsets ------------------------------------------------------------------

@dataclass
class HeavySubset:
    q: int
    F: list                    # chosen 1-based indices
    n: int                     # sum of p_j over F
    chord: float               # |z**n - 1|, recomputed
    threshold: float           # 2 gamma / pi
    block_sum: float
    hypothesis_holds: bool | None   # every subset chord < 4/3 (None when not decided)

    def to_json(self) -> dict:
        return {"q": self.q, "F": self.F, "n": str(self.n), "chord": self.chord,
                "threshold": self.threshold, "block_sum": self.block_sum,
                "hypothesis_holds": self.hypothesis_holds}


def _dp_subsets(res: Sequence[int], mod: int):
    """Reachable subset sums mod ``mod`` with the step that first reached each."""
    first = np.full(mod, -1, dtype=np.int64)
    first[0] = len(res)          # the empty set
    reach = np.zeros(mod, dtype=bool)
    reach[0] = True
    for k, r in enumerate(res):
        new = np.roll(reach, int(r)) & ~reach
        first[new] = k
        reach |= new
    return reach, first


def _backtrack(res: Sequence[int], first: np.ndarray, mod: int, target: int) -> list[int]:
    # each predecessor was reachable strictly earlier, so steps never repeat
    picked, cur = [], target
    while cur != 0:
        k = int(first[cur])
        picked.append(k)
        cur = (cur - int(res[k])) % mod
    return sorted(picked)


def select_heavy_subset(p: IntegerSequence, q: int, z: UnitPoint, gamma: float) -> HeavySubset:
    """A subset ``F`` of ``I_q`` with ``|z**(sum_F p_j) - 1| >= 2 gamma / pi``."""
    if not 0 < gamma < 4 / 3:
        raise PreconditionError(f"gamma = {gamma} must lie in (0, 4/3)")
    idx = list(block_indices(q))
    if idx[-1] > len(p):
        raise PreconditionError(f"sequence too short for block {q}")
    chords = _chords(p, idx, z)
    block_sum = math.fsum(chords)
    if block_sum < gamma:
        raise PreconditionError(f"block sum {block_sum:.6g} < gamma {gamma:.6g} for q={q}")
    threshold = 2 * gamma / math.pi
    a = z.angle
    exact = isinstance(a, RationalAngle) and a.den <= DP_BINS
    if exact:
        mod = a.den
        res = [(p_at(p, j) % mod) * a.num % mod for j in idx]
    else:
        mod = DP_BINS
        res = [int(round((z.power(p_at(p, j)).angle.turns() % 1.0) * mod)) % mod for j in idx]
    reach, first = _dp_subsets(res, mod)
    cells = np.nonzero(reach)[0]
    cell_chord = np.abs(2 * np.sin(np.pi * cells / mod))
    hyp = bool(cell_chord.max() < 4 / 3) if exact else None
    if __debug__ and hyp:
        # every subset product is near 1, so the centered angles add up near 0
        turns = [z.power(p_at(p, j)).angle.centered() for j in idx]
        assert round(math.fsum(turns)) == 0, "subset-sum angle left the central arc"
    for c in cells[np.argsort(-cell_chord, kind="stable")][:64]:
        F = [idx[k] for k in _backtrack(res, first, mod, int(c))]
        n = sum(p_at(p, j) for j in F)
        ch = z.power(n).chord()
        if ch >= threshold:
            return HeavySubset(q, F, n, ch, threshold, block_sum, hyp)
    raise PreconditionError(f"no subset of block {q} reaches chord {threshold:.6g}")


# --- Katznelson witness ------------------------------------------------------------

@dataclass
class WitnessCertificate:
    targets: list
    eps: float
    gamma: float
    gamma_raw: float
    s: int
    s_gamma: int | None        # s from the gamma bound alone
    steps: list                # (t, target index, HeavySubset)
    nu: ZMeasure
    values: list               # recomputed |nu^(z_i)|
    factor_products: list      # prod over all factors of |(1 + z_i**n)/2|
    own_bounds: list           # prod over the target's own factors
    support_in_D: bool

    @property
    def certified(self) -> bool:
        return self.support_in_D and all(v < self.eps for v in self.values) and all(
            v <= f + _TOL for v, f in zip(self.values, self.factor_products))

    def to_json(self) -> dict:
        return {
            "targets": [z.to_json() for z in self.targets], "eps": self.eps,
            "gamma": self.gamma, "gamma_raw": self.gamma_raw, "s": self.s,
            "s_gamma": self.s_gamma, "K": len(self.steps),
            "steps": [{"t": t, "target": i, **h.to_json()} for t, i, h in self.steps],
            "support_size": len(self.nu), "values": self.values,
            "factor_products": self.factor_products, "own_bounds": self.own_bounds,
            "support_in_D": self.support_in_D, "certified": self.certified,
            "nu": self.nu.to_json() if len(self.nu) <= 4096 else None,
        }


def s_from_gamma(gamma: float, eps: float) -> int | None:
    """Least ``s`` with ``(1 - (gamma/pi)**2)**(s/2) < eps``."""
    if eps > 1:
        return 0
    rho = 1 - (gamma / math.pi) ** 2
    if rho <= 0:
        return 1
    s = max(0, math.floor(2 * math.log(eps) / math.log(rho)))
    while rho ** (s / 2) >= eps:
        s += 1
    return s


def _in_D(D, m: int) -> bool:
    return m in D


def katznelson_witness(D, targets: Sequence[UnitPoint], eps: float, scheme: BlockScheme,
                       p: IntegerSequence, support_cap: int = SUPPORT_CAP,
                       include_q0: bool = False) -> WitnessCertificate:
    """Builds ``nu = conv_{t,i} (delta_0 + delta_{n_{t,i}})/2`` with
    ``|nu^(z_i)| < eps`` and support inside ``D``.

    Blocks are handed out round-robin in increasing ``q``; rounds continue
    until every target's own factors multiply to less than ``eps``.
    """
    targets = list(targets)
    if not targets:
        raise InvalidSpec("need at least one target")
    if eps <= 0:
        raise InvalidSpec("eps must be positive")
    blocks = [q for q in scheme.blocks() if include_q0 or q > 0]
    if scheme.max_index() > len(p):
        raise PreconditionError(f"sequence has {len(p)} terms, scheme needs {scheme.max_index()}")
    if isinstance(D, SubsetSumSet):
        blocks = [q for q in blocks if D.covers(block_indices(q))]
    if eps > 1:
        nu = ZMeasure.dirac(0)
        values = [abs(zmeasure_fourier(nu, z)) for z in targets]
        return WitnessCertificate(targets, eps, math.nan, math.nan, 0, 0, [], nu, values,
                                  [1.0] * len(targets), [1.0] * len(targets), _in_D(D, 0))
    if not blocks:
        raise InsufficientBlocks("no usable blocks in D")
    sums = [block_lower_bound(p, z, q).sum for z in targets for q in blocks]
    gamma_raw = min(sums)
    if gamma_raw <= 0:
        raise PreconditionError("gamma = 0: some target has a vanishing block sum")
    gamma = min(gamma_raw, GAMMA_CAP)
    own = [1.0] * len(targets)
    steps, queue, t = [], list(blocks), 0
    while any(b >= eps for b in own):
        t += 1
        if len(queue) < len(targets):
            raise InsufficientBlocks(
                f"round {t} needs {len(targets)} blocks, {len(queue)} left; add blocks or raise eps")
        if 2 ** (len(steps) + len(targets)) > support_cap:
            raise CapExceeded("witness support would exceed the cap; raise eps")
        for i, z in enumerate(targets):
            h = select_heavy_subset(p, queue.pop(0), z, gamma)
            steps.append((t, i, h))
            own[i] *= abs(1 + z.power(h.n).to_complex()) / 2
    nu = ZMeasure.dirac(0)
    for _, _, h in steps:
        nu = zmeasure_convolve(nu, ZMeasure.half_pair(h.n), cap=support_cap)
    values = [abs(zmeasure_fourier(nu, z)) for z in targets]
    factors = [math.prod(abs(1 + z.power(h.n).to_complex()) / 2 for _, _, h in steps)
               for z in targets]
    support_ok = all(_in_D(D, n) for n in nu.points)
    return WitnessCertificate(targets, eps, gamma, gamma_raw, t, s_from_gamma(gamma, eps), steps,
                              nu, values, factors, own, support_ok)


# --- sublevel sets --------------------------------------------------------------------

@dataclass
class SublevelSet:
    eps: float
    N: int
    members: np.ndarray        # sorted n in [1, N]

    def bitmap(self) -> np.ndarray:
        out = np.zeros(self.N, dtype=bool)
        out[self.members - 1] = True
        return out

    def to_json(self, as_bitmap: bool = False) -> dict:
        body = {"eps": self.eps, "N": self.N, "count": int(len(self.members))}
        if as_bitmap:
            body["bitmap"] = "".join("1" if b else "0" for b in self.bitmap())
        else:
            body["members"] = [int(n) for n in self.members]
        return body


def sublevel_set(mu: CircleMeasure, eps: float, N: int, chunk: int = 1 << 16) -> SublevelSet:
    """``{1 <= n <= N : |mu^(n) - 1| < eps}`` by a direct sweep."""
    if N < 1:
        raise InvalidSpec("N must be >= 1")
    parts = []
    for lo in range(1, N + 1, chunk):
        ns = np.arange(lo, min(N, lo + chunk - 1) + 1)
        vals = mu.fourier_many(ns)
        parts.append(ns[np.abs(vals - 1) < eps])
    return SublevelSet(eps, N, np.concatenate(parts).astype(np.int64))
