"""Signed-sum diagnostics for integer sequences.

A value is representable at cutoff K with r summands if it equals
``sum_i s_i n_{k_i}`` with ``s_i = +-1``, at most r terms and every
``k_i >= K``.  Repeated indices are allowed unless ``allow_repeats=False``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import CapExceeded, InvalidSpec, PreconditionError
from .sequences import IntegerSequence

HALF_CAP = 2_000_000
PAIR_CAP = 50_000_000
FFT_SPAN = 1 << 23
_I64 = 2**62


@dataclass(frozen=True)
class SignedSumQuery:
    r: int
    K: int = 0
    N: int = 10**9
    allow_repeats: bool = True

    def __post_init__(self):
        if self.r < 1:
            raise InvalidSpec("r must be >= 1")
        if self.N < 1:
            raise InvalidSpec("N must be >= 1")
        if self.K < 0:
            raise InvalidSpec("K must be >= 0")


def _count_sums(t: int, h: int, repeats: bool) -> int:
    total = 0
    for j in range(1, h + 1):
        total += (math.comb(t + j - 1, j) if repeats else math.comb(t, j)) * 2**j
    return total


def half_sums(terms: Sequence[int], h: int, exact_count: bool = False,
              cap: int = HALF_CAP, repeats: bool = True, offset: int = 0) -> dict:
    """Map value -> one decomposition ``((sign, index), ...)`` over signed sums
    of at most (or, with ``exact_count``, exactly) ``h`` terms."""
    if _count_sums(len(terms), h, repeats) > cap:
        raise CapExceeded(f"half enumeration of {len(terms)} terms with h={h} exceeds {cap}")
    out: dict = {}
    if h == 0 or not exact_count:
        out[0] = ()
    pick = itertools.combinations_with_replacement if repeats else itertools.combinations
    sizes = [h] if exact_count else range(1, h + 1)
    for j in sizes:
        for idx in pick(range(len(terms)), j):
            vals = [terms[i] for i in idx]
            for signs in itertools.product((1, -1), repeat=j):
                v = sum(s * x for s, x in zip(signs, vals))
                if v not in out:
                    out[v] = tuple((s, i + offset) for s, i in zip(signs, idx))
    return out


def _as_array(values) -> np.ndarray:
    vals = sorted(values)
    if vals and max(abs(vals[0]), abs(vals[-1])) < _I64:
        return np.array(vals, dtype=np.int64)
    return np.array(vals, dtype=object)


@dataclass
class Representation:
    query: SignedSumQuery
    value: int | None           # smallest |n| > 0 within [-N, N], or None
    witness: tuple              # ((sign, index), ...) summing to +-value

    def to_json(self) -> dict:
        return {"r": self.query.r, "K": self.query.K, "N": str(self.query.N),
                "value": None if self.value is None else str(self.value),
                "witness": [[s, i] for s, i in self.witness]}


def _naive_min(terms, query: SignedSumQuery, offset: int) -> Representation:
    sums = half_sums(terms, query.r, repeats=query.allow_repeats, offset=offset, cap=PAIR_CAP)
    best = None
    for v, w in sums.items():
        if v and abs(v) <= query.N and (best is None or abs(v) < best[0]):
            best = (abs(v), w)
    return Representation(query, None, ()) if best is None else Representation(query, *best)


def min_representable(seq: IntegerSequence, query: SignedSumQuery,
                      cap: int = HALF_CAP) -> Representation:
    """Smallest positive ``|n| <= N`` that is a signed sum of at most ``r``
    terms with indices ``>= K`` (meet in the middle)."""
    terms = list(seq.terms[query.K:])
    if not terms:
        raise PreconditionError(f"no terms with index >= {query.K}")
    if not query.allow_repeats:
        return _naive_min(terms, query, query.K)
    h1, h2 = (query.r + 1) // 2, query.r // 2
    A = half_sums(terms, h1, cap=cap, offset=query.K)
    B = A if h2 == h1 else half_sums(terms, h2, cap=cap, offset=query.K)
    a_sorted = _as_array(A.keys())
    b_vals = list(B.keys())
    best = None
    if a_sorted.dtype != object and all(abs(b) < _I64 for b in b_vals) \
            and max(abs(int(a_sorted[0])), abs(int(a_sorted[-1]))) < _I64 // 2:
        b = np.array(b_vals, dtype=np.int64)
        pos = np.searchsorted(a_sorted, -b)
        for shift in (-1, 0, 1):
            j = np.clip(pos + shift, 0, len(a_sorted) - 1)
            tot = np.abs(a_sorted[j] + b)
            tot = np.where(tot == 0, np.iinfo(np.int64).max, tot)
            i = int(np.argmin(tot))
            if tot[i] <= query.N and (best is None or tot[i] < best[0]):
                best = (int(tot[i]), int(a_sorted[j[i]]), int(b[i]))
    else:
        from bisect import bisect_left
        al = list(a_sorted)
        for bv in b_vals:
            p = bisect_left(al, -bv)
            for j in (p - 1, p, p + 1):
                if 0 <= j < len(al):
                    t = abs(al[j] + bv)
                    if 0 < t <= query.N and (best is None or t < best[0]):
                        best = (t, al[j], bv)
    if best is None:
        return Representation(query, None, ())
    t, a, bv = best
    return Representation(query, t, A[a] + B[bv])


@dataclass
class ProfileRow:
    K: int
    value: int | None
    witness: tuple


@dataclass
class NullpotenceProfile:
    r: int
    N: int
    rows: list
    obstruction: bool
    divergence_consistent: bool
    note: str = ("flags are finite-ladder heuristics: obstruction = last three values equal; "
                 "divergence_consistent = strictly increasing (None counts as beyond N)")

    def to_json(self) -> dict:
        return {"r": self.r, "N": str(self.N),
                "rows": [{"K": x.K, "value": None if x.value is None else str(x.value),
                          "witness": [[s, i] for s, i in x.witness]} for x in self.rows],
                "obstruction": self.obstruction,
                "divergence_consistent": self.divergence_consistent, "note": self.note}


class InvariantViolation(AssertionError):
    pass


def nullpotence_profile(seq: IntegerSequence, r: int, K_ladder: Sequence[int], N: int,
                        allow_repeats: bool = True) -> NullpotenceProfile:
    ladder = sorted(int(K) for K in K_ladder)
    rows = []
    for K in ladder:
        rep = min_representable(seq, SignedSumQuery(r, K, N, allow_repeats))
        rows.append(ProfileRow(K, rep.value, rep.witness))
    inf = math.inf
    vals = [inf if x.value is None else x.value for x in rows]
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise InvariantViolation(f"min_representable decreased along the K ladder: {vals}")
    tail = vals[-3:]
    obstruction = len(tail) >= 2 and tail[0] != inf and all(v == tail[0] for v in tail)
    divergence = len(vals) >= 2 and all(b > a for a, b in zip(vals, vals[1:]))
    return NullpotenceProfile(r, N, rows, obstruction, divergence)


# --- densities ----------------------------------------------------------------

def _window_mask(A: np.ndarray, B: np.ndarray, N: int, pair_cap: int = PAIR_CAP) -> np.ndarray:
    """Boolean mask over ``[-N, N]`` of the values ``a + b``."""
    mask = np.zeros(2 * N + 1, dtype=bool)
    if A.dtype == object or B.dtype == object:
        A = np.array([a for a in A if -N - max(B) <= a <= N - min(B)], dtype=object)
        for b in B:
            for a in A:
                if -N <= a + b <= N:
                    mask[int(a + b) + N] = True
        return mask
    A = A[(A >= -N - B.max()) & (A <= N - B.min())]
    if not len(A):
        return mask
    span = int(A.max() - A.min()) + int(B.max() - B.min()) + 1
    if span <= FFT_SPAN:
        a0, b0 = int(A.min()), int(B.min())
        fa = np.zeros(int(A.max()) - a0 + 1)
        fb = np.zeros(int(B.max()) - b0 + 1)
        fa[A - a0] = 1
        fb[B - b0] = 1
        size = 1 << (len(fa) + len(fb) - 1).bit_length()
        conv = np.fft.irfft(np.fft.rfft(fa, size) * np.fft.rfft(fb, size), size)
        hit = np.nonzero(conv[:len(fa) + len(fb) - 1] > 0.5)[0] + a0 + b0
        hit = hit[(hit >= -N) & (hit <= N)]
        mask[hit + N] = True
        return mask
    lo = np.searchsorted(A, -N - B, side="left")
    hi = np.searchsorted(A, N - B, side="right")
    if int((hi - lo).sum()) > pair_cap:
        raise CapExceeded("too many pairs land in the window; lower N or r")
    for b, i, j in zip(B, lo, hi):
        if j > i:
            mask[A[i:j] + b + N] = True
    return mask


def _split_mask(seq, r: int, N: int, exact_count: bool, cap: int) -> np.ndarray:
    terms = list(seq.terms)
    h1, h2 = (r + 1) // 2, r // 2
    A = _as_array(half_sums(terms, h1, exact_count, cap).keys())
    B = A if h1 == h2 else _as_array(half_sums(terms, h2, exact_count, cap).keys())
    return _window_mask(A, B, N)


def _dyadic_curve(N: int, start: int = 16) -> list[int]:
    out = []
    M = start
    while M < N:
        out.append(M)
        M *= 2
    out.append(N)
    return out


@dataclass
class DensityReport:
    r: int
    N: int
    count: int
    density: Fraction
    curve: list                 # (N_i, density at N_i)

    def to_json(self) -> dict:
        return {"r": self.r, "N": self.N, "count": self.count, "density": str(self.density),
                "density_float": float(self.density),
                "curve": [{"N": n, "density": str(d), "density_float": float(d)}
                          for n, d in self.curve]}


def _prefix_density(mask: np.ndarray, N: int, Ns: Sequence[int]) -> list:
    out = []
    for M in Ns:
        cnt = int(mask[N - M:N + M + 1].sum())
        out.append((M, Fraction(cnt, 2 * M + 1)))
    return out


def br_density(seq: IntegerSequence, r: int, N: int, curve: Sequence[int] | None = None,
               cap: int = HALF_CAP) -> DensityReport:
    """``|B_r cap [-N, N]| / (2N + 1)`` where ``B_r`` holds signed sums of
    exactly ``r`` terms."""
    if r < 1 or N < 1:
        raise InvalidSpec("r and N must be positive")
    curve = _dyadic_curve(N) if curve is None else sorted(int(c) for c in curve)
    Nmax = max([N] + list(curve))
    mask = _split_mask(seq, r, Nmax, True, cap)
    cnt = int(mask[Nmax - N:Nmax + N + 1].sum())
    return DensityReport(r, N, cnt, Fraction(cnt, 2 * N + 1), _prefix_density(mask, Nmax, curve))


@dataclass
class CoverageReport:
    r: int
    N: int
    covered: int
    coverage: Fraction
    misses: int
    misses_half: int            # misses inside [-N/2, N/2]
    asymptotic_basis_candidate: bool

    def to_json(self) -> dict:
        return {"r": self.r, "N": self.N, "covered": self.covered,
                "coverage": str(self.coverage), "coverage_float": float(self.coverage),
                "misses": self.misses, "misses_half": self.misses_half,
                "asymptotic_basis_candidate": self.asymptotic_basis_candidate}


def basis_coverage(seq: IntegerSequence, r: int, N: int, cap: int = HALF_CAP) -> CoverageReport:
    """Fraction of ``[-N, N]`` reachable by at most ``r`` signed terms (the
    empty sum gives 0)."""
    mask = _split_mask(seq, r, N, False, cap)
    cov = int(mask.sum())
    misses = 2 * N + 1 - cov
    M = N // 2
    misses_half = 2 * M + 1 - int(mask[N - M:N + M + 1].sum())
    return CoverageReport(r, N, cov, Fraction(cov, 2 * N + 1), misses, misses_half,
                          misses == misses_half)


# --- linear relations -----------------------------------------------------------

@dataclass
class Relation:
    coefficients: tuple
    value: int
    positions: list

    def to_json(self) -> dict:
        return {"coefficients": list(self.coefficients), "value": str(self.value),
                "positions": self.positions}


def linear_relation_detect(seq: IntegerSequence, p: int = 2, C: int = 4,
                           window: tuple[int, int] | None = None,
                           min_hits: int = 3, min_share: float = 0.25,
                           batch: int = 1 << 14) -> list[Relation]:
    """Coefficient vectors ``(c_0..c_p)``, ``|c_i| <= C``, for which
    ``sum_i c_i n_{k+i}`` takes one nonzero value at no fewer than
    ``max(min_hits, min_share * window)`` positions ``k``.

    Each relation is reported once, signed so that its value is positive.
    """
    if not (1 <= p <= 4) or not (1 <= C <= 16):
        raise InvalidSpec("need 1 <= p <= 4 and 1 <= C <= 16")
    last = len(seq) - p
    lo, hi = (0, last) if window is None else (int(window[0]), min(int(window[1]), last))
    if hi - lo < 1:
        return []
    W = hi - lo
    need = max(min_hits, math.ceil(min_share * W))
    if need > W:
        return []
    t = seq.terms
    rows = [[t[k + i] for i in range(p + 1)] for k in range(lo, hi)]
    big = any(abs(x) >= 2**58 // (C * (p + 1)) for row in rows for x in row)
    T = np.array(rows, dtype=object if big else np.int64)
    rng = range(-C, C + 1)
    vecs = [c for c in itertools.product(range(1, C + 1), *([rng] * p))]
    found = []
    for s in range(0, len(vecs), batch):
        cm = np.array(vecs[s:s + batch], dtype=object if big else np.int64)
        vals = cm @ T.T
        srt = np.sort(vals, axis=1)
        same = (srt[:, :W - need + 1] == srt[:, need - 1:]) & (srt[:, :W - need + 1] != 0)
        for row in np.nonzero(same.any(axis=1))[0]:
            cands = sorted({int(v) for v, ok in zip(srt[row, :W - need + 1], same[row]) if ok})
            for q in cands:
                pos = [lo + k for k in range(W) if vals[row, k] == q]
                c = tuple(int(x) for x in cm[row])
                if q < 0:
                    c, q = tuple(-x for x in c), -q
                found.append(Relation(c, q, pos))
    found.sort(key=lambda rel: (-len(rel.positions), rel.value, rel.coefficients))
    return found
