"""Kazhdan-side diagnostics: Hartman averages, Cesaro atom estimates,
the chain certificate for ``n_{k+1} = q n_k + k`` and witness searches."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .circle import RationalAngle, UnitPoint, rational_residues, unit_from_residues
from .errors import InvalidSpec, PreconditionError, RelationViolation
from .measures import CircleMeasure, mix
from .rigidity import gamma_scan, proxy_start, pushforward_family_average, window_defect
from .sequences import IntegerSequence


# --- Hartman averages -------------------------------------------------------

@dataclass
class HartmanReport:
    z: UnitPoint
    ladder: list
    values: list                # |(1/(K+1)) sum_{k<=K} z^{n_k}|
    slope: float | None         # least-squares slope of log value vs log K

    def to_json(self) -> dict:
        return {"z": self.z.to_json(), "K": self.ladder, "values": self.values,
                "slope": self.slope}


def loglog_slope(ladder: Sequence[int], values: Sequence[float]) -> float | None:
    pts = [(math.log(K), math.log(v)) for K, v in zip(ladder, values) if K > 0 and v > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def _rational_partial_sums(terms, a: int, b: int, ladder: list[int]) -> list[float]:
    r = rational_residues(terms, [a], [b])[:, 0]
    out = []
    if b == 1:
        return [1.0] * len(ladder)
    units = unit_from_residues(np.arange(b, dtype=np.int64), b)
    for K in ladder:
        if b <= 4 * (K + 1):
            counts = np.bincount(r[:K + 1].astype(np.int64), minlength=b)
            # sum_j e(j/b) = 0, so removing the common count is exact
            counts = counts - counts.min()
            s = counts @ units
        else:
            s = unit_from_residues(r[:K + 1], b).sum()
        out.append(abs(s) / (K + 1))
    return out


def hartman_statistic(seq: IntegerSequence, z: UnitPoint, ladder: Sequence[int]) -> HartmanReport:
    """``|(1/(K+1)) sum_{k=0}^{K} z^{n_k}|`` at each ``K`` of the ladder.

    Needs ``K < len(seq)`` (the sum uses ``K + 1`` terms).
    """
    ladder = [int(K) for K in ladder]
    if not ladder or min(ladder) < 0 or max(ladder) >= len(seq):
        raise IndexError(f"ladder must lie in [0, {len(seq) - 1}]")
    terms = seq.terms[:max(ladder) + 1]
    a = z.angle
    if isinstance(a, RationalAngle):
        values = _rational_partial_sums(terms, a.num, a.den, ladder)
    else:
        vals = np.array([z.power(n).to_complex() for n in terms])
        csum = np.cumsum(vals)
        values = [abs(csum[K]) / (K + 1) for K in ladder]
    values = [float(v) for v in values]
    return HartmanReport(z, ladder, values, loglog_slope(ladder, values))


def hartman_grid(seq: IntegerSequence, points: Sequence[UnitPoint],
                 ladder: Sequence[int]) -> list[HartmanReport]:
    return [hartman_statistic(seq, z, ladder) for z in points]


# --- Cesaro means -----------------------------------------------------------

@dataclass
class CesaroReport:
    K: int
    estimate: complex           # (1/(K+1)) sum_{k=0}^{K} mu^(k)
    exact: object               # mu({1}) when all atoms are rational, else None
    error_bound: float          # sum_i w_i 2 / ((K+1) |z_i - 1|) over z_i != 1

    def to_json(self) -> dict:
        return {"K": self.K, "estimate": [self.estimate.real, self.estimate.imag],
                "exact": None if self.exact is None else str(self.exact),
                "error_bound": self.error_bound}


def cesaro_atom_estimate(mu: CircleMeasure, K: int) -> CesaroReport:
    """Cesaro mean of ``mu^(0..K)`` through closed-form geometric sums."""
    K = int(K)
    total = 0j
    bound = 0.0
    for z, w in mu.atoms:
        w = float(w)
        if z.is_identity():
            total += w
            continue
        zc = z.to_complex()
        total += w * (1 - z.power(K + 1).to_complex()) / ((K + 1) * (1 - zc))
        bound += w * 2 / ((K + 1) * abs(zc - 1))
    exact = mu.atom_at(UnitPoint.one()) if mu.is_rational else None
    return CesaroReport(K, complex(total), exact, bound)


# --- chain certificate ----------------------------------------------------------

def verify_relation(seq: IntegerSequence, q: int, blocks=None) -> list[int]:
    """Indices ``k`` at which ``n_{k+1} = q n_k + k`` was checked.

    ``blocks`` is a list of half-open index ranges ``(start, stop)``; the
    relation is checked for every ``k`` with ``start <= k`` and
    ``k + 1 < stop``.  Default: the whole sequence.
    """
    t = seq.terms
    blocks = [(0, len(t))] if blocks is None else [tuple(b) for b in blocks]
    covered = []
    for start, stop in blocks:
        if not 0 <= start < stop <= len(t):
            raise InvalidSpec(f"block ({start}, {stop}) outside sequence")
        for k in range(start, stop - 1):
            if t[k + 1] != q * t[k] + k:
                raise RelationViolation(
                    f"n_{k + 1} = {t[k + 1]} differs from {q}*n_{k} + {k} = {q * t[k] + k}", k)
            covered.append(k)
    return sorted(set(covered))


@dataclass
class ChainCertificate:
    q: int
    eps: float
    window_sup: float           # sup_k |mu^(n_k) - 1| (must be < eps)
    bound: float                # (1+q) sqrt(2 eps)
    covered: int                # number of k checked
    max_deviation: float        # max over covered k of |mu^(k) - 1|
    first_failure: int | None
    holds: bool
    cesaro: CesaroReport | None
    cesaro_threshold_applies: bool      # bound <= 1/2
    cesaro_ge_half: bool | None

    def to_json(self) -> dict:
        return {
            "q": self.q, "eps": self.eps, "window_sup": self.window_sup, "bound": self.bound,
            "covered": self.covered, "max_deviation": self.max_deviation,
            "first_failure": self.first_failure, "holds": self.holds,
            "cesaro": None if self.cesaro is None else self.cesaro.to_json(),
            "cesaro_threshold_applies": self.cesaro_threshold_applies,
            "cesaro_ge_half": self.cesaro_ge_half,
        }


def kazhdan_chain_certificate(mu: CircleMeasure, seq: IntegerSequence, q: int, eps: float,
                              blocks=None, slack: float = 1e-9,
                              cesaro_K: int | None = None) -> ChainCertificate:
    """Certify ``|mu^(k) - 1| <= (1+q) sqrt(2 eps)`` on every ``k`` covered by
    the relation ``n_{k+1} = q n_k + k``.

    Preconditions (relation and ``sup_k |mu^(n_k) - 1| < eps`` over the
    whole computed sequence) are verified; failures raise.
    """
    covered = verify_relation(seq, q, blocks)
    sup = window_defect(mu, seq).sup
    if not sup < eps:
        raise PreconditionError(f"window defect {sup:.6g} is not below eps={eps}")
    bound = (1 + q) * math.sqrt(2 * eps)
    dev = np.abs(mu.fourier_many(covered) - 1) if covered else np.zeros(0)
    bad = np.nonzero(dev > bound + slack)[0]
    first = covered[int(bad[0])] if len(bad) else None
    applies = bound <= 0.5
    K = cesaro_K if cesaro_K is not None else (covered[-1] if covered else 0)
    ces = cesaro_atom_estimate(mu, K)
    ge_half = (ces.estimate.real >= 0.5 - slack) if applies else None
    return ChainCertificate(q, eps, sup, bound, len(covered), float(dev.max(initial=0.0)),
                            first, first is None, ces, applies, ge_half)


def near_identity_measure(rng: np.random.Generator, weight: float, atoms: int = 5,
                          max_den: int = 10**4) -> CircleMeasure:
    """``(1 - weight) delta_1`` plus ``weight`` spread over random rational atoms.

    Any such measure has every Fourier defect at most ``2 * weight``.
    """
    pairs = [(UnitPoint.one(), 1.0 - weight)]
    ws = rng.random(atoms) + 0.05
    ws = weight * ws / ws.sum()
    for w in ws:
        b = int(rng.integers(2, max_den + 1))
        pairs.append((UnitPoint.rational(int(rng.integers(1, b)), b), float(w)))
    return CircleMeasure.from_atoms(pairs)


# --- witness search ---------------------------------------------------------

@dataclass
class SearchResult:
    family: str
    measure: CircleMeasure | None
    params: object
    limsup_proxy: float
    sup_defect: float
    max_atom_weight: float
    evaluations: int
    budget_exhausted: bool
    degenerate_eps: bool
    success: bool
    note: str = "continuity proxy: max atom weight must not exceed the ceiling"

    def to_json(self) -> dict:
        return {
            "family": self.family, "params": _params_json(self.params),
            "limsup_proxy": self.limsup_proxy, "sup_defect": self.sup_defect,
            "max_atom_weight": self.max_atom_weight, "evaluations": self.evaluations,
            "budget_exhausted": self.budget_exhausted, "degenerate_eps": self.degenerate_eps,
            "success": self.success, "note": self.note,
            "measure": None if self.measure is None else self.measure.to_json(),
        }


def _params_json(p):
    if isinstance(p, (list, tuple)):
        return [_params_json(x) for x in p]
    if isinstance(p, (Fraction, int)) and not isinstance(p, bool):
        return str(p)
    return p


def tail_divisors(seq: IntegerSequence, K0: int, K1: int, order_cap: int) -> list[int]:
    g = 0
    for n in seq.terms[proxy_start(K0, K1):K1]:
        g = math.gcd(g, n)
    if g == 0:
        return [1]
    return [d for d in range(1, min(g, order_cap) + 1) if g % d == 0]


def _root_members(seq, K0, K1, mixture_size, order_cap):
    orders = tail_divisors(seq, K0, K1, order_cap)
    size = min(mixture_size, len(orders))
    for i in range(len(orders) - size + 1):
        chosen = tuple(orders[i:i + size])
        yield chosen, lambda c=chosen: mix(
            [(Fraction(1, len(c)), CircleMeasure.roots_of_unity(o, exact=True)) for o in c])


def _dirac_members(seq, eps, K0, K1, denom_max):
    hits = [h for h in gamma_scan(seq, eps, K0, K1, denom_max=denom_max).hits() if h != 0]
    hits.sort(key=lambda f: (f.denominator, f.numerator))
    for j in range(1, len(hits) + 1):
        chosen = tuple(hits[:j])
        yield chosen, lambda c=chosen: CircleMeasure.from_atoms(
            [(x, Fraction(1, len(c))) for x in c], exact=True)


def _pushforward_members(seq, eps, K0, K1, denom_max):
    hits = [h for h in gamma_scan(seq, eps, K0, K1, denom_max=denom_max).hits() if h != 0]
    hits.sort(key=lambda f: (f.denominator, f.numerator))
    spans = [s for s in (2, 4, 8, 16) if s <= K1 - K0]
    for h in hits:
        for s in spans:
            sel = list(range(K1 - s, K1))
            yield (h, s), lambda h=h, sel=sel: pushforward_family_average(
                CircleMeasure.dirac(h, exact=True), seq, sel)[0]


def non_kazhdan_search(seq: IntegerSequence, eps: float, family: str = "roots",
                       budget: int = 100, max_atom: float = 0.05, K0: int = 0,
                       K1: int | None = None, mixture_size: int = 4,
                       order_cap: int = 1 << 12, denom_max: int = 64) -> SearchResult:
    """Search a witness family for a measure with small lim sup defect and
    max atom weight at most ``max_atom``.

    Members are visited in lexicographic parameter order; the objective is
    the lim sup proxy, ties broken by that order.
    """
    K1 = len(seq) if K1 is None else K1
    degenerate = eps > 2
    if family == "roots":
        members = _root_members(seq, K0, K1, mixture_size, order_cap)
    elif family == "dirac":
        members = _dirac_members(seq, eps, K0, K1, denom_max)
    elif family == "pushforward":
        members = _pushforward_members(seq, eps, K0, K1, denom_max)
    else:
        raise InvalidSpec(f"unknown witness family {family!r}")
    best = None
    evals = 0
    exhausted = False
    for params, build in members:
        if evals >= budget:
            exhausted = True
            break
        mu = build()
        evals += 1
        weight = float(mu.max_atom()[1])
        if weight > max_atom:
            continue
        rep = window_defect(mu, seq, K0, K1)
        key = rep.limsup_proxy
        if best is None or key < best[0]:
            best = (key, rep.sup, weight, params, mu)
        if degenerate or key == 0.0:
            break
    if best is None:
        return SearchResult(family, None, None, math.inf, math.inf, math.nan, evals,
                            exhausted, degenerate, False)
    key, sup, weight, params, mu = best
    return SearchResult(family, mu, params, key, sup, weight, evals, exhausted, degenerate,
                        degenerate or key < eps)
