"""Finite-window rigidity diagnostics.

"lim sup_k |a_k| < eps" is approximated throughout by the trailing sup over
the second half of the computed window; every report carries that proxy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .circle import UnitPoint, chord_from_residues, reduce_exponents
from .errors import PreconditionError
from .measures import CircleMeasure, circle_transport, mix, pushforward
from .sequences import IntegerSequence

PROXY_NOTE = "lim sup proxy = max over k in [K0 + (K1-K0)//2, K1) of the per-k value"
SWEEP_CAP = 4096


def _check_window(seq, K0: int, K1: int | None) -> tuple[int, int]:
    K1 = len(seq) if K1 is None else int(K1)
    if not (0 <= K0 < K1 <= len(seq)):
        raise IndexError(f"window [{K0}, {K1}) outside sequence of length {len(seq)}")
    return int(K0), K1


def proxy_start(K0: int, K1: int) -> int:
    return K0 + (K1 - K0) // 2


@dataclass
class DefectReport:
    sequence: str
    K0: int
    K1: int
    terms: list
    defects: np.ndarray         # |mu^(n_k) - 1| for k in [K0, K1)
    trailing: np.ndarray        # trailing[j] = max(defects[j:])
    max_atom: tuple

    @property
    def sup(self) -> float:
        return float(self.defects.max())

    @property
    def limsup_proxy(self) -> float:
        return float(self.trailing[proxy_start(self.K0, self.K1) - self.K0])

    def trailing_from(self, K: int) -> float:
        if K >= self.K1:
            return 0.0
        return float(self.trailing[max(K, self.K0) - self.K0])

    def rows(self):
        for i, (n, d) in enumerate(zip(self.terms, self.defects)):
            yield self.K0 + i, n, float(d)

    def to_json(self) -> dict:
        z, w = self.max_atom
        return {
            "sequence": self.sequence, "window": [self.K0, self.K1],
            "defects": [float(d) for d in self.defects],
            "trailing_sup": [float(t) for t in self.trailing],
            "sup": self.sup, "limsup_proxy": self.limsup_proxy, "proxy": PROXY_NOTE,
            "max_atom": {"angle": z.to_json(), "weight": str(w)},
        }


def window_defect(mu: CircleMeasure, seq: IntegerSequence, K0: int = 0,
                  K1: int | None = None) -> DefectReport:
    """Per-k values ``|mu^(n_k) - 1|`` over the half-open window ``[K0, K1)``."""
    K0, K1 = _check_window(seq, K0, K1)
    terms = list(seq.terms[K0:K1])
    d = np.abs(mu.fourier_many(terms) - 1.0)
    d[mu.identity_mask(terms)] = 0.0
    trailing = np.maximum.accumulate(d[::-1])[::-1]
    label = seq.label if isinstance(seq, IntegerSequence) else "explicit"
    return DefectReport(label, K0, K1, terms, d, trailing, mu.max_atom())


# --- Gamma_eps scans ----------------------------------------------------------

@dataclass
class GammaScan:
    eps: float
    K0: int
    K1: int
    denom_max: int
    nums: np.ndarray
    dens: np.ndarray
    sups: np.ndarray            # lim sup proxy of |z^{n_k} - 1|
    fixed: list = field(default_factory=list)      # (UnitPoint, sup)

    @property
    def proxy_start(self) -> int:
        return proxy_start(self.K0, self.K1)

    @property
    def hit_mask(self) -> np.ndarray:
        return self.sups < self.eps

    def hits(self) -> list:
        out = [Fraction(int(a), int(b)) for a, b, h in zip(self.nums, self.dens, self.hit_mask) if h]
        out += [z for z, s in self.fixed if s < self.eps]
        return out

    def sup_at(self, angle: Fraction) -> float:
        idx = np.nonzero((self.nums == angle.numerator) & (self.dens == angle.denominator))[0]
        if not len(idx):
            raise KeyError(f"{angle} is not on the grid")
        return float(self.sups[idx[0]])

    def rows(self):
        for a, b, s in zip(self.nums, self.dens, self.sups):
            yield f"{a}/{b}", float(s), bool(s < self.eps)
        for z, s in self.fixed:
            yield repr(z), s, s < self.eps

    def to_json(self) -> dict:
        return {
            "eps": self.eps, "window": [self.K0, self.K1], "proxy": PROXY_NOTE,
            "grid": f"all reduced a/b with b <= {self.denom_max}"
                    + (f" plus {len(self.fixed)} sampled fixed-point angles" if self.fixed else ""),
            "grid_size": int(len(self.nums) + len(self.fixed)),
            "hit_count": int(self.hit_mask.sum() + sum(s < self.eps for _, s in self.fixed)),
            "hits": [str(h) if isinstance(h, Fraction) else h.to_json() for h in self.hits()],
        }


def rational_grid(denom_max: int) -> tuple[np.ndarray, np.ndarray]:
    nums, dens = [], []
    for b in range(1, denom_max + 1):
        a = np.arange(b, dtype=np.int64)
        a = a[np.gcd(a, b) == 1]
        nums.append(a)
        dens.append(np.full(len(a), b, dtype=np.int64))
    return np.concatenate(nums), np.concatenate(dens)


def gamma_scan(seq: IntegerSequence, eps: float, K0: int = 0, K1: int | None = None,
               denom_max: int = 64, fixed_angles: Sequence[UnitPoint] = ()) -> GammaScan:
    """Grid points z with lim sup proxy of ``|z^{n_k} - 1|`` below ``eps``.

    The grid is every reduced ``a/b`` with ``b <= denom_max`` plus the given
    fixed-point angles.
    """
    K0, K1 = _check_window(seq, K0, K1)
    tail = list(seq.terms[proxy_start(K0, K1):K1])
    nums, dens = rational_grid(denom_max)
    sups = np.empty(len(nums), dtype=np.float64)
    red = reduce_exponents(tail, np.arange(1, denom_max + 1))     # n_k mod b
    pos = 0
    for b in range(1, denom_max + 1):
        cnt = int(np.searchsorted(dens, b, side="right")) - pos
        a = nums[pos:pos + cnt]
        r = np.mod(a[:, None] * red[None, :, b - 1], b)
        table = chord_from_residues(np.arange(b, dtype=np.int64), b)
        sups[pos:pos + cnt] = table[r].max(axis=1) if len(tail) else 0.0
        pos += cnt
    fixed = []
    for z in fixed_angles:
        s = max((z.power(n).chord() for n in tail), default=0.0)
        fixed.append((z, s))
    return GammaScan(float(eps), K0, K1, denom_max, nums, dens, sups, fixed)


# --- averaging construction ---------------------------------------------------

class CandidatePreconditionError(PreconditionError):
    def __init__(self, message: str, candidate: int, index: int | None = None):
        super().__init__(f"candidate {candidate}: {message}")
        self.candidate = candidate
        self.index = index


@dataclass
class MachinReport:
    eps: float
    eps_prime: float
    eta: float
    N: int
    M: int
    thresholds: list            # k_0 < k_1 < ... < k_M
    low_freq_checks: list       # per candidate: (method, certified bound)
    a_value: float              # max_{|n| <= N} |mu'^(n) - mu^(n)|
    a_ok: bool
    deviations: np.ndarray      # |mu'^(n_k) - mu^(n_k)| over the window
    b_value: float
    b_bound: float              # 3 eps + 2/M
    b_ok: bool
    tail_defect: float          # sup_{k > k_M} |mu'^(n_k) - 1|
    m_too_small: bool           # 2/M > eps: the bound is weaker than 4 eps

    def to_json(self) -> dict:
        return {
            "eps": self.eps, "eps_prime": self.eps_prime, "eta": self.eta, "N": self.N,
            "M": self.M, "thresholds": self.thresholds,
            "low_freq_checks": [{"method": m, "bound": b} for m, b in self.low_freq_checks],
            "a": {"value": self.a_value, "ok": self.a_ok},
            "b": {"value": self.b_value, "bound": self.b_bound, "ok": self.b_ok},
            "tail_defect": self.tail_defect, "m_too_small": self.m_too_small,
        }


def _first_threshold(defects: np.ndarray, lo: int, level: float) -> int | None:
    """Smallest k >= lo with defects[k'] < level for every k' > k, requiring
    at least one such k' in the window."""
    bad = np.nonzero(defects >= level)[0]
    k = max(lo, int(bad[-1]) if len(bad) else lo)
    return k if k + 1 < len(defects) else None


def _low_frequency_gap(mu_i: CircleMeasure, mu: CircleMeasure, X: int,
                       sweep_cap: int) -> tuple[str, float]:
    if X <= sweep_cap:
        ns = range(0, X + 1)
        return "sweep", float(np.abs(mu_i.fourier_many(ns) - mu.fourier_many(ns)).max())
    if not (mu_i.is_rational and mu.is_rational):
        return "unverifiable", math.inf
    w1 = circle_transport(mu_i, mu)
    return "transport", float(2 * math.pi * X * w1)


def machin_average(candidates: Sequence[CircleMeasure], base: CircleMeasure,
                   seq: IntegerSequence, eps: float, eps_prime: float, N: int, eta: float,
                   K1: int | None = None, sweep_cap: int = SWEEP_CAP):
    """Uniform average of candidates, certified against ``base``.

    Thresholds ``k_0 < k_1 < ... < k_M`` are located on the window: ``k_0 > N``
    with ``|base^(n_k) - 1| < eps`` beyond it, and ``k_i`` with candidate
    ``i``'s defect below ``eps_prime`` beyond it.  Candidate ``i`` must match
    ``base`` within ``eta`` on ``|n| <= n_{k_{i-1}}``, checked by an exact
    sweep or by the transport bound.  As in the construction, ``eta`` and
    ``eps_prime`` are clipped to ``eps``.
    """
    eta = min(eta, eps)
    eps_prime = min(eps_prime, eps)
    M = len(candidates)
    if M == 0:
        raise PreconditionError("machin_average needs at least one candidate")
    _, K1 = _check_window(seq, 0, K1)
    terms = list(seq.terms[:K1])
    d_base = window_defect(base, seq, 0, K1).defects
    k0 = _first_threshold(d_base, N + 1, eps)
    if k0 is None:
        raise PreconditionError(f"base defect does not stay below {eps} inside the window")
    thresholds = [k0]
    checks = []
    for i, cand in enumerate(candidates, start=1):
        d_i = window_defect(cand, seq, 0, K1).defects
        k_i = _first_threshold(d_i, thresholds[-1] + 1, eps_prime)
        if k_i is None:
            raise CandidatePreconditionError(
                f"defect does not stay below {eps_prime} inside the window", i)
        X = max(abs(n) for n in terms[:thresholds[-1] + 1])
        method, gap = _low_frequency_gap(cand, base, X, sweep_cap)
        if not gap < eta:
            raise CandidatePreconditionError(
                f"low-frequency gap {gap:.3g} ({method}) not below eta={eta} for |n| <= n_k",
                i, thresholds[-1])
        thresholds.append(k_i)
        checks.append((method, gap))
    w = Fraction(1, M) if all(c.exact for c in candidates) else 1.0 / M
    avg = mix([(w, c) for c in candidates])
    ns = range(0, N + 1)
    a_val = float(np.abs(avg.fourier_many(ns) - base.fourier_many(ns)).max())
    dev = np.abs(avg.fourier_many(terms) - base.fourier_many(terms))
    both = avg.identity_mask(terms) & base.identity_mask(terms)
    dev[both] = 0.0
    b_val = float(dev.max())
    b_bound = 3 * eps + 2 / M
    d_avg = window_defect(avg, seq, 0, K1).defects
    tail = float(d_avg[thresholds[-1] + 1:].max(initial=0.0))
    report = MachinReport(eps, eps_prime, eta, N, M, thresholds, checks, a_val, a_val < eta,
                          dev, b_val, b_bound, b_val <= b_bound + 1e-9, tail, 2 / M > eps)
    return avg, report


def staggered_rotated_roots(M: int, eta: float, N: int, order_exp: int = 1):
    """Base and candidates for averaging along ``n_k = 2**k``.

    The base is uniform on the ``2**order_exp``-th roots of unity; candidate
    ``i`` is the same measure rotated by ``2**-m_i`` turns.  Candidate i is
    exactly rigid from ``k = m_i`` on, and ``m_i`` is spaced so that its
    rotation moves low frequencies ``|n| <= 2**(m_{i-1} - 1)`` by less than
    ``eta``.  Returns ``(base, candidates, exponents, window_length)``.
    """
    step = math.floor(math.log2(2 * math.pi / eta)) + 1
    k_prev = max(N + 1, order_exp - 1)
    base = CircleMeasure.roots_of_unity(2**order_exp, exact=True)
    cands, exps = [], []
    for _ in range(M):
        m = k_prev + step
        cands.append(CircleMeasure.roots_of_unity(2**order_exp, Fraction(1, 2**m), exact=True))
        exps.append(m)
        k_prev = m - 1
    return base, cands, exps, exps[-1] + 4


def pushforward_family_average(nu: CircleMeasure, seq: IntegerSequence,
                               selection: Sequence[int], weights=None):
    """Convex combination of the images of ``nu`` under ``z -> z**n_k``."""
    if not selection:
        raise PreconditionError("selection is empty")
    for k in selection:
        if not 0 <= k < len(seq):
            raise IndexError(f"selection index {k} outside sequence")
    if weights is None:
        weights = [Fraction(1, len(selection))] * len(selection) if nu.exact \
            else [1.0 / len(selection)] * len(selection)
    mu = mix([(w, pushforward(nu, seq[k])) for w, k in zip(weights, selection)])
    return mu, window_defect(mu, seq)


# --- explicit witnesses -----------------------------------------------------

@dataclass
class RootWitness:
    orders: list
    mass_at_one: Fraction
    stable_from: list           # first index from which order_i divides n_k
    trailing_from: int
    trailing_defect: float
    max_atom: tuple
    degenerate: bool
    defects: DefectReport

    def to_json(self) -> dict:
        z, w = self.max_atom
        return {
            "orders": [str(o) for o in self.orders], "mass_at_one": str(self.mass_at_one),
            "stable_from": self.stable_from, "trailing_from": self.trailing_from,
            "trailing_defect": self.trailing_defect,
            "max_atom": {"angle": z.to_json(), "weight": str(w)},
            "degenerate": self.degenerate,
            "continuity_proxy": "max atom weight (smaller = closer to continuous)",
        }


def root_of_unity_witness(seq: IntegerSequence, orders: Sequence[int],
                          exponent_base: int | None = None):
    """Average of uniform measures on roots of unity of the given orders.

    With ``exponent_base`` the orders are ``exponent_base**m`` for the listed
    ``m``.  Requires ``n_k | n_{k+1}`` along the sequence and that every order
    divides the tail of the sequence.
    """
    orders = [int(o) for o in orders]
    if not orders or any(b <= a for a, b in zip(orders, orders[1:])):
        raise PreconditionError("orders must be nonempty and strictly increasing")
    if exponent_base is not None:
        orders = [exponent_base**m for m in orders]
    if any(o < 1 for o in orders):
        raise PreconditionError("orders must be positive")
    terms = seq.terms
    for k in range(len(terms) - 1):
        if terms[k] == 0 or terms[k + 1] % terms[k]:
            raise PreconditionError(f"not a divisibility chain at k={k}: {terms[k]} does not divide {terms[k + 1]}")
    stable = []
    for o in orders:
        ks = [k for k, n in enumerate(terms) if n % o == 0]
        if not ks:
            raise PreconditionError(f"order {o} divides no computed term")
        stable.append(ks[0])
    M = len(orders)
    mu = mix([(Fraction(1, M), CircleMeasure.roots_of_unity(o, exact=True)) for o in orders])
    mass = sum(Fraction(1, M * o) for o in orders)
    rep = window_defect(mu, seq)
    start = max(stable)
    return mu, RootWitness(orders, mass, stable, start, rep.trailing_from(start),
                           mu.max_atom(), len(mu) == 1, rep)


def nullpotent_metric(family: Sequence[CircleMeasure], m: int, n: int, Q: int) -> tuple[float, float]:
    """``sum_{q <= Q} 2**-q int |z^m - z^n| dmu_q`` and the tail bound ``2 * 2**-Q``.

    ``family[q - 1]`` is ``mu_q``.  Depends on ``m - n`` only.
    """
    if len(family) < Q:
        raise PreconditionError(f"family has {len(family)} measures, need {Q}")
    d = int(m) - int(n)
    if d == 0:
        return 0.0, 2.0 * 2.0**-Q
    value = math.fsum(2.0**-q * family[q - 1].l1_transform(d) for q in range(1, Q + 1))
    return value, 2.0 * 2.0**-Q
