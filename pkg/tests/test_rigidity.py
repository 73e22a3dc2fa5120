import cmath
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from rigiditylab.circle import UnitPoint
from rigiditylab.errors import PreconditionError
from rigiditylab.measures import CircleMeasure, mix, pushforward
from rigiditylab.rigidity import (
    CandidatePreconditionError, gamma_scan, machin_average, nullpotent_metric,
    pushforward_family_average, root_of_unity_witness, staggered_rotated_roots, window_defect,
)
from rigiditylab.sequences import IntegerSequence, SequenceSpec, generate

POW2 = generate(SequenceSpec.geometric(2), 40)
INTEGERS = IntegerSequence.from_values(range(1, 41))


def test_defect_dirac_one():
    rep = window_defect(CircleMeasure.dirac(), POW2)
    assert rep.sup == 0 and rep.limsup_proxy == 0


def test_defect_dyadic_staircase():
    rep = window_defect(CircleMeasure.roots_of_unity(16), POW2, 0, 21)
    assert list(rep.defects[:4]) == [1, 1, 1, 1]
    assert list(rep.defects[4:]) == [0] * 17
    assert rep.trailing_from(4) == 0
    assert rep.trailing_from(3) == 1


def test_defect_alternating():
    rep = window_defect(CircleMeasure.dirac(Fraction(1, 2)), INTEGERS)
    assert list(rep.defects[:4]) == [2, 0, 2, 0]
    assert rep.limsup_proxy == 2


def test_trailing_nonincreasing():
    rng = random.Random(1)
    for _ in range(30):
        pairs = [(UnitPoint.rational(rng.randrange(97), 97), rng.random()) for _ in range(5)]
        rep = window_defect(CircleMeasure.from_atoms(pairs), generate(SequenceSpec.furstenberg(), 60))
        assert np.all(np.diff(rep.trailing) <= 0)


def test_window_out_of_range():
    with pytest.raises(IndexError):
        window_defect(CircleMeasure.dirac(), POW2, 0, 41)


def test_gamma_scan_dyadic():
    scan = gamma_scan(POW2, 0.5, denom_max=64)
    hits = set(scan.hits())
    dyadic = {Fraction(a, 2**m) for m in range(7) for a in range(2**m)}
    assert dyadic <= hits
    assert scan.sup_at(Fraction(1, 3)) == pytest.approx(math.sqrt(3))
    assert Fraction(1, 3) not in hits
    assert Fraction(0) in hits


def test_gamma_scan_matches_direct_evaluation():
    seq = generate(SequenceSpec.furstenberg(), 50)
    scan = gamma_scan(seq, 0.3, 10, 50, denom_max=30)
    tail = seq.terms[30:50]
    for a, b, s in zip(scan.nums[::17], scan.dens[::17], scan.sups[::17]):
        direct = max(abs(cmath.exp(2j * math.pi * a * n / b) - 1) for n in tail)
        assert s == pytest.approx(direct, abs=1e-12)


def test_gamma_scan_fixed_angles_and_origin():
    z = UnitPoint.fixed(1 / math.sqrt(5), bits=256)
    scan = gamma_scan(INTEGERS, 0.1, denom_max=4, fixed_angles=[z])
    assert scan.hits() == [Fraction(0)]


@pytest.mark.parametrize("spec", [SequenceSpec.geometric(2), SequenceSpec.geometric(6),
                                  SequenceSpec.furstenberg()])
def test_gamma_hits_approximate_subgroup(spec):
    seq = generate(spec, 40)
    eps = 0.2
    scan = gamma_scan(seq, eps, denom_max=48)
    loose = gamma_scan(seq, 2 * math.sqrt(2 * eps) + 1e-9, denom_max=48)
    loose_hits = set(loose.hits())
    hits = scan.hits()
    for z in hits:
        for w in hits:
            zw = (z + w) % 1
            if zw.denominator <= 48:
                assert zw in loose_hits


def test_average_trivial():
    d = CircleMeasure.dirac(exact=True)
    mu, rep = machin_average([d, d, d], d, POW2, 0.1, 0.1, 3, 0.1)
    assert mu == d
    assert rep.a_value == 0 and rep.b_value == 0


def test_average_single_candidate_flags_m():
    base, cands, exps, K1 = staggered_rotated_roots(1, 0.1, 4)
    seq = generate(SequenceSpec.geometric(2), K1)
    _, rep = machin_average(cands, base, seq, 0.1, 0.1, 4, 0.1)
    assert rep.m_too_small and rep.b_bound == pytest.approx(2.3)
    assert rep.b_ok


@pytest.mark.parametrize("eps, M", [(0.1, 10), (0.05, 20), (0.01, 30)])
def test_average_staircase_oracle(eps, M):
    N = 6
    base, cands, exps, K1 = staggered_rotated_roots(M, eps, N)
    seq = generate(SequenceSpec.geometric(2), K1)
    mu, rep = machin_average(cands, base, seq, eps, eps, N, eps)
    # hand formula: mu'^(2^k) - mu^(2^k) = (1/M) sum_i (exp(2 pi i 2^(k - m_i)) - 1) for k >= 1
    for k in range(K1):
        if k == 0:
            expect = 0.0
        else:
            expect = abs(sum(cmath.exp(2j * math.pi * 2.0 ** (k - m)) - 1
                             for m in exps if m > k)) / M
        assert rep.deviations[k] == pytest.approx(expect, abs=1e-12)
    assert rep.b_ok and rep.a_ok
    assert rep.b_value <= 3 * eps + 2 / M + 1e-9
    assert rep.tail_defect == 0
    assert rep.thresholds == sorted(set(rep.thresholds))


def test_average_rejects_far_candidate():
    base = CircleMeasure.roots_of_unity(2, exact=True)
    far = CircleMeasure.roots_of_unity(2, Fraction(1, 2**7), exact=True)
    seq = generate(SequenceSpec.geometric(2), 30)
    with pytest.raises(CandidatePreconditionError) as info:
        machin_average([far], base, seq, 0.1, 0.1, 4, 0.1)
    assert info.value.candidate == 1


def test_average_rejects_nonrigid_candidate():
    base = CircleMeasure.roots_of_unity(2, exact=True)
    bad = CircleMeasure.dirac(Fraction(1, 3), exact=True)
    with pytest.raises(CandidatePreconditionError):
        machin_average([bad], base, POW2, 0.1, 0.1, 4, 0.1)


def test_pushforward_average_examples():
    mu, rep = pushforward_family_average(CircleMeasure.dirac(), POW2, [3, 4, 5])
    assert mu == CircleMeasure.dirac() and rep.sup == 0
    nu = CircleMeasure.dirac(Fraction(3, 7))
    mu, _ = pushforward_family_average(nu, POW2, [0], [1])
    assert mu == pushforward(nu, POW2[0])


def test_pushforward_average_triangle_bound():
    # z = 1/2^30 has z^(2^k) -> 1; average over the last five pushforwards
    seq = generate(SequenceSpec.geometric(2), 20)
    nu = CircleMeasure.dirac(Fraction(1, 2**30))
    sel = list(range(15, 20))
    mu, rep = pushforward_family_average(nu, seq, sel)
    for k in range(20):
        shifted = max(abs(cmath.exp(2j * math.pi * 2.0 ** (k + j - 30)) - 1) for j in sel)
        assert rep.defects[k] <= shifted + 1e-12


def test_root_witness_dyadic():
    mu, cert = root_of_unity_witness(POW2, (4, 5, 6, 7), exponent_base=2)
    assert cert.mass_at_one == Fraction(15, 512)
    assert cert.trailing_from == 7 and cert.trailing_defect == 0
    assert cert.defects.trailing_from(7) == 0.0
    assert not cert.degenerate
    assert mu.atom_at(UnitPoint.one()) == Fraction(15, 512)


def test_root_witness_single_and_degenerate():
    _, cert = root_of_unity_witness(POW2, (5,), exponent_base=2)
    assert cert.mass_at_one == Fraction(1, 32)
    mu, cert = root_of_unity_witness(POW2, (1,))
    assert cert.degenerate and mu == CircleMeasure.dirac(exact=True)


def test_root_witness_preconditions():
    with pytest.raises(PreconditionError):
        root_of_unity_witness(generate(SequenceSpec.erdos_taylor(), 10), (2,))
    with pytest.raises(PreconditionError):
        root_of_unity_witness(POW2, (3,))


def test_metric_examples():
    fam = [CircleMeasure.roots_of_unity(2**q) for q in range(1, 11)]
    assert nullpotent_metric(fam, 7, 7, 10)[0] == 0
    for k in range(1, 9):
        value, tail = nullpotent_metric(fam, 2**k, 0, 10)
        assert value <= 2.0 ** (1 - k) + 1e-12
        assert tail == 2 * 2.0**-10


def test_metric_axioms():
    rng = random.Random(4)
    fam = [CircleMeasure.from_atoms([(UnitPoint.rational(rng.randrange(50), 50), 1.0),
                                     (UnitPoint.rational(1, q + 2), 1.0)]) for q in range(8)]
    for _ in range(200):
        m, n, l, a = (rng.randint(-10**6, 10**6) for _ in range(4))
        d = lambda x, y: nullpotent_metric(fam, x, y, 8)[0]
        assert d(m, n) == d(n, m)
        assert d(m, n) <= d(m, l) + d(l, n) + 1e-12
        assert d(m + a, n + a) == d(m, n)
