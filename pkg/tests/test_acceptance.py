"""The twelve acceptance criteria, each at its stated tolerance and time limit.

Every test records one PASS/FAIL line (shown in the terminal summary).
"""

import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from rigiditylab.bohr import (
    BlockScheme, SubsetSumSet, block_bound_grid, block_lower_bound, fact_s2, katznelson_witness,
)
from rigiditylab.circle import UnitPoint
from rigiditylab.experiment import preset_config, presets, run
from rigiditylab.kazhdan import (
    hartman_statistic, kazhdan_chain_certificate, near_identity_measure,
)
from rigiditylab.measures import (
    CircleMeasure, convolve, fact21_sweep, fact22_check, mix, pushforward,
)
from rigiditylab.nullpotence import (
    SignedSumQuery, br_density, half_sums, min_representable, nullpotence_profile,
)
from rigiditylab.rigidity import machin_average, root_of_unity_witness, staggered_rotated_roots
from rigiditylab.sequences import (
    IntegerSequence, RandomModel, SequenceSpec, bourgain_sample, generate,
)

pytestmark = pytest.mark.acceptance


@contextmanager
def criterion(number: int, title: str, limit: float):
    t0 = time.perf_counter()
    status, detail = "FAIL", ""
    try:
        yield
        dt = time.perf_counter() - t0
        status = "PASS" if dt < limit else "FAIL"
        detail = f"{dt:.2f}s < {limit:g}s" if dt < limit else f"{dt:.2f}s over {limit:g}s limit"
    except BaseException as exc:
        detail = f"{type(exc).__name__}: {str(exc)[:120]}"
        raise
    finally:
        line = f"criterion {number} {status}: {title} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
    assert status == "PASS", line


def random_measure(rng, max_atoms=20, max_den=10**4):
    k = rng.randint(1, max_atoms)
    pairs = []
    for _ in range(k):
        b = rng.randint(1, max_den)
        pairs.append((UnitPoint.rational(rng.randrange(b), b), rng.random() + 1e-3))
    return CircleMeasure.from_atoms(pairs)


def test_criterion_01_defect_l1_chain():
    rng = random.Random(101)
    ns = list(range(-100, 101))
    with criterion(1, "defect/L1/sqrt chain over 1000 measures, |n| <= 100, slack 1e-10", 10):
        for _ in range(1000):
            mu = random_measure(rng)
            reps = fact21_sweep(mu, ns, slack=1e-10)
            assert all(r.ok for r in reps)


def test_criterion_02_measure_algebra():
    rng = random.Random(202)
    with criterion(2, "convolution multiplicativity and pushforward identity, 500 cases", 5):
        for _ in range(500):
            mu, nu = random_measure(rng, 8), random_measure(rng, 8)
            n = rng.randint(-10**6, 10**6)
            p = rng.randint(-10**4, 10**4)
            conv = convolve(mu, nu)
            assert abs(conv.fourier(n) - mu.fourier(n) * nu.fourier(n)) <= 1e-10
            assert abs(pushforward(mu, p).fourier(n) - mu.fourier(p * n)) <= 1e-10


def test_criterion_03_sup_window_bound():
    seq = [2**k for k in range(4, 16)]
    with criterion(3, "sup-window bound 2 sqrt(2 eps), eps in {0.5, 0.1, 0.01}", 10):
        for eps in (0.5, 0.1, 0.01):
            rng = random.Random(int(303 / eps))
            for _ in range(100):
                # mass near a rigid part plus noise of weight w: every defect is at most 2w
                w = rng.uniform(0, eps / 2)
                rigid = CircleMeasure.dirac() if rng.random() < 0.5 else \
                    CircleMeasure.roots_of_unity(16)
                mu = mix([(1 - w, rigid), (w, random_measure(rng, 6))])
                rep = fact22_check(mu, seq, seq, slack=1e-9)
                assert rep.eps <= eps + 1e-12
                assert rep.ok and rep.max_defect <= 2 * math.sqrt(2 * eps) + 1e-9


def test_criterion_04_averaging_bound():
    with criterion(4, "averaging bound 3 eps + 2/M for (eps, M) in {0.1, 0.01} x {10, 100}", 5):
        for eps in (0.1, 0.01):
            for M in (10, 100):
                base, cands, exps, K1 = staggered_rotated_roots(M, eps, 8)
                seq = generate(SequenceSpec.geometric(2), K1)
                _, rep = machin_average(cands, base, seq, eps, eps, 8, eps)
                assert rep.b_ok and rep.b_value <= 3 * eps + 2 / M + 1e-9, (eps, M)
                assert rep.a_ok


def test_criterion_05_root_witness():
    with criterion(5, "root witness (4,5,6,7) for 2^k: trailing 0 beyond k=7, mass 15/512", 1):
        seq = generate(SequenceSpec.geometric(2), 64)
        mu, cert = root_of_unity_witness(seq, (4, 5, 6, 7), exponent_base=2)
        assert cert.mass_at_one == Fraction(15, 512)
        assert mu.exact and mu.atom_at(UnitPoint.one()) == Fraction(15, 512)
        assert cert.defects.trailing_from(7) == 0.0
        assert all(d == 0 for d in cert.defects.defects[7:])


def naive_min(terms, r, K, N):
    vals = [abs(v) for v in half_sums(list(terms[K:]), r, cap=10**8) if 0 < abs(v) <= N]
    return min(vals, default=None)


def test_criterion_06_nullpotence_obstruction():
    with criterion(6, "nullpotence obstruction on translate_union(2^k), divergence on 2^k", 30):
        tu = generate(SequenceSpec.translate_union(SequenceSpec.geometric(2)), 80)
        pow2 = generate(SequenceSpec.geometric(2), 40)
        ladder = [0, 8, 16, 24]
        prof = nullpotence_profile(tu, 2, ladder, 10**9)
        assert [row.value for row in prof.rows] == [1, 1, 1, 1] and prof.obstruction
        prof = nullpotence_profile(pow2, 2, ladder, 10**9)
        assert [row.value for row in prof.rows] == [2**K for K in ladder]
        assert prof.divergence_consistent
        for seq in (tu, pow2):
            for K in range(0, 9):
                for N in (10, 1000, 10**4):
                    got = min_representable(seq, SignedSumQuery(2, K, N)).value
                    assert got == naive_min(seq.terms[:32], 2, K, N)


def test_criterion_07_br_density():
    with criterion(7, "B_1 density of 2^k at N=1024 is 22/2049; curve strictly decreasing", 5):
        pow2 = generate(SequenceSpec.geometric(2), 40)
        assert br_density(pow2, 1, 1024).density == Fraction(22, 2049)
        rep = br_density(pow2, 1, 2**14, curve=[2**8, 2**10, 2**12, 2**14])
        dens = [d for _, d in rep.curve]
        assert all(b < a for a, b in zip(dens, dens[1:]))


def test_criterion_08_kazhdan_chain():
    with criterion(8, "chain bound 1/2 + 1e-9 on 10^4-term q=2 sequence; Cesaro > 0.49", 60):
        seq = generate(SequenceSpec.block_recursive([2]), 10**4)
        assert list(seq.terms[:5]) == [1, 2, 5, 12, 27]
        rng = np.random.default_rng(808)
        for i in range(5):
            mu = CircleMeasure.dirac() if i == 0 else \
                near_identity_measure(rng, float(rng.uniform(0, 1 / 144)))
            cert = kazhdan_chain_certificate(mu, seq, 2, 1 / 72, slack=1e-9, cesaro_K=10**4)
            assert cert.window_sup < 1 / 72
            assert cert.bound == pytest.approx(0.5)
            assert cert.max_deviation <= 0.5 + 1e-9 and cert.holds
            assert cert.covered == len(seq) - 1
            assert cert.cesaro.K == 10**4 and cert.cesaro.estimate.real > 0.49


def test_criterion_09_block_bound():
    with criterion(9, "block bound |z-1|/8 for q in [1,10], den <= 500; q=0 edge reproduced", 120):
        et = generate(SequenceSpec.erdos_taylor(), 2048)
        rep = block_bound_grid(et, range(1, 11), 500, threads=8)
        assert rep.passed and rep.checked == 10 * sum(
            1 for b in range(2, 501) for a in range(1, b) if math.gcd(a, b) == 1)
        edge = block_lower_bound(et, UnitPoint.rational(1, 2), 0)
        assert edge.sum == 0 and edge.bound == 0.25 and not edge.passed


CHORD_PRODUCT_REASON = ("the implication is false for mixed-sign angles: a and conj(a) satisfy the "
                  "4/3 hypothesis while the right side is 0")


@pytest.mark.xfail(strict=True, reason=CHORD_PRODUCT_REASON)
def test_criterion_10_witness_and_chord_product():
    with criterion(10, "two-target witness below 0.1 with support in D; chord-product inequality on 10^4 tuples", 60):
        et = generate(SequenceSpec.erdos_taylor(), 2**9)
        scheme = BlockScheme.singletons(1, 8)
        D = SubsetSumSet.over_blocks(et, range(1, 9))
        targets = [UnitPoint.rational(1, 3), UnitPoint.rational(1, 5)]
        cert = katznelson_witness(D, targets, 0.1, scheme, et)
        assert cert.certified and cert.support_in_D
        assert all(v < 0.1 for v in cert.values)
        assert all(n in D for n in cert.nu.points)
        # random tuples of |I| <= 8 points, angles uniform in a symmetric arc
        rng = np.random.default_rng(1010)
        tested, violations, example = 0, 0, None
        while tested < 10**4:
            k = int(rng.integers(1, 9))
            width = float(rng.uniform(0.005, 0.3))
            pts = [UnitPoint.from_fraction(Fraction(int(x), 10**9))
                   for x in rng.integers(-int(width * 10**9), int(width * 10**9) + 1, size=k)]
            rep = fact_s2(pts)
            if rep.hypothesis:
                tested += 1
                if not rep.passed:
                    violations += 1
                    example = example or [str(z.angle.fraction) for z in pts]
        assert violations == 0, \
            f"{violations}/{tested} hypothesis-satisfying tuples violate it, e.g. {example}"


BOURGAIN_SEEDS = list(range(20))
HARTMAN_Z = [(1, 2), (1, 3), (2, 3), (1, 5), (2, 5), (1, 6), (1, 7), (3, 7), (1, 8), (3, 10),
             (5, 11), (1, 12)]


def test_criterion_11_bourgain():
    with criterion(11, "random model N=10^6, 20 seeds: 5 sd counts, negative pooled Hartman slope",
                   120):
        model = RandomModel("log_over_n")
        N = 10**6
        mean, var = model.moments(N)
        samples = [bourgain_sample(model, N, s, workers=4) for s in BOURGAIN_SEEDS]
        within = sum(abs(len(s) - mean) <= 5 * math.sqrt(var) for s in samples)
        assert within >= 19
        pooled = IntegerSequence.from_values([n for s in samples for n in s.terms])
        top = len(pooled) - 1
        ladder = [K for K in (16, 32, 64, 128, 256, 512, 1024) if K < top] + [top]
        for a, b in HARTMAN_Z:
            rep = hartman_statistic(pooled, UnitPoint.rational(a, b), ladder)
            assert rep.slope is not None and rep.slope < 0, (a, b, rep.slope)


def test_criterion_12_determinism():
    names = [n for n, _ in presets()]
    budget = 60 * len(names)
    with criterion(12, f"all {len(names)} presets byte-identical at threads 1 and 8", budget):
        for name in names:
            one = run(preset_config(name, seed=7, threads=1))
            eight = run(preset_config(name, seed=7, threads=8))
            assert one.stable_json() == eight.stable_json(), name
            again = run(preset_config(name, seed=7, threads=1))
            assert one.stable_json() == again.stable_json(), name
