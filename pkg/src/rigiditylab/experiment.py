"""Experiment configs, the analysis registry, presets and the runner."""

from __future__ import annotations

import copy
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .bohr import (
    BlockScheme, SubsetSumSet, block_bound_grid, block_lower_bound, is_superincreasing,
    katznelson_witness, sublevel_set, subset_sum_family,
)
from .circle import UnitPoint
from .errors import ConfigError, RigidityLabError
from .kazhdan import (
    hartman_statistic, kazhdan_chain_certificate, loglog_slope, near_identity_measure,
    non_kazhdan_search,
)
from .measures import CircleMeasure
from .nullpotence import basis_coverage, br_density, linear_relation_detect, nullpotence_profile
from .reports import csv_text, dumps, to_plain, write_json, atomic_write
from .rigidity import gamma_scan, root_of_unity_witness, window_defect
from .sequences import RandomModel, SequenceSpec, bourgain_sample, gap_divergence, generate

FORMATS = ("json", "csv")


# --- value parsing --------------------------------------------------------------

_POW = re.compile(r"^\s*(-?\d+)\s*(?:\^|\*\*)\s*(\d+)\s*$")


def parse_int(value, path: str = "value") -> int:
    """Integers given as ints or strings such as ``"10^9"``, ``"2**20"``, ``"1e6"``."""
    if isinstance(value, bool):
        raise ConfigError(path, "expected an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        m = _POW.match(value)
        if m:
            return int(m.group(1)) ** int(m.group(2))
        try:
            return int(value)
        except ValueError:
            pass
        try:
            f = Fraction(value.strip())
        except ValueError:
            f = None
        if f is not None and f.denominator == 1:
            return int(f)
    raise ConfigError(path, f"expected an integer, got {value!r}")


def parse_point(value, path: str = "point") -> UnitPoint:
    """``"a/b"`` (turns), a number (fixed point of that double), or an angle object."""
    if isinstance(value, dict):
        try:
            return UnitPoint.from_json(value)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(path, f"bad angle object: {exc}") from None
    if isinstance(value, str):
        try:
            return UnitPoint.from_fraction(Fraction(value))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(path, f"bad angle {value!r}") from None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        f = Fraction(value)
        return UnitPoint.from_fraction(f) if isinstance(value, int) else UnitPoint.fixed(float(value))
    raise ConfigError(path, f"bad angle {value!r}")


def parse_measure(value, path: str = "measure") -> CircleMeasure:
    if isinstance(value, dict) and "kind" in value:
        kind = value["kind"]
        if kind == "dirac":
            return CircleMeasure.dirac(Fraction(value.get("angle", "0")), exact=True)
        if kind == "roots":
            return CircleMeasure.roots_of_unity(parse_int(value.get("order"), f"{path}.order"),
                                                exact=True)
        raise ConfigError(f"{path}.kind", f"unknown measure kind {kind!r}")
    try:
        return CircleMeasure.from_json(value)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(path, f"bad measure: {exc}") from None


def parse_ladder(value, path: str) -> list[int]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a nonempty list of integers")
    return [parse_int(v, f"{path}[{i}]") for i, v in enumerate(value)]


def dyadic_ladder(top: int, start: int = 16) -> list[int]:
    out, K = [], start
    while K < top:
        out.append(K)
        K *= 2
    return out + [top]


# --- config -----------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    name: str
    analyses: list
    sequences: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    format: str = "json"
    out: str | None = None
    doc: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "doc": self.doc, "seed": self.seed, "threads": self.threads,
                "format": self.format, "out": self.out,
                "sequences": copy.deepcopy(self.sequences),
                "analyses": copy.deepcopy(self.analyses)}

    @classmethod
    def from_json(cls, obj) -> ExperimentConfig:
        if not isinstance(obj, dict):
            raise ConfigError("$", "config must be an object")
        cfg = cls(name=str(obj.get("name", "experiment")), analyses=obj.get("analyses"),
                  sequences=obj.get("sequences", {}) or {}, seed=obj.get("seed", 0),
                  threads=obj.get("threads", 1), format=obj.get("format", "json"),
                  out=obj.get("out"), doc=str(obj.get("doc", "")))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.seed = parse_int(self.seed, "seed")
        self.threads = parse_int(self.threads, "threads")
        if self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        if self.format not in FORMATS:
            raise ConfigError("format", f"must be one of {FORMATS}")
        if not isinstance(self.sequences, dict):
            raise ConfigError("sequences", "must be an object")
        for key, val in self.sequences.items():
            _check_sequence_ref(val, f"sequences.{key}", self.sequences)
        if not isinstance(self.analyses, list) or not self.analyses:
            raise ConfigError("analyses", "empty module selection")
        seen = set()
        for i, a in enumerate(self.analyses):
            path = f"analyses[{i}]"
            if not isinstance(a, dict) or "kind" not in a:
                raise ConfigError(path, "each analysis needs a 'kind'")
            if a["kind"] not in ANALYSES:
                raise ConfigError(f"{path}.kind", f"unknown analysis {a['kind']!r}")
            a.setdefault("id", f"{i:02d}-{a['kind']}")
            if a["id"] in seen:
                raise ConfigError(f"{path}.id", f"duplicate id {a['id']!r}")
            seen.add(a["id"])
            if "sequence" in a:
                _check_sequence_ref(a["sequence"], f"{path}.sequence", self.sequences)


def _check_sequence_ref(ref, path: str, named: dict) -> None:
    if isinstance(ref, str):
        if ref not in named:
            raise ConfigError(path, f"unknown sequence {ref!r}")
        return
    if not isinstance(ref, dict) or "spec" not in ref:
        raise ConfigError(path, "expected a sequence name or {'spec': ..., 'count': ...}")
    try:
        SequenceSpec.from_json(ref["spec"])
    except RigidityLabError as exc:
        raise ConfigError(f"{path}.spec", str(exc)) from None
    if ref["spec"].get("kind") != "random_bourgain":
        parse_int(ref.get("count"), f"{path}.count")


# --- analyses ---------------------------------------------------------------------

@dataclass
class Context:
    config: ExperimentConfig
    index: int
    threads: int

    def sequence(self, ref):
        if isinstance(ref, str):
            ref = self.config.sequences[ref]
        spec = SequenceSpec.from_json(ref["spec"])
        if spec.kind == "random_bourgain":
            p = spec.params
            s = bourgain_sample(p["model"], p["N"], p["seed"], workers=self.threads)
            return s if "count" not in ref else generate(spec, parse_int(ref["count"]))
        return generate(spec, parse_int(ref["count"]))

    def rng(self) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, self.index])


def _points(a, key="z"):
    return [parse_point(v, f"{key}[{i}]") for i, v in enumerate(a[key])]


def an_sequence_summary(a, ctx):
    seq = ctx.sequence(a["sequence"])
    gaps = gap_divergence(seq)
    head = [str(t) for t in seq.terms[:a.get("head", 20)]]
    return {"label": seq.label, "length": len(seq), "head": head,
            "gaps": gaps.to_json()}, True, None


def an_bourgain_stats(a, ctx):
    model = RandomModel.from_json(a.get("model", "log_over_n"))
    N = parse_int(a.get("N", 10**6), "N")
    n_seeds = parse_int(a.get("seeds", 5), "seeds")
    seeds = [ctx.config.seed * 1000 + i for i in range(n_seeds)]
    mean, var = model.moments(N)
    sd = math.sqrt(var)
    rows = []
    for s in seeds:
        c = len(bourgain_sample(model, N, s, workers=ctx.threads))
        rows.append([s, c, (c - mean) / sd])
    within = sum(1 for r in rows if abs(r[2]) <= 5)
    need = math.ceil(0.95 * n_seeds)
    data = {"model": model.to_json(), "N": N, "mean": mean, "sd": sd, "seeds": seeds,
            "counts": [r[1] for r in rows], "zscores": [r[2] for r in rows],
            "within_5sd": within, "required": need}
    return data, within >= need, (["seed", "count", "zscore"], rows)


def an_hartman(a, ctx):
    seq = ctx.sequence(a["sequence"])
    ladder = parse_ladder(a["ladder"], "ladder") if "ladder" in a else dyadic_ladder(len(seq) - 1)
    reps = [hartman_statistic(seq, z, ladder) for z in _points(a)]
    rows = [[str(r.z.angle.turns()), K, v] for r in reps for K, v in zip(r.ladder, r.values)]
    return {"ladder": ladder, "reports": [r.to_json() for r in reps]}, True, \
        (["z_turns", "K", "value"], rows)


def an_gamma_scan(a, ctx):
    seq = ctx.sequence(a["sequence"])
    K0, K1 = a.get("window", [0, None])
    scan = gamma_scan(seq, float(a["eps"]), K0, K1, denom_max=parse_int(a.get("denom_max", 64)))
    hits = scan.hits()
    return {"eps": float(a["eps"]), "window": [K0, K1 if K1 is not None else len(seq)],
            "hits": [str(h) for h in hits], "count": len(hits)}, True, \
        (["num", "den", "sup"], [[int(n), int(d), float(s)] for n, d, s in
                                 zip(scan.nums, scan.dens, scan.sups)])


def an_defect(a, ctx):
    seq = ctx.sequence(a["sequence"])
    mu = parse_measure(a["measure"])
    K0, K1 = a.get("window", [0, None])
    rep = window_defect(mu, seq, K0, K1)
    return rep.to_json(), True, (["k", "n_k", "defect"], [[k, n, d] for k, n, d in rep.rows()])


def an_root_witness(a, ctx):
    seq = ctx.sequence(a["sequence"])
    _, cert = root_of_unity_witness(seq, a["orders"], a.get("exponent_base"))
    expect = a.get("expect_mass")
    ok = cert.trailing_defect == 0 and (expect is None or cert.mass_at_one == Fraction(expect))
    return cert.to_json(), ok, None


def an_nullpotence_profile(a, ctx):
    seq = ctx.sequence(a["sequence"])
    prof = nullpotence_profile(seq, parse_int(a["r"], "r"), parse_ladder(a["ladder"], "ladder"),
                               parse_int(a["N"], "N"), a.get("allow_repeats", True))
    expect = a.get("expect")
    ok = (expect is None or (expect == "obstruction" and prof.obstruction)
          or (expect == "divergence" and prof.divergence_consistent))
    rows = [[row.K, row.value, [[s, i] for s, i in row.witness]] for row in prof.rows]
    return prof.to_json(), ok, (["K", "min_representable", "witness"], rows)


def an_br_density(a, ctx):
    seq = ctx.sequence(a["sequence"])
    rep = br_density(seq, parse_int(a["r"], "r"), parse_int(a["N"], "N"))
    return rep.to_json(), True, (["N", "density"], [[n, float(d)] for n, d in rep.curve])


def an_basis_coverage(a, ctx):
    seq = ctx.sequence(a["sequence"])
    return basis_coverage(seq, parse_int(a["r"], "r"), parse_int(a["N"], "N")).to_json(), True, None


def an_relations(a, ctx):
    seq = ctx.sequence(a["sequence"])
    rels = linear_relation_detect(seq, parse_int(a.get("p", 2)), parse_int(a.get("C", 4)),
                                  a.get("window"))
    keep = rels[:a.get("max_report", 20)]
    expect = a.get("expect_value")
    ok = expect is None or any(r.value == expect for r in rels)
    return {"count": len(rels), "relations": [r.to_json() for r in keep]}, ok, None


def an_kazhdan_chain(a, ctx):
    seq = ctx.sequence(a["sequence"])
    q, eps = parse_int(a["q"], "q"), float(Fraction(str(a["eps"])))
    rng = ctx.rng()
    certs = []
    for _ in range(parse_int(a.get("measures", 3), "measures")):
        mu = near_identity_measure(rng, float(rng.uniform(0, eps / 2)))
        certs.append(kazhdan_chain_certificate(mu, seq, q, eps, cesaro_K=a.get("cesaro_K")))
    ok = all(c.holds and c.cesaro_ge_half is not False for c in certs)
    return {"certificates": [c.to_json() for c in certs]}, ok, None


def an_kazhdan_search(a, ctx):
    seq = ctx.sequence(a["sequence"])
    res = non_kazhdan_search(seq, float(a["eps"]), a.get("family", "roots"),
                             parse_int(a.get("budget", 100)), float(a.get("max_atom", 0.05)))
    return res.to_json(), True, None


def an_subset_sums(a, ctx):
    seq = ctx.sequence(a["sequence"])
    lo, hi = a["J"]
    J = list(range(parse_int(lo), parse_int(hi) + 1))
    fam = subset_sum_family(seq, J)
    distinct = len(fam) == 2 ** len(J)
    vals = [seq.terms[j - 1] for j in J]
    return {"J": [lo, hi], "size": len(fam), "distinct": distinct,
            "superincreasing": is_superincreasing(vals)}, True, None


def an_block_bound(a, ctx):
    seq = ctx.sequence(a["sequence"])
    qs = parse_ladder(a["qs"], "qs")
    rep = block_bound_grid(seq, qs, parse_int(a.get("denom_max", 500)), threads=ctx.threads)
    data = rep.to_json()
    data["failures"] = data["failures"][:50]
    data["failure_count"] = len(rep.failures)
    if a.get("edge_q0", False):
        data["q0_minus_one"] = block_lower_bound(seq, UnitPoint.rational(1, 2), 0).to_json()
    return data, rep.passed, None


def an_katznelson(a, ctx):
    seq = ctx.sequence(a["sequence"])
    lo, hi = a["blocks"]
    scheme = BlockScheme.singletons(parse_int(lo), parse_int(hi))
    D = SubsetSumSet.over_blocks(seq, scheme.blocks())
    cert = katznelson_witness(D, _points(a, "targets"), float(a["eps"]), scheme, seq)
    return cert.to_json(), cert.certified, None


def an_sublevel(a, ctx):
    mu = parse_measure(a["measure"])
    sub = sublevel_set(mu, float(a["eps"]), parse_int(a["N"], "N"))
    return sub.to_json(as_bitmap=a.get("bitmap", False)), True, None


ANALYSES = {
    "sequence_summary": an_sequence_summary,
    "bourgain_stats": an_bourgain_stats,
    "hartman": an_hartman,
    "gamma_scan": an_gamma_scan,
    "defect": an_defect,
    "root_witness": an_root_witness,
    "nullpotence_profile": an_nullpotence_profile,
    "br_density": an_br_density,
    "basis_coverage": an_basis_coverage,
    "relations": an_relations,
    "kazhdan_chain": an_kazhdan_chain,
    "kazhdan_search": an_kazhdan_search,
    "subset_sums": an_subset_sums,
    "block_bound": an_block_bound,
    "katznelson": an_katznelson,
    "sublevel": an_sublevel,
}


# --- presets -------------------------------------------------------------------------

def _seq(spec: dict, count: int | None = None) -> dict:
    return {"spec": spec} if count is None else {"spec": spec, "count": count}


_HARTMAN_Z = ["1/2", "1/3", "2/3", "1/5", "2/5", "1/6", "1/7", "3/7", "1/8", "3/10", "5/11",
              "1/12"]

_PRESETS = {
    "erdos-taylor-bohr": {
        "doc": "Bohr-density pipeline on p_1 = 1, p_(j+1) = j p_j + 1: distinct subset sums, "
               "the block bound sum_(j in I_q) |z^p_j - 1| >= |z - 1|/8 on a rational grid, "
               "the q = 0 edge case, and a certified two-target convolution witness.",
        "sequences": {"et": _seq({"kind": "erdos_taylor"}, 2048)},
        "analyses": [
            {"kind": "subset_sums", "sequence": "et", "J": [1, 16]},
            {"kind": "block_bound", "sequence": "et", "qs": list(range(1, 11)),
             "denom_max": 100, "edge_q0": True},
            {"kind": "katznelson", "sequence": "et", "targets": ["1/3", "1/5"], "eps": 0.1,
             "blocks": [1, 8]},
        ],
    },
    "bourgain-random": {
        "doc": "Random sequences keeping n with probability log(n)/n up to N = 10^6: sample "
               "sizes against the binomial mean, Hartman averages, gaps and B_2 density.",
        "sequences": {"sample": _seq({"kind": "random_bourgain",
                                      "model": "log_over_n", "seed": 1, "N": 10**6})},
        "analyses": [
            {"kind": "bourgain_stats", "model": "log_over_n", "N": 10**6, "seeds": 3},
            {"kind": "hartman", "sequence": "sample", "z": _HARTMAN_Z},
            {"kind": "sequence_summary", "sequence": "sample"},
            {"kind": "br_density", "sequence": "sample", "r": 2, "N": 10**5},
        ],
    },
    "prop4-counterexample": {
        "doc": "Union of 2^k and 2^k + 1 against plain 2^k: the difference 1 is a signed sum "
               "of two arbitrarily late terms (not nullpotent) while plain 2^k diverges.",
        "sequences": {
            "union": _seq({"kind": "translate_union", "base": {"kind": "geometric", "base": 2}},
                          80),
            "pow2": _seq({"kind": "geometric", "base": 2}, 40),
        },
        "analyses": [
            {"kind": "nullpotence_profile", "sequence": "union", "r": 2,
             "ladder": [0, 8, 16, 24], "N": "10^9", "expect": "obstruction"},
            {"kind": "nullpotence_profile", "sequence": "pow2", "r": 2,
             "ladder": [0, 8, 16, 24], "N": "10^9", "expect": "divergence"},
            {"kind": "relations", "sequence": "union", "p": 1, "C": 2, "expect_value": 1},
            {"kind": "root_witness", "sequence": "pow2", "orders": [4, 5, 6, 7],
             "exponent_base": 2, "expect_mass": "15/512"},
        ],
    },
    "block-kazhdan": {
        "doc": "n_(k+1) = 2 n_k + k: relation check and the chain bound "
               "|mu^(k) - 1| <= 3 sqrt(2 eps) for measures with window defect below eps = 1/72.",
        "sequences": {"q2": _seq({"kind": "block_recursive", "alpha": [2], "block_starts": [0]},
                                 2000)},
        "analyses": [
            {"kind": "kazhdan_chain", "sequence": "q2", "q": 2, "eps": "1/72", "measures": 3},
            {"kind": "hartman", "sequence": "q2", "z": ["1/3", "1/5", "2/7"]},
            {"kind": "kazhdan_search", "sequence": "q2", "eps": 0.5, "family": "dirac",
             "budget": 50, "max_atom": 0.9},
        ],
    },
    "furstenberg-survey": {
        "doc": "Diagnostics on the increasing enumeration of 2^i 3^j: Hartman averages, "
               "Gamma_eps scan, nullpotence profile and witness search.",
        "sequences": {"f": _seq({"kind": "furstenberg", "generators": [2, 3]}, 400)},
        "analyses": [
            {"kind": "hartman", "sequence": "f", "z": ["1/5", "1/7", "2/11", "1/13"]},
            {"kind": "gamma_scan", "sequence": "f", "eps": 0.5, "window": [200, 400],
             "denom_max": 64},
            {"kind": "nullpotence_profile", "sequence": "f", "r": 2, "ladder": [0, 8, 16, 24],
             "N": "10^12"},
            {"kind": "kazhdan_search", "sequence": "f", "eps": 0.5, "family": "roots",
             "budget": 100, "max_atom": 0.05},
        ],
    },
}


def presets() -> list[tuple[str, str]]:
    return [(name, p["doc"]) for name, p in sorted(_PRESETS.items())]


def preset_config(name: str, seed: int = 0, threads: int = 1) -> ExperimentConfig:
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(_PRESETS))}")
    body = copy.deepcopy(_PRESETS[name])
    body.update(name=name, seed=seed, threads=threads)
    return ExperimentConfig.from_json(body)


# --- running -------------------------------------------------------------------------

@dataclass
class RunReport:
    config: dict
    results: dict
    timings: dict
    version: str = __version__

    @property
    def ok(self) -> bool:
        return all(r["status"] == "ok" for r in self.results.values())

    def to_json(self, timings: bool = True) -> dict:
        out = {"config": self.config, "results": self.results, "version": self.version}
        if timings:
            out["timings"] = self.timings
        return out

    def stable_json(self) -> str:
        """Serialized report without timings or thread count (determinism contract)."""
        body = self.to_json(timings=False)
        body["config"] = dict(body["config"], threads=None)
        return dumps(body)


def _run_one(cfg: ExperimentConfig, i: int, a: dict, threads: int):
    t0 = time.perf_counter()
    ctx = Context(cfg, i, threads)
    try:
        data, ok, table = ANALYSES[a["kind"]](a, ctx)
        res = {"status": "ok" if ok else "fail", "data": to_plain(data)}
    except (RigidityLabError, ArithmeticError, ValueError, IndexError, KeyError) as exc:
        res, table = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}, None
    return a["id"], res, table, time.perf_counter() - t0


def run(config: ExperimentConfig, out_dir=None) -> RunReport:
    """Runs every analysis (concurrently up to ``config.threads``) and writes
    ``report.json`` plus per-analysis CSV tables when the format is csv."""
    config.validate()
    t0 = time.perf_counter()
    threads = config.threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = [pool.submit(_run_one, config, i, a, threads) for i, a in enumerate(config.analyses)]
        done = [f.result() for f in futs]
    results = {aid: res for aid, res, _, _ in done}
    timings = {aid: dt for aid, _, _, dt in done}
    timings["total"] = time.perf_counter() - t0
    report = RunReport(config.to_json(), results, timings)
    out_dir = out_dir or config.out
    if out_dir:
        out = Path(out_dir)
        write_json(out / "report.json", report.to_json())
        if config.format == "csv":
            for aid, _, table, _ in done:
                if table is not None:
                    header, rows = table
                    atomic_write(out / f"{aid}.csv", csv_text(header, rows))
    return report
