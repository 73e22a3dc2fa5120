"""Command-line interface.

Exit codes: 0 success, 1 an analysis-level check failed, 2 config or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .bohr import BlockScheme, SubsetSumSet, katznelson_witness, sublevel_set
from .errors import ConfigError, RigidityLabError
from .experiment import (
    ExperimentConfig, dyadic_ladder, parse_int, parse_ladder, parse_measure, parse_point,
    preset_config, presets, run,
)
from .kazhdan import hartman_statistic, non_kazhdan_search
from .nullpotence import nullpotence_profile
from .reports import atomic_write, csv_text, dumps
from .rigidity import gamma_scan, window_defect
from .sequences import SequenceSpec, generate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("RIGIDITYLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("RIGIDITYLAB_THREADS", f"not an integer: {env!r}") from None
    return 1


def _load_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(what, f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(what, f"{path} is not valid JSON: {exc}") from None


def _load_sequence(args, default_count: int = 100):
    obj = _load_json(args.spec, "--spec")
    if isinstance(obj, dict):
        obj = dict(obj)
        count = obj.pop("count", None)
    else:
        count = None
    if args.count is not None:
        count = args.count
    spec = SequenceSpec.from_json(obj)
    return generate(spec, parse_int(count if count is not None else default_count, "count"))


def _window(text):
    if text is None:
        return 0, None
    sep = ":" if ":" in text else ","
    lo, _, hi = text.partition(sep)
    return parse_int(lo or 0, "--window"), (parse_int(hi, "--window") if hi else None)


def _range(text: str, what: str) -> tuple[int, int]:
    for sep in ("..", ":", ","):
        if sep in text:
            lo, hi = text.split(sep, 1)
            return parse_int(lo, what), parse_int(hi, what)
    v = parse_int(text, what)
    return v, v


def _emit(args, obj=None, header=None, rows=None) -> None:
    fmt = getattr(args, "format", "json")
    if fmt == "csv" and header is not None:
        text = csv_text(header, rows)
    else:
        text = dumps(obj)
    if getattr(args, "out", None):
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


# --- commands ---------------------------------------------------------------------

def cmd_run(args) -> int:
    threads = _threads(args)
    if args.preset:
        try:
            cfg = preset_config(args.preset, 0, threads)
        except KeyError as exc:
            raise ConfigError("--preset", exc.args[0]) from None
    elif args.config:
        cfg = ExperimentConfig.from_json(_load_json(args.config, "--config"))
        if args.threads is not None or os.environ.get("RIGIDITYLAB_THREADS"):
            cfg.threads = threads
    else:
        raise ConfigError("run", "give --preset or --config")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.format:
        cfg.format = args.format
    report = run(cfg, args.out)
    if not args.out:
        sys.stdout.write(dumps(report.to_json()))
    else:
        for aid, res in report.results.items():
            print(f"{aid}: {res['status']}")
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_presets(args) -> int:
    for name, doc in presets():
        print(f"{name}\n    {doc}")
    return EXIT_OK


def cmd_sequence_generate(args) -> int:
    seq = _load_sequence(args)
    _emit(args, {"spec": seq.spec.to_json(), "terms": seq.to_json()}, ["k", "n_k"],
          [[k, n] for k, n in enumerate(seq.terms)])
    return EXIT_OK


def cmd_rigidity_defect(args) -> int:
    seq = _load_sequence(args)
    mu = parse_measure(_load_json(args.measure, "--measure"))
    K0, K1 = _window(args.window)
    rep = window_defect(mu, seq, K0, K1)
    _emit(args, rep, ["k", "n_k", "defect"], list(rep.rows()))
    return EXIT_OK


def cmd_rigidity_gamma(args) -> int:
    seq = _load_sequence(args)
    K0, K1 = _window(args.window)
    scan = gamma_scan(seq, args.eps, K0, K1, denom_max=args.denom_max)
    rows = [[int(n), int(d), float(s), bool(s < args.eps)]
            for n, d, s in zip(scan.nums, scan.dens, scan.sups)]
    _emit(args, {"eps": args.eps, "window": [K0, K1], "hits": [str(h) for h in scan.hits()]},
          ["num", "den", "sup_defect", "hit"], rows)
    return EXIT_OK


def cmd_kazhdan_hartman(args) -> int:
    seq = _load_sequence(args)
    pts = [parse_point(z.strip(), "--z") for z in args.z.split(",")]
    ladder = parse_ladder(args.ladder, "--ladder") if args.ladder else dyadic_ladder(len(seq) - 1)
    reps = [hartman_statistic(seq, z, ladder) for z in pts]
    rows = [[r.z.angle.turns(), K, v] for r in reps for K, v in zip(r.ladder, r.values)]
    _emit(args, {"reports": [r.to_json() for r in reps]}, ["z_turns", "K", "value"], rows)
    return EXIT_OK


def cmd_kazhdan_search(args) -> int:
    seq = _load_sequence(args)
    res = non_kazhdan_search(seq, args.eps, args.family, args.budget, args.max_atom)
    _emit(args, res)
    return EXIT_OK


def cmd_nullpotence_profile(args) -> int:
    seq = _load_sequence(args)
    prof = nullpotence_profile(seq, args.r, parse_ladder(args.K_ladder, "--K-ladder"),
                               parse_int(args.N, "--N"), not args.distinct)
    rows = [[row.K, row.value, " ".join(f"{'+' if s > 0 else '-'}n_{i}" for s, i in row.witness)]
            for row in prof.rows]
    _emit(args, prof, ["K", "min_representable", "witness"], rows)
    return EXIT_OK


def cmd_bohr_witness(args) -> int:
    obj = _load_json(args.targets, "--targets")
    targets = obj.get("targets", obj) if isinstance(obj, dict) else obj
    if not isinstance(targets, list) or not targets:
        raise ConfigError("--targets", "expected a nonempty list of angles")
    pts = [parse_point(t, f"targets[{i}]") for i, t in enumerate(targets)]
    lo, hi = _range(args.blocks, "--blocks")
    scheme = BlockScheme.singletons(lo, hi)
    p = generate(SequenceSpec.erdos_taylor(), scheme.max_index())
    D = SubsetSumSet.over_blocks(p, scheme.blocks())
    cert = katznelson_witness(D, pts, args.eps, scheme, p)
    _emit(args, cert)
    return EXIT_OK if cert.certified else EXIT_FAIL


def cmd_bohr_sublevel(args) -> int:
    mu = parse_measure(_load_json(args.measure, "--measure"))
    sub = sublevel_set(mu, args.eps, parse_int(args.N, "--N"))
    if args.format == "csv":
        _emit(args, None, ["n"], [[int(n)] for n in sub.members])
    else:
        _emit(args, sub.to_json(as_bitmap=args.bitmap))
    return EXIT_OK


# --- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rigiditylab",
                                 description="Harmonic-analysis diagnostics for integer sequences.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, spec=True, fmt=True):
        if spec:
            p.add_argument("--spec", required=True, help="sequence spec JSON file")
            p.add_argument("--count", type=int, help="number of terms (default: spec count or 100)")
        if fmt:
            p.add_argument("--format", choices=("csv", "json"), default="json")
        p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("run", help="run a preset or config file")
    p.add_argument("--preset")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("presets", help="list named presets")
    p.set_defaults(func=cmd_presets)

    seq = sub.add_parser("sequence").add_subparsers(dest="action", required=True)
    p = seq.add_parser("generate")
    common(p)
    p.set_defaults(func=cmd_sequence_generate)

    rig = sub.add_parser("rigidity").add_subparsers(dest="action", required=True)
    p = rig.add_parser("defect")
    common(p)
    p.add_argument("--measure", required=True)
    p.add_argument("--window", help="K0:K1, half-open")
    p.set_defaults(func=cmd_rigidity_defect)
    p = rig.add_parser("gamma")
    common(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--window")
    p.add_argument("--denom-max", type=int, default=64)
    p.set_defaults(func=cmd_rigidity_gamma)

    kaz = sub.add_parser("kazhdan").add_subparsers(dest="action", required=True)
    p = kaz.add_parser("hartman")
    common(p)
    p.add_argument("--z", required=True, help="comma-separated angles in turns, e.g. 1/3,1/5")
    p.add_argument("--ladder")
    p.set_defaults(func=cmd_kazhdan_hartman)
    p = kaz.add_parser("search")
    common(p, fmt=False)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--family", choices=("roots", "dirac", "pushforward"), default="roots")
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--max-atom", type=float, default=0.05)
    p.set_defaults(func=cmd_kazhdan_search)

    nul = sub.add_parser("nullpotence").add_subparsers(dest="action", required=True)
    p = nul.add_parser("profile")
    common(p)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--K-ladder", required=True)
    p.add_argument("--N", required=True)
    p.add_argument("--distinct", action="store_true", help="forbid repeated indices")
    p.set_defaults(func=cmd_nullpotence_profile)

    boh = sub.add_parser("bohr").add_subparsers(dest="action", required=True)
    p = boh.add_parser("witness")
    common(p, spec=False, fmt=False)
    p.add_argument("--targets", required=True, help="JSON list of angles")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--blocks", default="1..8", help="block range q_lo..q_hi")
    p.set_defaults(func=cmd_bohr_witness)
    p = boh.add_parser("sublevel")
    common(p, spec=False)
    p.add_argument("--measure", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--N", required=True)
    p.add_argument("--bitmap", action="store_true")
    p.set_defaults(func=cmd_bohr_sublevel)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, IndexError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RigidityLabError as exc:
        # preconditions, caps and similar analysis-level failures
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
