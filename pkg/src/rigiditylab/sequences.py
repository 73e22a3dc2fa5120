"""Generators for integer sequence families and simple gap diagnostics."""

from __future__ import annotations

import heapq
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .errors import InvalidSpec, NotMonotone

KINDS = (
    "geometric", "divisibility_chain", "erdos_taylor", "furstenberg", "polynomial",
    "block_recursive", "translate_union", "random_bourgain", "explicit",
)

# indices per Philox draw block; chunk starts are kept aligned to this
_PHILOX_LANES = 4
DEFAULT_CHUNK = 1 << 20


@dataclass(frozen=True)
class RandomModel:
    """Independent inclusion law: ``n`` is kept with probability ``p_n``.

    ``log_over_n`` uses ``p_n = log(n)/n``; ``power`` uses ``p_n = n**-d``
    with ``0 < d < 1``.  Both are defined for ``n >= 2``.
    """

    name: str = "log_over_n"
    d: float | None = None

    def __post_init__(self):
        if self.name == "log_over_n":
            if self.d is not None:
                raise InvalidSpec("log_over_n takes no exponent")
        elif self.name == "power":
            if self.d is None or not (0.0 < float(self.d) < 1.0):
                raise InvalidSpec(f"power model needs 0 < d < 1, got {self.d!r}")
            object.__setattr__(self, "d", float(self.d))
        else:
            raise InvalidSpec(f"unknown random model {self.name!r}")

    def probs(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=np.float64)
        if self.name == "log_over_n":
            return np.log(n) / n
        return n ** (-self.d)

    def moments(self, N: int, chunk: int = DEFAULT_CHUNK) -> tuple[float, float]:
        """Mean and variance of the number of kept integers in ``[2, N]``."""
        mean = var = 0.0
        for lo in range(2, N + 1, chunk):
            p = self.probs(np.arange(lo, min(lo + chunk, N + 1)))
            mean += float(math.fsum(p))
            var += float(math.fsum(p * (1.0 - p)))
        return mean, var

    def to_json(self) -> dict:
        out: dict[str, Any] = {"name": self.name}
        if self.d is not None:
            out["d"] = self.d
        return out

    @classmethod
    def from_json(cls, obj) -> RandomModel:
        if isinstance(obj, str):
            return cls(obj)
        return cls(obj.get("name", "log_over_n"), obj.get("d"))


def _int(value, what: str) -> int:
    if isinstance(value, bool):
        raise InvalidSpec(f"{what} must be an integer")
    try:
        out = int(value)
    except (TypeError, ValueError):
        raise InvalidSpec(f"{what} must be an integer, got {value!r}") from None
    if isinstance(value, float) and value != out:
        raise InvalidSpec(f"{what} must be an integer, got {value!r}")
    return out


def _expand_runs(alpha) -> list[int]:
    out = []
    for entry in alpha:
        if isinstance(entry, (list, tuple)):
            if len(entry) != 2:
                raise InvalidSpec("alpha run entries are [value, repeat]")
            value, run = _int(entry[0], "alpha value"), _int(entry[1], "alpha repeat")
            if run < 1:
                raise InvalidSpec("alpha repeat must be >= 1")
            out.extend([value] * run)
        else:
            out.append(_int(entry, "alpha value"))
    return out


@dataclass(frozen=True)
class SequenceSpec:
    """Recipe for a sequence family.  ``params`` depends on ``kind``:

    ``geometric``           base (>= 2); terms base**k, k >= 0
    ``divisibility_chain``  ratios (each >= 2, cycled), start (default 1)
    ``erdos_taylor``        none; p_1 = 1, p_{j+1} = j p_j + 1
    ``furstenberg``         generators (default [2, 3])
    ``polynomial``          coefficients, lowest degree first; start (default 0)
    ``block_recursive``     alpha (ints or [value, repeat]), block_starts (from 0),
                            n0 (default 1); n_{k+1} = alpha_i n_k + k on block i
    ``translate_union``     base (a spec), shift (default 1)
    ``random_bourgain``     model, seed, N
    ``explicit``            values
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown sequence kind {self.kind!r}")
        object.__setattr__(self, "params", self._validate(dict(self.params)))

    def _validate(self, p: dict) -> dict:
        k = self.kind
        if k == "geometric":
            b = _int(p.get("base", 2), "base")
            if b < 2:
                raise InvalidSpec("geometric base must be >= 2")
            return {"base": b}
        if k == "divisibility_chain":
            ratios = [_int(r, "ratio") for r in p.get("ratios", [])]
            if not ratios or min(ratios) < 2:
                raise InvalidSpec("divisibility_chain needs ratios >= 2")
            start = _int(p.get("start", 1), "start")
            if start < 1:
                raise InvalidSpec("start must be positive")
            return {"ratios": ratios, "start": start}
        if k == "erdos_taylor":
            if p:
                raise InvalidSpec("erdos_taylor takes no parameters")
            return {}
        if k == "furstenberg":
            gens = sorted({_int(g, "generator") for g in p.get("generators", [2, 3])})
            if not gens or gens[0] < 2:
                raise InvalidSpec("furstenberg generators must be >= 2")
            return {"generators": gens}
        if k == "polynomial":
            coeffs = [_int(c, "coefficient") for c in p.get("coefficients", [])]
            if not coeffs:
                raise InvalidSpec("polynomial needs coefficients")
            return {"coefficients": coeffs, "start": _int(p.get("start", 0), "start")}
        if k == "block_recursive":
            raw_alpha = p.get("alpha")
            if isinstance(raw_alpha, int):
                raw_alpha = [raw_alpha]
            if not raw_alpha:
                raise InvalidSpec("block_recursive needs alpha")
            alpha = _expand_runs(raw_alpha)
            starts = [_int(s, "block start") for s in p.get("block_starts", [0])]
            if not starts or starts[0] != 0:
                raise InvalidSpec("block_starts must begin at 0")
            if any(b <= a for a, b in zip(starts, starts[1:])):
                raise InvalidSpec("block_starts must be strictly increasing")
            if len(alpha) != len(starts):
                raise InvalidSpec(
                    f"alpha expands to {len(alpha)} values but there are {len(starts)} blocks")
            return {"alpha": alpha, "block_starts": starts, "n0": _int(p.get("n0", 1), "n0")}
        if k == "translate_union":
            base = p.get("base")
            if base is None:
                raise InvalidSpec("translate_union needs a base spec")
            base = base if isinstance(base, SequenceSpec) else SequenceSpec.from_json(base)
            shift = _int(p.get("shift", 1), "shift")
            if shift < 1:
                raise InvalidSpec("shift must be positive")
            return {"base": base, "shift": shift}
        if k == "random_bourgain":
            model = p.get("model", "log_over_n")
            model = model if isinstance(model, RandomModel) else RandomModel.from_json(model)
            N = _int(p.get("N", 0), "N")
            if N < 2:
                raise InvalidSpec("random_bourgain needs N >= 2")
            return {"model": model, "seed": _int(p.get("seed", 0), "seed"), "N": N}
        # explicit
        values = p.get("values")
        if not values:
            raise InvalidSpec("explicit sequence needs values")
        return {"values": [_int(v, "value") for v in values]}

    # convenience constructors
    @classmethod
    def geometric(cls, base: int = 2) -> SequenceSpec:
        return cls("geometric", {"base": base})

    @classmethod
    def erdos_taylor(cls) -> SequenceSpec:
        return cls("erdos_taylor")

    @classmethod
    def furstenberg(cls, generators=(2, 3)) -> SequenceSpec:
        return cls("furstenberg", {"generators": list(generators)})

    @classmethod
    def block_recursive(cls, alpha, block_starts=(0,), n0: int = 1) -> SequenceSpec:
        return cls("block_recursive", {"alpha": list(alpha), "block_starts": list(block_starts),
                                       "n0": n0})

    @classmethod
    def translate_union(cls, base: SequenceSpec, shift: int = 1) -> SequenceSpec:
        return cls("translate_union", {"base": base, "shift": shift})

    @classmethod
    def explicit(cls, values) -> SequenceSpec:
        return cls("explicit", {"values": list(values)})

    def to_json(self) -> dict:
        params = {}
        for key, value in self.params.items():
            if isinstance(value, (SequenceSpec, RandomModel)):
                value = value.to_json()
            elif key in ("values",):
                value = [str(v) for v in value]
            params[key] = value
        return {"kind": self.kind, "params": params}

    @classmethod
    def from_json(cls, obj) -> SequenceSpec:
        if isinstance(obj, SequenceSpec):
            return obj
        if isinstance(obj, str):
            obj = json.loads(obj)
        if not isinstance(obj, dict) or "kind" not in obj:
            raise InvalidSpec("sequence spec must be an object with a 'kind'")
        params = obj.get("params")
        if params is None:
            params = {k: v for k, v in obj.items() if k != "kind"}
        return cls(obj["kind"], params)

    @property
    def label(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class IntegerSequence:
    terms: tuple
    spec: SequenceSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(int(t) for t in self.terms))

    def __len__(self) -> int:
        return len(self.terms)

    def __getitem__(self, i):
        return self.terms[i]

    def __iter__(self):
        return iter(self.terms)

    @property
    def label(self) -> str:
        return self.spec.label if self.spec is not None else f"explicit[{len(self.terms)}]"

    def is_strictly_increasing(self) -> bool:
        return all(b > a for a, b in zip(self.terms, self.terms[1:]))

    def fits_int64(self) -> bool:
        return all(-2**62 < t < 2**62 for t in self.terms)

    def to_json(self) -> list[str]:
        return [str(t) for t in self.terms]

    def to_text(self) -> str:
        return "".join(f"{t}\n" for t in self.terms)

    @classmethod
    def from_values(cls, values: Iterable[int]) -> IntegerSequence:
        values = list(values)
        return cls(tuple(values), SequenceSpec.explicit(values))


def _furstenberg(gens: list[int], count: int) -> list[int]:
    heap, seen, out = [1], {1}, []
    while len(out) < count:
        t = heapq.heappop(heap)
        out.append(t)
        for g in gens:
            if t * g not in seen:
                seen.add(t * g)
                heapq.heappush(heap, t * g)
    return out


def _block_recursive(alpha, starts, n0, count) -> list[int]:
    out = [n0]
    block = 0
    for k in range(count - 1):
        while block + 1 < len(starts) and k >= starts[block + 1]:
            block += 1
        out.append(alpha[block] * out[-1] + k)
    return out


def generate(spec: SequenceSpec, count: int) -> IntegerSequence:
    """First ``count`` terms of the family described by ``spec``."""
    if isinstance(count, bool) or int(count) < 1:
        raise InvalidSpec("count must be >= 1")
    count = int(count)
    p, kind = spec.params, spec.kind
    if kind == "geometric":
        terms = [p["base"] ** k for k in range(count)]
    elif kind == "divisibility_chain":
        terms, ratios = [p["start"]], p["ratios"]
        for k in range(count - 1):
            terms.append(terms[-1] * ratios[k % len(ratios)])
    elif kind == "erdos_taylor":
        terms = [1]
        for j in range(1, count):
            terms.append(j * terms[-1] + 1)
    elif kind == "furstenberg":
        terms = _furstenberg(p["generators"], count)
    elif kind == "polynomial":
        cs = p["coefficients"]
        terms = []
        for k in range(p["start"], p["start"] + count):
            v = 0
            for c in reversed(cs):
                v = v * k + c
            terms.append(v)
    elif kind == "block_recursive":
        terms = _block_recursive(p["alpha"], p["block_starts"], p["n0"], count)
    elif kind == "translate_union":
        b = p["base"]
        # a finite explicit base is used whole
        base = generate(b, len(b.params["values"]) if b.kind == "explicit" else count + 1)
        if not base.is_strictly_increasing():
            raise InvalidSpec("translate_union base must be strictly increasing")
        merged = sorted(set(base.terms) | {m + p["shift"] for m in base.terms})
        terms = merged[:count]
    elif kind == "random_bourgain":
        sample = bourgain_sample(p["model"], p["N"], p["seed"])
        terms = list(sample.terms[:count])
    else:
        if count > len(p["values"]):
            raise InvalidSpec(f"explicit sequence has only {len(p['values'])} values")
        terms = p["values"][:count]
    return IntegerSequence(tuple(terms), spec)


def _sample_chunk(model: RandomModel, key: int, lo: int, hi: int) -> np.ndarray:
    # index n lives at stream position n - 2; lo - 2 is a multiple of the lane width
    offset = lo - 2
    bitgen = np.random.Philox(key=key, counter=offset // _PHILOX_LANES)
    raw = bitgen.random_raw(hi - lo)
    u = (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    n = np.arange(lo, hi, dtype=np.int64)
    return n[u < model.probs(n)]


def bourgain_sample(model: RandomModel, N: int, seed: int, workers: int = 1,
                    chunk: int = DEFAULT_CHUNK) -> IntegerSequence:
    """Random subset ``{2 <= n <= N : u_n < p_n}``.

    ``u_n`` is a 53-bit uniform read from a Philox stream keyed by ``seed`` at
    a position fixed by ``n``, so the output does not depend on ``workers``
    or ``chunk``.
    """
    N = int(N)
    if N < 2:
        raise InvalidSpec("N must be >= 2")
    if isinstance(model, str):
        model = RandomModel(model)
    chunk = max(_PHILOX_LANES, chunk - chunk % _PHILOX_LANES)
    key = int(seed) % 2**64
    bounds = [(lo, min(lo + chunk, N + 1)) for lo in range(2, N + 1, chunk)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _sample_chunk(model, key, *b), bounds))
    else:
        parts = [_sample_chunk(model, key, lo, hi) for lo, hi in bounds]
    terms = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    spec = SequenceSpec("random_bourgain", {"model": model, "seed": int(seed), "N": N})
    return IntegerSequence(tuple(terms.tolist()), spec)


@dataclass
class GapWindow:
    window: int
    start: int          # first gap index (gap i is n_{i+1} - n_i)
    stop: int           # one past the last gap index
    min_gap: int
    argmin: int
    complete: bool


@dataclass
class GapReport:
    windows: list
    bounded_gap_suspected: bool

    def to_json(self) -> dict:
        return {
            "windows": [{"window": w.window, "start": w.start, "stop": w.stop,
                         "min_gap": str(w.min_gap), "argmin": w.argmin,
                         "complete": w.complete} for w in self.windows],
            "bounded_gap_suspected": self.bounded_gap_suspected,
        }


def gap_divergence(seq: IntegerSequence) -> GapReport:
    """Minimum consecutive gap over dyadic windows ``[2**w - 1, 2**(w+1) - 1)``
    of gap indices.  Flags a suspected bounded gap when the last three
    windows share the same minimum."""
    terms = seq.terms if isinstance(seq, IntegerSequence) else tuple(seq)
    gaps = [b - a for a, b in zip(terms, terms[1:])]
    if any(g <= 0 for g in gaps):
        raise NotMonotone("gap_divergence needs a strictly increasing sequence")
    windows = []
    w = 0
    while (1 << w) - 1 < len(gaps):
        start, stop = (1 << w) - 1, (1 << (w + 1)) - 1
        part = gaps[start:stop]
        m = min(part)
        windows.append(GapWindow(w, start, min(stop, len(gaps)), m, start + part.index(m),
                                 stop <= len(gaps)))
        w += 1
    mins = [x.min_gap for x in windows]
    flag = len(mins) >= 3 and mins[-1] == mins[-2] == mins[-3]
    return GapReport(windows, flag)
