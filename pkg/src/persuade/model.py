"""Problem instances, sender set functions and signaling schemes.

Receivers take a binary action and never influence one another. A receiver
of type ``k`` is sent a *direct signal*: a subset of its possible types,
read as "act if your type is in here". Signals are encoded as bitmasks over
the receiver's type list, so the signal space of receiver ``r`` is
``range(2 ** m_r)`` and its natural order is ascending bitmask value.

The sender's payoff in state ``theta`` is a monotone set function of the
set of receivers who act. Sets of receivers are bitmasks as well
(bit ``r`` set means receiver ``r`` is in the set).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import ClassVar, Iterable, Mapping, Sequence

import numpy as np

from .errors import MalformedInstanceError

PRIOR_TOL = 1e-12
MASS_TOL = 1e-9
PERSUASIVE_TOL = 1e-7
VALUE_TOL = 1e-12
# Gains of acting are differences of two payoffs; the small worked instance
# below uses a gain of -2, so the accepted range is [-2, 2].
UTILITY_DIFF_BOUND = 2.0

MAX_TABLE_RECEIVERS = 16
EXHAUSTIVE_MONOTONE_LIMIT = 12
EXHAUSTIVE_SUBMODULAR_LIMIT = 10
SAMPLED_CHAINS = 200

SignalProfile = tuple[int, ...]
TypeProfile = tuple[int, ...]


def mask_of(receivers: Iterable[int]) -> int:
    """Bitmask of an iterable of receiver indices."""
    mask = 0
    for r in receivers:
        mask |= 1 << int(r)
    return mask


def members(mask: int) -> frozenset[int]:
    """Receiver indices present in ``mask``."""
    out = []
    r = 0
    while mask:
        if mask & 1:
            out.append(r)
        mask >>= 1
        r += 1
    return frozenset(out)


def _bits(masks: np.ndarray, n: int) -> np.ndarray:
    return ((masks[:, None] >> np.arange(n)) & 1).astype(np.int64)


# ---------------------------------------------------------------------------
# Set functions
# ---------------------------------------------------------------------------


class SetFunction:
    """Monotone set function over ``n`` receivers, evaluated on bitmasks."""

    kind: ClassVar[str] = ""
    n: int

    def value(self, mask: int) -> float:
        raise NotImplementedError

    def __call__(self, mask: int) -> float:
        return self.value(mask)

    def table(self) -> np.ndarray:
        """Values on every subset, indexed by bitmask (only for small ``n``)."""
        cached = self.__dict__.get("_table")
        if cached is None:
            if self.n > MAX_TABLE_RECEIVERS:
                raise MalformedInstanceError(
                    f"cannot tabulate a set function over {self.n} receivers"
                )
            cached = self._build_table()
            cached.setflags(write=False)
            object.__setattr__(self, "_table", cached)
        return cached

    def _build_table(self) -> np.ndarray:
        return np.array([self.value(mask) for mask in range(1 << self.n)])

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class TableFunction(SetFunction):
    """Explicit value table, indexed by bitmask.

    ``submodular`` is decided by an exhaustive pairwise marginal check when
    ``n`` is at most ``EXHAUSTIVE_SUBMODULAR_LIMIT`` and is ``None`` otherwise.
    """

    n: int
    values: tuple[float, ...]
    submodular: bool | None = field(init=False)

    kind: ClassVar[str] = "table"

    def __post_init__(self):
        if self.n > MAX_TABLE_RECEIVERS:
            raise MalformedInstanceError("table functions support at most 16 receivers")
        if len(self.values) != 1 << self.n:
            raise MalformedInstanceError(
                f"table needs {1 << self.n} entries, got {len(self.values)}"
            )
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        flag = None
        if self.n <= EXHAUSTIVE_SUBMODULAR_LIMIT:
            flag = is_submodular_table(np.asarray(self.values), self.n)
        object.__setattr__(self, "submodular", flag)

    def value(self, mask: int) -> float:
        return self.values[mask]

    def _build_table(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "values": list(self.values)}


@dataclass(frozen=True, eq=False)
class CoverageFunction(SetFunction):
    """Weighted coverage: total weight of universe elements covered by the set."""

    universe: int
    covers: tuple[frozenset[int], ...]
    weights: tuple[float, ...]

    kind: ClassVar[str] = "coverage"

    def __post_init__(self):
        covers = tuple(frozenset(int(e) for e in c) for c in self.covers)
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != self.universe:
            raise MalformedInstanceError("coverage needs one weight per universe element")
        for c in covers:
            if any(e < 0 or e >= self.universe for e in c):
                raise MalformedInstanceError("cover set refers to an element outside the universe")
        if any(w < 0 for w in weights):
            raise MalformedInstanceError("coverage weights must be nonnegative")
        object.__setattr__(self, "covers", covers)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:  # type: ignore[override]
        return len(self.covers)

    def value(self, mask: int) -> float:
        covered: set[int] = set()
        for r in members(mask):
            covered |= self.covers[r]
        return float(sum(self.weights[e] for e in sorted(covered)))

    def _build_table(self) -> np.ndarray:
        incidence = np.zeros((self.n, self.universe))
        for r, c in enumerate(self.covers):
            incidence[r, list(c)] = 1.0
        bits = _bits(np.arange(1 << self.n), self.n)
        covered = (bits @ incidence) > 0
        return covered @ np.asarray(self.weights, dtype=float)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "universe": self.universe,
            "covers": [sorted(c) for c in self.covers],
            "weights": list(self.weights),
        }


@dataclass(frozen=True, eq=False)
class ConcaveCardinalityFunction(SetFunction):
    """Anonymous function ``g(|R|)`` with nondecreasing, concave increments."""

    g: tuple[float, ...]

    kind: ClassVar[str] = "concave_cardinality"

    def __post_init__(self):
        g = tuple(float(v) for v in self.g)
        if not g:
            raise MalformedInstanceError("concave_cardinality needs g(0..n)")
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:  # type: ignore[override]
        return len(self.g) - 1

    def value(self, mask: int) -> float:
        return self.g[bin(mask).count("1")]

    def _build_table(self) -> np.ndarray:
        counts = _bits(np.arange(1 << self.n), self.n).sum(axis=1)
        return np.asarray(self.g, dtype=float)[counts]

    def increments_ok(self, tol: float = VALUE_TOL) -> bool:
        inc = np.diff(np.asarray(self.g))
        return bool(np.all(inc >= -tol) and np.all(np.diff(inc) <= tol))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "g": list(self.g)}


def is_submodular_table(values: np.ndarray, n: int, tol: float = VALUE_TOL) -> bool:
    """Exhaustive check of f(S+i) - f(S) >= f(S+i+j) - f(S+j) for i, j outside S."""
    values = np.asarray(values, dtype=float)
    masks = np.arange(1 << n)
    for i in range(n):
        for j in range(i + 1, n):
            both = (1 << i) | (1 << j)
            base = masks[(masks & both) == 0]
            gain_i = values[base | (1 << i)] - values[base]
            gain_i_after_j = values[base | both] - values[base | (1 << j)]
            if np.any(gain_i < gain_i_after_j - tol):
                return False
    return True


def set_function_from_dict(data: Mapping, n: int | None = None) -> SetFunction:
    """Build a set function from its JSON form."""
    kind = data.get("kind")
    try:
        if kind == "table":
            size = int(data.get("n", n if n is not None else -1))
            if size < 0:
                raise MalformedInstanceError("table function needs the receiver count")
            raw = data["values"]
            if isinstance(raw, Mapping):
                values = []
                for mask in range(1 << size):
                    if str(mask) not in raw:
                        raise MalformedInstanceError(f"table is missing the entry for subset {mask}")
                    values.append(raw[str(mask)])
            else:
                values = list(raw)
                if len(values) != 1 << size:
                    raise MalformedInstanceError(
                        f"table needs {1 << size} entries, got {len(values)}"
                    )
            return TableFunction(size, tuple(values))
        if kind == "coverage":
            return CoverageFunction(
                int(data["universe"]),
                tuple(frozenset(c) for c in data["covers"]),
                tuple(data["weights"]),
            )
        if kind == "concave_cardinality":
            return ConcaveCardinalityFunction(tuple(data["g"]))
    except KeyError as exc:
        raise MalformedInstanceError(f"{kind} function is missing field {exc}") from None
    raise MalformedInstanceError(f"unknown set function kind {kind!r}")


def eval_set_function(f: SetFunction, receivers: Iterable[int] | int) -> float:
    """Value of ``f`` on a set of receivers (iterable of indices or bitmask)."""
    mask = receivers if isinstance(receivers, (int, np.integer)) else mask_of(receivers)
    if mask >> f.n:
        raise MalformedInstanceError("receiver subset exceeds the function's ground set")
    return float(f.value(int(mask)))


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable problem description.

    Attributes:
        types: per-receiver tuple of type names.
        states: state names.
        prior: state probabilities, shape ``(d,)``.
        utility_diff: per-receiver array of shape ``(m_r, d)`` holding the
            gain of acting over not acting for each type and state.
        sender_functions: one set function per state.
    """

    types: tuple[tuple[str, ...], ...]
    states: tuple[str, ...]
    prior: np.ndarray
    utility_diff: tuple[np.ndarray, ...]
    sender_functions: tuple[SetFunction, ...]

    def __post_init__(self):
        types = tuple(tuple(str(t) for t in ts) for ts in self.types)
        states = tuple(str(s) for s in self.states)
        prior = np.array(self.prior, dtype=float)
        prior.setflags(write=False)
        diffs = []
        for r, u in enumerate(self.utility_diff):
            arr = np.array(u, dtype=float)
            if arr.shape != (len(types[r]) if r < len(types) else -1, len(states)):
                raise MalformedInstanceError(
                    f"utility_diff for receiver {r} must have shape (m_r, d)"
                )
            arr.setflags(write=False)
            diffs.append(arr)
        if not types or any(len(ts) == 0 for ts in types):
            raise MalformedInstanceError("every receiver needs at least one type")
        if len(diffs) != len(types):
            raise MalformedInstanceError("utility_diff needs one entry per receiver")
        if prior.shape != (len(states),) or not states:
            raise MalformedInstanceError("prior needs one entry per state")
        funcs = tuple(self.sender_functions)
        if len(funcs) != len(states):
            raise MalformedInstanceError("sender_functions needs one entry per state")
        for f in funcs:
            if f.n != len(types):
                raise MalformedInstanceError("sender function ground set differs from receiver count")
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "utility_diff", tuple(diffs))
        object.__setattr__(self, "sender_functions", funcs)

    # sizes ---------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.types)

    @property
    def d(self) -> int:
        return len(self.states)

    @property
    def m(self) -> tuple[int, ...]:
        return tuple(len(ts) for ts in self.types)

    @property
    def n_profiles(self) -> int:
        """Number of signal profiles, the product of ``2 ** m_r``."""
        return math.prod(1 << m for m in self.m)

    @property
    def n_type_profiles(self) -> int:
        return math.prod(self.m)

    @property
    def empty_profile(self) -> SignalProfile:
        return (0,) * self.n

    @property
    def full_profile(self) -> SignalProfile:
        return tuple((1 << m) - 1 for m in self.m)

    # enumeration helpers -------------------------------------------------

    def signal_profiles(self) -> Iterable[SignalProfile]:
        """All signal profiles in ascending lexicographic bitmask order."""
        return itertools.product(*(range(1 << m) for m in self.m))

    def type_profiles(self) -> Iterable[TypeProfile]:
        return itertools.product(*(range(m) for m in self.m))

    @cached_property
    def ground_offsets(self) -> np.ndarray:
        """Start of each receiver's block in the flat (receiver, signal) index."""
        sizes = [1 << m for m in self.m]
        return np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)

    @property
    def n_ground(self) -> int:
        return sum(1 << m for m in self.m)

    def check_profile(self, s: Sequence[int]) -> SignalProfile:
        s = tuple(int(v) for v in s)
        if len(s) != self.n or any(v < 0 or v >> m for v, m in zip(s, self.m)):
            raise MalformedInstanceError(f"invalid signal profile {s}")
        return s

    def check_type_profile(self, k: Sequence[int]) -> TypeProfile:
        k = tuple(int(v) for v in k)
        if len(k) != self.n or any(v < 0 or v >= m for v, m in zip(k, self.m)):
            raise MalformedInstanceError(f"invalid type profile {k}")
        return k

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "receivers": [{"types": list(ts)} for ts in self.types],
            "states": list(self.states),
            "prior": [float(p) for p in self.prior],
            "utility_diff": [u.tolist() for u in self.utility_diff],
            "sender_functions": [f.to_dict() for f in self.sender_functions],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Instance":
        try:
            receivers = data["receivers"]
            n = len(receivers)
            return cls(
                types=tuple(tuple(r["types"]) for r in receivers),
                states=tuple(data["states"]),
                prior=np.asarray(data["prior"], dtype=float),
                utility_diff=tuple(np.asarray(u, dtype=float) for u in data["utility_diff"]),
                sender_functions=tuple(
                    set_function_from_dict(f, n) for f in data["sender_functions"]
                ),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedInstanceError(f"bad instance document: {exc!r}") from None


def validate_instance(inst: Instance) -> list[str]:
    """Every invariant violation of ``inst``; an empty list means valid."""
    problems: list[str] = []
    prior = inst.prior
    if abs(prior.sum() - 1.0) > PRIOR_TOL:
        problems.append(f"prior sum ≠ 1 (got {prior.sum():.12g})")
    if np.any(prior <= 0):
        problems.append("prior has a nonpositive entry")
    for r, u in enumerate(inst.utility_diff):
        if not np.all(np.isfinite(u)) or np.any(np.abs(u) > UTILITY_DIFF_BOUND + VALUE_TOL):
            problems.append(f"utility_diff of receiver {r} outside [-2, 2]")
    rng = np.random.default_rng(0)
    for th, f in enumerate(inst.sender_functions):
        label = f"state {inst.states[th]}"
        if isinstance(f, ConcaveCardinalityFunction) and not f.increments_ok():
            problems.append(f"{label}: concave_cardinality increments not nonnegative and nonincreasing")
        if isinstance(f, CoverageFunction) and sum(f.weights) > 1 + VALUE_TOL:
            problems.append(f"{label}: coverage weights sum above 1")
        if f.n <= EXHAUSTIVE_MONOTONE_LIMIT:
            table = f.table()
            if abs(table[0]) > VALUE_TOL:
                problems.append(f"{label}: f(empty set) ≠ 0")
            if np.any(table < -VALUE_TOL) or np.any(table > 1 + VALUE_TOL):
                problems.append(f"{label}: values outside [0, 1]")
            masks = np.arange(1 << f.n)
            for i in range(f.n):
                base = masks[(masks >> i) & 1 == 0]
                if np.any(table[base | (1 << i)] < table[base] - VALUE_TOL):
                    problems.append(f"{label}: monotonicity fails")
                    break
        else:
            if abs(f.value(0)) > VALUE_TOL:
                problems.append(f"{label}: f(empty set) ≠ 0")
            for _ in range(SAMPLED_CHAINS):
                mask, prev = 0, 0.0
                bad = False
                for r in rng.permutation(f.n):
                    mask |= 1 << int(r)
                    val = f.value(mask)
                    if val < prev - VALUE_TOL or val > 1 + VALUE_TOL:
                        bad = True
                        break
                    prev = val
                if bad:
                    problems.append(f"{label}: monotonicity or range fails on a sampled chain")
                    break
    return problems


def load_instance(path: str | Path) -> Instance:
    """Read an instance from JSON, rejecting anything that fails validation."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedInstanceError(f"{path}: not valid JSON ({exc})") from None
    inst = Instance.from_dict(data)
    problems = validate_instance(inst)
    if problems:
        raise MalformedInstanceError(f"{path}: " + "; ".join(problems))
    return inst


def dump_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(inst.to_dict(), indent=2, sort_keys=True) + "\n")


def tiny_instance() -> Instance:
    """One receiver with one type and two equally likely states.

    The receiver loses 2 by acting in the first state and gains 1 in the
    second; the sender wants it to act in both. The best persuasive scheme
    recommends acting always in the second state and half the time in the
    first, for a sender utility of 0.75.
    """
    return Instance(
        types=(("k",),),
        states=("theta0", "theta1"),
        prior=np.array([0.5, 0.5]),
        utility_diff=(np.array([[-2.0, 1.0]]),),
        sender_functions=(TableFunction(1, (0.0, 1.0)), TableFunction(1, (0.0, 1.0))),
    )


# ---------------------------------------------------------------------------
# Signals and schemes
# ---------------------------------------------------------------------------


def activation_mask(s: Sequence[int], k: Sequence[int]) -> int:
    """Bitmask of receivers whose realized type lies in their signal."""
    mask = 0
    for r, (sr, kr) in enumerate(zip(s, k)):
        if (sr >> kr) & 1:
            mask |= 1 << r
    return mask


def activated_set(s: Sequence[int], k: Sequence[int]) -> frozenset[int]:
    """Receivers that act under signal profile ``s`` when types are ``k``."""
    if len(s) != len(k):
        raise MalformedInstanceError("signal and type profiles have different lengths")
    return members(activation_mask(s, k))


@dataclass(frozen=True)
class SignalingScheme:
    """Per-state sparse distribution over signal profiles.

    ``support[theta]`` is a tuple of ``(profile, probability)`` pairs sorted
    by profile. Zero-probability entries are dropped on construction.
    """

    support: tuple[tuple[tuple[SignalProfile, float], ...], ...]

    def __post_init__(self):
        cleaned = []
        for th, pairs in enumerate(self.support):
            merged: dict[SignalProfile, float] = {}
            for prof, p in pairs:
                prof = tuple(int(v) for v in prof)
                merged[prof] = merged.get(prof, 0.0) + float(p)
            if any(p < -MASS_TOL for p in merged.values()):
                raise ValueError(f"negative probability in state {th}")
            total = sum(merged.values())
            if abs(total - 1.0) > MASS_TOL:
                raise ValueError(f"state {th} has probability mass {total!r}, expected 1")
            cleaned.append(tuple(sorted((s, p) for s, p in merged.items() if p > 0.0)))
        object.__setattr__(self, "support", tuple(cleaned))

    @classmethod
    def from_dicts(cls, per_state: Sequence[Mapping[SignalProfile, float]]) -> "SignalingScheme":
        return cls(tuple(tuple(d.items()) for d in per_state))

    @classmethod
    def always(cls, inst: Instance, profile: SignalProfile) -> "SignalingScheme":
        profile = inst.check_profile(profile)
        return cls(tuple(((profile, 1.0),) for _ in range(inst.d)))

    @classmethod
    def always_empty(cls, inst: Instance) -> "SignalingScheme":
        return cls.always(inst, inst.empty_profile)

    @property
    def n_states(self) -> int:
        return len(self.support)

    def state(self, theta: int) -> dict[SignalProfile, float]:
        return dict(self.support[theta])

    def profiles(self) -> list[SignalProfile]:
        """Distinct profiles in the union of supports, sorted."""
        return sorted({s for pairs in self.support for s, _ in pairs})

    def mix(self, other: "SignalingScheme", beta: float) -> "SignalingScheme":
        """Pointwise mixture ``beta * self + (1 - beta) * other``."""
        out = []
        for a, b in zip(self.support, other.support):
            acc: dict[SignalProfile, float] = {}
            for s, p in a:
                acc[s] = acc.get(s, 0.0) + beta * p
            for s, p in b:
                acc[s] = acc.get(s, 0.0) + (1.0 - beta) * p
            out.append(tuple(acc.items()))
        return SignalingScheme(tuple(out))

    def to_dict(self, inst: Instance | None = None) -> dict:
        states = inst.states if inst is not None else [str(i) for i in range(self.n_states)]
        return {
            "states": [
                {
                    "state": states[th],
                    "support": [{"profile": list(s), "probability": p} for s, p in pairs],
                }
                for th, pairs in enumerate(self.support)
            ]
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SignalingScheme":
        return cls(
            tuple(
                tuple((tuple(e["profile"]), e["probability"]) for e in st["support"])
                for st in data["states"]
            )
        )


def sender_utility(inst: Instance, phi: SignalingScheme, k: Sequence[int]) -> float:
    """Expected sender payoff of ``phi`` when receivers have types ``k``."""
    total = 0.0
    for th, pairs in enumerate(phi.support):
        f = inst.sender_functions[th]
        acc = 0.0
        for s, p in pairs:
            acc += p * f.value(activation_mask(s, k))
        total += inst.prior[th] * acc
    return float(total)


def sender_utilities(
    inst: Instance, phi: SignalingScheme, K: Sequence[Sequence[int]]
) -> np.ndarray:
    """``sender_utility`` for each type profile in ``K``."""
    return np.array([sender_utility(inst, phi, k) for k in K], dtype=float)


def persuasiveness_residuals(
    inst: Instance, phi: SignalingScheme
) -> dict[tuple[int, int, int], float]:
    """Obedience slack for every (receiver, signal, type in signal) that is used.

    The residual for ``(r, s, k)`` is the prior-weighted probability mass of
    profiles giving ``s`` to ``r``, times the gain of acting for type ``k``.
    A scheme is persuasive when every residual is at least ``-PERSUASIVE_TOL``.
    """
    out: dict[tuple[int, int, int], float] = {}
    for th, pairs in enumerate(phi.support):
        mu = inst.prior[th]
        for s, p in pairs:
            for r, sr in enumerate(s):
                if sr == 0:
                    continue
                u = inst.utility_diff[r]
                for k in range(inst.m[r]):
                    if (sr >> k) & 1:
                        key = (r, sr, k)
                        out[key] = out.get(key, 0.0) + mu * p * u[k, th]
    return dict(sorted(out.items()))


def is_persuasive(inst: Instance, phi: SignalingScheme, tol: float = PERSUASIVE_TOL) -> bool:
    return all(v >= -tol for v in persuasiveness_residuals(inst, phi).values())
