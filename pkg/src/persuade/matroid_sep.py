"""Signal profiles as bases of a partition matroid, and separation oracles.

The ground set holds one element ``(r, s)`` per receiver ``r`` and signal
``s``; an independent set uses each receiver at most once and a basis is a
full signal profile. Dual separation for the signaling LPs reduces to
maximising, over bases, the composite objective

    sum_k lam_k f_theta(R^k_s) + sum_r w[r, s_r]

whose first part is monotone submodular over the matroid when ``f_theta``
is. Elements are flattened as ``instance.ground_offsets[r] + s``.
"""

from __future__ import annotations

import itertools
import math
import weakref
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import IndependenceError, OracleScaleError
from .model import Instance, SignalProfile, TypeProfile, activation_mask

EXACT_PROFILE_LIMIT = 10**6
GREEDY_ALPHA = 1.0 - 1.0 / math.e
MARGINAL_TOL = 1e-12
TIE_TOL = 1e-12
LOCAL_SEARCH_PASSES = 50


@dataclass(frozen=True, eq=False)
class SepQuery:
    """Input of a separation oracle.

    Attributes:
        instance: the problem instance.
        theta: state index.
        K: type profiles whose activation sets enter the objective.
        lam: nonnegative weight per entry of ``K``.
        w: flat linear weights, one per ground element; ``w`` at every
            empty signal must be zero.
        eps: additive error the caller tolerates.
    """

    instance: Instance
    theta: int
    K: tuple[TypeProfile, ...]
    lam: np.ndarray
    w: np.ndarray
    eps: float = 0.0

    def __post_init__(self):
        inst = self.instance
        lam = np.asarray(self.lam, dtype=float).ravel()
        w = np.asarray(self.w, dtype=float).ravel()
        if lam.size != len(self.K):
            raise ValueError("lam needs one weight per type profile")
        if np.any(lam < 0):
            raise ValueError("lam must be nonnegative")
        if w.size != inst.n_ground:
            raise ValueError("w needs one weight per ground element")
        if np.any(w[inst.ground_offsets] != 0):
            raise ValueError("weights on empty signals must be zero")
        object.__setattr__(self, "K", tuple(tuple(int(v) for v in k) for k in self.K))
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_blocks(cls, instance, theta, K, lam, w_blocks: Sequence[Sequence[float]], eps=0.0):
        """Build a query from per-receiver weight lists ``w_blocks[r][s]``."""
        return cls(instance, theta, tuple(K), lam, np.concatenate([np.asarray(b, float) for b in w_blocks]), eps)

    def weight(self, r: int, s: int) -> float:
        return float(self.w[self.instance.ground_offsets[r] + s])


@dataclass(frozen=True)
class SepResult:
    """Oracle answer: a full signal profile and its composite value."""

    profile: SignalProfile
    value: float
    kind: str
    f_part: float
    linear_part: float


def _as_pairs(inst: Instance, I) -> dict[int, int]:
    items = list(I)
    if items and all(isinstance(v, (int, np.integer)) for v in items):
        if len(items) != inst.n:
            raise ValueError("a signal profile needs one entry per receiver")
        return {r: int(s) for r, s in enumerate(items)}
    out: dict[int, int] = {}
    for r, s in items:
        r, s = int(r), int(s)
        if r in out:
            raise IndependenceError(f"receiver {r} appears twice")
        if not 0 <= r < inst.n or not 0 <= s < 1 << inst.m[r]:
            raise ValueError(f"({r}, {s}) is not a ground element")
        out[r] = s
    return out


def composite_parts(q: SepQuery, I) -> tuple[float, float]:
    """Submodular and linear parts of the composite objective on ``I``.

    ``I`` is either a full signal profile or an iterable of ``(r, s)``
    pairs; receivers without an element behave as if sent the empty signal.
    """
    inst = q.instance
    pairs = _as_pairs(inst, I)
    profile = tuple(pairs.get(r, 0) for r in range(inst.n))
    f = inst.sender_functions[q.theta]
    f_part = 0.0
    for k, lam in zip(q.K, q.lam):
        if lam:
            f_part += lam * f.value(activation_mask(profile, k))
    linear = sum(q.weight(r, s) for r, s in pairs.items())
    return float(f_part), float(linear)


def composite_value(q: SepQuery, I) -> float:
    """``f^lam_theta(I) + l^w(I)`` for a basis or partial independent set."""
    f_part, linear = composite_parts(q, I)
    return f_part + linear


# ---------------------------------------------------------------------------
# Exact oracle
# ---------------------------------------------------------------------------


class ProfileTables:
    """Cached per-instance arrays over the full list of signal profiles."""

    def __init__(self, inst: Instance):
        if inst.n_profiles > EXACT_PROFILE_LIMIT:
            raise OracleScaleError(
                f"{inst.n_profiles} signal profiles exceed the enumeration limit {EXACT_PROFILE_LIMIT}"
            )
        self.inst = inst
        self.profiles = np.array(list(inst.signal_profiles()), dtype=np.int64).reshape(-1, inst.n)
        self.ground = self.profiles + inst.ground_offsets[None, :]
        self.tables = [f.table() for f in inst.sender_functions]
        self._act: dict[TypeProfile, np.ndarray] = {}
        self._vals: dict[tuple[int, TypeProfile], np.ndarray] = {}

    def activation(self, k: TypeProfile) -> np.ndarray:
        act = self._act.get(k)
        if act is None:
            act = np.zeros(len(self.profiles), dtype=np.int64)
            for r, kr in enumerate(k):
                act |= ((self.profiles[:, r] >> kr) & 1) << r
            self._act[k] = act
        return act

    def values(self, theta: int, k: TypeProfile) -> np.ndarray:
        """``f_theta(R^k_s)`` for every profile ``s``."""
        key = (theta, k)
        vals = self._vals.get(key)
        if vals is None:
            vals = self.tables[theta][self.activation(k)]
            self._vals[key] = vals
        return vals

    def value_matrix(self, theta: int, K: Sequence[TypeProfile]) -> np.ndarray:
        return np.stack([self.values(theta, k) for k in K], axis=1) if K else np.zeros((len(self.profiles), 0))

    def index(self, profile: Sequence[int]) -> int:
        idx = 0
        for s, m in zip(profile, self.inst.m):
            idx = (idx << m) | int(s)
        return idx


_TABLES: "weakref.WeakKeyDictionary[Instance, ProfileTables]" = weakref.WeakKeyDictionary()


def profile_tables(inst: Instance) -> ProfileTables:
    tables = _TABLES.get(inst)
    if tables is None:
        tables = ProfileTables(inst)
        _TABLES[inst] = tables
    return tables


def exact_sep_oracle(q: SepQuery) -> SepResult:
    """Maximise the composite objective over every signal profile.

    Values within ``TIE_TOL`` of the maximum count as ties, which go to the
    lexicographically smallest profile.

    Raises:
        OracleScaleError: the instance has more than ``EXACT_PROFILE_LIMIT``
            profiles.
    """
    tab = profile_tables(q.instance)
    f_vals = np.zeros(len(tab.profiles))
    for k, lam in zip(q.K, q.lam):
        if lam:
            f_vals += lam * tab.values(q.theta, k)
    total = f_vals + q.w[tab.ground].sum(axis=1)
    best = int(np.flatnonzero(total >= total.max() - TIE_TOL)[0])
    profile = tuple(int(v) for v in tab.profiles[best])
    f_part, linear = composite_parts(q, profile)
    return SepResult(profile, f_part + linear, "exact", f_part, linear)


def brute_force_sep(q: SepQuery) -> SepResult:
    """Reference maximiser by plain enumeration through ``composite_value``."""
    inst = q.instance
    if inst.n_profiles > EXACT_PROFILE_LIMIT:
        raise OracleScaleError("instance too large for enumeration")
    scored = [(s, *composite_parts(q, s)) for s in inst.signal_profiles()]
    top = max(f + lin for _, f, lin in scored)
    s, f_part, linear = next(e for e in scored if e[1] + e[2] >= top - TIE_TOL)
    return SepResult(tuple(s), f_part + linear, "brute_force", f_part, linear)


# ---------------------------------------------------------------------------
# Greedy oracle
# ---------------------------------------------------------------------------


def greedy_sep_oracle(q: SepQuery) -> SepResult:
    """Distorted greedy over receivers.

    Each round scores every unassigned receiver and signal by the
    submodular marginal gain, scaled by ``(1 - 1/n) ** (n - 1 - t)`` in
    round ``t``, plus the raw linear weight. The best pair is fixed; the
    empty signal (score 0) is always available. Ties prefer the lower
    receiver, then the lower signal. The greedy basis is then polished by
    single-receiver swaps that strictly raise the true composite value,
    which can only help the approximation guarantee.
    """
    inst = q.instance
    n = inst.n
    f = inst.sender_functions[q.theta]
    K = [k for k, lam in zip(q.K, q.lam) if lam]
    lams = [lam for lam in q.lam if lam]
    masks = [0] * len(K)
    current = [0.0] * len(K)
    remaining = list(range(n))
    profile = [0] * n
    for t in range(n):
        discount = (1.0 - 1.0 / n) ** (n - 1 - t)
        best_score, best_pair = -math.inf, None
        for r in remaining:
            bit = 1 << r
            for s in range(1 << inst.m[r]):
                gain = 0.0
                for i, k in enumerate(K):
                    if (s >> k[r]) & 1:
                        gain += lams[i] * (f.value(masks[i] | bit) - current[i])
                score = discount * gain + q.weight(r, s)
                if score > best_score:
                    best_score, best_pair = score, (r, s)
        r, s = best_pair
        profile[r] = s
        remaining.remove(r)
        for i, k in enumerate(K):
            if (s >> k[r]) & 1:
                masks[i] |= 1 << r
                current[i] = f.value(masks[i])
    profile_t = _local_search(q, tuple(profile))
    f_part, linear = composite_parts(q, profile_t)
    return SepResult(profile_t, f_part + linear, "greedy", f_part, linear)


def _local_search(q: SepQuery, profile: SignalProfile) -> SignalProfile:
    inst = q.instance
    current = composite_value(q, profile)
    for _ in range(LOCAL_SEARCH_PASSES):
        improved = False
        for r in range(inst.n):
            for s in range(1 << inst.m[r]):
                if s == profile[r]:
                    continue
                cand = profile[:r] + (s,) + profile[r + 1:]
                val = composite_value(q, cand)
                if val > current + TIE_TOL:
                    profile, current, improved = cand, val, True
        if not improved:
            break
    return profile


class ExactOracle:
    """Enumeration oracle; approximation factor 1."""

    alpha = 1.0
    kind = "exact"

    def __call__(self, q: SepQuery) -> SepResult:
        return exact_sep_oracle(q)

    def __repr__(self):
        return "ExactOracle()"


class GreedyOracle:
    """Distorted-greedy oracle; nominal approximation factor ``1 - 1/e``."""

    alpha = GREEDY_ALPHA
    kind = "greedy"

    def __call__(self, q: SepQuery) -> SepResult:
        return greedy_sep_oracle(q)

    def __repr__(self):
        return "GreedyOracle()"


EXACT = ExactOracle()
GREEDY = GreedyOracle()


def get_oracle(name: str):
    try:
        return {"exact": EXACT, "greedy": GREEDY}[name]
    except KeyError:
        raise ValueError(f"unknown oracle {name!r}; choose exact or greedy") from None


# ---------------------------------------------------------------------------
# Submodularity check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Counterexample:
    """Witness that the marginal of ``element`` grows from ``small`` to ``large``."""

    small: tuple[tuple[int, int], ...]
    large: tuple[tuple[int, int], ...]
    element: tuple[int, int]
    marginal_small: float
    marginal_large: float


def _f_part(q: SepQuery, pairs: Iterable[tuple[int, int]]) -> float:
    return composite_parts(q, pairs)[0]


def check_submodular_composite(q: SepQuery, trials: int, seed: int = 0) -> Counterexample | None:
    """Randomised diminishing-returns check of the submodular part.

    Each trial draws independent sets ``I <= I'`` and an element ``(r, s)``
    whose receiver is unused by ``I'``, and compares the marginal gains.
    Returns the first counterexample, or ``None``.
    """
    inst = q.instance
    n = inst.n
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        order = rng.permutation(n)
        r_new = int(order[0])
        others = [int(r) for r in order[1:]]
        large_rs = [r for r in others if rng.random() < 0.5]
        large = tuple((r, int(rng.integers(1 << inst.m[r]))) for r in sorted(large_rs))
        small = tuple(e for e in large if rng.random() < 0.5)
        element = (r_new, int(rng.integers(1 << inst.m[r_new])))
        gain_small = _f_part(q, small + (element,)) - _f_part(q, small)
        gain_large = _f_part(q, large + (element,)) - _f_part(q, large)
        if gain_small < gain_large - MARGINAL_TOL:
            return Counterexample(small, large, element, gain_small, gain_large)
    return None


def all_bases(inst: Instance) -> Iterable[SignalProfile]:
    """Every basis of the partition matroid, i.e. every signal profile."""
    return itertools.product(*(range(1 << m) for m in inst.m))
