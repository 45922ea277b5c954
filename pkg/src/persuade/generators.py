"""Seeded random instance families."""

from __future__ import annotations

import numpy as np

from .errors import MalformedInstanceError
from .model import (
    ConcaveCardinalityFunction,
    CoverageFunction,
    Instance,
    SetFunction,
    TableFunction,
    validate_instance,
)

FAMILIES = ("coverage", "concave_cardinality", "table")


def _coverage(rng: np.random.Generator, n: int) -> CoverageFunction:
    universe = 2 * n + 2
    covers = []
    for _ in range(n):
        hit = rng.random(universe) < 0.4
        if not hit.any():
            hit[rng.integers(universe)] = True
        covers.append(frozenset(int(e) for e in np.flatnonzero(hit)))
    weights = rng.dirichlet(np.ones(universe)) * rng.uniform(0.6, 1.0)
    return CoverageFunction(universe, tuple(covers), tuple(float(w) for w in weights))


def _concave(rng: np.random.Generator, n: int) -> ConcaveCardinalityFunction:
    inc = np.sort(rng.random(n) + 0.05)[::-1]
    inc = inc / inc.sum() * rng.uniform(0.6, 1.0)
    g = np.concatenate([[0.0], np.cumsum(inc)])
    return ConcaveCardinalityFunction(tuple(float(v) for v in g))


def _table(rng: np.random.Generator, n: int) -> TableFunction:
    cov = _coverage(rng, n).table()
    a = rng.random(n)
    budget = rng.uniform(0.3, 1.0) * a.sum()
    masks = np.arange(1 << n)
    bits = (masks[:, None] >> np.arange(n)) & 1
    additive = np.minimum(budget, bits @ a) / a.sum()
    values = 0.5 * cov + 0.5 * additive
    return TableFunction(n, tuple(float(v) for v in values))


_BUILDERS = {"coverage": _coverage, "concave_cardinality": _concave, "table": _table}


def generate_instance(family: str, n: int, m: int, d: int, seed: int) -> Instance:
    """Random valid instance with ``n`` receivers, ``m`` types each and ``d`` states.

    Sender functions are monotone and submodular by construction. Gains of
    acting are uniform on ``[-1, 1]`` and the prior keeps every state at
    probability at least ``0.2 / d``.

    Raises:
        MalformedInstanceError: unknown family or nonpositive sizes.
    """
    if family not in _BUILDERS:
        raise MalformedInstanceError(f"unknown family {family!r}; choose from {FAMILIES}")
    if n < 1 or m < 1 or d < 1:
        raise MalformedInstanceError("n, m and d must be positive")
    if family == "table" and n > 16:
        raise MalformedInstanceError("table family supports at most 16 receivers")
    rng = np.random.default_rng(seed)
    prior = 0.8 * rng.dirichlet(np.ones(d)) + 0.2 / d
    prior = prior / prior.sum()
    utility = tuple(rng.uniform(-1.0, 1.0, size=(m, d)) for _ in range(n))
    funcs: list[SetFunction] = [_BUILDERS[family](rng, n) for _ in range(d)]
    inst = Instance(
        types=tuple(tuple(f"k{j}" for j in range(m)) for _ in range(n)),
        states=tuple(f"theta{i}" for i in range(d)),
        prior=prior,
        utility_diff=utility,
        sender_functions=tuple(funcs),
    )
    problems = validate_instance(inst)
    if problems:
        raise MalformedInstanceError("generator produced an invalid instance: " + "; ".join(problems))
    return inst
