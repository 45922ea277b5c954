"""Online gradient descent over reward vectors with approximate projections.

Each round the learner commits to a persuasive scheme, observes the type
profile that occurred and moves its reward vector one step of size ``eta``
toward that profile. The step is projected back onto the achievable reward
vectors of the profiles seen so far, and the projection also yields the next
scheme. The learner is deterministic, so the alpha-regret of a run is a
plain number.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .matroid_sep import EXACT
from .model import Instance, SignalingScheme, TypeProfile, sender_utility
from .persuasion_opt import (
    RewardVector,
    SolverOptions,
    approx_projection,
    exact_offline_solve,
)


@dataclass
class OgdState:
    """Learner state before round ``t`` is played.

    Attributes:
        t: index of the next round (1-based).
        E: distinct profiles observed so far, in order of first appearance.
        x: current reward vector, supported on ``E``.
        scheme: scheme to play in round ``t``.
        eta: learning rate.
        eps: projection accuracy.
        alpha: approximation factor of the oracle in use.
    """

    t: int
    E: list[TypeProfile]
    x: RewardVector
    scheme: SignalingScheme
    eta: float
    eps: float
    alpha: float = 1.0

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")

    @classmethod
    def initial(cls, inst: Instance, eta: float, eps: float, alpha: float = 1.0) -> "OgdState":
        """Round-one state: nothing observed, zero reward vector, always-empty scheme."""
        return cls(1, [], RewardVector.zeros(()), SignalingScheme.always_empty(inst), eta, eps, alpha)


@dataclass
class IterationRecord:
    """What happened in one round.

    ``y`` is the gradient step and ``x_next`` its projection, both on the
    profiles observed up to and including this round (``E`` in that order).
    """

    t: int
    profile: TypeProfile
    utility: float
    distinct: int
    proj_ms: float
    E: tuple[TypeProfile, ...]
    y: np.ndarray
    x_next: np.ndarray
    x_played: float


@dataclass
class RunRecord:
    """Full history of a run plus the final state."""

    records: list[IterationRecord] = field(default_factory=list)
    final: OgdState | None = None
    final_scheme: SignalingScheme | None = None

    @property
    def profiles(self) -> list[TypeProfile]:
        return [r.profile for r in self.records]

    @property
    def total_utility(self) -> float:
        return float(sum(r.utility for r in self.records))


def step(
    inst: Instance,
    state: OgdState,
    k: Sequence[int],
    oracle=EXACT,
    options: SolverOptions | None = None,
) -> tuple[OgdState, IterationRecord]:
    """Play ``state.scheme``, observe ``k`` and update.

    Returns the next state and a record of the round. Projection errors
    propagate unchanged.
    """
    k = inst.check_type_profile(k)
    utility = sender_utility(inst, state.scheme, k)
    x_played = state.x[k]
    E = list(state.E)
    if k not in E:
        E.append(k)
    y = state.x.on(E)
    y[E.index(k)] += state.eta
    start = time.perf_counter()
    proj = approx_projection(inst, E, y, state.eps, oracle=oracle, options=options)
    proj_ms = 1000.0 * (time.perf_counter() - start)
    x_next = proj.x.on(E)
    record = IterationRecord(state.t, k, utility, len(E), proj_ms, tuple(E), y, x_next, x_played)
    nxt = OgdState(state.t + 1, E, proj.x, proj.scheme, state.eta, state.eps, state.alpha)
    return nxt, record


def run_ogd(
    inst: Instance,
    feedback: Iterable[Sequence[int]],
    eta: float,
    eps: float,
    oracle=EXACT,
    options: SolverOptions | None = None,
) -> RunRecord:
    """Run the learner against a fixed feedback sequence."""
    state = OgdState.initial(inst, eta, eps, getattr(oracle, "alpha", 1.0))
    run = RunRecord()
    for k in feedback:
        state, rec = step(inst, state, k, oracle, options)
        run.records.append(rec)
    run.final = state
    run.final_scheme = state.scheme
    return run


def best_in_hindsight(
    inst: Instance, feedback: Sequence[Sequence[int]]
) -> tuple[SignalingScheme, float]:
    """Best fixed scheme for the whole sequence and its total utility.

    Raises:
        OracleScaleError: the instance is too large for full enumeration.
    """
    counts: dict[TypeProfile, int] = {}
    for k in feedback:
        k = inst.check_type_profile(k)
        counts[k] = counts.get(k, 0) + 1
    if not counts:
        return SignalingScheme.always_empty(inst), 0.0
    K = list(counts)
    scheme, value = exact_offline_solve(inst, K, [float(counts[k]) for k in K])
    return scheme, value


def alpha_regret(inst: Instance, run: RunRecord, alpha: float = 1.0) -> float:
    """``alpha * best_in_hindsight - realized utility`` for a finished run."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    _, best = best_in_hindsight(inst, run.profiles)
    return alpha * best - run.total_utility


def regret_bound(T: int, distinct: int, eta: float, eps: float) -> float:
    """Regret guarantee ``|E|/(2 eta) + eta T/2 + eps T/(2 eta)``."""
    return distinct / (2 * eta) + eta * T / 2 + eps * T / (2 * eta)


def default_regret_bound(T: int, distinct: int) -> float:
    """The guarantee at ``eta = 1/sqrt(T)`` and ``eps = 1/T``."""
    return math.sqrt(T) * (1 + distinct / 2)


def telescoping_violations(
    run: RunRecord, samples: Sequence[RewardVector], eps: float, tol: float = 1e-6
) -> list[tuple[int, int, float]]:
    """Rounds where a sampled reward vector is closer to ``y`` than to ``x_next``.

    For each round and sample ``x`` the check is
    ``|x_E - x_next|^2 <= |x_E - y|^2 + eps + tol``. Returns
    ``(t, sample index, excess)`` for every failure.
    """
    bad = []
    for rec in run.records:
        for i, xs in enumerate(samples):
            xe = xs.on(rec.E)
            lhs = float(np.sum((xe - rec.x_next) ** 2))
            rhs = float(np.sum((xe - rec.y) ** 2)) + eps + tol
            if lhs > rhs:
                bad.append((rec.t, i, lhs - rhs))
    return bad
