"""Central-cut ellipsoid method for feasibility problems.

The caller supplies a separation callback. Given the current centre it
either accepts the point (returns ``None``) or returns a ``Cut`` describing
a halfspace that contains the target set but not the centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import NumericalFailure

FEAS_TOL = 1e-7
CUT_SLACK = 1e-12
LOG_CAP_FACTOR = 10


@dataclass(frozen=True)
class Cut:
    """Halfspace ``normal @ x <= offset`` violated by the queried centre.

    ``tag`` is an opaque label the caller uses to recognise the constraint
    that produced the cut.
    """

    normal: np.ndarray
    offset: float
    tag: Any = None

    def violation(self, x: np.ndarray) -> float:
        return float(self.normal @ x - self.offset)


SeparationOracle = Callable[[np.ndarray], "Cut | None"]


class EllipsoidState:
    """Ellipsoid ``{c + B u : |u| <= 1}`` with shape matrix ``A = B B^T``.

    Updates act on the factor ``B`` so that ``A`` stays positive
    semidefinite in floating point; ``A`` is formed only on request.
    """

    def __init__(self, center: np.ndarray, factor: np.ndarray, iteration: int = 0, log_det: float = 0.0):
        self.center = np.asarray(center, dtype=float)
        self.factor = np.asarray(factor, dtype=float)
        self.iteration = iteration
        self.log_det = log_det

    @classmethod
    def ball(cls, center: np.ndarray, radius: float) -> "EllipsoidState":
        p = center.size
        return cls(center.astype(float).copy(), np.eye(p) * radius, 0, 2 * p * math.log(radius))

    @property
    def shape(self) -> np.ndarray:
        B = self.factor
        return B @ B.T

    def log_volume(self) -> float:
        """Log of the volume relative to the unit ball."""
        return 0.5 * self.log_det

    def min_width(self) -> float:
        """Smallest semi-axis; no ball of larger radius fits inside."""
        return float(np.linalg.svd(self.factor, compute_uv=False)[-1])

    def update(self, cut: Cut) -> None:
        """Shrink to the minimum-volume ellipsoid containing the kept half."""
        a = np.asarray(cut.normal, dtype=float)
        B = self.factor
        p = self.center.size
        Bta = B.T @ a
        norm = float(np.linalg.norm(Bta))
        if not np.isfinite(norm) or norm <= 1e-300 * max(1.0, float(np.linalg.norm(a))):
            raise _LostDefiniteness()
        u = Bta / norm
        Bu = B @ u
        if p == 1:
            self.center = self.center - 0.5 * Bu
            self.factor = B / 2.0
            self.log_det += math.log(0.25)
        else:
            self.center = self.center - Bu / (p + 1)
            scale = p / math.sqrt(p * p - 1.0)
            shrink = 1.0 - math.sqrt((p - 1.0) / (p + 1.0))
            self.factor = scale * (B - shrink * np.outer(Bu, u))
            self.log_det += p * math.log(p * p / (p * p - 1.0)) + math.log((p - 1.0) / (p + 1.0))
        self.iteration += 1


class _LostDefiniteness(Exception):
    pass


@dataclass
class SearchResult:
    """Outcome of ``feasibility_search``.

    Attributes:
        feasible: whether some point was accepted.
        point: the accepted point, if any.
        cuts: every cut issued by the oracle at an ellipsoid centre, in order.
        centers: the centre at which each entry of ``cuts`` was issued.
        hint_cuts: cuts issued while screening caller-supplied hint points.
        iterations: ellipsoid updates performed.
        certified: the search stopped because the caller's certificate
            callback proved infeasibility, not by exhausting the volume.
        log_volumes: log volume after each update.
    """

    feasible: bool
    point: np.ndarray | None
    cuts: list[Cut]
    centers: list[np.ndarray]
    hint_cuts: list[Cut] = field(default_factory=list)
    iterations: int = 0
    certified: bool = False
    log_volumes: list[float] = field(default_factory=list)

    @property
    def all_cuts(self) -> list[Cut]:
        return self.hint_cuts + self.cuts


def default_max_iters(p: int, width: float, feas_tol: float = FEAS_TOL) -> int:
    return int(math.ceil(4 * p * (p + 1) * math.log(max(width, 2 * feas_tol) / feas_tol)))


def feasibility_search(
    dim: int,
    lo: Sequence[float],
    hi: Sequence[float],
    oracle: SeparationOracle,
    max_iters: int | None = None,
    vol_threshold: float | None = None,
    feas_tol: float = FEAS_TOL,
    hints: Iterable[np.ndarray] = (),
    certificate: Callable[[list[Cut]], bool] | None = None,
) -> SearchResult:
    """Search the box ``[lo, hi]`` for a point the oracle accepts.

    Starts from the ball circumscribing the box. Centres outside the box are
    cut back by the box itself before the oracle sees them, so the
    ellipsoid never degenerates along directions the oracle leaves
    unconstrained. Hint points, if given, are offered to the oracle first
    (they may lie outside the box); their cuts are reported separately
    because they do not drive the ellipsoid.

    Args:
        dim: dimension of the search space.
        lo, hi: box corners; every ``lo < hi``.
        oracle: separation callback.
        max_iters: update budget. Defaults to ``default_max_iters`` on the
            box diameter.
        vol_threshold: stop when the log volume (relative to the unit ball)
            drops below this. Defaults to ``dim * log(feas_tol)``.
        feas_tol: target resolution. The search also stops once the
            ellipsoid is thinner than this in some direction: like the
            default volume threshold, that rules out a ball of radius
            ``feas_tol`` in the target set, and it stops long flat runs
            before floating point loses the shape.
        hints: points to test before the ellipsoid starts.
        certificate: called with the cut list whenever a cut arrives; a true
            return declares infeasibility immediately.

    Raises:
        NumericalFailure: the shape matrix lost positive definiteness twice.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != (dim,) or hi.shape != (dim,) or np.any(lo >= hi):
        raise ValueError("box must satisfy lo < hi in every coordinate")
    width = float(np.linalg.norm(hi - lo))
    if max_iters is None:
        max_iters = default_max_iters(dim, width, feas_tol)
    if vol_threshold is None:
        vol_threshold = dim * math.log(feas_tol)

    hint_cuts: list[Cut] = []
    for h in hints:
        h = np.asarray(h, dtype=float)
        cut = oracle(h)
        if cut is None:
            return SearchResult(True, h.copy(), [], [], hint_cuts)
        hint_cuts.append(cut)
    if certificate is not None and hint_cuts and certificate(list(hint_cuts)):
        return SearchResult(False, None, [], [], hint_cuts, certified=True)

    radius = 0.5 * width
    for attempt in range(2):
        try:
            return _run(
                dim, lo, hi, radius, oracle, max_iters, vol_threshold, feas_tol, hint_cuts, certificate
            )
        except _LostDefiniteness:
            radius *= 2.0
    raise NumericalFailure("ellipsoid shape matrix lost positive definiteness after a restart")


def _box_cut(c: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> Cut | None:
    below = np.flatnonzero(c < lo)
    if below.size:
        i = int(below[0])
        a = np.zeros(c.size)
        a[i] = -1.0
        return Cut(a, -float(lo[i]), ("box", i, "lower"))
    above = np.flatnonzero(c > hi)
    if above.size:
        i = int(above[0])
        a = np.zeros(c.size)
        a[i] = 1.0
        return Cut(a, float(hi[i]), ("box", i, "upper"))
    return None


def _run(dim, lo, hi, radius, oracle, max_iters, vol_threshold, feas_tol, hint_cuts, certificate):
    state = EllipsoidState.ball(0.5 * (lo + hi), radius)
    cuts: list[Cut] = []
    centers: list[np.ndarray] = []
    log_volumes: list[float] = []
    cap = LOG_CAP_FACTOR * max(max_iters, 1)
    while True:
        c = state.center
        cut = _box_cut(c, lo, hi)
        if cut is None:
            cut = oracle(c)
        if cut is None:
            return SearchResult(True, c.copy(), cuts, centers, hint_cuts, state.iteration, False, log_volumes)
        if cut.violation(c) <= -CUT_SLACK:
            raise ValueError(f"oracle returned a cut that the centre satisfies ({cut.tag!r})")
        cuts.append(cut)
        centers.append(c.copy())
        if len(cuts) > cap:
            raise NumericalFailure("ellipsoid cut log overflow")
        if certificate is not None and certificate(hint_cuts + cuts):
            return SearchResult(False, None, cuts, centers, hint_cuts, state.iteration, True, log_volumes)
        state.update(cut)
        log_volumes.append(state.log_volume())
        if state.iteration >= max_iters or state.log_volume() < vol_threshold or state.min_width() < feas_tol:
            return SearchResult(False, None, cuts, centers, hint_cuts, state.iteration, False, log_volumes)
