"""Optimal signaling: exact LP/QP baselines and the ellipsoid-based solvers.

The signaling LP has one variable per (state, signal profile) pair, which is
exponential in the number of receivers. Its dual has few variables and one
constraint per column:

    d_theta >= mu_theta * sum_k lam_k f_theta(R^k_s) + sum_r w^theta[r, s_r](z)

where ``w^theta`` collects the obedience multipliers ``z``. Separating a dual
point is therefore a maximisation over signal profiles, which is what the
matroid oracles solve. The ellipsoid method runs on the dual and the
constraints it touches name the primal columns worth keeping; the primal is
then solved exactly on those columns.

Dual points are flat vectors laid out as ``[d (one per state), z (one per
obedience row), nu (projection only, one per type profile)]``. Obedience
rows are ``(r, s, k)`` with ``s`` a nonempty signal in ascending order and
``k`` a type in ``s`` in ascending order.

Every constraint of the dual is checked with a relaxation ``delta``: a point
is accepted when no constraint is violated by more than ``delta``, and
constraint cuts are the relaxed halfspaces. Two speed-ups run on top of the
plain scheme (both can be switched off):

* Column-generation hints: before the ellipsoid starts, the optimal dual of
  the problem restricted to the known columns is offered as a candidate. A
  rejected candidate yields a new column, so this loop is column
  generation. Accepted candidates pass the same separation routine as any
  ellipsoid centre.
* Infeasibility certificates: the relaxed dual restricted to known columns
  has the same value as the restricted primal, shifted by ``delta`` per
  state. When that value already rules out the probe's target, the probe is
  infeasible and the ellipsoid stops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .convex_solver import LinearProgram, QuadraticProgram, solve_lp, solve_qp
from .ellipsoid import Cut, SearchResult, feasibility_search
from .errors import InvariantViolation, OracleScaleError
from .matroid_sep import EXACT, SepQuery
from .model import (
    Instance,
    SignalingScheme,
    SignalProfile,
    TypeProfile,
    activation_mask,
)

EXACT_LP_PROFILE_LIMIT = 10**4
HINT_MARGIN = 1e-9
# Fractional grid offset that keeps grid values off round numbers.
GRID_OFFSET = (math.sqrt(5.0) - 1.0) / 2.0
MAX_HINT_ROUNDS = 500
CERT_TOL = 1e-9
SCHEME_CLIP = 1e-12

Column = tuple[int, SignalProfile]


# ---------------------------------------------------------------------------
# Reward vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RewardVector:
    """Sparse vector over type profiles; entries off ``support`` read as 0."""

    support: tuple[TypeProfile, ...]
    values: np.ndarray

    def __post_init__(self):
        support = tuple(tuple(int(v) for v in k) for k in self.support)
        values = np.array(self.values, dtype=float).ravel()
        if len(set(support)) != len(support):
            raise ValueError("reward vector support has duplicates")
        if values.size != len(support):
            raise ValueError("one value per support profile is required")
        values.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, support: Sequence[TypeProfile]) -> "RewardVector":
        return cls(tuple(support), np.zeros(len(support)))

    @classmethod
    def from_dict(cls, data: dict) -> "RewardVector":
        keys = list(data)
        return cls(tuple(keys), np.array([data[k] for k in keys]))

    def __getitem__(self, k: Sequence[int]) -> float:
        k = tuple(int(v) for v in k)
        try:
            return float(self.values[self.support.index(k)])
        except ValueError:
            return 0.0

    def as_dict(self) -> dict[TypeProfile, float]:
        return {k: float(v) for k, v in zip(self.support, self.values)}

    def on(self, E: Sequence[TypeProfile]) -> np.ndarray:
        """Entries in the order of ``E`` (zero for profiles off the support)."""
        lookup = self.as_dict()
        return np.array([lookup.get(tuple(k), 0.0) for k in E], dtype=float)

    def restrict(self, E: Sequence[TypeProfile]) -> "RewardVector":
        """Copy that keeps only the coordinates in ``E``."""
        E = tuple(tuple(k) for k in E)
        return RewardVector(E, self.on(E))


# ---------------------------------------------------------------------------
# Column bookkeeping
# ---------------------------------------------------------------------------


class DualLayout:
    """Index maps and cached coefficients for one instance."""

    def __init__(self, inst: Instance):
        self.inst = inst
        keys = []
        for r, m in enumerate(inst.m):
            for s in range(1, 1 << m):
                for k in range(m):
                    if (s >> k) & 1:
                        keys.append((r, s, k))
        self.z_keys: list[tuple[int, int, int]] = keys
        self.z_index = {key: i for i, key in enumerate(keys)}
        self.nz = len(keys)
        offsets = inst.ground_offsets
        # weight_map[theta] @ z gives the flat ground-element weights.
        self.weight_map = np.zeros((inst.d, inst.n_ground, self.nz))
        for i, (r, s, k) in enumerate(keys):
            self.weight_map[:, offsets[r] + s, i] = inst.prior * inst.utility_diff[r][k, :]
        self._pers: dict[Column, np.ndarray] = {}
        self._vals: dict[tuple[int, SignalProfile, TypeProfile], float] = {}

    def obedience(self, theta: int, s: SignalProfile) -> np.ndarray:
        """Coefficients of column ``(theta, s)`` in every obedience row."""
        key = (theta, s)
        row = self._pers.get(key)
        if row is None:
            offs = self.inst.ground_offsets
            row = sum(self.weight_map[theta, offs[r] + sr] for r, sr in enumerate(s))
            row = np.asarray(row, dtype=float)
            row.setflags(write=False)
            self._pers[key] = row
        return row

    def sender_value(self, theta: int, s: SignalProfile, k: TypeProfile) -> float:
        """``mu_theta * f_theta(R^k_s)``."""
        key = (theta, s, k)
        v = self._vals.get(key)
        if v is None:
            inst = self.inst
            v = float(inst.prior[theta] * inst.sender_functions[theta].value(activation_mask(s, k)))
            self._vals[key] = v
        return v

    def value_row(self, theta: int, s: SignalProfile, K: Sequence[TypeProfile]) -> np.ndarray:
        return np.array([self.sender_value(theta, s, k) for k in K])

    def weights(self, theta: int, z: np.ndarray) -> np.ndarray:
        return self.weight_map[theta] @ z


_LAYOUTS: dict[int, tuple[Instance, DualLayout]] = {}


def dual_layout(inst: Instance) -> DualLayout:
    hit = _LAYOUTS.get(id(inst))
    if hit is None or hit[0] is not inst:
        if len(_LAYOUTS) > 64:
            _LAYOUTS.clear()
        hit = (inst, DualLayout(inst))
        _LAYOUTS[id(inst)] = hit
    return hit[1]


class ColumnSet:
    """Ordered, duplicate-free collection of primal columns ``(theta, s)``."""

    def __init__(self, items: Iterable[Column] = ()):
        self.items: list[Column] = []
        self._seen: set[Column] = set()
        for c in items:
            self.add(c)

    def add(self, col: Column) -> bool:
        col = (int(col[0]), tuple(int(v) for v in col[1]))
        if col in self._seen:
            return False
        self._seen.add(col)
        self.items.append(col)
        return True

    def __contains__(self, col) -> bool:
        return col in self._seen

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def seed_columns(inst: Instance) -> ColumnSet:
    """The always-empty profile in every state, which keeps each simplex nonempty."""
    return ColumnSet((th, inst.empty_profile) for th in range(inst.d))


def all_columns(inst: Instance) -> ColumnSet:
    if inst.n_profiles > EXACT_LP_PROFILE_LIMIT:
        raise OracleScaleError(
            f"{inst.n_profiles} profiles exceed the full-enumeration limit {EXACT_LP_PROFILE_LIMIT}"
        )
    return ColumnSet((th, s) for th in range(inst.d) for s in inst.signal_profiles())


def columns_from_cuts(inst: Instance, cuts: Iterable[Cut], base: ColumnSet | None = None) -> ColumnSet:
    """Primal columns named by row cuts; bound and objective cuts add none."""
    out = ColumnSet(base.items if base is not None else ())
    for th in range(inst.d):
        out.add((th, inst.empty_profile))
    for cut in cuts:
        if isinstance(cut.tag, tuple) and cut.tag and cut.tag[0] == "row":
            out.add((cut.tag[1], cut.tag[2]))
    return out


# ---------------------------------------------------------------------------
# Restricted primal problems
# ---------------------------------------------------------------------------


def _matrices(inst: Instance, cols: ColumnSet, K: Sequence[TypeProfile]):
    lay = dual_layout(inst)
    C = len(cols)
    P = np.zeros((lay.nz, C))
    F = np.zeros((len(K), C))
    S = np.zeros((inst.d, C))
    for j, (th, s) in enumerate(cols):
        P[:, j] = lay.obedience(th, s)
        F[:, j] = lay.value_row(th, s, K)
        S[th, j] = 1.0
    used = np.any(P != 0, axis=1)
    return P, F, S, used


def _scheme_from(inst: Instance, cols: ColumnSet, phi: np.ndarray) -> SignalingScheme:
    per_state: list[dict] = [dict() for _ in range(inst.d)]
    for (th, s), p in zip(cols, phi):
        if p > SCHEME_CLIP:
            per_state[th][s] = per_state[th].get(s, 0.0) + float(p)
    for th, dist in enumerate(per_state):
        total = sum(dist.values())
        if total <= 0:
            raise InvariantViolation(f"state {th} lost all probability mass")
        per_state[th] = {s: p / total for s, p in dist.items()}
    return SignalingScheme.from_dicts(per_state)


@dataclass
class RestrictedLP:
    """Signaling LP restricted to ``columns`` plus its optimal dual."""

    columns: ColumnSet
    value: float
    phi: np.ndarray
    scheme: SignalingScheme
    d: np.ndarray
    z: np.ndarray


def restricted_lp(
    inst: Instance, cols: ColumnSet, K: Sequence[TypeProfile], lam: Sequence[float]
) -> RestrictedLP:
    """Maximise ``sum_k lam_k f(phi, k)`` over persuasive schemes on ``cols``."""
    lam = np.asarray(lam, dtype=float)
    P, F, S, used = _matrices(inst, cols, K)
    lp = LinearProgram(
        c=lam @ F if len(K) else np.zeros(len(cols)),
        A_ub=-P[used],
        b_ub=np.zeros(int(used.sum())),
        A_eq=S,
        b_eq=np.ones(inst.d),
        maximize=True,
    )
    res = solve_lp(lp)
    if not res.optimal:
        raise InvariantViolation(f"restricted signaling LP is {res.status}")
    z = np.zeros(P.shape[0])
    z[used] = np.maximum(res.dual_ub, 0.0)
    return RestrictedLP(cols, float(res.value), res.x, _scheme_from(inst, cols, res.x), res.dual_eq.copy(), z)


@dataclass
class RestrictedQP:
    """Projection problem restricted to ``columns``."""

    columns: ColumnSet
    x: np.ndarray
    value: float
    phi: np.ndarray
    scheme: SignalingScheme
    gap: float


def restricted_qp(
    inst: Instance, cols: ColumnSet, K: Sequence[TypeProfile], y: np.ndarray
) -> RestrictedQP:
    """Project ``y`` onto the reward vectors achievable with columns ``cols``."""
    y = np.asarray(y, dtype=float)
    nK, C = len(K), len(cols)
    P, F, S, used = _matrices(inst, cols, K)
    nu_rows = int(used.sum())
    A_ub = np.zeros((nK + nu_rows, nK + C))
    A_ub[:nK, :nK] = np.eye(nK)
    A_ub[:nK, nK:] = -F
    A_ub[nK:, nK:] = -P[used]
    A_eq = np.zeros((inst.d, nK + C))
    A_eq[:, nK:] = S
    cons = LinearProgram(
        c=np.zeros(nK + C),
        A_ub=A_ub,
        b_ub=np.zeros(nK + nu_rows),
        A_eq=A_eq,
        b_eq=np.ones(inst.d),
    )
    qp = QuadraticProgram(
        q=np.concatenate([np.ones(nK), np.zeros(C)]),
        target=np.concatenate([y, np.zeros(C)]),
        constraints=cons,
    )
    res = solve_qp(qp)
    x = np.clip(res.x[:nK], 0.0, None)
    phi = res.x[nK:]
    return RestrictedQP(cols, x, float(np.sum((x - y) ** 2)), phi, _scheme_from(inst, cols, phi), res.gap)


# ---------------------------------------------------------------------------
# Exact baselines
# ---------------------------------------------------------------------------


def exact_offline_solve(
    inst: Instance, K: Sequence[TypeProfile], lam: Sequence[float]
) -> tuple[SignalingScheme, float]:
    """Optimal persuasive scheme for weights ``lam`` by full enumeration.

    Raises:
        OracleScaleError: more than ``EXACT_LP_PROFILE_LIMIT`` profiles.
    """
    K = [inst.check_type_profile(k) for k in K]
    if not K:
        return SignalingScheme.always_empty(inst), 0.0
    res = restricted_lp(inst, all_columns(inst), K, lam)
    return res.scheme, res.value


def exact_projection(
    inst: Instance, K: Sequence[TypeProfile], y
) -> tuple[RewardVector, SignalingScheme, float]:
    """Euclidean projection of ``y`` onto the achievable reward vectors on ``K``.

    Returns the projection, a scheme realising it and the squared distance.
    """
    K = [inst.check_type_profile(k) for k in K]
    yv = _y_array(K, y)
    res = restricted_qp(inst, all_columns(inst), K, yv)
    return RewardVector(tuple(K), res.x), res.scheme, res.value


def _y_array(K, y) -> np.ndarray:
    if isinstance(y, RewardVector):
        return y.on(K)
    arr = np.asarray(y, dtype=float).ravel()
    if arr.size != len(K):
        raise ValueError("y needs one entry per type profile in K")
    return arr


# ---------------------------------------------------------------------------
# Separation routines
# ---------------------------------------------------------------------------


def _row_tag(theta: int, s: SignalProfile):
    return ("row", theta, tuple(s))


def _single(inst: Instance, r: int, s: int) -> SignalProfile:
    prof = [0] * inst.n
    prof[r] = s
    return tuple(prof)


class _SeparatorBase:
    """Shared machinery: row cuts, weight clamps and oracle calls."""

    def __init__(self, inst: Instance, K, oracle, delta: float):
        self.inst = inst
        self.layout = dual_layout(inst)
        self.K = tuple(tuple(k) for k in K)
        self.oracle = oracle
        self.delta = float(delta)
        self.queries: list[SepQuery] = []
        self.record_queries = False
        self.new_columns: list[Column] = []

    def _note(self, theta: int, s: SignalProfile) -> None:
        self.new_columns.append((theta, tuple(s)))

    def _state_lam(self, theta: int, point: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _row_cut(self, theta: int, s: SignalProfile) -> Cut:
        raise NotImplementedError

    def _row_violation(self, theta, s, d, W, lam) -> float:
        lhs = float(self._f_term(theta, s, lam))
        offs = self.inst.ground_offsets
        lhs += float(sum(W[offs[r] + sr] for r, sr in enumerate(s)))
        return lhs - d[theta]

    def _f_term(self, theta, s, lam) -> float:
        # lam already carries the prior factor.
        f = self.inst.sender_functions[theta]
        return sum(l * f.value(activation_mask(s, k)) for k, l in zip(self.K, lam) if l)

    def _weights_and_queries(self, point, d, z, upper: float, floor: float):
        """Shared tail: large-weight cuts, clamping and oracle calls."""
        inst = self.inst
        offs = inst.ground_offsets
        Ws = [self.layout.weights(th, z) for th in range(inst.d)]
        lams = [self._state_lam(th, point) for th in range(inst.d)]
        for th in range(inst.d):
            W = Ws[th]
            for r, m in enumerate(inst.m):
                for s in range(1, 1 << m):
                    if W[offs[r] + s] > upper:
                        prof = _single(inst, r, s)
                        if self._row_violation(th, prof, d, W, lams[th]) > self.delta:
                            return self._row_cut(th, prof)
        for th in range(inst.d):
            W = Ws[th]
            clamped = np.maximum(W, floor)
            clamped[offs] = 0.0
            q = SepQuery(inst, th, self.K, lams[th], clamped, self.delta)
            if self.record_queries:
                self.queries.append(q)
            res = self.oracle(q)
            if self._row_violation(th, res.profile, d, W, lams[th]) > self.delta:
                return self._row_cut(th, res.profile)
        return None


class OfflineSeparator(_SeparatorBase):
    """Approximate separation for the dual feasibility problem of the
    signaling LP with target ``gamma_bar``.

    Checks, in order: ``d_theta < -delta`` (cut on the always-empty column);
    ``sum(d) > gamma_bar`` (objective cut); ``z < 0``
    (sign cut); a single-receiver weight above 1 (cut on the profile that
    sends only that signal); then clamps weights below ``-n`` to ``-n`` and
    asks the oracle for the most violated profile in each state.
    """

    def __init__(self, inst, K, lam, gamma_bar, oracle, delta):
        super().__init__(inst, K, oracle, delta)
        self.lam = np.asarray(lam, dtype=float)
        self.gamma_bar = float(gamma_bar)
        self.dim = inst.d + self.layout.nz

    def _state_lam(self, theta, point):
        return self.inst.prior[theta] * self.lam

    def _row_cut(self, theta, s):
        inst, lay = self.inst, self.layout
        a = np.zeros(self.dim)
        a[theta] = -1.0
        a[inst.d:] = lay.obedience(theta, s)
        b = self.delta - float(self.lam @ lay.value_row(theta, s, self.K))
        self._note(theta, s)
        return Cut(a, b, _row_tag(theta, s))

    def objective_cut(self) -> Cut:
        a = np.zeros(self.dim)
        a[: self.inst.d] = 1.0
        return Cut(a, self.gamma_bar, ("objective",))

    def __call__(self, point: np.ndarray) -> Cut | None:
        inst = self.inst
        D = inst.d
        d, z = point[:D], point[D:]
        for th in range(D):
            if d[th] < -self.delta:
                return self._row_cut(th, inst.empty_profile)
        # A single d_theta > 1 with the sum within gamma_bar <= 1 needs no cut
        # of its own: the relaxed constraints stay satisfiable there.
        if d.sum() > self.gamma_bar:
            return self.objective_cut()
        neg = np.flatnonzero(z < 0)
        if neg.size:
            a = np.zeros(self.dim)
            a[D + neg[0]] = -1.0
            return Cut(a, 0.0, ("bound", D + int(neg[0]), "lower"))
        return self._weights_and_queries(point, d, z, upper=1.0, floor=-float(inst.n))


class ProjectionSeparator(_SeparatorBase):
    """Approximate separation for the dual of the projection problem.

    The dual objective ``sum_k (nu_k y_k - nu_k^2 / 4) - sum(d)`` enters as
    the constraint ``>= gamma``; its cut is the tangent halfspace at the
    query point. Checks, in order: the explicit constraints ``H``; the
    objective constraint; ``d`` bounds; ``nu`` bounds; ``z >= 0``; large
    single-receiver weights; then clamping and oracle calls with
    ``lam^theta = nu * mu_theta``.
    """

    def __init__(self, inst, K, y, gamma, H: ColumnSet, oracle, delta):
        super().__init__(inst, K, oracle, delta)
        self.y = np.asarray(y, dtype=float)
        self.gamma = float(gamma)
        nK = len(self.K)
        self.nK = nK
        self.dim = inst.d + self.layout.nz + nK
        self.d_max = 4.0 * nK + max(0.0, -self.gamma) + inst.d * self.delta
        self.nu_max = nK + 10.0
        self.w_upper = 4.0 * nK
        self.w_floor = -4.0 * nK * inst.n - 10.0
        self.H = H
        self._H_rows = np.zeros((0, self.dim))
        self._H_count = 0

    def _state_lam(self, theta, point):
        nu = point[self.inst.d + self.layout.nz:]
        return self.inst.prior[theta] * np.maximum(nu, 0.0)

    def _row_cut(self, theta, s):
        inst, lay = self.inst, self.layout
        a = np.zeros(self.dim)
        a[theta] = -1.0
        a[inst.d: inst.d + lay.nz] = lay.obedience(theta, s)
        a[inst.d + lay.nz:] = lay.value_row(theta, s, self.K)
        self._note(theta, s)
        return Cut(a, self.delta, _row_tag(theta, s))

    def objective_value(self, point: np.ndarray) -> float:
        nu = point[self.inst.d + self.layout.nz:]
        return float(nu @ self.y - nu @ nu / 4.0 - point[: self.inst.d].sum())

    def objective_cut(self, point: np.ndarray) -> Cut:
        D, nz = self.inst.d, self.layout.nz
        nu = point[D + nz:]
        grad = np.zeros(self.dim)
        grad[:D] = -1.0
        grad[D + nz:] = self.y - nu / 2.0
        g = self.objective_value(point)
        return Cut(-grad, g - float(grad @ point) - self.gamma, ("objective",))

    def _h_matrix(self) -> np.ndarray:
        if self._H_count != len(self.H):
            rows = []
            lay, D = self.layout, self.inst.d
            for th, s in self.H.items[self._H_count:]:
                a = np.zeros(self.dim)
                a[th] = -1.0
                a[D: D + lay.nz] = lay.obedience(th, s)
                a[D + lay.nz:] = lay.value_row(th, s, self.K)
                rows.append(a)
            self._H_rows = np.vstack([self._H_rows] + rows)
            self._H_count = len(self.H)
        return self._H_rows

    def __call__(self, point: np.ndarray) -> Cut | None:
        inst = self.inst
        D, nz = inst.d, self.layout.nz
        d, z, nu = point[:D], point[D: D + nz], point[D + nz:]
        if len(self.H):
            viol = self._h_matrix() @ point - self.delta
            j = int(np.argmax(viol > 0)) if np.any(viol > 0) else -1
            if j >= 0:
                th, s = self.H.items[j]
                return Cut(self._H_rows[j].copy(), self.delta, _row_tag(th, s))
        if self.objective_value(point) < self.gamma:
            return self.objective_cut(point)
        for th in range(D):
            if d[th] < -self.delta:
                return self._row_cut(th, inst.empty_profile)
            if d[th] > self.d_max:
                a = np.zeros(self.dim)
                a[th] = 1.0
                return Cut(a, self.d_max, ("bound", th, "upper"))
        for k in range(self.nK):
            if nu[k] < 0:
                a = np.zeros(self.dim)
                a[D + nz + k] = -1.0
                return Cut(a, 0.0, ("bound", D + nz + k, "lower"))
            if nu[k] > self.nu_max:
                a = np.zeros(self.dim)
                a[D + nz + k] = 1.0
                return Cut(a, self.nu_max, ("bound", D + nz + k, "upper"))
        neg = np.flatnonzero(z < 0)
        if neg.size:
            a = np.zeros(self.dim)
            a[D + neg[0]] = -1.0
            return Cut(a, 0.0, ("bound", D + int(neg[0]), "lower"))
        return self._weights_and_queries(point, d, z, upper=self.w_upper, floor=self.w_floor)


def offline_sep_case_analysis(
    inst: Instance, K, lam, point: np.ndarray, gamma_bar: float, oracle=EXACT, delta: float = 1e-3
) -> Cut | None:
    """One-shot separation of an offline dual point (see ``OfflineSeparator``)."""
    return OfflineSeparator(inst, K, lam, gamma_bar, oracle, delta)(np.asarray(point, dtype=float))


def projection_sep_case_analysis(
    inst: Instance, K, point: np.ndarray, gamma: float, y, H: Iterable[Column] = (), oracle=EXACT, delta: float = 1e-3
) -> Cut | None:
    """One-shot separation of a projection dual point (see ``ProjectionSeparator``)."""
    K = [tuple(k) for k in K]
    sep = ProjectionSeparator(inst, K, _y_array(K, y), gamma, ColumnSet(H), oracle, delta)
    return sep(np.asarray(point, dtype=float))


# ---------------------------------------------------------------------------
# Offline solver
# ---------------------------------------------------------------------------


@dataclass
class SolverOptions:
    """Switches for the accelerations described in the module docstring.

    ``faithful()`` turns every one of them off.
    """

    hints: bool = True
    certificates: bool = True
    skip_grid: bool = True
    max_iters: int | None = None
    z_max: float | None = None

    @classmethod
    def faithful(cls, **kw) -> "SolverOptions":
        return cls(hints=False, certificates=False, skip_grid=False, **kw)


@dataclass
class Probe:
    target: float
    feasible: bool
    iterations: int
    cuts: int
    certified: bool
    hint_rounds: int


@dataclass
class OfflineResult:
    scheme: SignalingScheme
    value: float
    lower: float
    upper: float
    probes: list[Probe] = field(default_factory=list)
    columns: int = 0


def _pack(D, d, z, nu=None):
    parts = [d, z] + ([nu] if nu is not None else [])
    return np.concatenate(parts)


def offline_solve(
    inst: Instance,
    K: Sequence[TypeProfile],
    lam: Sequence[float],
    eps: float,
    oracle=EXACT,
    options: SolverOptions | None = None,
) -> OfflineResult:
    """Approximately optimal persuasive scheme via bisection on the dual value.

    Each bisection probe asks whether the dual has a point of value at most
    ``gamma_bar``, with the ellipsoid method and ``OfflineSeparator``. The
    scheme is recovered by solving the signaling LP on every column the
    probes touched. With an oracle of factor ``alpha`` the value is at least
    ``alpha * OPT - eps``.

    Args:
        lam: weights on ``K``; positive, summing to at most 1.
    """
    opts = options or SolverOptions()
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    K = [inst.check_type_profile(k) for k in K]
    lam = np.asarray(lam, dtype=float)
    if lam.size != len(K) or np.any(lam <= 0) or lam.sum() > 1 + 1e-9:
        raise ValueError("lam must be positive on K and sum to at most 1")
    D = inst.d
    lay = dual_layout(inst)
    beta = eps / 2.0
    delta = eps / (2.0 * D)
    z_max = opts.z_max if opts.z_max is not None else 4.0 * inst.n
    lo_box = np.concatenate([np.full(D, -1.0), np.zeros(lay.nz)])
    hi_box = np.concatenate([np.full(D, 2.0), np.full(lay.nz, z_max)])
    cols = seed_columns(inst)
    current = restricted_lp(inst, cols, K, lam)
    low, high = 0.0, 1.0
    probes: list[Probe] = []
    while high - low > beta:
        gamma_bar = 0.5 * (low + high)
        if opts.certificates and current.value - delta * D > gamma_bar + CERT_TOL:
            probes.append(Probe(gamma_bar, False, 0, 0, True, 0))
            low = gamma_bar
            continue
        sep = OfflineSeparator(inst, K, lam, gamma_bar, oracle, delta)
        state = {"lp": current, "seen": 0}

        def refresh():
            added = False
            for col in sep.new_columns[state["seen"]:]:
                added |= cols.add(col)
            state["seen"] = len(sep.new_columns)
            if added:
                state["lp"] = restricted_lp(inst, cols, K, lam)
            return added

        def hints():
            for _ in range(MAX_HINT_ROUNDS):
                lp = state["lp"]
                yield _pack(D, lp.d - (delta - min(HINT_MARGIN, 0.01 * delta)), lp.z)
                if not refresh():
                    return

        def certificate(_cuts):
            refresh()
            return state["lp"].value - delta * D > gamma_bar + CERT_TOL

        res = feasibility_search(
            sep.dim,
            lo_box,
            hi_box,
            sep,
            max_iters=opts.max_iters,
            hints=hints() if opts.hints else (),
            certificate=certificate if opts.certificates else None,
        )
        refresh()
        current = state["lp"]
        probes.append(Probe(gamma_bar, res.feasible, res.iterations, len(res.all_cuts), res.certified, len(res.hint_cuts)))
        if res.feasible:
            high = gamma_bar
        else:
            low = gamma_bar
    final = restricted_lp(inst, cols, K, lam)
    return OfflineResult(final.scheme, final.value, low, high, probes, len(cols))


# ---------------------------------------------------------------------------
# Approximate projection
# ---------------------------------------------------------------------------


@dataclass
class ProjectionResult:
    """Output of ``approx_projection``.

    Attributes:
        x: projected reward vector on ``K``.
        scheme: persuasive scheme with ``f(scheme, k) >= x_k`` on ``K``.
        value: squared distance from ``y`` to ``x``.
        gamma_star: first feasible grid value.
        probes: per-probe statistics.
        columns: primal columns collected.
    """

    x: RewardVector
    scheme: SignalingScheme
    value: float
    gamma_star: float
    probes: list[Probe] = field(default_factory=list)
    columns: int = 0

    def __iter__(self):
        yield self.x
        yield self.scheme


def approx_projection(
    inst: Instance,
    K: Sequence[TypeProfile],
    y,
    eps: float,
    oracle=EXACT,
    options: SolverOptions | None = None,
) -> ProjectionResult:
    """Approximate projection of ``y`` onto the reward vectors of persuasive
    schemes, restricted to the coordinates ``K``.

    Scans the dual objective target ``gamma`` downward on a grid of step
    ``beta = eps / 2``; each probe is a dual feasibility search with
    ``ProjectionSeparator`` and ``delta = eps / (2 * #states)``. Row cuts from
    every probe are kept as explicit constraints for later probes and name
    the primal columns. At the first feasible ``gamma`` the projection
    problem is solved on the collected columns.

    The grid starts a little over two steps above ``4|K|``, the largest
    possible squared distance for ``y`` in ``[0, 2]^K``. With ``options.skip_grid`` the scan
    jumps straight past grid values the restricted primal already certifies
    as infeasible.

    Raises:
        InvariantViolation: the scan passed below zero without a feasible probe.
    """
    opts = options or SolverOptions()
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    K = [inst.check_type_profile(k) for k in K]
    nK = len(K)
    yv = _y_array(K, y)
    if np.any(yv < -1e-12) or np.any(yv > 2 + 1e-12):
        raise ValueError("y must lie in [0, 2] on K")
    if nK == 0:
        return ProjectionResult(RewardVector((), []), SignalingScheme.always_empty(inst), 0.0, 0.0)
    D = inst.d
    lay = dual_layout(inst)
    beta = eps / 2.0
    delta = eps / (2.0 * D)
    z_max = opts.z_max if opts.z_max is not None else 4.0 * inst.n
    lo_box = np.concatenate([np.full(D, -1.0), np.zeros(lay.nz), np.full(nK, -1.0)])
    hi_box = np.concatenate([np.full(D, 4.0 * nK + 1.0), np.full(lay.nz, z_max), np.full(nK, nK + 11.0)])

    cols = seed_columns(inst)
    H = ColumnSet()
    state = {"qp": restricted_qp(inst, cols, K, yv)}
    top = 4.0 * nK + (2.0 + GRID_OFFSET) * beta
    j = 0
    probes: list[Probe] = []
    while True:
        gamma = top - j * beta
        if gamma < -beta - 1e-12:
            raise InvariantViolation("projection scan passed zero without a feasible probe")
        bound = state["qp"].value + delta * D
        if opts.skip_grid and gamma > bound + CERT_TOL:
            j = max(j + 1, int(math.ceil((top - bound - CERT_TOL) / beta)))
            continue
        sep = ProjectionSeparator(inst, K, yv, gamma, H, oracle, delta)
        seen = {"n": 0}

        def refresh():
            added = False
            for col in sep.new_columns[seen["n"]:]:
                H.add(col)
                added |= cols.add(col)
            seen["n"] = len(sep.new_columns)
            if added:
                state["qp"] = restricted_qp(inst, cols, K, yv)
            return added

        def hints():
            if gamma <= 0:
                yield np.zeros(sep.dim)
            for _ in range(MAX_HINT_ROUNDS):
                qp = state["qp"]
                nu = np.maximum(2.0 * (yv - qp.x), 0.0)
                lp = restricted_lp(inst, cols, K, nu)
                shift = delta - min(HINT_MARGIN, 0.01 * delta)
                yield _pack(D, lp.d - shift, lp.z, nu)
                if not refresh():
                    return

        def certificate(_cuts):
            refresh()
            return gamma > state["qp"].value + delta * D + CERT_TOL

        res: SearchResult = feasibility_search(
            sep.dim,
            lo_box,
            hi_box,
            sep,
            max_iters=opts.max_iters,
            hints=hints() if opts.hints else (),
            certificate=certificate if opts.certificates else None,
        )
        refresh()
        probes.append(Probe(gamma, res.feasible, res.iterations, len(res.all_cuts), res.certified, len(res.hint_cuts)))
        if res.feasible:
            break
        j += 1
    final = state["qp"]
    x = RewardVector(tuple(K), np.minimum(final.x, 1.0))
    return ProjectionResult(x, final.scheme, final.value, gamma, probes, len(cols))
