"""Dense simplex LP solver and a conditional-gradient QP solver built on it.

Both solvers target small problems: a few hundred variables and
constraints at most. The LP solver is a two-phase tableau simplex using
Dantzig's rule, switching to Bland's rule once it sees a long run of
degenerate pivots. The QP solver minimises a separable quadratic over an
LP-described polytope with Wolfe's minimum-norm-point iterations, so each
step only needs a linear minimisation over the polytope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailure

PIVOT_TOL = 1e-10
REDUCED_COST_TOL = 1e-10
FEAS_TOL = 1e-9
DEGENERATE_STREAK = 50

QP_TOL = 1e-7
QP_MAX_ITER = 100_000
_ATOM_ZERO = 1e-12


@dataclass
class LinearProgram:
    """``min c @ x`` (or ``max`` when ``maximize``) subject to

    ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq`` and ``lower <= x <= upper``.

    Bounds default to ``0 <= x < inf``; use ``-np.inf``/``np.inf`` for free
    directions.
    """

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "inequality")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds must have one entry per variable")
        for name in ("c", "A_ub", "b_ub", "A_eq", "b_eq"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def n(self) -> int:
        return self.c.size


def _rows(A, b, n, label):
    if A is None or (hasattr(A, "__len__") and len(A) == 0):
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError(f"{label} rows have inconsistent dimensions")
    return A, b


@dataclass
class LPResult:
    """Outcome of ``solve_lp``.

    ``dual_ub`` and ``dual_eq`` are marginals: the rate of change of the
    optimal value (in the caller's sense, min or max) per unit increase of
    each right-hand side.
    """

    status: str
    x: np.ndarray | None = None
    value: float | None = None
    dual_ub: np.ndarray | None = None
    dual_eq: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def lp_dual_value(lp: LinearProgram, res: LPResult) -> float:
    """Objective of the dual solution implied by ``res`` (equals the primal
    value at optimality)."""
    sign = -1.0 if lp.maximize else 1.0
    c = sign * lp.c
    y_ub = sign * res.dual_ub
    y_eq = sign * res.dual_eq
    reduced = c - lp.A_ub.T @ y_ub - lp.A_eq.T @ y_eq
    total = lp.b_ub @ y_ub + lp.b_eq @ y_eq
    for j, r in enumerate(reduced):
        if abs(r) <= 1e-9:
            continue
        if r > 0:
            total += r * lp.lower[j] if np.isfinite(lp.lower[j]) else np.inf
        elif r < 0:
            total += r * lp.upper[j] if np.isfinite(lp.upper[j]) else -np.inf
    return float(sign * total)


class _Tableau:
    """Dense simplex tableau; the last row holds reduced costs, the last column the rhs."""

    def __init__(self, tab: np.ndarray, basis: list[int]):
        self.tab = tab
        self.basis = basis
        self.iterations = 0
        self.bland = False
        self.streak = 0

    def pivot(self, r: int, j: int) -> None:
        tab = self.tab
        row = tab[r] / tab[r, j]
        tab -= np.outer(tab[:, j], row)
        tab[r] = row
        self.basis[r] = j

    def run(self, ncols: int, max_iter: int) -> str:
        tab = self.tab
        while True:
            rc = tab[-1, :ncols]
            if self.bland:
                neg = np.flatnonzero(rc < -REDUCED_COST_TOL)
                if neg.size == 0:
                    return "optimal"
                j = int(neg[0])
            else:
                j = int(np.argmin(rc))
                if rc[j] >= -REDUCED_COST_TOL:
                    return "optimal"
            col = tab[:-1, j]
            pos = np.flatnonzero(col > PIVOT_TOL)
            if pos.size == 0:
                return "unbounded"
            ratios = tab[pos, -1] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12]
            r = int(min(ties, key=lambda i: self.basis[i]))
            if best <= 1e-12:
                self.streak += 1
                if self.streak > DEGENERATE_STREAK:
                    self.bland = True
            else:
                self.streak = 0
            self.pivot(r, j)
            self.iterations += 1
            if self.iterations > max_iter:
                raise NumericalFailure("simplex exceeded its pivot budget (cycling guard)")


def solve_lp(lp: LinearProgram, max_iter: int | None = None) -> LPResult:
    """Solve ``lp`` exactly up to floating point with a two-phase simplex."""
    n = lp.n
    sign = -1.0 if lp.maximize else 1.0
    c = sign * lp.c

    # Substitute each original variable by shifted nonnegative columns.
    shift = np.zeros(n)
    cols: list[tuple[int, float]] = []  # (original index, coefficient)
    bound_rows: list[tuple[int, float]] = []  # (column, upper limit)
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if lo > hi:
            return LPResult("infeasible")
        if np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                bound_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nh = len(cols)
    T = np.zeros((n, nh))
    for col, (j, coef) in enumerate(cols):
        T[j, col] = coef

    m_ub, m_eq, m_bd = lp.A_ub.shape[0], lp.A_eq.shape[0], len(bound_rows)
    m_le = m_ub + m_bd
    M = m_le + m_eq
    A = np.zeros((M, nh + m_le))
    b = np.zeros(M)
    A[:m_ub, :nh] = lp.A_ub @ T
    b[:m_ub] = lp.b_ub - lp.A_ub @ shift
    for i, (col, lim) in enumerate(bound_rows):
        A[m_ub + i, col] = 1.0
        b[m_ub + i] = lim
    A[:m_le, nh:] = np.eye(m_le)
    A[m_le:, :nh] = lp.A_eq @ T
    b[m_le:] = lp.b_eq - lp.A_eq @ shift
    c_std = np.concatenate([c @ T, np.zeros(m_le)])
    N = nh + m_le

    flip = b < 0
    needs_art = flip.copy()
    needs_art[m_le:] = True
    art_rows = np.flatnonzero(needs_art)
    n_art = art_rows.size

    tab = np.zeros((M + 1, N + n_art + 1))
    tab[:M, :N] = A
    tab[:M, -1] = b
    tab[:M][flip] *= -1.0
    basis = []
    for i in range(M):
        basis.append(nh + i if i < m_le and not flip[i] else -1)
    for a, i in enumerate(art_rows):
        tab[i, N + a] = 1.0
        basis[i] = N + a

    if max_iter is None:
        max_iter = 10_000 + 50 * (M + N)
    solver = _Tableau(tab, basis)

    if n_art:
        tab[-1, :] = 0.0
        tab[-1, N:N + n_art] = 1.0
        tab[-1] -= tab[art_rows].sum(axis=0)
        solver.run(N + n_art, max_iter)
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        if -tab[-1, -1] > FEAS_TOL * scale:
            return LPResult("infeasible", iterations=solver.iterations)
        keep = np.ones(M, dtype=bool)
        for i in range(M):
            if basis[i] >= N:
                cand = np.flatnonzero(np.abs(tab[i, :N]) > 1e-9)
                if cand.size:
                    solver.pivot(i, int(cand[np.argmax(np.abs(tab[i, cand]))]))
                else:
                    keep[i] = False
        rows = np.concatenate([np.flatnonzero(keep), [M]])
        tab = np.ascontiguousarray(tab[rows][:, list(range(N)) + [N + n_art]])
        basis = [basis[i] for i in np.flatnonzero(keep)]
        solver.tab, solver.basis = tab, basis
    else:
        keep = np.ones(M, dtype=bool)

    cb = c_std[basis]
    tab[-1, :N] = c_std - cb @ tab[:-1, :N]
    tab[-1, -1] = -cb @ tab[:-1, -1]
    status = solver.run(N, max_iter)
    if status == "unbounded":
        return LPResult("unbounded", iterations=solver.iterations)

    xh = np.zeros(N)
    xh[basis] = tab[:-1, -1]
    x = shift + T @ xh[:nh]
    # Marginals from the basis of the unflipped system.
    y = np.zeros(M)
    kept = np.flatnonzero(keep)
    if kept.size:
        B = A[kept][:, basis]
        try:
            y[kept] = np.linalg.solve(B.T, c_std[basis])
        except np.linalg.LinAlgError:
            y[kept] = np.linalg.lstsq(B.T, c_std[basis], rcond=None)[0]
    value = float(lp.c @ x)
    return LPResult(
        "optimal",
        x=x,
        value=value,
        dual_ub=sign * y[:m_ub],
        dual_eq=sign * y[m_le:],
        iterations=solver.iterations,
    )


# ---------------------------------------------------------------------------
# Quadratic programs
# ---------------------------------------------------------------------------


@dataclass
class QuadraticProgram:
    """``min sum_i q_i (x_i - target_i)^2 + c @ x`` over an LP-described polytope.

    ``constraints`` supplies the rows and bounds; its objective is ignored.
    """

    q: np.ndarray
    target: np.ndarray
    constraints: LinearProgram
    c: np.ndarray | None = None

    def __post_init__(self):
        n = self.constraints.n
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.target = np.asarray(self.target, dtype=float).ravel()
        self.c = np.zeros(n) if self.c is None else np.asarray(self.c, dtype=float).ravel()
        if self.q.size != n or self.target.size != n or self.c.size != n:
            raise ValueError("q, target and c must match the constraint dimension")
        if np.any(self.q < 0):
            raise ValueError("quadratic diagonal must be nonnegative")

    def objective(self, x: np.ndarray) -> float:
        return float(self.q @ (x - self.target) ** 2 + self.c @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * self.q * (x - self.target) + self.c


@dataclass
class QPResult:
    x: np.ndarray
    value: float
    gap: float
    converged: bool
    iterations: int
    gap_trace: list[float] = field(default_factory=list)


def _lmo(qp: QuadraticProgram, grad: np.ndarray) -> np.ndarray:
    lp = qp.constraints
    res = solve_lp(
        LinearProgram(grad, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq, lp.lower, lp.upper)
    )
    if res.status == "infeasible":
        raise ValueError("quadratic program has an empty feasible region")
    if res.status == "unbounded":
        raise ValueError("quadratic program has an unbounded feasible region")
    return res.x


def _affine_minimiser(P: np.ndarray) -> np.ndarray:
    """Weights summing to one that minimise the norm of ``P.T @ w``."""
    k = P.shape[0]
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = P @ P.T
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:k]


def solve_qp(qp: QuadraticProgram, tol: float = QP_TOL, max_iter: int = QP_MAX_ITER) -> QPResult:
    """Minimise ``qp`` to a certified duality gap of ``tol``.

    When the linear term only touches coordinates with a positive quadratic
    weight, the objective is a weighted squared distance to a shifted
    target and Wolfe's minimum-norm-point method applies; it keeps an
    active set of polytope vertices and re-optimises over their affine hull
    each round. Otherwise plain Frank-Wolfe with exact line search is used.
    The reported gap is the smallest certified gap seen so far.
    """
    J = qp.q > 0
    if np.any(qp.c[~J] != 0):
        return _frank_wolfe(qp, tol, max_iter)
    scale = np.sqrt(qp.q[J])
    centre = qp.target[J] - qp.c[J] / (2.0 * qp.q[J])

    def embed(v: np.ndarray) -> np.ndarray:
        return scale * (v[J] - centre)

    V = [_lmo(qp, np.zeros(qp.constraints.n))]
    P = [embed(V[0])]
    lam = np.array([1.0])
    p = P[0].copy()
    best_gap = np.inf
    trace: list[float] = []
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        grad = np.zeros(qp.constraints.n)
        grad[J] = 2.0 * scale * p
        v = _lmo(qp, grad)
        pv = embed(v)
        gap = max(0.0, 2.0 * float(p @ (p - pv)))
        best_gap = min(best_gap, gap)
        trace.append(best_gap)
        if gap <= tol:
            converged = True
            break
        if any(np.max(np.abs(pv - a)) <= _ATOM_ZERO for a in P):
            # The new vertex is already active: numerically converged.
            converged = best_gap <= tol
            break
        V.append(v)
        P.append(pv)
        lam = np.append(lam, 0.0)
        while True:
            Pm = np.array(P)
            alpha = _affine_minimiser(Pm)
            if np.all(alpha > _ATOM_ZERO):
                lam = alpha
                break
            mask = (alpha <= _ATOM_ZERO) & (lam - alpha > 0)
            theta = min(1.0, float(np.min(lam[mask] / (lam[mask] - alpha[mask])))) if mask.any() else 1.0
            lam = theta * alpha + (1.0 - theta) * lam
            keep = lam > _ATOM_ZERO
            if keep.all():
                keep[int(np.argmin(lam))] = False
            V = [a for a, k in zip(V, keep) if k]
            P = [a for a, k in zip(P, keep) if k]
            lam = lam[keep] / lam[keep].sum()
        p = np.array(P).T @ lam
    x = np.array(V).T @ lam
    return QPResult(x, qp.objective(x), float(best_gap), converged, it, trace)


def _frank_wolfe(qp: QuadraticProgram, tol: float, max_iter: int) -> QPResult:
    x = _lmo(qp, np.zeros(qp.constraints.n))
    best_gap = np.inf
    trace: list[float] = []
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        g = qp.gradient(x)
        v = _lmo(qp, g)
        dvec = v - x
        gap = max(0.0, -float(g @ dvec))
        best_gap = min(best_gap, gap)
        trace.append(best_gap)
        if gap <= tol:
            converged = True
            break
        curv = 2.0 * float(qp.q @ dvec**2)
        step = 1.0 if curv <= 0 else min(1.0, gap / curv)
        x = x + step * dvec
    return QPResult(x, qp.objective(x), float(best_gap), converged, it, trace)
