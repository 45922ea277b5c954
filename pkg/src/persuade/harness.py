"""Experiment runner, acceptance suites and reporting.

Everything here is plumbing around the solver modules: seeded instance and
adversary generation, CSV/JSON output for online runs, and the pass/fail
suites that check the solvers against exact baselines.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .convex_solver import LinearProgram, QuadraticProgram, solve_lp, solve_qp
from .ellipsoid import Cut, feasibility_search
from .errors import MalformedInstanceError, OracleScaleError
from .generators import FAMILIES, generate_instance
from .matroid_sep import (
    GREEDY_ALPHA,
    SepQuery,
    brute_force_sep,
    check_submodular_composite,
    composite_parts,
    exact_sep_oracle,
    get_oracle,
    greedy_sep_oracle,
)
from .model import (
    Instance,
    SignalingScheme,
    TypeProfile,
    is_persuasive,
    load_instance,
    sender_utilities,
    tiny_instance,
)
from .ogd import (
    RunRecord,
    best_in_hindsight,
    regret_bound,
    run_ogd,
    telescoping_violations,
)
from .persuasion_opt import (
    RewardVector,
    approx_projection,
    exact_offline_solve,
    exact_projection,
    offline_solve,
)

__all__ = [
    "ExperimentConfig",
    "CriterionResult",
    "RewardSampler",
    "SUITES",
    "adversary_sequence",
    "generate_instance",
    "run_acceptance",
    "run_experiment",
]

ADVERSARIES = ("constant", "cycle", "random")
THREADS_ENV = "PERSUADE_THREADS"


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """One online run.

    ``instance`` is a path to an instance JSON, the string ``"tiny"``, or a
    generator spec ``{"family", "n", "m", "d", "seed"}``. ``adversary`` is
    ``{"kind": "constant" | "cycle" | "random", "profiles": [...]}``; when
    ``profiles`` is omitted the seed picks them (one for constant, three
    for cycle, all profiles for random).
    """

    instance: str | dict
    T: int
    adversary: dict = field(default_factory=lambda: {"kind": "constant"})
    eta: float | None = None
    eps: float | None = None
    oracle: str = "exact"
    output_dir: str = "runs/out"
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.T, int) or self.T < 1:
            raise ValueError("T must be a positive integer")
        if self.eta is None:
            self.eta = 1.0 / math.sqrt(self.T)
        if self.eps is None:
            self.eps = 1.0 / self.T
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")
        if self.adversary.get("kind") not in ADVERSARIES:
            raise ValueError(f"adversary kind must be one of {ADVERSARIES}")
        get_oracle(self.oracle)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


def build_instance(spec: str | dict) -> Instance:
    if spec == "tiny":
        return tiny_instance()
    if isinstance(spec, dict):
        return generate_instance(spec["family"], int(spec["n"]), int(spec["m"]), int(spec["d"]), int(spec.get("seed", 0)))
    return load_instance(spec)


def profile_id(inst: Instance, k: Sequence[int]) -> int:
    """Position of ``k`` in the lexicographic list of type profiles."""
    idx = 0
    for r, kr in enumerate(k):
        idx = idx * inst.m[r] + int(kr)
    return idx


def adversary_sequence(inst: Instance, adversary: dict, T: int, seed: int) -> list[TypeProfile]:
    """Feedback sequence of length ``T`` for an adversary spec."""
    kind = adversary.get("kind")
    profiles = adversary.get("profiles")
    everything = list(inst.type_profiles())
    rng = np.random.default_rng(seed)
    if profiles is None:
        order = [everything[i] for i in rng.permutation(len(everything))]
        profiles = {"constant": order[:1], "cycle": order[:3], "random": everything}[kind]
    profiles = [inst.check_type_profile(k) for k in profiles]
    if not profiles:
        raise ValueError("adversary needs at least one profile")
    if kind == "constant":
        if len(profiles) != 1:
            raise ValueError("constant adversary takes exactly one profile")
        return profiles * T
    if kind == "cycle":
        return [profiles[t % len(profiles)] for t in range(T)]
    if kind == "random":
        return [profiles[i] for i in rng.integers(len(profiles), size=T)]
    raise ValueError(f"adversary kind must be one of {ADVERSARIES}")


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run OGD for ``cfg`` and write ``run.csv``, ``summary.json`` and
    ``scheme_final.json`` under ``cfg.output_dir``. Returns the summary.

    A failure after the output directory exists leaves ``error.json`` there
    and re-raises.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _run_experiment(cfg, out)
    except Exception as exc:
        with open(out / "error.json", "w") as fh:
            json.dump({"error": type(exc).__name__, "message": str(exc), "config": cfg.to_dict()}, fh, indent=2)
        raise


def _run_experiment(cfg: ExperimentConfig, out: Path) -> dict:
    inst = build_instance(cfg.instance)
    oracle = get_oracle(cfg.oracle)
    seq = adversary_sequence(inst, cfg.adversary, cfg.T, cfg.seed)
    run = run_ogd(inst, seq, cfg.eta, cfg.eps, oracle)

    with open(out / "run.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "profile_id", "utility", "cum_utility", "distinct_profiles", "proj_ms"])
        cum = 0.0
        for rec in run.records:
            cum += rec.utility
            writer.writerow([rec.t, profile_id(inst, rec.profile), repr(rec.utility), repr(cum), rec.distinct, f"{rec.proj_ms:.3f}"])

    distinct = len(run.final.E)
    bound = regret_bound(cfg.T, distinct, cfg.eta, cfg.eps)
    try:
        _, best = best_in_hindsight(inst, seq)
        regret = oracle.alpha * best - run.total_utility
        passed = bool(regret <= bound + 1e-6)
    except OracleScaleError:
        best = regret = None
        passed = None
    summary = {
        "regret": regret,
        "alpha": oracle.alpha,
        "best_in_hindsight": best,
        "total_utility": run.total_utility,
        "distinct_profiles": distinct,
        "bound": bound,
        "pass": passed,
        "config": cfg.to_dict(),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    with open(out / "scheme_final.json", "w") as fh:
        json.dump(run.final_scheme.to_dict(inst), fh, indent=2)
    return summary


# ---------------------------------------------------------------------------
# Reward-vector sampling
# ---------------------------------------------------------------------------


class RewardSampler:
    """Random points of ``alpha * X`` over every type profile.

    Vertices come from optimal schemes for random nonnegative weightings of
    random profile subsets. A sample is a sparse convex combination of
    vertices, half the time shrunk coordinatewise by a uniform factor
    (reward vectors are closed under decreasing coordinates).
    """

    def __init__(self, inst: Instance, alpha: float = 1.0, seed: int = 0, n_vertices: int = 12):
        self.inst = inst
        self.alpha = alpha
        self.profiles = list(inst.type_profiles())
        rng = np.random.default_rng(seed)
        self.rng = rng
        P = len(self.profiles)
        verts = [np.zeros(P)]
        for _ in range(n_vertices):
            size = int(rng.integers(1, P + 1))
            pick = sorted(rng.choice(P, size=size, replace=False))
            K = [self.profiles[i] for i in pick]
            lam = rng.exponential(size=size)
            scheme, _ = exact_offline_solve(inst, K, lam)
            verts.append(sender_utilities(inst, scheme, self.profiles))
        self.vertices = np.array(verts)

    def sample_array(self, count: int) -> np.ndarray:
        V = self.vertices
        out = np.empty((count, V.shape[1]))
        for i in range(count):
            j = int(self.rng.integers(1, min(3, len(V)) + 1))
            idx = self.rng.choice(len(V), size=j, replace=False)
            w = self.rng.dirichlet(np.ones(j))
            x = w @ V[idx]
            if self.rng.random() < 0.5:
                x = x * self.rng.random(x.size)
            out[i] = x
        return self.alpha * out

    def sample(self, count: int) -> list[RewardVector]:
        support = tuple(self.profiles)
        return [RewardVector(support, row) for row in self.sample_array(count)]

    def columns(self, K: Sequence[TypeProfile]) -> np.ndarray:
        """Indices of ``K`` in the sampler's profile order."""
        index = {k: i for i, k in enumerate(self.profiles)}
        return np.array([index[tuple(k)] for k in K], dtype=int)


# ---------------------------------------------------------------------------
# Acceptance suites
# ---------------------------------------------------------------------------


@dataclass
class CriterionResult:
    """One pass/fail line of an acceptance suite."""

    criterion: int
    name: str
    passed: bool
    checks: int
    failures: int
    detail: str
    seconds: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.criterion} {self.name}: {self.failures}/{self.checks} failures; {self.detail} ({self.seconds:.1f}s)"


def _small_instance(rng: np.random.Generator, seed: int, n_max: int, m_max: int, d_max: int, families=FAMILIES) -> Instance:
    family = families[int(rng.integers(len(families)))]
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    d = int(rng.integers(1, d_max + 1))
    return generate_instance(family, n, m, d, seed)


def _random_K(rng: np.random.Generator, inst: Instance, k_max: int) -> list[TypeProfile]:
    profiles = list(inst.type_profiles())
    size = int(rng.integers(1, min(k_max, len(profiles)) + 1))
    return [profiles[i] for i in sorted(rng.choice(len(profiles), size=size, replace=False))]


def suite_projection(seed: int = 0, instances: int = 50, ys: int = 10, samples: int = 1000, eps: float = 1e-3) -> list[CriterionResult]:
    """Approximate projection against the exact projection and sampled points."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    checks = failures = 0
    worst_dist = worst_excess = -math.inf
    for i in range(instances):
        inst = _small_instance(rng, seed * 1000 + i, 3, 2, 2)
        K = _random_K(rng, inst, 4)
        sampler = RewardSampler(inst, 1.0, seed * 1000 + i)
        pts = sampler.sample_array(samples)[:, sampler.columns(K)]
        for _ in range(ys):
            y = rng.uniform(0.0, 2.0, size=len(K))
            res = approx_projection(inst, K, y, eps)
            x = res.x.on(K)
            x_star, _, _ = exact_projection(inst, K, y)
            xs = x_star.on(K)
            refs = np.vstack([xs[None, :], pts])
            lhs = np.sum((refs - x) ** 2, axis=1)
            rhs = np.sum((refs - y) ** 2, axis=1) + eps + 1e-6
            dist = float(np.sum((x - xs) ** 2))
            realised = sender_utilities(inst, res.scheme, K)
            ok = bool(np.all(lhs <= rhs)) and dist <= eps and is_persuasive(inst, res.scheme)
            ok = ok and bool(np.all(x <= realised + 1e-9))
            worst_excess = max(worst_excess, float(np.max(lhs - rhs)))
            worst_dist = max(worst_dist, dist)
            checks += 1
            failures += not ok
    detail = f"max |x-x*|^2={worst_dist:.2e} (<= {eps}), max contract excess={worst_excess:.2e}"
    return [CriterionResult(1, "projection contract", failures == 0, checks, failures, detail, time.perf_counter() - start)]


def suite_offline(seed: int = 0, instances: int = 50, eps: float = 0.01) -> list[CriterionResult]:
    """Bisection solver against the full signaling LP."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed + 1)
    failures = 0
    worst = math.inf
    for i in range(instances):
        inst = _small_instance(rng, seed * 1000 + 500 + i, 4, 2, 3)
        K = _random_K(rng, inst, 6)
        lam = rng.dirichlet(np.ones(len(K))) * rng.uniform(0.5, 1.0)
        res = offline_solve(inst, K, lam, eps)
        _, opt = exact_offline_solve(inst, K, lam)
        apx = float(lam @ sender_utilities(inst, res.scheme, K))
        worst = min(worst, apx - (opt - eps))
        failures += not (is_persuasive(inst, res.scheme) and apx >= opt - eps)
    detail = f"min Apx-(OPT-eps)={worst:.2e}"
    return [CriterionResult(2, "offline approximation", failures == 0, instances, failures, detail, time.perf_counter() - start)]


def regret_instances(seed: int = 0) -> list[tuple[str, Instance]]:
    out = [("tiny", tiny_instance())]
    for i in range(5):
        rng = np.random.default_rng(seed * 100 + i)
        n = int(rng.integers(2, 4))
        out.append((f"coverage-{i}", generate_instance("coverage", n, 2, 2, seed * 100 + i)))
    return out


def suite_regret(seed: int = 0, horizons: Sequence[int] = (100, 400), samples: int = 100) -> list[CriterionResult]:
    """Regret bound and the per-step projection inequality on online runs."""
    start = time.perf_counter()
    runs = failures = tele_failures = tele_checks = 0
    worst_ratio = -math.inf
    for name, inst in regret_instances(seed):
        sampler = RewardSampler(inst, 1.0, seed + 7)
        pts = sampler.sample(samples)
        for kind in ("constant", "cycle"):
            for T in horizons:
                seq = adversary_sequence(inst, {"kind": kind}, T, seed)
                eta, eps = 1.0 / math.sqrt(T), 1.0 / T
                run = run_ogd(inst, seq, eta, eps)
                _, best = best_in_hindsight(inst, seq)
                regret = best - run.total_utility
                bound = math.sqrt(T) * (1 + len(run.final.E) / 2)
                worst_ratio = max(worst_ratio, regret / bound)
                failures += regret > bound + 1e-6
                runs += 1
                bad = telescoping_violations(run, pts, eps)
                tele_checks += T * len(pts)
                tele_failures += len(bad)
    elapsed = time.perf_counter() - start
    return [
        CriterionResult(3, "regret bound", failures == 0, runs, failures, f"max regret/bound={worst_ratio:.3f}", elapsed),
        CriterionResult(7, "telescoping invariant", tele_failures == 0, tele_checks, tele_failures, f"{runs} runs x {samples} samples", elapsed),
    ]


def _clamped_query(rng: np.random.Generator, inst: Instance, theta: int) -> SepQuery:
    """Random query in the ranges the separators actually send."""
    K = _random_K(rng, inst, 4)
    mu = inst.prior[theta]
    w = np.zeros(inst.n_ground)
    if rng.random() < 0.5:
        lam = mu * rng.dirichlet(np.ones(len(K)))
        lo, hi = -inst.n, 1.0
    else:
        lam = mu * rng.uniform(0.0, len(K) + 11.0, size=len(K))
        lo, hi = -4.0 * len(K) * inst.n - 10.0, 4.0 * len(K)
    mask = np.ones(inst.n_ground, dtype=bool)
    mask[inst.ground_offsets] = False
    w[mask] = rng.uniform(lo, hi, size=int(mask.sum())) * rng.choice([1.0, 0.1, 0.01], size=int(mask.sum()))
    return SepQuery(inst, theta, tuple(K), lam, w)


def suite_oracle(seed: int = 0, instances: int = 100) -> list[CriterionResult]:
    """Greedy and exact separation oracles against brute force."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed + 3)
    greedy_fail = exact_fail = checks = 0
    worst = math.inf
    for i in range(instances):
        n = int(rng.integers(1, 7))
        d = int(rng.integers(1, 4))
        inst = generate_instance("coverage", n, 2, d, seed * 1000 + 700 + i)
        for theta in range(d):
            q = _clamped_query(rng, inst, theta)
            bf = brute_force_sep(q)
            g = greedy_sep_oracle(q)
            e = exact_sep_oracle(q)
            target = GREEDY_ALPHA * bf.f_part + bf.linear_part - 1e-9
            worst = min(worst, g.value - target)
            greedy_fail += g.value < target
            exact_fail += not (e.profile == bf.profile and e.value == bf.value)
            checks += 1
    failures = greedy_fail + exact_fail
    detail = f"greedy misses={greedy_fail}, exact mismatches={exact_fail}, min greedy slack={worst:.2e}"
    return [CriterionResult(4, "separation oracle contract", failures == 0, 2 * checks, failures, detail, time.perf_counter() - start)]


def suite_submodularity(seed: int = 0, trials: int = 10_000, instances: int = 20) -> list[CriterionResult]:
    """Randomised diminishing-returns check of the composite objective."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed + 5)
    per = trials // instances
    found = 0
    for i in range(instances):
        family = ("coverage", "concave_cardinality")[i % 2]
        n = int(rng.integers(2, 6))
        d = int(rng.integers(1, 3))
        inst = generate_instance(family, n, 2, d, seed * 1000 + 900 + i)
        theta = int(rng.integers(d))
        K = _random_K(rng, inst, 6)
        q = SepQuery(inst, theta, tuple(K), rng.uniform(0, 2, len(K)), np.zeros(inst.n_ground))
        found += check_submodular_composite(q, per, seed * 1000 + i) is not None
    return [CriterionResult(5, "composite submodularity", found == 0, per * instances, found, f"{instances} instances", time.perf_counter() - start)]


def _vertex_max(c, A, b) -> float | None:
    """Max of ``c @ x`` over ``{A x <= b}`` by enumerating vertices; None if empty."""
    n = A.shape[1]
    best = None
    for rows in itertools.combinations(range(A.shape[0]), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + 1e-9):
            v = float(c @ x)
            best = v if best is None else max(best, v)
    return best


def _box_rows(n: int, lo: np.ndarray, hi: np.ndarray):
    I = np.eye(n)
    return np.vstack([I, -I]), np.concatenate([hi, -lo])


def suite_solvers(seed: int = 0, lps: int = 200, polytopes: int = 100, qps: int = 200) -> list[CriterionResult]:
    """LP, ellipsoid and QP against brute-force and closed-form answers."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed + 11)
    lp_fail = 0
    for _ in range(lps):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, 5))
        A = rng.normal(size=(m, n))
        b = rng.uniform(0.0, 2.0, size=m)
        c = rng.normal(size=n)
        hi = rng.uniform(1.0, 3.0, size=n)
        res = solve_lp(LinearProgram(c=c, A_ub=A, b_ub=b, upper=hi, maximize=True))
        Ab, bb = _box_rows(n, np.zeros(n), hi)
        ref = _vertex_max(c, np.vstack([A, Ab]), np.concatenate([b, bb]))
        lp_fail += not (res.optimal and ref is not None and abs(res.value - ref) <= 1e-6)

    ell_fail = 0
    done = 0
    while done < polytopes:
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, 6))
        A = rng.normal(size=(m, n))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        center = rng.uniform(-1, 1, size=n)
        b = A @ center + rng.uniform(-0.6, 0.4, size=m)
        lo, hi = -np.ones(n), np.ones(n)
        radius = _inner_radius(A, b, lo, hi)
        if abs(radius) < 1e-3:
            continue
        done += 1
        Ab, bb = _box_rows(n, lo, hi)
        truth = _vertex_max(np.zeros(n), np.vstack([A, Ab]), np.concatenate([b, bb])) is not None

        def oracle(x, A=A, b=b):
            viol = A @ x - b
            j = int(np.argmax(viol))
            return Cut(A[j], float(b[j]), j) if viol[j] > 0 else None

        res = feasibility_search(n, lo, hi, oracle)
        ell_fail += res.feasible != truth

    qp_fail = 0
    for _ in range(qps):
        n = int(rng.integers(1, 6))
        cap = rng.uniform(0.1, 2.0, size=n)
        y = rng.uniform(-1.0, 3.0, size=n)
        res = solve_qp(QuadraticProgram(q=np.ones(n), target=y, constraints=LinearProgram(c=np.zeros(n), upper=cap)))
        qp_fail += not np.allclose(res.x, np.clip(y, 0.0, cap), atol=1e-7, rtol=0)

    failures = lp_fail + ell_fail + qp_fail
    detail = f"lp={lp_fail}/{lps}, ellipsoid={ell_fail}/{polytopes}, qp={qp_fail}/{qps}"
    return [CriterionResult(6, "solver cross-validation", failures == 0, lps + polytopes + qps, failures, detail, time.perf_counter() - start)]


def _inner_radius(A, b, lo, hi) -> float:
    """Signed radius of the largest ball inside ``{A x <= b} & box`` (negative: empty by that margin)."""
    n = A.shape[1]
    Ab, bb = _box_rows(n, lo, hi)
    G = np.vstack([A, Ab])
    h = np.concatenate([b, bb])
    norms = np.linalg.norm(G, axis=1)
    lp = LinearProgram(
        c=np.concatenate([np.zeros(n), [1.0]]),
        A_ub=np.hstack([G, norms[:, None]]),
        b_ub=h,
        lower=np.concatenate([np.full(n, -np.inf), [-np.inf]]),
        upper=np.concatenate([np.full(n, np.inf), [10.0]]),
        maximize=True,
    )
    res = solve_lp(lp)
    return float(res.value) if res.optimal else -np.inf


SUITES: dict[str, Callable[..., list[CriterionResult]]] = {
    "projection": suite_projection,
    "offline": suite_offline,
    "regret": suite_regret,
    "oracle": suite_oracle,
    "submodularity": suite_submodularity,
    "solvers": suite_solvers,
}


def suite_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _run_suite(args) -> list[CriterionResult]:
    name, seed = args
    return SUITES[name](seed)


def run_acceptance(suite: str, seed: int = 0) -> list[CriterionResult]:
    """Run one suite, or every suite with ``suite="all"``.

    ``PERSUADE_THREADS`` caps how many suites run at once.

    Raises:
        ValueError: unknown suite name.
    """
    if suite == "all":
        names = list(SUITES)
    elif suite in SUITES:
        names = [suite]
    else:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)} or all")
    workers = min(suite_workers(), len(names))
    if workers == 1:
        parts = [_run_suite((n, seed)) for n in names]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_suite, [(n, seed) for n in names]))
    return [r for part in parts for r in part]


def report(results: Sequence[CriterionResult]) -> dict:
    return {"passed": all(r.passed for r in results), "criteria": [asdict(r) for r in results]}
