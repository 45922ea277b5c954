import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from persuade.ellipsoid import Cut, EllipsoidState, default_max_iters, feasibility_search
from persuade.errors import NumericalFailure


def polytope_oracle(A, b):
    A, b = np.asarray(A, float), np.asarray(b, float)

    def oracle(x):
        viol = A @ x - b
        j = int(np.argmax(viol))
        return Cut(A[j], float(b[j]), j) if viol[j] > 0 else None

    return oracle


def test_accepts_initial_centre():
    res = feasibility_search(1, [0.0], [1.0], lambda x: None)
    assert res.feasible and res.point[0] == 0.5 and res.cuts == []


def test_empty_interval():
    res = feasibility_search(1, [0.0], [1.0], polytope_oracle([[-1.0], [1.0]], [-1.0, 0.0]))
    assert not res.feasible
    assert len(res.cuts) >= 2


def test_triangle_corner():
    A, b = [[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]], [0.1, 0.0, 0.0]
    res = feasibility_search(2, [0.0, 0.0], [1.0, 1.0], polytope_oracle(A, b))
    assert res.feasible
    assert res.point.sum() <= 0.1 + 1e-7 and np.all(res.point >= 0)


def test_default_budget():
    assert default_max_iters(2, 1.0) == math.ceil(24 * math.log(1e7))


def test_satisfied_cut_rejected():
    with pytest.raises(ValueError):
        feasibility_search(1, [0.0], [1.0], lambda x: Cut(np.ones(1), 5.0))


def test_degenerate_cut_fails_after_restart():
    calls = []

    def oracle(x):
        calls.append(x.copy())
        return Cut(np.zeros(2), -1.0)

    with pytest.raises(NumericalFailure):
        feasibility_search(2, [0.0, 0.0], [1.0, 1.0], oracle)
    assert len(calls) == 2


def test_certificate_stops_search():
    res = feasibility_search(1, [0.0], [1.0], polytope_oracle([[1.0]], [-5.0]), certificate=lambda cuts: len(cuts) >= 3)
    assert res.certified and len(res.cuts) == 3


def test_hint_accepted_before_ellipsoid():
    res = feasibility_search(2, [0.0, 0.0], [1.0, 1.0], polytope_oracle([[1.0, 1.0]], [0.05]), hints=[np.array([0.9, 0.9]), np.array([0.01, 0.01])])
    assert res.feasible and np.allclose(res.point, 0.01)
    assert len(res.hint_cuts) == 1 and res.iterations == 0


def test_centres_outside_box_are_cut_by_the_box():
    # The oracle accepts only points beyond the box, so the box must answer.
    seen = []

    def oracle(x):
        seen.append(x.copy())
        return None if x[0] >= 1.5 else Cut(np.array([-1.0, 0.0, 0.0]), -1.5, "target")

    res = feasibility_search(3, [-1.0] * 3, [1.0] * 3, oracle)
    assert not res.feasible
    assert any(isinstance(c.tag, tuple) and c.tag[0] == "box" for c in res.cuts)
    assert all(np.all(np.abs(x) <= 1.0) for x in seen)


def _random_polytope(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 4))
    m = int(rng.integers(1, 6))
    A = rng.normal(size=(m, p))
    b = A @ rng.uniform(-1, 1, size=p) + rng.uniform(-0.5, 0.5, size=m)
    return p, A, b


@given(st.integers(0, 100_000))
def test_search_invariants(seed):
    p, A, b = _random_polytope(seed)
    oracle = polytope_oracle(A, b)
    res = feasibility_search(p, -np.ones(p), np.ones(p), oracle, max_iters=300)
    if res.feasible:
        assert oracle(res.point) is None
    for cut, c in zip(res.cuts, res.centers):
        assert cut.violation(c) > -1e-12
    step = -1.0 / (2 * (p + 1))
    diffs = np.diff([p * math.log(math.sqrt(p))] + res.log_volumes)
    assert np.all(diffs <= step + 1e-6)


@given(st.integers(0, 100_000))
def test_shape_stays_positive_definite(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 6))
    state = EllipsoidState.ball(np.zeros(p), 1.0)
    for _ in range(40):
        state.update(Cut(rng.normal(size=p), 0.0))
        A = state.shape
        assert np.allclose(A, A.T, atol=1e-9)
        np.linalg.cholesky(A)
        sign, logdet = np.linalg.slogdet(A)
        assert sign > 0 and logdet == pytest.approx(state.log_det, abs=1e-6)


def test_flat_target_stops_on_width():
    # A hyperplane holds no ball, so the search must give up cleanly.
    oracle = polytope_oracle([[1.0, 1.0, 1.0, 0.0], [-1.0, -1.0, -1.0, 0.0]], [0.3, -0.3])
    res = feasibility_search(4, -np.ones(4), np.ones(4), oracle)
    assert not res.feasible
    assert len(res.cuts) < default_max_iters(4, 4.0)
