import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import disjoint_coverage, make_instance
from persuade.errors import IndependenceError, OracleScaleError
from persuade.generators import generate_instance
from persuade.matroid_sep import (
    GREEDY_ALPHA,
    SepQuery,
    all_bases,
    brute_force_sep,
    check_submodular_composite,
    composite_value,
    exact_sep_oracle,
    greedy_sep_oracle,
)
from persuade.model import ConcaveCardinalityFunction, SignalingScheme, TableFunction, sender_utility, tiny_instance


def _query(inst, theta, K, lam, blocks):
    return SepQuery.from_blocks(inst, theta, K, lam, blocks)


def test_composite_single_receiver(tiny):
    q = _query(tiny, 0, [(0,)], [1.0], [[0.0, 0.0]])
    assert composite_value(q, [(0, 1)]) == 1.0
    assert composite_value(q, []) == 0.0


def test_composite_partial_coverage():
    cov = disjoint_coverage(2)
    inst = make_instance([[[0.1]], [[0.1]]], [cov])
    q = _query(inst, 0, [(0, 0)], [1.0], [[0, 0], [0, 0]])
    assert composite_value(q, [(0, 1), (1, 0)]) == 0.5


def test_composite_rejects_dependent_set(tiny):
    q = _query(tiny, 0, [(0,)], [1.0], [[0.0, 0.0]])
    with pytest.raises(IndependenceError):
        composite_value(q, [(0, 1), (0, 0)])


def test_exact_examples(tiny):
    res = exact_sep_oracle(_query(tiny, 0, [(0,)], [1.0], [[0.0, 0.0]]))
    assert (res.profile, res.value) == ((1,), 1.0)
    res = exact_sep_oracle(_query(tiny, 0, [(0,)], [1.0], [[0.0, -10.0]]))
    assert (res.profile, res.value) == ((0,), 0.0)
    g = ConcaveCardinalityFunction((0.0, 0.6, 0.9))
    inst = make_instance([[[0.1]], [[0.1]]], [g])
    res = exact_sep_oracle(_query(inst, 0, [(0, 0)], [1.0], [[0, 0], [0, 0]]))
    assert res.profile == (1, 1) and res.value == pytest.approx(0.9, abs=1e-15)


def test_exact_breaks_ties_lexicographically():
    z = TableFunction(2, (0.0, 0.0, 0.0, 0.0))
    inst = make_instance([[[0.1]], [[0.1]]], [z])
    res = exact_sep_oracle(_query(inst, 0, [(0, 0)], [1.0], [[0, 0], [0, 0]]))
    assert res.profile == (0, 0)


def test_exact_size_guard():
    f = ConcaveCardinalityFunction(tuple(np.linspace(0, 1, 6) ** 0.5))
    inst = make_instance([np.zeros((4, 1))] * 5, [f])
    q = SepQuery(inst, 0, ((0,) * 5,), [1.0], np.zeros(inst.n_ground))
    with pytest.raises(OracleScaleError):
        exact_sep_oracle(q)


def test_greedy_single_receiver_matches_exact(tiny):
    for w in (-2.0, -0.5, 0.0, 0.3):
        q = _query(tiny, 1, [(0,)], [0.7], [[0.0, w]])
        assert greedy_sep_oracle(q).profile == exact_sep_oracle(q).profile


def test_greedy_optimal_for_modular():
    cov = disjoint_coverage(3)
    inst = make_instance([np.zeros((2, 1))] * 3, [cov])
    K = [(0, 1, 0), (1, 1, 0), (0, 0, 1)]
    q = SepQuery(inst, 0, tuple(K), [0.5, 0.3, 0.2], np.zeros(inst.n_ground))
    assert greedy_sep_oracle(q).value == pytest.approx(brute_force_sep(q).value, abs=1e-15)


def _random_query(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    inst = generate_instance("coverage", n, 2, 2, seed)
    profiles = list(inst.type_profiles())
    pick = rng.choice(len(profiles), size=min(3, len(profiles)), replace=False)
    w = rng.uniform(-n, 1.0, size=inst.n_ground)
    w[inst.ground_offsets] = 0.0
    return SepQuery(inst, int(rng.integers(2)), tuple(profiles[i] for i in pick), rng.uniform(0, 1, len(pick)), w)


@given(st.integers(0, 100_000))
def test_exact_matches_brute_force(seed):
    q = _random_query(seed)
    e, b = exact_sep_oracle(q), brute_force_sep(q)
    assert e.profile == b.profile and e.value == b.value


@given(st.integers(0, 100_000))
def test_greedy_contract_and_dominance(seed):
    q = _random_query(seed)
    g, b = greedy_sep_oracle(q), brute_force_sep(q)
    assert g.value <= exact_sep_oracle(q).value + 1e-12
    assert g.value >= GREEDY_ALPHA * b.f_part + b.linear_part - 1e-9
    assert composite_value(q, g.profile) == pytest.approx(g.value, abs=1e-12)


@given(st.integers(0, 100_000))
def test_greedy_deterministic(seed):
    q = _random_query(seed)
    assert greedy_sep_oracle(q) == greedy_sep_oracle(q)


@given(st.integers(0, 100_000))
def test_composite_matches_sender_utility(seed):
    q = _random_query(seed)
    inst = q.instance
    rng = np.random.default_rng(seed)
    profiles = list(all_bases(inst))
    s = profiles[int(rng.integers(len(profiles)))]
    phi = SignalingScheme.always(inst, s)
    # Prior-weighted composite values over states give the sender's utility.
    per_state = [composite_value(SepQuery(inst, th, q.K, q.lam, np.zeros(inst.n_ground)), s) for th in range(inst.d)]
    expect = sum(l * sender_utility(inst, phi, k) for k, l in zip(q.K, q.lam))
    assert float(inst.prior @ per_state) == pytest.approx(expect, abs=1e-12)


def test_submodular_coverage_no_counterexample():
    inst = generate_instance("coverage", 4, 2, 1, 3)
    q = SepQuery(inst, 0, tuple(inst.type_profiles())[:5], np.ones(5), np.zeros(inst.n_ground))
    assert check_submodular_composite(q, 1000, seed=1) is None


def test_supermodular_table_found():
    f = TableFunction(2, (0.0, 0.0, 0.0, 1.0))
    inst = make_instance([[[0.1]], [[0.1]]], [f])
    q = SepQuery(inst, 0, ((0, 0),), [1.0], np.zeros(inst.n_ground))
    cex = check_submodular_composite(q, 200, seed=0)
    assert cex is not None
    assert cex.marginal_small < cex.marginal_large


def test_bases_are_signal_profiles(tiny):
    inst = generate_instance("coverage", 2, 2, 1, 0)
    assert list(all_bases(inst)) == list(inst.signal_profiles())
    assert len(list(all_bases(inst))) == 16
