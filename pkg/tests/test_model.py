import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_instance
from persuade.errors import MalformedInstanceError
from persuade.generators import generate_instance
from persuade.model import (
    ConcaveCardinalityFunction,
    CoverageFunction,
    SignalingScheme,
    TableFunction,
    activated_set,
    dump_instance,
    eval_set_function,
    is_persuasive,
    load_instance,
    mask_of,
    persuasiveness_residuals,
    sender_utility,
    set_function_from_dict,
    validate_instance,
)

# TINY-1: the receiver acts in theta1 always and in theta0 half the time.
TINY_HALF = SignalingScheme.from_dicts([{(1,): 0.5, (0,): 0.5}, {(1,): 1.0}])


def test_coverage_full_set_sums_all_weights():
    f = CoverageFunction(2, (frozenset({0}), frozenset({1})), (0.5, 0.5))
    assert eval_set_function(f, {0, 1}) == 1.0


@pytest.mark.parametrize(
    "f",
    [
        CoverageFunction(2, (frozenset({0}), frozenset({1})), (0.5, 0.5)),
        ConcaveCardinalityFunction((0.0, 0.6, 0.9)),
        TableFunction(2, (0.0, 0.2, 0.3, 0.4)),
    ],
)
def test_empty_set_is_zero(f):
    assert eval_set_function(f, set()) == 0.0


def test_concave_cardinality_lookup():
    assert eval_set_function(ConcaveCardinalityFunction((0.0, 0.6, 0.9)), {1}) == 0.6


def test_table_missing_entry_is_malformed():
    with pytest.raises(MalformedInstanceError):
        set_function_from_dict({"kind": "table", "n": 2, "values": {"0": 0.0, "1": 0.5, "3": 0.6}})


def test_table_from_mask_keyed_dict():
    f = set_function_from_dict({"kind": "table", "n": 1, "values": {"0": 0.0, "1": 0.5}})
    assert eval_set_function(f, 1) == 0.5


def test_activated_set_examples():
    assert activated_set((1, 0), (0, 0)) == {0}
    assert activated_set((0, 0, 0), (1, 0, 1)) == frozenset()
    assert activated_set((3, 3, 1), (1, 0, 0)) == {0, 1, 2}


def test_sender_utility_tiny(tiny):
    # 0.5 * (0.5 * 1 + 0.5 * 0) + 0.5 * 1
    assert sender_utility(tiny, TINY_HALF, (0,)) == pytest.approx(0.75, abs=1e-15)
    assert sender_utility(tiny, SignalingScheme.always_empty(tiny), (0,)) == 0.0
    assert sender_utility(tiny, SignalingScheme.always(tiny, tiny.full_profile), (0,)) == 1.0


def test_residuals_tiny(tiny):
    # 0.5 * 1 * 1 + 0.5 * 0.5 * (-2)
    assert persuasiveness_residuals(tiny, TINY_HALF) == {(0, 1, 0): pytest.approx(0.0, abs=1e-15)}
    assert is_persuasive(tiny, TINY_HALF)
    assert persuasiveness_residuals(tiny, SignalingScheme.always_empty(tiny)) == {}
    # 0.5 * 1 + 0.5 * (-2)
    bad = SignalingScheme.from_dicts([{(1,): 1.0}, {(1,): 1.0}])
    assert persuasiveness_residuals(tiny, bad)[(0, 1, 0)] == pytest.approx(-0.5)
    assert not is_persuasive(tiny, bad)


def test_validate_tiny_ok(tiny):
    assert validate_instance(tiny) == []


def test_validate_reports_prior_sum():
    f = TableFunction(1, (0.0, 1.0))
    inst = make_instance([[[0.1, 0.2, 0.3]]], [f, f, f], prior=[0.5, 0.5, 0.1])
    assert any("prior sum ≠ 1" in p for p in validate_instance(inst))


def test_validate_reports_monotonicity():
    f = TableFunction(2, (0.0, 0.5, 0.0, 0.3))
    inst = make_instance([[[0.1]], [[0.2]]], [f])
    assert any("monotonicity" in p for p in validate_instance(inst))


def test_validate_reports_every_violation():
    f = TableFunction(2, (0.1, 0.5, 0.0, 0.3))
    inst = make_instance([[[3.0]], [[0.2]]], [f], prior=[0.9])
    problems = validate_instance(inst)
    assert len(problems) >= 4


def test_structural_errors_raise():
    f = TableFunction(1, (0.0, 1.0))
    with pytest.raises(MalformedInstanceError):
        make_instance([[[0.1, 0.2]]], [f])


def test_scheme_mass_checked():
    with pytest.raises(ValueError):
        SignalingScheme.from_dicts([{(0,): 0.7}])


def test_json_round_trip(tmp_path):
    inst = generate_instance("table", 3, 2, 2, 4)
    path = tmp_path / "inst.json"
    dump_instance(inst, path)
    back = load_instance(path)
    assert back.to_dict() == inst.to_dict()
    doc = json.loads(path.read_text())
    assert {"receivers", "states", "prior", "utility_diff", "sender_functions"} <= set(doc)


def test_loader_rejects_invalid(tmp_path):
    f = TableFunction(2, (0.0, 0.5, 0.0, 0.3))
    inst = make_instance([[[0.1]], [[0.2]]], [f])
    path = tmp_path / "bad.json"
    dump_instance(inst, path)
    with pytest.raises(MalformedInstanceError):
        load_instance(path)


def _random_scheme(inst, rng):
    profiles = list(inst.signal_profiles())
    per_state = []
    for _ in range(inst.d):
        pick = rng.choice(len(profiles), size=min(3, len(profiles)), replace=False)
        w = rng.dirichlet(np.ones(len(pick)))
        per_state.append({profiles[i]: float(p) for i, p in zip(pick, w)})
    return SignalingScheme.from_dicts(per_state)


@given(st.integers(0, 10_000), st.floats(0, 1))
def test_sender_utility_is_affine(seed, beta):
    rng = np.random.default_rng(seed)
    inst = generate_instance("coverage", 3, 2, 2, seed)
    a, b = _random_scheme(inst, rng), _random_scheme(inst, rng)
    mixed = a.mix(b, beta)
    for k in inst.type_profiles():
        expect = beta * sender_utility(inst, a, k) + (1 - beta) * sender_utility(inst, b, k)
        assert abs(sender_utility(inst, mixed, k) - expect) <= 1e-12


@given(st.integers(0, 10_000))
def test_sender_utility_range(seed):
    rng = np.random.default_rng(seed)
    inst = generate_instance("concave_cardinality", 3, 2, 2, seed)
    top = max(f.value(mask_of(range(inst.n))) for f in inst.sender_functions)
    phi = _random_scheme(inst, rng)
    for k in inst.type_profiles():
        assert -1e-15 <= sender_utility(inst, phi, k) <= top + 1e-12


@given(st.lists(st.integers(0, 7), min_size=3, max_size=3), st.lists(st.integers(0, 2), min_size=3, max_size=3), st.integers(0, 2), st.integers(0, 7))
def test_activation_monotone(s, k, r, extra):
    bigger = list(s)
    bigger[r] |= extra
    assert activated_set(s, k) <= activated_set(bigger, k)


@pytest.mark.parametrize("family", ["coverage", "concave_cardinality"])
@given(seed=st.integers(0, 10_000))
def test_lattice_submodularity(family, seed):
    inst = generate_instance(family, 5, 1, 1, seed)
    f = inst.sender_functions[0]
    rng = np.random.default_rng(seed)
    for _ in range(50):
        a, b = (int(v) for v in rng.integers(32, size=2))
        assert f.value(a & b) + f.value(a | b) <= f.value(a) + f.value(b) + 1e-12
