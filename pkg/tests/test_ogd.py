import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persuade.generators import generate_instance
from persuade.harness import RewardSampler
from persuade.model import SignalingScheme, sender_utility
from persuade.ogd import (
    IterationRecord,
    OgdState,
    RunRecord,
    alpha_regret,
    best_in_hindsight,
    default_regret_bound,
    regret_bound,
    run_ogd,
    step,
    telescoping_violations,
)


def test_first_step_gradient(tiny):
    state = OgdState.initial(tiny, 0.1, 1e-3)
    assert state.scheme == SignalingScheme.always_empty(tiny)
    nxt, rec = step(tiny, state, (0,))
    assert rec.E == ((0,),) and list(rec.y) == [0.1]
    assert rec.utility == 0.0 and rec.x_played == 0.0
    assert nxt.t == 2 and nxt.E == [(0,)]


def test_repeated_feedback_keeps_one_profile():
    inst = generate_instance("coverage", 2, 2, 2, 1)
    run = run_ogd(inst, [(1, 0)] * 20, 0.2, 0.01)
    assert {r.distinct for r in run.records} == {1}


def test_tiny_reward_rises_to_optimum(tiny):
    run = run_ogd(tiny, [(0,)] * 40, 0.1, 1e-3)
    xs = [r.x_next[0] for r in run.records]
    assert all(b >= a - 1e-12 for a, b in zip(xs, xs[1:]))
    assert max(xs) <= 0.75 + 1e-3
    assert xs[-1] == pytest.approx(0.75, abs=0.032)


def test_best_in_hindsight_tiny(tiny):
    _, value = best_in_hindsight(tiny, [(0,)] * 37)
    assert value == pytest.approx(0.75 * 37, abs=1e-9)


def test_best_in_hindsight_edge_cases(zero_instance, tiny):
    assert best_in_hindsight(zero_instance, [(0, 1), (1, 1)])[1] == 0.0
    assert best_in_hindsight(tiny, [])[1] == 0.0


def _scripted_run(inst, feedback, scheme):
    run = RunRecord()
    for t, k in enumerate(feedback, start=1):
        u = sender_utility(inst, scheme, k)
        run.records.append(IterationRecord(t, k, u, 1, 0.0, (k,), np.zeros(1), np.zeros(1), 0.0))
    return run


def test_regret_of_hindsight_optimum_is_zero():
    inst = generate_instance("coverage", 2, 2, 2, 5)
    seq = [(0, 1), (1, 1), (0, 1), (1, 0)]
    scheme, _ = best_in_hindsight(inst, seq)
    assert alpha_regret(inst, _scripted_run(inst, seq, scheme)) == pytest.approx(0.0, abs=1e-9)


def test_regret_of_silent_learner_is_hindsight_value():
    inst = generate_instance("coverage", 2, 2, 2, 5)
    seq = [(0, 1), (1, 1), (0, 1)]
    run = _scripted_run(inst, seq, SignalingScheme.always_empty(inst))
    assert alpha_regret(inst, run) == pytest.approx(best_in_hindsight(inst, seq)[1], abs=1e-12)


def test_tiny_regret_bound(tiny):
    T, eta, eps = 100, 0.1, 0.01
    run = run_ogd(tiny, [(0,)] * T, eta, eps)
    assert regret_bound(T, 1, eta, eps) == pytest.approx(15.0)
    assert alpha_regret(tiny, run) <= 15.0


def test_bounds_agree_at_default_rates():
    for T in (4, 100, 400):
        assert regret_bound(T, 3, 1 / math.sqrt(T), 1 / T) == pytest.approx(default_regret_bound(T, 3))


def test_state_rejects_bad_rates(tiny):
    with pytest.raises(ValueError):
        OgdState.initial(tiny, 0.0, 0.1)
    with pytest.raises(ValueError):
        OgdState.initial(tiny, 0.5, 1.5)


@settings(max_examples=8)
@given(st.integers(0, 10_000))
def test_run_invariants(seed):
    rng = np.random.default_rng(seed)
    inst = generate_instance("coverage", 2, 2, 2, seed)
    profiles = list(inst.type_profiles())
    T = 30
    seq = [profiles[i] for i in rng.integers(len(profiles), size=T)]
    eta, eps = 1 / math.sqrt(T), 1 / T
    state = OgdState.initial(inst, eta, eps)
    seen = []
    for k in seq:
        prev_E = list(state.E)
        assert set(state.x.support) <= set(prev_E)
        assert np.all((state.x.values >= 0) & (state.x.values <= 1))
        assert state.x[k] <= sender_utility(inst, state.scheme, k) + 1e-6
        state, rec = step(inst, state, k)
        if k not in seen:
            seen.append(k)
        assert list(rec.E) == seen and rec.distinct == len(seen) <= rec.t
    again = run_ogd(inst, seq, eta, eps)
    assert [r.utility for r in again.records] == [r.utility for r in run_ogd(inst, seq, eta, eps).records]
    samples = RewardSampler(inst, 1.0, seed).sample(30)
    assert telescoping_violations(again, samples, eps) == []
    assert alpha_regret(inst, again) <= default_regret_bound(T, len(seen)) + 1e-6
