import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsimpulse.bellman import lambda_full
from rsimpulse.eigensolver import solve_one_step
from rsimpulse.errors import DegenerateError, EnumerationCapError, PreconditionError
from rsimpulse.policy import (CONTINUE, Policy, chained_jump_check, enumerate_policies,
                              never_impulse, oracle_lambda, per_state_growth_rates,
                              policy_growth_rate, strategy_from_solution)
from rsimpulse.propagator import semigroup_type, weighted_kernel
from rsimpulse.random_models import random_model

from conftest import make_m1, make_m2
from oracles import m2_jump_at_b_rate, policy_value_bruteforce

R_M2 = -2.0 + math.sqrt(2.0)


def test_strategy_m1_continue(m1):
    s = lambda_full(m1, margin=-1.0)
    assert strategy_from_solution(m1, s).action.tolist() == [CONTINUE]


def test_strategy_refuses_degenerate(m1):
    with pytest.raises(DegenerateError):
        strategy_from_solution(m1, lambda_full(m1))


def test_strategy_m2(m2):
    pol = strategy_from_solution(m2, lambda_full(m2))
    assert pol.action.tolist() == [CONTINUE, 0]
    assert pol == oracle_lambda(m2, 2).best_policy


def test_strategy_jumps_everywhere_for_tiny_cost():
    spec = make_m2(shift_cost=[[-1e-9], [-1e-9]])
    s = lambda_full(spec)
    assert strategy_from_solution(spec, s).action.tolist() == [0, 0]


def test_strategy_from_bounded_solution(m3):
    s = solve_one_step(m3, 0, 0)
    pol = strategy_from_solution(m3, s)
    assert pol.level == 0 and pol.action[2] == 0


def test_never_impulse_rate(m2):
    for k in (0, 2):
        assert policy_growth_rate(m2, never_impulse(m2), k) == pytest.approx(R_M2, abs=1e-12)


def test_m1_always_jump():
    m1 = make_m1()
    for k in (0, 1, 3):
        d = 2.0 ** -k
        assert policy_growth_rate(m1, Policy([0]), k) == pytest.approx(-0.5 - 1.0 / d, abs=1e-12)


def test_m2_jump_at_b(m2):
    v = policy_growth_rate(m2, Policy([CONTINUE, 0]), 0)
    assert v == pytest.approx(m2_jump_at_b_rate(1.0), abs=1e-13)
    assert v > R_M2


def test_policy_validation(m2, m3):
    with pytest.raises(PreconditionError):
        policy_growth_rate(m2, Policy([1, CONTINUE]), 0)  # 1 is not in U
    with pytest.raises(PreconditionError):
        policy_growth_rate(m3, Policy([CONTINUE, CONTINUE, CONTINUE], level=0), 0)


def test_oracle_examples(m1, m2, m3):
    r = oracle_lambda(m1, 0)
    assert r.best_value == pytest.approx(-0.5, abs=1e-14) and len(r.table) == 2
    assert r.best_policy.action.tolist() == [CONTINUE]
    r2 = oracle_lambda(m2, 0)
    assert r2.best_value == pytest.approx(solve_one_step(m2, 0, 0).lambda_m_delta, abs=1e-8)
    r3 = oracle_lambda(m3, 0, level=0)
    assert len(r3.table) == 4
    assert r3.best_value == pytest.approx(solve_one_step(m3, 0, 0).lambda_m_delta, abs=1e-8)


def test_oracle_table_matches_bruteforce(m3):
    r = oracle_lambda(m3, 1)
    K = weighted_kernel(m3, 0.5).matrix
    for p, v, per in r.table:
        assert per is None
        assert v == pytest.approx(policy_value_bruteforce(K, m3.shift_cost, m3.impulse_set,
                                                          p.action.tolist(), 0.5), abs=1e-12)


def test_enumeration_order_and_cap(m2):
    acts = [a.tolist() for a in enumerate_policies(m2)]
    assert acts == [[-1, -1], [-1, 0], [0, -1], [0, 0]]
    with pytest.raises(EnumerationCapError):
        oracle_lambda(m2, 0, cap=3)


def test_tie_breaks_lexicographically():
    # identical states: every policy that jumps is worse, ties between equal values keep the first
    spec = make_m2(running_cost=[-1.0, -1.0])
    r = oracle_lambda(spec, 0)
    assert r.best_policy.action.tolist() == [CONTINUE, CONTINUE]


def test_per_state_rates_reducible():
    # absorbing-ish structure: state 1 never returns to 0
    spec = make_m2(generator=[[-1.0, 1.0], [0.0, 0.0]], running_cost=[0.0, -1.0])
    rates = per_state_growth_rates(spec, never_impulse(spec), 0)
    assert rates[1] == pytest.approx(-1.0, abs=1e-12)
    assert rates[0] == pytest.approx(-1.0, abs=1e-12)  # state 0 decays at rate 1 as well
    assert policy_growth_rate(spec, never_impulse(spec), 0, start=1) == pytest.approx(-1.0, abs=1e-12)
    r = oracle_lambda(spec, 0)
    assert any(per is not None for _, _, per in r.table)


def test_chained_jumps_never_win(m2):
    spec = make_m2(impulse_set=[0, 1], shift_cost=[[-0.1, -0.15], [-0.12, -0.1]])
    rep = chained_jump_check(spec, oracle_lambda(spec, 1))
    assert rep.checked > 0
    assert rep.max_chain_minus_collapsed <= 1e-12 and rep.max_chain_minus_best <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_strategy_attains_oracle(seed):
    spec = random_model(np.random.default_rng(seed))
    s = lambda_full(spec)
    if s.degenerate:
        return
    pol = strategy_from_solution(spec, s)
    o = oracle_lambda(spec, s.k)
    assert policy_growth_rate(spec, pol, s.k) == pytest.approx(o.best_value, abs=1e-8)
    # shifting w by a constant shifts Mw by the same constant: same actions
    shifted = type(s)(**{**s.__dict__, "w": s.w + 3.0})
    assert np.array_equal(strategy_from_solution(spec, shifted).action, pol.action)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_never_impulse_is_semigroup_type(seed):
    spec = random_model(np.random.default_rng(seed))
    assert policy_growth_rate(spec, never_impulse(spec), 1) == pytest.approx(semigroup_type(spec), abs=1e-10)
