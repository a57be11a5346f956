import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsimpulse.errors import DimensionMismatchError, PreconditionError
from rsimpulse.operators import (apply_M, apply_tilde_M, apply_tilde_P, apply_tilde_T,
                                 domain_mask)
from rsimpulse.propagator import weighted_kernel
from rsimpulse.random_models import random_model

from conftest import make_two_impulse
from oracles import expm_taylor

seeds = st.integers(0, 2**32 - 1)


def test_apply_M_m1(m1):
    v, arg = apply_M(m1, [0.0])
    assert v.tolist() == [-1.0] and arg.tolist() == [0]


def test_apply_M_m2(m2):
    v, arg = apply_M(m2, [0.0, -0.3])
    assert np.allclose(v, [-0.1, -0.1]) and arg.tolist() == [0, 0]


def test_apply_M_two_impulses_and_ties():
    spec = make_two_impulse()
    v, arg = apply_M(spec, [0.0, -0.05, 7.0])
    assert v[0] == pytest.approx(-0.1) and arg[0] == 0
    tie = spec.replace(shift_cost=[[-0.1, -0.1]] * 3)
    v, arg = apply_M(tie, [0.0, 0.0, 0.0])
    assert arg.tolist() == [0, 0, 0]


def test_apply_tilde_M_examples(m1, m2):
    assert apply_tilde_M(m1, [1.0])[0] == pytest.approx(0.3678794412, abs=1e-10)
    h = np.exp([0.0, -0.3])
    assert np.allclose(apply_tilde_M(m2, h), np.exp(apply_M(m2, [0.0, -0.3])[0]), atol=1e-15)
    assert np.allclose(apply_tilde_M(m2, 2 * h), 2 * apply_tilde_M(m2, h), rtol=1e-15)


def test_apply_tilde_M_rejects_nonpositive(m2):
    with pytest.raises(PreconditionError):
        apply_tilde_M(m2, [0.0, 1.0])


def test_apply_tilde_P_examples(m1, m2, m3):
    K = weighted_kernel(m1, 1.0)
    assert apply_tilde_P(m1, K, domain_mask(m1, 0), [1.0])[0] == pytest.approx(math.exp(-0.5), abs=1e-15)
    K2 = weighted_kernel(m2, 1.0)
    out = apply_tilde_P(m2, K2, domain_mask(m2, 0), [1.0, 1.0])
    assert np.allclose(out, K2.matrix.sum(axis=1), atol=1e-15)
    # M3 on B_0: state 2 is outside, valued at e^{c(2,0)} h(0)
    K3 = expm_taylor(m3.generator + np.diag(m3.running_cost))
    ref = [K3[x, 0] + K3[x, 1] + K3[x, 2] * math.exp(-0.3) for x in (0, 1)]
    assert np.allclose(ref, [0.7447126498412023, 0.5630637774097912], atol=1e-13)
    got = apply_tilde_P(m3, weighted_kernel(m3, 1.0), domain_mask(m3, 0), [1.0, 1.0, 123.0])
    assert np.allclose(got[:2], ref, atol=1e-13)


def test_apply_tilde_P_dimension_mismatch(m2, m3):
    with pytest.raises(DimensionMismatchError):
        apply_tilde_P(m3, weighted_kernel(m2, 1.0), domain_mask(m3, 0), [1.0, 1.0, 1.0])


def test_apply_tilde_T_m1(m1):
    out = apply_tilde_T(m1, weighted_kernel(m1, 1.0), domain_mask(m1, 0), [1.0])
    assert out[0] == pytest.approx(math.exp(-0.5), abs=1e-15)


def test_tilde_T_homogeneous_m2(m2):
    K = weighted_kernel(m2, 1.0)
    mk = domain_mask(m2, 0)
    h = np.array([1.0, 0.4])
    assert np.allclose(apply_tilde_T(m2, K, mk, 3.7 * h), 3.7 * apply_tilde_T(m2, K, mk, h), rtol=1e-12)


def test_domain_masks_nested(m3):
    a, b = domain_mask(m3, 0).inside, domain_mask(m3, 1).inside
    assert np.all(a <= b) and b.all()
    with pytest.raises(PreconditionError):
        domain_mask(m3, 2)


@settings(max_examples=50, deadline=None)
@given(seeds, st.lists(st.floats(-20, 20), min_size=5, max_size=5))
def test_log_exp_conjugacy(seed, g):
    spec = random_model(np.random.default_rng(seed))
    g = np.array(g[: spec.n])
    assert np.allclose(np.log(apply_tilde_M(spec, np.exp(g))), apply_M(spec, g)[0], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(-10, 10))
def test_apply_M_argmax_invariant_under_constants(seed, shift):
    rng = np.random.default_rng(seed)
    spec = random_model(rng)
    h = rng.normal(size=spec.n)
    assert np.array_equal(apply_M(spec, h)[1], apply_M(spec, h + shift)[1])


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(0.01, 100.0), st.integers(0, 3))
def test_tilde_T_homogeneous_and_monotone(seed, alpha, k):
    rng = np.random.default_rng(seed)
    spec = random_model(rng)
    K = weighted_kernel(spec, 2.0 ** -k)
    for m in range(spec.top_level + 1):
        mk = domain_mask(spec, m)
        h1 = rng.uniform(0.1, 2.0, spec.n)
        h2 = h1 + rng.uniform(0.0, 1.0, spec.n)
        T1 = apply_tilde_T(spec, K, mk, h1)
        assert np.allclose(apply_tilde_T(spec, K, mk, alpha * h1), alpha * T1, rtol=1e-12)
        assert np.all(apply_tilde_T(spec, K, mk, h2) >= T1 * (1 - 1e-15))


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(0, 3))
def test_tilde_T_lower_bound(seed, k):
    spec = random_model(np.random.default_rng(seed))
    delta = 2.0 ** -k
    K = weighted_kernel(spec, delta)
    bound = math.exp(-delta * np.max(np.abs(spec.running_cost)) - spec.c_norm)
    for m in range(spec.top_level + 1):
        mk = domain_mask(spec, m)
        out = apply_tilde_T(spec, K, mk, np.ones(spec.n))
        assert np.all(out[mk.inside] >= bound * (1 - 1e-14))
