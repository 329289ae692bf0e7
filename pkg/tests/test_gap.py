import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from oracles import rayleigh_max
from pspin_gap.gap import (GapComputationError, covariance_matrix, detailed_balance_defect,
                           dirichlet_form, dirichlet_matrix, generator_gap, glauber_generator,
                           heat_bath_rates, inverse_spectral_gap, max_subsystem_gap)
from pspin_gap.gibbs import covariance, gibbs_measure
from pspin_gap.model import (BudgetError, FunctionTable, ModelSpec, SpinGlass,
                             SubsystemContext, random_subsystem)


def instance(seed, n, beta2=0.4, beta3=0.2):
    rng = np.random.default_rng(seed)
    spec = ModelSpec(n, ((2, beta2), (3, beta3)), tuple(0.5 * rng.normal(size=n)), seed)
    return SpinGlass(spec), rng


def test_single_spin_gap_is_one():
    # base case of the induction: a_1 = 1
    for t in (-3.0, -0.4, 0.0, 1.7):
        model = SpinGlass(ModelSpec(1, (), (t,)))
        assert inverse_spectral_gap(model, SubsystemContext.full(1)).a == pytest.approx(1.0, abs=1e-12)


def test_product_measure_gap_is_one():
    rng = np.random.default_rng(2)
    model = SpinGlass(ModelSpec(5, ((2, 0.0),), tuple(rng.uniform(-2, 2, 5))))
    assert inverse_spectral_gap(model, SubsystemContext.full(5)).a == pytest.approx(1.0, abs=1e-10)


def test_dirichlet_matrix_represents_form():
    model, rng = instance(3, 4)
    ctx = SubsystemContext(4, frozen=(1,), frozen_config=(-1,))
    g = gibbs_measure(model, ctx)
    K = dirichlet_matrix(g)
    C = covariance_matrix(g)
    for _ in range(5):
        f = FunctionTable.random(ctx, rng)
        assert f.values @ K @ f.values == pytest.approx(dirichlet_form(g, f), rel=1e-12)
        assert f.values @ C @ f.values == pytest.approx(covariance(g, f, f), rel=1e-12)
    assert np.allclose(K @ np.ones(len(K)), 0, atol=1e-15)


def test_gap_against_independent_generalized_solver():
    model, _ = instance(5, 5)
    ctx = SubsystemContext(5, removed=(0,))
    g = gibbs_measure(model, ctx)
    C, K = covariance_matrix(g), dirichlet_matrix(g)
    # orthonormal complement of the constants from a QR factorization
    m = len(C)
    Q, _ = np.linalg.qr(np.column_stack([np.ones(m), np.random.default_rng(0).normal(size=(m, m - 1))]))
    Q = Q[:, 1:]
    ref = linalg.eigh(Q.T @ C @ Q, Q.T @ K @ Q, eigvals_only=True)[-1]
    assert inverse_spectral_gap(model, ctx).a == pytest.approx(ref, rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 6))
def test_witness_attains_sup(seed, n):
    model, rng = instance(seed, n)
    ctx = random_subsystem(n, int(rng.integers(0, n)), rng)
    res = inverse_spectral_gap(model, ctx)
    g = gibbs_measure(model, ctx)
    w = res.witness
    assert res.residual <= 1e-8
    assert abs(g.prob @ w.values) <= 1e-12
    assert np.linalg.norm(w.values) == pytest.approx(1.0, abs=1e-12)
    assert covariance(g, w, w) / dirichlet_form(g, w) == pytest.approx(res.a, rel=1e-9)
    assert res.a >= 1.0 - 1e-10
    assert res.a >= rayleigh_max(covariance_matrix(g), dirichlet_matrix(g), trials=200, rng=rng) - 1e-10


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(2, 6))
def test_variational_equals_generator_gap(seed, n):
    model, rng = instance(seed, n)
    ctx = random_subsystem(n, int(rng.integers(0, n - 1)), rng)
    g = gibbs_measure(model, ctx)
    L = glauber_generator(g)
    assert detailed_balance_defect(g, L) <= 1e-15
    assert np.allclose(L.sum(axis=1), 0, atol=1e-14)
    assert inverse_spectral_gap(model, ctx).a == pytest.approx(1 / generator_gap(g, L), rel=1e-9)


def test_heat_bath_rates_saturate():
    model = SpinGlass(ModelSpec(1, (), (40.0,)))
    g = gibbs_measure(model, SubsystemContext.full(1))
    rates = heat_bath_rates(g)
    # leaving +1 is suppressed, leaving -1 is certain
    assert rates[1, 0] == pytest.approx(0.0, abs=1e-15)
    assert rates[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_gap_errors():
    model = SpinGlass(ModelSpec(4, ((2, 0.5),), (), 1))
    with pytest.raises(BudgetError):
        inverse_spectral_gap(model, SubsystemContext.full(4), max_states=8)
    with pytest.raises(ValueError):
        inverse_spectral_gap(model, SubsystemContext(4, removed=(0, 1, 2, 3)))
    # a saturated field makes the Dirichlet form degenerate
    frozen = SpinGlass(ModelSpec(2, (), (800.0, 0.0)))
    with pytest.raises(GapComputationError):
        inverse_spectral_gap(frozen, SubsystemContext.full(2))


def test_gap_result_json():
    model, _ = instance(0, 3)
    res = inverse_spectral_gap(model, SubsystemContext.full(3))
    d = json.loads(res.to_json(include_witness=True))
    assert d["a"] == res.a and len(d["witness"]) == 8
    assert d["ctx"] == {"frozen": [], "removed": [], "frozen_config": []}


def test_max_subsystem_gap():
    model, rng = instance(6, 5)
    assert max_subsystem_gap(model, 4).a == pytest.approx(1.0, abs=1e-12)
    exact = max_subsystem_gap(model, 2)
    assert exact.exact and exact.n_evaluated == 10 * 9
    assert max_subsystem_gap(model, 2) is exact
    assert inverse_spectral_gap(model, exact.argmax).a == exact.a
    sampled = max_subsystem_gap(model, 2, samples=20, rng=rng)
    assert not sampled.exact and sampled.a <= exact.a + 1e-12
    with pytest.raises(ValueError):
        max_subsystem_gap(model, 5)
    with pytest.raises(BudgetError):
        max_subsystem_gap(SpinGlass(model.spec), 2, max_contexts=10)


def test_max_subsystem_gap_parallel_matches_serial():
    model, _ = instance(7, 5)
    serial = max_subsystem_gap(model, 1, keep_values=True)
    parallel = max_subsystem_gap(SpinGlass(model.spec), 1, workers=2, keep_values=True)
    assert serial.values == parallel.values
