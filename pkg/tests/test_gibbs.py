import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from oracles import brute_gibbs
from pspin_gap.gibbs import (correlation_matrices, covariance, dump_gibbs_csv, expectation,
                             gibbs_measure, restrict, single_spin_variance_identity,
                             total_variance)
from pspin_gap.model import (BudgetError, FunctionTable, ModelSpec, SpinGlass,
                             SubsystemContext, random_subsystem, spin_matrix)


def instance(seed, n, beta2=0.5, beta3=0.3):
    rng = np.random.default_rng(seed)
    spec = ModelSpec(n, ((2, beta2), (3, beta3)), tuple(rng.normal(size=n)), seed)
    return SpinGlass(spec), rng


@pytest.mark.parametrize("seed", range(3))
def test_gibbs_matches_brute_force(seed):
    model, rng = instance(seed, 4)
    ctx = random_subsystem(4, int(rng.integers(0, 3)), rng)
    g = gibbs_measure(model, ctx)
    assert np.allclose(g.prob, brute_gibbs(model.spec, model.disorder, ctx), atol=1e-13)
    assert g.prob.sum() == pytest.approx(1.0, abs=1e-14)
    assert g.log_z == pytest.approx(logsumexp(model.energies(ctx)), abs=1e-13)


def test_coin_toss():
    model = SpinGlass(ModelSpec(1, (), (0.8,)))
    g = gibbs_measure(model, SubsystemContext.full(1))
    assert g.prob[1] == pytest.approx(math.exp(0.8) / (2 * math.cosh(0.8)), abs=1e-15)
    assert g.magnetizations()[0] == pytest.approx(math.tanh(0.8), abs=1e-15)


def test_state_budget():
    model = SpinGlass(ModelSpec(6, ()))
    with pytest.raises(BudgetError):
        gibbs_measure(model, SubsystemContext.full(6), max_states=32)


def test_context_mismatch_raises():
    model, _ = instance(0, 3)
    g = gibbs_measure(model, SubsystemContext.full(3))
    f = FunctionTable.constant(SubsystemContext(3, removed=(0,)))
    with pytest.raises(ValueError):
        expectation(g, f)
    with pytest.raises(ValueError):
        covariance(g, f, f)


def test_product_measure_correlations():
    eta = (0.3, -1.2, 0.0, 2.0)
    model = SpinGlass(ModelSpec(4, (), eta))
    cm = correlation_matrices(gibbs_measure(model, SubsystemContext.full(4)))
    m = np.tanh(eta)
    assert np.allclose(cm.m, m, atol=1e-14)
    assert np.allclose(cm.M, np.diag(1 - m**2), atol=1e-14)
    assert np.allclose(cm.normalized(), np.eye(4), atol=1e-13)
    assert cm.normalized_norm() == pytest.approx(1.0, abs=1e-13)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(2, 6))
def test_normalized_correlation_has_unit_diagonal(seed, n):
    model, rng = instance(seed, n)
    ctx = random_subsystem(n, int(rng.integers(0, n - 1)), rng)
    cm = correlation_matrices(gibbs_measure(model, ctx))
    assert np.allclose(np.diag(cm.normalized()), 1.0, atol=1e-12)
    assert cm.normalized_norm() >= 1.0 - 1e-12
    assert np.linalg.eigvalsh(cm.M)[0] >= -1e-14


def test_single_spin_variance_identity():
    model, rng = instance(4, 5)
    ctx = SubsystemContext(5, removed=(2,))
    g = gibbs_measure(model, ctx)
    s = spin_matrix(ctx)[:, 3]
    f = FunctionTable(ctx, 2.0 * s - 0.7)
    lhs, rhs = single_spin_variance_identity(g, f, 3)
    assert lhs == pytest.approx(rhs, abs=1e-13)
    with pytest.raises(ValueError):
        single_spin_variance_identity(g, FunctionTable.random(ctx, rng), 3)


def test_restrict_picks_matching_rows():
    ctx = SubsystemContext(4, removed=(1,))
    f = FunctionTable(ctx, np.arange(8.0))
    for value in (-1, 1):
        r = restrict(f, 2, value)
        child_s = spin_matrix(r.ctx)
        parent_s = spin_matrix(ctx)
        for i, row in enumerate(child_s):
            match = np.nonzero(np.all(parent_s == row, axis=1))[0]
            assert len(match) == 1 and r.values[i] == f.values[match[0]]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(2, 6))
def test_total_variance_formula(seed, n):
    model, rng = instance(seed, n)
    ctx = random_subsystem(n, int(rng.integers(0, n - 1)), rng)
    g = gibbs_measure(model, ctx)
    f = FunctionTable.random(ctx, rng)
    j = ctx.free_sites[int(rng.integers(ctx.n_free))]
    var, within, between = total_variance(model, g, f, j)
    assert var == pytest.approx(within + between, abs=1e-12)


def test_covariance_is_bilinear_and_symmetric():
    model, rng = instance(8, 4)
    ctx = SubsystemContext.full(4)
    g = gibbs_measure(model, ctx)
    f1, f2, f3 = (FunctionTable.random(ctx, rng) for _ in range(3))
    assert covariance(g, f1, f2) == pytest.approx(covariance(g, f2, f1), abs=1e-15)
    assert covariance(g, f1 + f3 * 2.0, f2) == pytest.approx(
        covariance(g, f1, f2) + 2 * covariance(g, f3, f2), abs=1e-13)
    assert covariance(g, FunctionTable.constant(ctx, 3.0), f1) == pytest.approx(0.0, abs=1e-15)


def test_dump_csv(tmp_path):
    model, _ = instance(1, 3)
    ctx = SubsystemContext(3, frozen=(0,), frozen_config=(1,))
    g = gibbs_measure(model, ctx)
    path = tmp_path / "g.csv"
    dump_gibbs_csv(g, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["index", "bits", "probability"]
    assert [r[1] for r in rows[1:]] == ["00", "01", "10", "11"]
    assert sum(float(r[2]) for r in rows[1:]) == pytest.approx(1.0)
