"""Exact conditional Gibbs measures over the free configurations of a subsystem."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import (BudgetError, FunctionTable, SpinGlass, SubsystemContext,
                    spin_matrix)

__all__ = [
    "GibbsTable",
    "CorrelationMatrices",
    "gibbs_measure",
    "expectation",
    "covariance",
    "correlation_matrices",
    "single_spin_variance_identity",
    "restrict",
    "total_variance",
    "dump_gibbs_csv",
]

DEFAULT_MAX_STATES = 1 << 20


@dataclass(frozen=True)
class GibbsTable:
    """mu(sigma) proportional to exp(+H^{[A,B]}(sigma)).

    ``fields`` caches the cavity fields of the free sites (columns in
    ``ctx.free_sites`` order) since nearly every consumer needs them.
    """

    ctx: SubsystemContext
    prob: np.ndarray
    log_z: float
    energy: np.ndarray
    fields: np.ndarray

    def expect(self, values: np.ndarray) -> float | np.ndarray:
        return self.prob @ values

    def spins(self) -> np.ndarray:
        """Free spins as columns, shape (M, n_free)."""
        return spin_matrix(self.ctx)[:, list(self.ctx.free_sites)]

    def magnetizations(self) -> np.ndarray:
        return self.prob @ self.spins()


def gibbs_measure(model: SpinGlass, ctx: SubsystemContext,
                  max_states: int = DEFAULT_MAX_STATES) -> GibbsTable:
    if ctx.n_spins != model.n:
        raise ValueError("context and model disagree on N")
    if ctx.n_states > max_states:
        raise BudgetError(f"2^{ctx.n_free} states exceed the cap of {max_states}")
    energy = model.energies(ctx)
    log_z = float(logsumexp(energy))
    prob = np.exp(energy - log_z)
    prob /= prob.sum()
    return GibbsTable(ctx, prob, log_z, energy, model.cavity_fields(ctx))


def _check(g: GibbsTable, *tables: FunctionTable) -> None:
    for t in tables:
        if t.ctx != g.ctx:
            raise ValueError(f"function table context {t.ctx.describe()} does not match "
                             f"measure context {g.ctx.describe()}")


def expectation(g: GibbsTable, f: FunctionTable) -> float:
    _check(g, f)
    return float(g.prob @ f.values)


def covariance(g: GibbsTable, f1: FunctionTable, f2: FunctionTable) -> float:
    _check(g, f1, f2)
    m1 = g.prob @ f1.values
    m2 = g.prob @ f2.values
    # centred form is more accurate than <f1 f2> - <f1><f2>
    return float(g.prob @ ((f1.values - m1) * (f2.values - m2)))


@dataclass(frozen=True)
class CorrelationMatrices:
    m: np.ndarray
    M: np.ndarray
    Lambda: np.ndarray

    def normalized(self) -> np.ndarray:
        """Lambda^{1/2} M Lambda^{1/2}; unit diagonal."""
        d = np.sqrt(np.diag(self.Lambda))
        return d[:, None] * self.M * d[None, :]

    def normalized_norm(self) -> float:
        return float(np.linalg.eigvalsh(self.normalized())[-1])


def correlation_matrices(g: GibbsTable) -> CorrelationMatrices:
    s = g.spins()
    m = g.prob @ s
    centred = s - m
    M = (centred * g.prob[:, None]).T @ centred
    M = 0.5 * (M + M.T)
    return CorrelationMatrices(m, M, np.diag(1.0 / (1.0 - m**2)))


def single_spin_variance_identity(g: GibbsTable, f: FunctionTable, site: int,
                                  tol: float = 1e-12) -> tuple[float, float]:
    """Both sides of <f;f> = <f;sigma_j>^2 / (1 - m_j^2) for f depending on sigma_j only."""
    _check(g, f)
    g.ctx.bit(site)
    spin = spin_matrix(g.ctx)[:, site]
    scale = max(1.0, float(np.max(np.abs(f.values))))
    if any(np.ptp(f.values[spin == v]) > tol * scale for v in (-1, 1)):
        raise ValueError(f"function is not a function of sigma_{site} alone")
    sj = FunctionTable(g.ctx, spin)
    m = expectation(g, sj)
    lhs = covariance(g, f, f)
    rhs = covariance(g, f, sj) ** 2 / (1.0 - m * m)
    return lhs, rhs


def restrict(f: FunctionTable, site: int, value: int) -> FunctionTable:
    """f with sigma_site fixed at ``value``, as a table on ctx.freeze(site, value)."""
    ctx = f.ctx
    b = ctx.bit(site)
    child = ctx.freeze(site, value)
    idx = np.arange(child.n_states)
    low = idx & ((1 << b) - 1)
    high = (idx >> b) << (b + 1)
    parent_idx = high | low | ((1 << b) if value > 0 else 0)
    return FunctionTable(child, f.values[parent_idx])


def total_variance(model: SpinGlass, g: GibbsTable, f: FunctionTable, site: int
                   ) -> tuple[float, float, float]:
    """(<f;f>, <<f;f>_child>, <<f>_child ; <f>_child>) with child = [A u {j}, B].

    The conditional measures are built from scratch on the frozen contexts so
    the decomposition is checked rather than assumed.
    """
    _check(g, f)
    spin = spin_matrix(g.ctx)[:, site]
    within = 0.0
    cond_mean = np.empty_like(f.values)
    for value in (-1, 1):
        part = restrict(f, site, value)
        child = gibbs_measure(model, part.ctx)
        weight = float(g.prob[spin == value].sum())
        within += weight * covariance(child, part, part)
        cond_mean[spin == value] = expectation(child, part)
    cm = FunctionTable(g.ctx, cond_mean)
    return covariance(g, f, f), within, covariance(g, cm, cm)


def dump_gibbs_csv(g: GibbsTable, path) -> None:
    n = g.ctx.n_free
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "bits", "probability"])
        for i, p in enumerate(g.prob):
            # most significant character is the last free site
            w.writerow([i, format(i, f"0{n}b") if n else "", repr(float(p))])
