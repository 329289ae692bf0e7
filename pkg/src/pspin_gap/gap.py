"""Inverse spectral gap of the cavity-weighted Dirichlet form.

For a measure mu on the free configurations the Dirichlet form is

    D(f) = sum_j < cosh^{-2}(B_j) (d_j f)^2 >

and ``a = sup Var(f) / D(f)`` over non-constant f. Both forms are quadratic in
the table of f and annihilate constants, so ``a`` is the top generalized
eigenvalue of (C, K) on any complement of the constants. We use the Walsh
characters prod_{i in S} sigma_i (S nonempty), which are an orthonormal basis
of the Euclidean complement of the constant vector.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .gibbs import GibbsTable, gibbs_measure
from .model import (BudgetError, FunctionTable, SpinGlass, SubsystemContext,
                    count_subsystems, iter_subsystems, random_subsystem)

__all__ = [
    "GapResult",
    "SubsystemGap",
    "dirichlet_form",
    "dirichlet_matrix",
    "covariance_matrix",
    "inverse_spectral_gap",
    "max_subsystem_gap",
    "heat_bath_rates",
    "sech2",
    "glauber_generator",
    "generator_gap",
    "detailed_balance_defect",
    "GapComputationError",
]

log = logging.getLogger(__name__)

DEFAULT_EIGEN_BUDGET = 1 << 12
DEFAULT_MAX_CONTEXTS = 200_000
RESIDUAL_TOL = 1e-8


class GapComputationError(RuntimeError):
    """The Dirichlet form has a kernel beyond the constants (degenerate measure)."""


@dataclass
class GapResult:
    a: float
    witness: FunctionTable
    residual: float
    ctx: SubsystemContext

    def to_dict(self, include_witness: bool = False) -> dict:
        out = {"a": self.a, "residual": self.residual, "ctx": self.ctx.describe(),
               "n_free": self.ctx.n_free}
        if include_witness:
            out["witness"] = [float(x) for x in self.witness.values]
        return out

    def to_json(self, include_witness: bool = False) -> str:
        return json.dumps(self.to_dict(include_witness), sort_keys=True)


def sech2(x: np.ndarray) -> np.ndarray:
    """cosh^{-2}(x) without overflow for large |x|."""
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def heat_bath_rates(g: GibbsTable) -> np.ndarray:
    """c_j(sigma) = (1 - sigma_j tanh B_j(sigma)) / 2, shape (M, n_free)."""
    return 0.5 * (1.0 - g.spins() * np.tanh(g.fields))


def dirichlet_form(g: GibbsTable, f: FunctionTable) -> float:
    if f.ctx != g.ctx:
        raise ValueError("function table and measure live on different contexts")
    total = 0.0
    weights = sech2(g.fields)
    for b, site in enumerate(g.ctx.free_sites):
        d = 0.5 * (f.values - f.values[f.flip_index(site)])
        total += float(g.prob @ (weights[:, b] * d * d))
    return total


def dirichlet_matrix(g: GibbsTable) -> np.ndarray:
    """Matrix K with f^T K f = D(f): a weighted graph Laplacian on the hypercube.

    Each edge {sigma, sigma^j} carries (mu(sigma) + mu(sigma^j)) cosh^{-2}(B_j) / 4,
    B_j being the same at both ends.
    """
    m = g.ctx.n_states
    idx = np.arange(m)
    weights = sech2(g.fields)
    K = np.zeros((m, m))
    for b in range(g.ctx.n_free):
        flip = idx ^ (1 << b)
        # visiting sigma and its flip separately supplies mu(sigma) and mu(sigma^j)
        w = 0.25 * g.prob * weights[:, b]
        K[idx, idx] += w
        K[flip, flip] += w
        K[idx, flip] -= w
        K[flip, idx] -= w
    return K


def covariance_matrix(g: GibbsTable) -> np.ndarray:
    return np.diag(g.prob) - np.outer(g.prob, g.prob)


@lru_cache(maxsize=16)
def _walsh_basis(n_free: int) -> np.ndarray:
    m = 1 << n_free
    basis = linalg.hadamard(m).astype(float) / np.sqrt(m)
    basis = basis[:, 1:]
    basis.setflags(write=False)
    return basis


def _solve_top(C: np.ndarray, K: np.ndarray, n_free: int):
    Q = _walsh_basis(n_free)
    Cq = Q.T @ C @ Q
    Kq = Q.T @ K @ Q
    try:
        L = linalg.cholesky(0.5 * (Kq + Kq.T), lower=True)
    except linalg.LinAlgError as exc:
        raise GapComputationError("Dirichlet form is singular beyond the constants") from exc
    A = linalg.solve_triangular(L, linalg.solve_triangular(L, Cq, lower=True).T, lower=True)
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    vals, vecs = linalg.eigh(A, subset_by_index=[n - 1, n - 1])
    coeff = linalg.solve_triangular(L.T, vecs[:, 0], lower=False)
    return float(vals[0]), Q @ coeff


def _refine(C, K, a, w, iters=3):
    """Shifted inverse iteration on (C - a K) w = K w_prev, restricted to mean zero."""
    m = len(w)
    ones = np.ones(m) / np.sqrt(m)
    for _ in range(iters):
        shifted = C - (a + 1e-12) * K + np.outer(ones, ones)
        try:
            w = linalg.solve(shifted, K @ w, assume_a="sym")
        except linalg.LinAlgError:
            break
        w -= ones * (ones @ w)
        a = float(w @ C @ w) / float(w @ K @ w)
    return a, w


def inverse_spectral_gap(model: SpinGlass, ctx: SubsystemContext,
                         max_states: int = DEFAULT_EIGEN_BUDGET,
                         gibbs: GibbsTable | None = None) -> GapResult:
    if ctx.n_states > max_states:
        raise BudgetError(f"eigenproblem of size 2^{ctx.n_free} exceeds the budget {max_states}")
    if ctx.n_free == 0:
        raise ValueError("a subsystem without free spins has no spectral gap")
    g = gibbs if gibbs is not None else gibbs_measure(model, ctx)
    C = covariance_matrix(g)
    K = dirichlet_matrix(g)
    a, w = _solve_top(C, K, ctx.n_free)
    scale = np.linalg.norm(w)
    residual = float(np.linalg.norm(C @ w - a * K @ w)) / scale
    if residual > RESIDUAL_TOL:
        a, w = _refine(C, K, a, w)
        scale = np.linalg.norm(w)
        residual = float(np.linalg.norm(C @ w - a * K @ w)) / scale
        if residual > RESIDUAL_TOL:
            log.warning("gap residual %.3g above tolerance for %s", residual, ctx.describe())
    w = w - g.prob @ w
    w = w / np.linalg.norm(w)
    if w[np.argmax(np.abs(w))] < 0:
        w = -w
    return GapResult(a, FunctionTable(ctx, w), residual, ctx)


# --------------------------------------------------------------------------- subsystem maxima

@dataclass
class SubsystemGap:
    a: float
    argmax: SubsystemContext
    k: int
    exact: bool
    n_evaluated: int
    values: list = field(default_factory=list, repr=False)


def _gap_of(args):
    model, ctx = args
    return inverse_spectral_gap(model, ctx).a


def max_subsystem_gap(model: SpinGlass, k: int, samples: int | None = None,
                      rng: np.random.Generator | None = None,
                      max_contexts: int = DEFAULT_MAX_CONTEXTS, workers: int = 1,
                      keep_values: bool = False) -> SubsystemGap:
    """a_{N-k}: the largest inverse gap over every (A, B, sigma_A) with |A u B| = k.

    With ``samples`` set, that many subsystems are drawn uniformly instead and
    the result is only a lower bound (``exact=False``). Exact results are
    memoized on the model.
    """
    n = model.n
    if not 0 <= k <= n - 1:
        raise ValueError(f"k must lie in [0, {n - 1}], got {k}")
    key = ("max_gap", k)
    if samples is None and key in model.cache and not keep_values:
        return model.cache[key]
    if samples is None:
        total = count_subsystems(n, k)
        if total > max_contexts:
            raise BudgetError(f"{total} subsystems at k={k} exceed {max_contexts}; use sampling")
        contexts = list(iter_subsystems(n, k))
    else:
        rng = rng if rng is not None else np.random.default_rng(model.spec.seed)
        contexts = [random_subsystem(n, k, rng) for _ in range(samples)]
    if workers > 1 and len(contexts) > 64:
        with ProcessPoolExecutor(workers) as pool:
            values = list(pool.map(_gap_of, [(model, c) for c in contexts], chunksize=64))
    else:
        values = [inverse_spectral_gap(model, c).a for c in contexts]
    best = int(np.argmax(values))
    result = SubsystemGap(float(values[best]), contexts[best], k, samples is None,
                          len(contexts), values if keep_values else [])
    if samples is None and not keep_values:
        model.cache[key] = result
    return result


# --------------------------------------------------------------------------- generator cross-check

def glauber_generator(g: GibbsTable) -> np.ndarray:
    """Continuous-time heat-bath generator: rate c_j(sigma) for each single flip."""
    m = g.ctx.n_states
    idx = np.arange(m)
    rates = heat_bath_rates(g)
    L = np.zeros((m, m))
    for b in range(g.ctx.n_free):
        L[idx, idx ^ (1 << b)] = rates[:, b]
    L[idx, idx] = -L.sum(axis=1)
    return L


def detailed_balance_defect(g: GibbsTable, L: np.ndarray) -> float:
    flux = g.prob[:, None] * L
    return float(np.max(np.abs(flux - flux.T)))


def generator_gap(g: GibbsTable, L: np.ndarray) -> float:
    """Second-smallest eigenvalue of -L after mu^{1/2} conjugation."""
    r = np.sqrt(g.prob)
    S = -(r[:, None] * L / r[None, :])
    S = 0.5 * (S + S.T)
    vals = linalg.eigvalsh(S, subset_by_index=[0, 1])
    return float(vals[1])
