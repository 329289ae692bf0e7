"""Mixed p-spin model: disorder sampling, energies and cavity fields on subsystems.

A subsystem ``[A, B]`` freezes the spins in ``A`` at ``frozen_config`` and
deletes the spins in ``B`` from the Hamiltonian. Everything below is evaluated
through the full-length vector ``s`` with ``s_i = sigma_i`` on free and frozen
sites and ``s_i = 0`` on removed ones; because couplings vanish on repeated
indices the Hamiltonian is multilinear in ``s`` and removal is exactly
"setting sigma_B to zero".

Configuration tables are indexed by an integer whose bit ``b`` is set when the
``b``-th free site (ascending site order) is +1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
from scipy.special import ndtri

__all__ = [
    "BudgetError",
    "ModelSpec",
    "Disorder",
    "SubsystemContext",
    "FunctionTable",
    "SpinGlass",
    "sample_disorder",
    "coupling_value",
    "beta_aggregate",
    "c_beta",
    "discrete_derivative",
    "spin_matrix",
    "iter_subsystems",
    "count_subsystems",
    "random_subsystem",
    "spin_vector",
]

DEFAULT_MAX_ENTRIES = 10**8
# Each coordinate of a coupling prefix is packed into 16 bits of the Philox counter.
_COORD_BITS = 16
_MAX_PREFIX_LEN = 8


class BudgetError(RuntimeError):
    """Raised when a dense table or an enumeration would exceed its configured cap."""


@dataclass(frozen=True)
class ModelSpec:
    n_spins: int
    mixing: tuple[tuple[int, float], ...]
    external_field: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if int(self.n_spins) < 1:
            raise ValueError(f"n_spins must be positive, got {self.n_spins}")
        object.__setattr__(self, "n_spins", int(self.n_spins))
        mixing = tuple((int(p), float(b)) for p, b in self.mixing)
        ps = [p for p, _ in mixing]
        if any(p < 2 for p in ps):
            raise ValueError(f"every p must be >= 2, got {ps}")
        if any(b2 <= b1 for b1, b2 in zip(ps, ps[1:])):
            raise ValueError(f"mixing must be strictly increasing in p, got {ps}")
        if any(not (b >= 0.0) or not math.isfinite(b) for _, b in mixing):
            raise ValueError("beta_p must be finite and nonnegative")
        object.__setattr__(self, "mixing", mixing)
        eta = tuple(float(x) for x in self.external_field)
        if not eta:
            eta = (0.0,) * self.n_spins
        if len(eta) != self.n_spins:
            raise ValueError(f"external_field has {len(eta)} entries, expected {self.n_spins}")
        object.__setattr__(self, "external_field", eta)
        seed = int(self.seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", seed)

    @property
    def eta(self) -> np.ndarray:
        return np.asarray(self.external_field, dtype=float)

    def scaled(self, factor: float) -> "ModelSpec":
        """Same model with every beta_p multiplied by ``factor``."""
        return ModelSpec(self.n_spins, tuple((p, b * factor) for p, b in self.mixing),
                         self.external_field, self.seed)

    def with_seed(self, seed: int) -> "ModelSpec":
        return ModelSpec(self.n_spins, self.mixing, self.external_field, seed)

    def to_dict(self) -> dict:
        return {
            "n_spins": self.n_spins,
            "mixing": [[p, b] for p, b in self.mixing],
            "eta": list(self.external_field),
            "seed": self.seed,
        }


def beta_aggregate(spec: ModelSpec) -> float:
    """Aggregate temperature sum_p sqrt(p^3 log p) beta_p (natural log)."""
    return float(sum(math.sqrt(p**3 * math.log(p)) * b for p, b in spec.mixing))


def c_beta(beta: float) -> float:
    """(10^3 beta)^2 exp(10^3 beta); overflows to inf for beta above ~0.7."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    x = 1e3 * beta
    try:
        return x * x * math.exp(x)
    except OverflowError:
        return math.inf


# --------------------------------------------------------------------------- disorder

def _philox_key(seed: int, p: int) -> np.ndarray:
    return np.random.SeedSequence([seed, p]).generate_state(2, dtype=np.uint64)


def _prefix_counter(prefix: Sequence[int]) -> np.ndarray:
    if len(prefix) > _MAX_PREFIX_LEN:
        raise ValueError(f"coupling order p > {_MAX_PREFIX_LEN + 1} is not supported")
    words = [0, 0]
    for pos, i in enumerate(prefix):
        words[pos // 4] |= int(i) << (_COORD_BITS * (pos % 4))
    # word 0 is left to Philox for the in-row offset, word 3 is unused.
    return np.array([0, words[0], words[1], 0], dtype=np.uint64)


def _raw_to_normal(raw: np.ndarray) -> np.ndarray:
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def coupling_value(seed: int, p: int, index: Sequence[int]) -> float:
    """Single coupling g_{i_1...i_p} by random access into the keyed stream.

    Independent of the bulk path in :func:`sample_disorder` except for sharing
    the key/counter layout, so it doubles as a reproducibility oracle.
    """
    index = tuple(int(i) for i in index)
    if len(index) != p:
        raise ValueError("index length must equal p")
    if len(set(index)) < p:
        return 0.0
    gen = np.random.Philox(key=_philox_key(seed, p), counter=_prefix_counter(index[:-1]))
    raw = gen.random_raw(index[-1] + 1)[-1:]
    return float(_raw_to_normal(raw)[0])


@dataclass(frozen=True)
class Disorder:
    """Dense couplings per p, shape (N,)*p, indexed by ordered tuples."""

    n_spins: int
    couplings: dict = field(default_factory=dict)

    def __post_init__(self):
        for p, g in self.couplings.items():
            if g.shape != (self.n_spins,) * p:
                raise ValueError(f"coupling array for p={p} has shape {g.shape}")
            g.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, Disorder):
            return NotImplemented
        return (self.n_spins == other.n_spins
                and self.couplings.keys() == other.couplings.keys()
                and all(np.array_equal(g, other.couplings[p]) for p, g in self.couplings.items()))

    __hash__ = None


def sample_disorder(spec: ModelSpec, max_entries: int = DEFAULT_MAX_ENTRIES) -> Disorder:
    """Draw the Gaussian couplings of ``spec``; a pure function of ``spec.seed``.

    Raises:
        BudgetError: if sum_p N^p exceeds ``max_entries``.
    """
    n = spec.n_spins
    total = sum(n**p for p, _ in spec.mixing)
    if total > max_entries:
        raise BudgetError(f"dense disorder needs {total} entries, cap is {max_entries}")
    if n >= 2**_COORD_BITS:
        raise BudgetError("n_spins too large for the coupling counter layout")
    couplings = {}
    for p, _ in spec.mixing:
        key = _philox_key(spec.seed, p)
        g = np.empty((n,) * p)
        rows = g.reshape(-1, n)
        for r, prefix in enumerate(itertools.product(range(n), repeat=p - 1)):
            gen = np.random.Philox(key=key, counter=_prefix_counter(prefix))
            rows[r] = _raw_to_normal(gen.random_raw(n))
        g[_repeated_index_mask(n, p)] = 0.0
        couplings[p] = g
    return Disorder(n, couplings)


def _repeated_index_mask(n: int, p: int) -> np.ndarray:
    idx = np.indices((n,) * p)
    mask = np.zeros((n,) * p, dtype=bool)
    for a in range(p):
        for b in range(a + 1, p):
            mask |= idx[a] == idx[b]
    return mask


# --------------------------------------------------------------------------- subsystems

@dataclass(frozen=True)
class SubsystemContext:
    """Disjoint frozen set A (with its spins) and removed set B; sites are 0-based."""

    n_spins: int
    frozen: tuple[int, ...] = ()
    removed: tuple[int, ...] = ()
    frozen_config: tuple[int, ...] = ()

    def __post_init__(self):
        pairs = sorted(zip((int(a) for a in self.frozen), (int(v) for v in self.frozen_config)))
        if len(self.frozen) != len(self.frozen_config):
            raise ValueError("frozen_config must have one sign per frozen site")
        frozen = tuple(a for a, _ in pairs)
        config = tuple(v for _, v in pairs)
        removed = tuple(sorted(int(b) for b in self.removed))
        if any(v not in (-1, 1) for v in config):
            raise ValueError("frozen spins must be +1 or -1")
        sites = frozen + removed
        if len(set(sites)) != len(sites):
            raise ValueError("frozen and removed sets must be disjoint and duplicate-free")
        if any(not 0 <= s < self.n_spins for s in sites):
            raise ValueError("site index out of range")
        object.__setattr__(self, "frozen", frozen)
        object.__setattr__(self, "frozen_config", config)
        object.__setattr__(self, "removed", removed)

    @classmethod
    def full(cls, n_spins: int) -> "SubsystemContext":
        return cls(n_spins)

    @property
    def free_sites(self) -> tuple[int, ...]:
        taken = set(self.frozen) | set(self.removed)
        return tuple(i for i in range(self.n_spins) if i not in taken)

    @property
    def k(self) -> int:
        return len(self.frozen) + len(self.removed)

    @property
    def n_free(self) -> int:
        return self.n_spins - self.k

    @property
    def n_states(self) -> int:
        return 1 << self.n_free

    def bit(self, site: int) -> int:
        """Bit position of a free site in the configuration index."""
        try:
            return self.free_sites.index(site)
        except ValueError:
            raise ValueError(f"site {site} is not free in {self.describe()}") from None

    def freeze(self, site: int, value: int) -> "SubsystemContext":
        self.bit(site)
        return SubsystemContext(self.n_spins, self.frozen + (site,), self.removed,
                                self.frozen_config + (int(value),))

    def remove(self, site: int) -> "SubsystemContext":
        self.bit(site)
        return SubsystemContext(self.n_spins, self.frozen, self.removed + (site,),
                                self.frozen_config)

    def describe(self) -> dict:
        return {"frozen": list(self.frozen), "removed": list(self.removed),
                "frozen_config": list(self.frozen_config)}


@lru_cache(maxsize=4096)
def _spin_matrix_cached(ctx: SubsystemContext) -> np.ndarray:
    n_states = ctx.n_states
    s = np.zeros((n_states, ctx.n_spins))
    idx = np.arange(n_states)
    for b, site in enumerate(ctx.free_sites):
        s[:, site] = np.where((idx >> b) & 1, 1.0, -1.0)
    for site, v in zip(ctx.frozen, ctx.frozen_config):
        s[:, site] = v
    s.setflags(write=False)
    return s


def spin_matrix(ctx: SubsystemContext) -> np.ndarray:
    """Rows are the vectors ``s`` of all free configurations, shape (2^n_free, N)."""
    return _spin_matrix_cached(ctx)


def spin_vector(ctx: SubsystemContext, sigma: int) -> np.ndarray:
    if not 0 <= sigma < ctx.n_states:
        raise ValueError(f"configuration index {sigma} out of range for {ctx.n_free} free spins")
    s = np.zeros(ctx.n_spins)
    for b, site in enumerate(ctx.free_sites):
        s[site] = 1.0 if (sigma >> b) & 1 else -1.0
    for site, v in zip(ctx.frozen, ctx.frozen_config):
        s[site] = v
    return s


def count_subsystems(n_spins: int, k: int) -> int:
    """Number of (A, B, sigma_A) triples with |A u B| = k: C(N, k) 3^k."""
    return math.comb(n_spins, k) * 3**k


def iter_subsystems(n_spins: int, k: int) -> Iterator[SubsystemContext]:
    """All disjoint (A, B) with |A u B| = k and all sigma_A, in a fixed order."""
    for taken in itertools.combinations(range(n_spins), k):
        for split in range(1 << k):
            frozen = tuple(s for b, s in enumerate(taken) if (split >> b) & 1)
            removed = tuple(s for b, s in enumerate(taken) if not (split >> b) & 1)
            for signs in itertools.product((-1, 1), repeat=len(frozen)):
                yield SubsystemContext(n_spins, frozen, removed, signs)


def random_subsystem(n_spins: int, k: int, rng: np.random.Generator) -> SubsystemContext:
    taken = np.sort(rng.choice(n_spins, size=k, replace=False))
    roles = rng.integers(0, 2, size=k)
    frozen = tuple(int(s) for s, r in zip(taken, roles) if r)
    removed = tuple(int(s) for s, r in zip(taken, roles) if not r)
    signs = tuple(int(v) for v in rng.choice((-1, 1), size=len(frozen)))
    return SubsystemContext(n_spins, frozen, removed, signs)


# --------------------------------------------------------------------------- function tables

@dataclass(frozen=True)
class FunctionTable:
    ctx: SubsystemContext
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.ctx.n_states,):
            raise ValueError(f"table has shape {values.shape}, context needs ({self.ctx.n_states},)")
        object.__setattr__(self, "values", values)

    @classmethod
    def spin(cls, ctx: SubsystemContext, site: int) -> "FunctionTable":
        return cls(ctx, spin_matrix(ctx)[:, site].copy())

    @classmethod
    def constant(cls, ctx: SubsystemContext, c: float = 1.0) -> "FunctionTable":
        return cls(ctx, np.full(ctx.n_states, float(c)))

    @classmethod
    def random(cls, ctx: SubsystemContext, rng: np.random.Generator) -> "FunctionTable":
        return cls(ctx, rng.standard_normal(ctx.n_states))

    def flip_index(self, site: int) -> np.ndarray:
        return np.arange(self.ctx.n_states) ^ (1 << self.ctx.bit(site))

    def __add__(self, other):
        if isinstance(other, FunctionTable):
            _check_same_ctx(self, other)
            return FunctionTable(self.ctx, self.values + other.values)
        return FunctionTable(self.ctx, self.values + other)

    def __mul__(self, other):
        if isinstance(other, FunctionTable):
            _check_same_ctx(self, other)
            return FunctionTable(self.ctx, self.values * other.values)
        return FunctionTable(self.ctx, self.values * other)

    __radd__ = __add__
    __rmul__ = __mul__


def _check_same_ctx(*tables) -> None:
    ctx = tables[0].ctx
    for t in tables[1:]:
        if t.ctx != ctx:
            raise ValueError(f"context mismatch: {ctx.describe()} vs {t.ctx.describe()}")


def discrete_derivative(f: FunctionTable, site: int) -> FunctionTable:
    """(d_i f)(sigma) = (f(sigma) - f(sigma with spin i flipped)) / 2."""
    return FunctionTable(f.ctx, 0.5 * (f.values - f.values[f.flip_index(site)]))


# --------------------------------------------------------------------------- the model

def _tensor_power(s: np.ndarray, k: int) -> np.ndarray:
    """Row-wise k-fold Kronecker power of s, shape (M, N^k), C order."""
    out = np.ones((s.shape[0], 1))
    for _ in range(k):
        out = (out[:, :, None] * s[:, None, :]).reshape(s.shape[0], -1)
    return out


class SpinGlass:
    """A disorder realization of the mixed p-spin model.

    Holds, for every p, the raw couplings and two slot-summed views used to
    evaluate cavity fields (first derivatives of H in s) and their Jacobians
    (second derivatives), so both cost one dense contraction per p.
    """

    def __init__(self, spec: ModelSpec, disorder: Disorder | None = None,
                 max_entries: int = DEFAULT_MAX_ENTRIES):
        self.spec = spec
        self.disorder = disorder if disorder is not None else sample_disorder(spec, max_entries)
        if self.disorder.n_spins != spec.n_spins:
            raise ValueError("disorder size does not match the model")
        n = spec.n_spins
        self.n = n
        self.eta = spec.eta
        self.terms = []
        for p, beta_p in spec.mixing:
            g = self.disorder.couplings[p]
            coef = beta_p / n ** ((p - 1) / 2)
            grad = sum(np.moveaxis(g, r, 0) for r in range(p)).reshape(n, -1)
            hess = np.zeros((n, n, n ** (p - 2)))
            for r in range(p):
                for t in range(p):
                    if r != t:
                        hess += np.moveaxis(g, (r, t), (0, 1)).reshape(n, n, -1)
            self.terms.append(_Term(p, coef, g.reshape(-1, n), grad, hess))
        self.cache: dict = {}

    def __getstate__(self):
        state = self.__dict__.copy()
        state["cache"] = {}
        return state

    @property
    def beta(self) -> float:
        return beta_aggregate(self.spec)

    def _chunks(self, s: np.ndarray, max_block: int = 1 << 22):
        width = max((self.n ** (t.p - 1) for t in self.terms), default=1)
        step = max(1, max_block // width)
        for lo in range(0, s.shape[0], step):
            yield lo, s[lo:lo + step]

    def energies_of(self, s: np.ndarray) -> np.ndarray:
        """H evaluated on rows of ``s`` (entries in {-1, 0, +1})."""
        s = np.atleast_2d(s)
        out = s @ self.eta
        for lo, blk in self._chunks(s):
            for t in self.terms:
                out[lo:lo + len(blk)] += t.coef * np.einsum(
                    "mi,mi->m", _tensor_power(blk, t.p - 1) @ t.flat, blk)
        return out

    def fields_of(self, s: np.ndarray) -> np.ndarray:
        """Gradient of H in s for every site, shape (M, N); column j is B_j."""
        s = np.atleast_2d(s)
        out = np.tile(self.eta, (s.shape[0], 1))
        for lo, blk in self._chunks(s):
            for t in self.terms:
                out[lo:lo + len(blk)] += t.coef * (_tensor_power(blk, t.p - 1) @ t.grad.T)
        return out

    def hessians_of(self, s: np.ndarray) -> np.ndarray:
        """Second derivatives of H in s, shape (M, N, N), zero diagonal."""
        s = np.atleast_2d(s)
        out = np.zeros((s.shape[0], self.n, self.n))
        for t in self.terms:
            kp = _tensor_power(s, t.p - 2)
            out += t.coef * np.einsum("mt,ijt->mij", kp, t.hess)
        return out

    def energies(self, ctx: SubsystemContext) -> np.ndarray:
        """H^{[A,B]} for every free configuration of ``ctx``."""
        return self.energies_of(spin_matrix(ctx))

    def cavity_fields(self, ctx: SubsystemContext, sites: Sequence[int] | None = None) -> np.ndarray:
        """B_j^{[A,B]} for every free configuration; columns follow ``sites``
        (default: the free sites). Removed or frozen sites are allowed, giving
        the field the site would feel."""
        sites = ctx.free_sites if sites is None else tuple(sites)
        return self.fields_of(spin_matrix(ctx))[:, list(sites)]

    def hamiltonian(self, ctx: SubsystemContext, sigma: int) -> float:
        return float(self.energies_of(spin_vector(ctx, sigma))[0])

    def cavity_field(self, ctx: SubsystemContext, site: int, sigma: int) -> float:
        ctx.bit(site)
        return float(self.fields_of(spin_vector(ctx, sigma))[0, site])

    def jacobians(self, ctx: SubsystemContext) -> np.ndarray:
        """J_{ij} = (d_i B_j)(sigma) over free sites for every configuration, (M, n, n)."""
        s = spin_matrix(ctx)
        free = list(ctx.free_sites)
        hess = self.hessians_of(s)[:, free][:, :, free]
        return s[:, free][:, :, None] * hess


@dataclass
class _Term:
    p: int
    coef: float
    flat: np.ndarray   # g reshaped (N^{p-1}, N)
    grad: np.ndarray   # slot-summed, (N, N^{p-1})
    hess: np.ndarray   # pair-slot-summed, (N, N, N^{p-2})
