"""Heat-bath Glauber dynamics on the free spins of a subsystem.

A step picks a free site j uniformly and redraws sigma_j = +1 with probability
(1 + tanh B_j) / 2. Cavity fields and the energy are carried along and updated
per flip: flipping s_j by delta changes B_i by delta * d^2H/ds_j ds_i and H by
delta * B_j. The hot loop runs in numba on random numbers pre-drawn with numpy,
in chunks; after each chunk the cached fields are recomputed from scratch and
the drift is recorded.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import signal

from .gap import glauber_generator
from .gibbs import GibbsTable
from .model import SpinGlass, SubsystemContext

__all__ = [
    "ChainState",
    "ChainResult",
    "TrajectoryStats",
    "initial_state",
    "heat_bath_step",
    "run_chain",
    "run_chains",
    "transition_matrix",
    "stationarity_defect",
    "integrated_time",
    "estimate_relaxation",
    "write_trajectory",
]

DRIFT_CHUNK = 100_000
WINDOW_FACTOR = 5.0


@dataclass
class ChainState:
    ctx: SubsystemContext
    s: np.ndarray          # length N; free and frozen sites +-1, removed 0
    fields: np.ndarray     # B_i at s for every site
    energy: float
    step: int = 0

    @property
    def sigma(self) -> int:
        """Configuration index over the free sites."""
        free = self.s[list(self.ctx.free_sites)]
        return int(sum(1 << b for b, v in enumerate(free) if v > 0))


def initial_state(model: SpinGlass, ctx: SubsystemContext, rng: np.random.Generator) -> ChainState:
    s = np.zeros(model.n)
    s[list(ctx.frozen)] = ctx.frozen_config
    free = list(ctx.free_sites)
    s[free] = rng.choice((-1.0, 1.0), size=len(free))
    return ChainState(ctx, s, model.fields_of(s)[0], float(model.energies_of(s)[0]))


def heat_bath_step(model: SpinGlass, state: ChainState, rng: np.random.Generator) -> ChainState:
    """One step in plain numpy; the reference for the compiled kernel."""
    free = state.ctx.free_sites
    j = free[int(rng.integers(len(free)))]
    new = 1.0 if rng.random() < 0.5 * (1.0 + math.tanh(state.fields[j])) else -1.0
    s = state.s.copy()
    fields = state.fields.copy()
    energy = state.energy
    delta = new - s[j]
    if delta != 0.0:
        energy += delta * fields[j]
        fields += delta * model.hessians_of(s)[0][j]
        s[j] = new
    return ChainState(state.ctx, s, fields, energy, state.step + 1)


# --------------------------------------------------------------------------- compiled chain

@numba.njit(cache=True)
def _kron_power(s, k):
    out = np.ones(1)
    for _ in range(k):
        nxt = np.empty(out.size * s.size)
        for a in range(out.size):
            for b in range(s.size):
                nxt[a * s.size + b] = out[a] * s[b]
        out = nxt
    return out


@numba.njit(cache=True)
def _run_kernel(s, fields, energy, free, hess, orders, sites, uniforms, step0, thin,
                sweep_len, record, hist, mags, energies, n_rec, idx):
    """Advance the chain over the pre-drawn (sites, uniforms); returns
    (energy, idx, n_rec, n_flips). ``hess[t]`` is term t's coefficient times its
    pair-slot-summed couplings, shape (N, N, N^{orders[t]})."""
    n_free = free.size
    n = s.size
    flips = 0
    for t in range(sites.size):
        b = sites[t]
        j = free[b]
        p_plus = 0.5 * (1.0 + math.tanh(fields[j]))
        new = 1.0 if uniforms[t] < p_plus else -1.0
        if new != s[j]:
            delta = new - s[j]
            energy += delta * fields[j]
            for term in range(len(hess)):
                h = hess[term]
                kp = _kron_power(s, orders[term])
                for i in range(n):
                    acc = 0.0
                    for q in range(kp.size):
                        acc += h[j, i, q] * kp[q]
                    fields[i] += delta * acc
            s[j] = new
            idx ^= 1 << b
            flips += 1
        if record:
            g = step0 + t + 1
            if thin > 0 and g % thin == 0:
                hist[idx] += 1
            if g % sweep_len == 0:
                m = 0.0
                for c in range(n_free):
                    m += s[free[c]]
                mags[n_rec] = m / n_free
                energies[n_rec] = energy
                n_rec += 1
    return energy, idx, n_rec, flips


def _kernel_terms(model: SpinGlass):
    hess = [np.ascontiguousarray(t.coef * t.hess) for t in model.terms]
    orders = [t.p - 2 for t in model.terms]
    if not hess:
        hess, orders = [np.zeros((model.n, model.n, 1))], [0]
    return tuple(hess), np.array(orders, dtype=np.int64)


@dataclass
class ChainResult:
    state: ChainState
    magnetization: np.ndarray   # one entry per sweep after burn-in
    energy: np.ndarray
    histogram: np.ndarray | None
    n_flips: int
    max_drift: float


def run_chain(model: SpinGlass, steps: int, seed: int, chain: int = 0,
              ctx: SubsystemContext | None = None, burn_in: int = 0, thin: int = 0,
              chunk: int = DRIFT_CHUNK) -> ChainResult:
    """Run ``burn_in + steps`` heat-bath steps.

    Observables are recorded once per sweep (n_free steps) after burn-in; with
    ``thin > 0`` the configuration index is also histogrammed every ``thin``
    steps. The RNG stream depends only on (seed, chain).
    """
    ctx = ctx if ctx is not None else SubsystemContext.full(model.n)
    if ctx.n_free == 0:
        raise ValueError("no free spins to update")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chain])))
    state = initial_state(model, ctx, rng)
    s, fields, energy = state.s.copy(), state.fields.copy(), state.energy
    idx = state.sigma
    free = np.array(ctx.free_sites, dtype=np.int64)
    n_free = len(free)
    hess, orders = _kernel_terms(model)
    n_rec_total = steps // n_free
    mags = np.empty(n_rec_total)
    energies = np.empty(n_rec_total)
    hist = np.zeros(ctx.n_states if thin > 0 else 1, dtype=np.int64)
    n_rec = 0
    flips = 0
    drift = 0.0
    for phase, total in ((False, burn_in), (True, steps)):
        done = 0
        while done < total:
            m = min(chunk, total - done)
            sites = rng.integers(0, n_free, size=m)
            uniforms = rng.random(m)
            energy, idx, n_rec, f = _run_kernel(
                s, fields, energy, free, hess, orders, sites, uniforms, done,
                thin, n_free, phase, hist, mags, energies, n_rec, idx)
            if phase:
                flips += f
            done += m
            fresh = model.fields_of(s)[0]
            fresh_e = float(model.energies_of(s)[0])
            drift = max(drift, float(np.max(np.abs(fresh - fields))), abs(fresh_e - energy))
            fields[:] = fresh
            energy = fresh_e
    final = ChainState(ctx, s, fields, energy, burn_in + steps)
    return ChainResult(final, mags[:n_rec], energies[:n_rec],
                       hist if thin > 0 else None, flips, drift)


def _chain_task(args):
    model, kwargs = args
    return run_chain(model, **kwargs)


def run_chains(model: SpinGlass, n_chains: int, steps: int, seed: int, workers: int = 1,
               **kwargs) -> list[ChainResult]:
    """Independent chains 0..n_chains-1; results are ordered by chain index."""
    tasks = [(model, dict(steps=steps, seed=seed, chain=c, **kwargs)) for c in range(n_chains)]
    if workers > 1 and n_chains > 1:
        with ProcessPoolExecutor(min(workers, n_chains)) as pool:
            return list(pool.map(_chain_task, tasks))
    return [_chain_task(t) for t in tasks]


# --------------------------------------------------------------------------- exact kernel

def transition_matrix(g: GibbsTable) -> np.ndarray:
    """Random-scan heat-bath kernel P = I + L / n_free."""
    L = glauber_generator(g)
    return np.eye(len(L)) + L / g.ctx.n_free


def stationarity_defect(g: GibbsTable, P: np.ndarray) -> float:
    return float(np.max(np.abs(g.prob @ P - g.prob)))


# --------------------------------------------------------------------------- autocorrelation

def _acf(x: np.ndarray) -> np.ndarray:
    y = x - x.mean()
    c = signal.correlate(y, y, mode="full", method="fft")[len(y) - 1:]
    return c / c[0]


def integrated_time(x, c: float = WINDOW_FACTOR) -> tuple[float, int]:
    """tau = 1/2 + sum_{t=1}^{W} rho(t) with the smallest W >= c * tau(W).

    With this convention an uncorrelated series has tau = 1/2. Returns
    (tau, W); raises ValueError when no window fits inside the series.
    """
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise ValueError("series too short for an autocorrelation estimate")
    if np.ptp(x) == 0:
        return math.nan, 0
    rho = _acf(x)
    taus = 0.5 + np.cumsum(rho[1:])
    windows = np.arange(1, len(rho))
    ok = np.nonzero(windows >= c * taus)[0]
    if len(ok) == 0 or windows[ok[0]] > len(x) // 2:
        raise ValueError(f"series of length {len(x)} too short for the window rule")
    w = int(windows[ok[0]])
    return float(taus[ok[0]]), w


@dataclass
class TrajectoryStats:
    steps: int
    burn_in: int
    sweep_len: int
    magnetization: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)
    tau_magnetization: float
    tau_energy: float
    window: int
    flip_rate: float
    max_drift: float

    def summary(self) -> dict:
        return {"steps": self.steps, "burn_in": self.burn_in, "sweep_len": self.sweep_len,
                "n_sweeps": len(self.magnetization),
                "tau_magnetization_sweeps": self.tau_magnetization,
                "tau_energy_sweeps": self.tau_energy, "window": self.window,
                "flip_rate": self.flip_rate, "max_drift": self.max_drift,
                "mean_magnetization": float(self.magnetization.mean()),
                "mean_energy": float(self.energy.mean())}


def estimate_relaxation(model: SpinGlass, steps: int, burn_in: int, seed: int,
                        chain: int = 0, ctx: SubsystemContext | None = None) -> TrajectoryStats:
    """Integrated autocorrelation times of magnetization and energy, in sweeps."""
    if steps <= burn_in:
        raise ValueError("steps must exceed burn_in")
    res = run_chain(model, steps, seed, chain, ctx, burn_in)
    tau_m, w = integrated_time(res.magnetization)
    try:
        tau_e, _ = integrated_time(res.energy)
    except ValueError:
        tau_e = math.nan
    return TrajectoryStats(steps, burn_in, res.state.ctx.n_free, res.magnetization, res.energy,
                           tau_m, tau_e, w, res.n_flips / steps, res.max_drift)


def write_trajectory(stats: TrajectoryStats, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "magnetization", "energy"])
        for i, (m, e) in enumerate(zip(stats.magnetization, stats.energy)):
            w.writerow([stats.burn_in + (i + 1) * stats.sweep_len, repr(float(m)), repr(float(e))])
