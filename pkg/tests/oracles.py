"""Brute-force reference implementations, written independently of the package.

They loop over explicit index tuples and configurations, so they are slow but
share no vectorized code with the library.
"""

import itertools
import math

import numpy as np


def tuple_hamiltonian(spec, disorder, s):
    """H(s) by summing g_{i_1..i_p} s_{i_1}..s_{i_p} over every ordered tuple."""
    n = spec.n_spins
    total = 0.0
    for p, beta_p in spec.mixing:
        g = disorder.couplings[p]
        coef = beta_p / n ** ((p - 1) / 2)
        for idx in itertools.product(range(n), repeat=p):
            total += coef * g[idx] * math.prod(s[i] for i in idx)
    return total + sum(spec.eta[i] * s[i] for i in range(n))


def tuple_cavity_field(spec, disorder, s, j):
    """B_j: every ordered tuple containing j, with the slot of j dropped."""
    n = spec.n_spins
    total = spec.eta[j]
    for p, beta_p in spec.mixing:
        g = disorder.couplings[p]
        coef = beta_p / n ** ((p - 1) / 2)
        for idx in itertools.product(range(n), repeat=p):
            for slot in range(p):
                if idx[slot] == j:
                    rest = idx[:slot] + idx[slot + 1:]
                    total += coef * g[idx] * math.prod(s[i] for i in rest)
    return total


def configurations(ctx):
    """(index, full-length s) pairs in table order, built bit by bit."""
    out = []
    free = [i for i in range(ctx.n_spins) if i not in ctx.frozen and i not in ctx.removed]
    for sigma in range(1 << len(free)):
        s = [0.0] * ctx.n_spins
        for b, site in enumerate(free):
            s[site] = 1.0 if (sigma >> b) & 1 else -1.0
        for site, v in zip(ctx.frozen, ctx.frozen_config):
            s[site] = float(v)
        out.append((sigma, s))
    return out


def brute_gibbs(spec, disorder, ctx):
    energies = [tuple_hamiltonian(spec, disorder, s) for _, s in configurations(ctx)]
    w = np.exp(np.array(energies) - max(energies))
    return w / w.sum()


def rayleigh_max(C, K, trials=2000, rng=None):
    """Lower bound on sup f^T C f / f^T K f from random mean-zero vectors."""
    rng = rng or np.random.default_rng(0)
    best = 0.0
    m = len(C)
    for _ in range(trials):
        f = rng.standard_normal(m)
        f -= f.mean()
        best = max(best, (f @ C @ f) / (f @ K @ f))
    return best
