"""Numerical checks of the identities and inequalities behind the gap iteration.

Each check returns :class:`InequalityReport` objects. A report always carries
its slack ``rhs - lhs``; it is a hard failure only when ``hypothesis_met`` is
true, i.e. when every precondition that can be verified on the instance holds.
Identities are reported as ``|left - right| <= 0``.

Universal constants that are only known to exist are never given values:
checks that depend on them either drop the term (and report only) or log the
raw quantities.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .gap import dirichlet_form, inverse_spectral_gap, max_subsystem_gap, sech2
from .gibbs import (GibbsTable, correlation_matrices, covariance, expectation,
                    gibbs_measure, single_spin_variance_identity, total_variance)
from .model import (BudgetError, FunctionTable, SpinGlass, SubsystemContext,
                    c_beta, count_subsystems, discrete_derivative, iter_subsystems,
                    random_subsystem, spin_matrix, spin_vector)

__all__ = [
    "InequalityReport",
    "CavityJacobian",
    "OmegaResult",
    "ReplayStep",
    "cavity_jacobian",
    "omega_check",
    "xq_iq_check",
    "h_field",
    "s_matrix",
    "identity_checks",
    "conditioning_lemma_check",
    "indu_m_check",
    "bd_m_check",
    "exp_moment_check",
    "lm41_check",
    "dichotomy_check",
    "induction_replay",
    "run_diagnostics",
    "CHECKS",
    "write_reports",
    "write_summary",
]

DEFAULT_EPSILON = 1e-2
DEFAULT_K_GRID = (-20.0, -5.0, -1.0, 1.0, 5.0, 20.0)
# small |K| as well, where the exponential-moment hypothesis can actually be met
DEFAULT_EXP_K_GRID = (-1.0, -0.1, -0.05, 0.05, 0.1, 1.0)
HARD_TOL = 1e-9


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    hypothesis_met: bool
    ctx: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    slack: float = field(init=False)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        self.slack = self.rhs - self.lhs if math.isfinite(self.rhs) else math.inf

    def violated(self, tol: float = HARD_TOL) -> bool:
        return self.hypothesis_met and self.slack < -tol

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _identity(name, left, right, ctx, **params) -> InequalityReport:
    return InequalityReport(name, abs(left - right), 0.0, True, ctx,
                            {"left": float(left), "right": float(right), **params})


def _gibbs(model, ctx):
    key = ("gibbs", ctx)
    if key not in model.cache:
        model.cache[key] = gibbs_measure(model, ctx)
    return model.cache[key]


def _gap(model, ctx) -> float:
    # a subsystem with no free spin carries no variance; 0 makes every
    # "a * C < eps" hypothesis trivially true, matching the constant-field case
    if ctx.n_free == 0:
        return 0.0
    key = ("gap", ctx)
    if key not in model.cache:
        model.cache[key] = inverse_spectral_gap(model, ctx).a
    return model.cache[key]


def _spin_cov_sum(g: GibbsTable, f: FunctionTable) -> float:
    """sum_j <f; sigma_j>^2 / (1 - m_j^2) over free j."""
    s = g.spins()
    m = g.prob @ s
    fc = f.values - g.prob @ f.values
    c = (g.prob * fc) @ (s - m)
    return float(np.sum(c**2 / (1.0 - m**2)))


# --------------------------------------------------------------------------- cavity Jacobian and Omega

@dataclass
class CavityJacobian:
    ctx: SubsystemContext
    sigma: int
    J: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.J, 2)) if self.J.size else 0.0


def cavity_jacobian(model: SpinGlass, ctx: SubsystemContext, sigma: int) -> CavityJacobian:
    """J_{ij} = (d_i B_j)(sigma) = s_i d^2H/ds_i ds_j on the free sites."""
    s = spin_vector(ctx, sigma)
    free = list(ctx.free_sites)
    hess = model.hessians_of(s)[0][np.ix_(free, free)]
    return CavityJacobian(ctx, sigma, s[free][:, None] * hess)


@dataclass
class OmegaResult:
    holds: bool
    observed_sup: float
    bound: float
    mode: str
    n_evaluated: int


def omega_check(model: SpinGlass, mode: str = "exact", samples: int = 256,
                rng: np.random.Generator | None = None,
                max_exact_spins: int = 10) -> OmegaResult:
    """Largest operator norm of the cavity Jacobian against 5 * beta.

    Exact mode runs over every s in {-1, 0, +1}^N with all nonzero sites free
    (A empty). Subsystems with A nonempty are covered by this: their Jacobian
    is a principal block of the A-empty Jacobian at the same s, and a block
    never has a larger norm than the whole matrix.
    """
    n = model.n
    bound = 5.0 * model.beta
    if mode == "exact":
        if n > max_exact_spins:
            raise BudgetError(f"exact Omega enumeration is capped at N={max_exact_spins}")
        sup, count = 0.0, 0
        for support in range(1, 1 << n):
            sites = [i for i in range(n) if (support >> i) & 1]
            ctx = SubsystemContext(n, removed=tuple(i for i in range(n) if not (support >> i) & 1))
            jac = model.jacobians(ctx)
            norms = np.linalg.norm(jac, 2, axis=(1, 2)) if len(sites) > 1 else np.zeros(len(jac))
            sup = max(sup, float(norms.max()))
            count += len(jac)
        return OmegaResult(sup <= bound, sup, bound, "exact", count)
    if mode != "sampled":
        raise ValueError(f"unknown Omega mode {mode!r}")
    rng = rng if rng is not None else np.random.default_rng(model.spec.seed)
    roles = rng.integers(0, 3, size=(samples, n))          # 0 free, 1 frozen, 2 removed
    signs = rng.choice((-1.0, 1.0), size=(samples, n))
    s = np.where(roles == 2, 0.0, signs)
    free = (roles == 0).astype(float)
    hess = model.hessians_of(s)
    jac = free[:, :, None] * free[:, None, :] * s[:, :, None] * hess
    sup = float(np.linalg.norm(jac, 2, axis=(1, 2)).max()) if samples else 0.0
    return OmegaResult(sup <= bound, sup, bound, "sampled", samples)


def xq_iq_check(jac: CavityJacobian, beta: float, omega_holds: bool,
                q_max: int = 6) -> list[InequalityReport]:
    """Row/column sums I_q of |J|^q and norms of the entrywise powers X_q against (5 beta)^q.

    I_q is bounded only for q >= 2; for q = 1 it is reported unconditioned.
    """
    J = jac.J
    ctx = jac.ctx.describe()
    reports = []
    x1 = float(np.linalg.norm(J, 2)) if J.size else 0.0
    for q in range(1, q_max + 1):
        A = np.abs(J) ** q
        iq = max(A.sum(axis=1).max(initial=0.0), A.sum(axis=0).max(initial=0.0))
        xq = float(np.linalg.norm(J**q, 2)) if J.size else 0.0
        bound = (5.0 * beta) ** q
        params = {"q": q, "sigma": jac.sigma}
        reports.append(InequalityReport("I_q", iq, bound, omega_holds and q >= 2, ctx, params))
        reports.append(InequalityReport("X_q", xq, bound, omega_holds, ctx, params))
        if q == 2:
            reports.append(InequalityReport("I2_le_X1_sq", iq, x1**2, True, ctx, params))
    return reports


# --------------------------------------------------------------------------- h field, S matrix

def h_field(g: GibbsTable, site: int) -> FunctionTable:
    """h_j = (sigma_j - m_j) - exp(-2 sigma_j B_j) (sigma_j + m_j)."""
    b = g.ctx.bit(site)
    s = spin_matrix(g.ctx)[:, site]
    m = float(g.prob @ s)
    B = g.fields[:, b]
    return FunctionTable(g.ctx, (s - m) - np.exp(-2.0 * s * B) * (s + m))


def _h_matrix(g: GibbsTable) -> np.ndarray:
    s = g.spins()
    m = g.prob @ s
    return (s - m) - np.exp(-2.0 * s * g.fields) * (s + m)


def s_matrix(g: GibbsTable) -> np.ndarray:
    """S_ij = <h_i; h_j> / sqrt((1 - m_i^2)(1 - m_j^2)); a Gram matrix, hence PSD."""
    h = _h_matrix(g)
    m = g.magnetizations()
    hc = h - g.prob @ h
    S = (hc * g.prob[:, None]).T @ hc
    d = 1.0 / np.sqrt(1.0 - m**2)
    S = d[:, None] * S * d[None, :]
    return 0.5 * (S + S.T)


def s_norm(g: GibbsTable) -> float:
    S = s_matrix(g)
    return float(np.linalg.eigvalsh(S)[-1]) if S.size else 0.0


# --------------------------------------------------------------------------- exact identities

def identity_checks(model: SpinGlass, g: GibbsTable, f: FunctionTable, site: int
                    ) -> list[InequalityReport]:
    """All exact identities at one (ctx, f, j)."""
    ctx = g.ctx.describe()
    b = g.ctx.bit(site)
    spin = FunctionTable.spin(g.ctx, site)
    B = g.fields[:, b]
    m = expectation(g, spin)
    out = [
        _identity("m_tanh", m, g.prob @ np.tanh(B), ctx, j=site),
        _identity("cosh_tanh", g.prob @ sech2(B), 1.0 - g.prob @ np.tanh(B) ** 2, ctx, j=site),
    ]
    h = h_field(g, site)
    out.append(_identity("h_mean", expectation(g, h), 0.0, ctx, j=site))
    out.append(hjid_check(g, f, site))
    var, within, between = total_variance(model, g, f, site)
    out.append(_identity("totalvar", var, within + between, ctx, j=site))
    # an affine function of sigma_j built from f's values to keep the draw random
    a, c = f.values[0], f.values[-1]
    lhs, rhs = single_spin_variance_identity(g, FunctionTable(g.ctx, a * spin.values + c), site)
    out.append(_identity("ssvar", lhs, rhs, ctx, j=site))
    return out


def hjid_check(g: GibbsTable, f: FunctionTable, site: int) -> InequalityReport:
    """<f; sigma_j> = <d_j f; sigma_j> + <f; h_j> / 2."""
    spin = FunctionTable.spin(g.ctx, site)
    left = covariance(g, f, spin)
    right = (covariance(g, discrete_derivative(f, site), spin)
             + 0.5 * covariance(g, f, h_field(g, site)))
    return _identity("hjid", left, right, g.ctx.describe(), j=site)


# --------------------------------------------------------------------------- lemma checks

def conditioning_lemma_check(model: SpinGlass, ctx: SubsystemContext, f: FunctionTable
                             ) -> InequalityReport:
    """Var(f) <= (1 - 1/n) a_{n-1} D(f) + (1/n) sum_j <f;sigma_j>^2/(1 - m_j^2), n = N - k."""
    if ctx.k > model.n - 2:
        raise ValueError("the conditioning bound needs at least two free spins")
    g = _gibbs(model, ctx)
    n = ctx.n_free
    a_prev = max_subsystem_gap(model, ctx.k + 1).a
    var = covariance(g, f, f)
    rhs = (1 - 1 / n) * a_prev * dirichlet_form(g, f) + _spin_cov_sum(g, f) / n
    return InequalityReport("condition", var, rhs, True, ctx.describe(), {"a_prev": a_prev})


def indu_m_check(model: SpinGlass, ctx: SubsystemContext, fs: Sequence[FunctionTable] = ()
                 ) -> list[InequalityReport]:
    g = _gibbs(model, ctx)
    n = ctx.n_free
    norm = correlation_matrices(g).normalized_norm()
    d = ctx.describe()
    out = []
    if ctx.k <= model.n - 2:
        a = _gap(model, ctx)
        a_prev = max_subsystem_gap(model, ctx.k + 1).a
        pref = 1.0 - norm / n
        out.append(InequalityReport("indu_m", pref * a, a_prev, pref > 0, d,
                                    {"norm": norm, "a": a, "a_prev": a_prev}))
    for f in fs:
        out.append(InequalityReport("indu_m_quadratic", _spin_cov_sum(g, f),
                                    norm * covariance(g, f, f), True, d, {"norm": norm}))
    return out


def _cavity_on_removed(model, ctx, site):
    """B_j^{[A,B]} evaluated on the configurations of [A, B u {j}] (it ignores sigma_j)."""
    child = ctx.remove(site)
    return child, model.cavity_fields(child, sites=[site])[:, 0]


def bd_m_check(model: SpinGlass, ctx: SubsystemContext, site: int,
               K_grid: Iterable[float] = DEFAULT_K_GRID, epsilon: float = DEFAULT_EPSILON,
               omega_holds: bool = False) -> list[InequalityReport]:
    """Exponential-moment bounds of B_j under the measure with j removed.

    The K-independent bound (1) is emitted once; bounds (2) and (3) once per K.
    The lower bound of (3) is Jensen's inequality and is always asserted.
    """
    g = _gibbs(model, ctx)
    child, B = _cavity_on_removed(model, ctx, site)
    gc = _gibbs(model, child)
    a_child = _gap(model, child)
    cb = c_beta(model.beta)
    hyp = bool(omega_holds and a_child * cb < epsilon)
    m = float(g.prob @ spin_matrix(ctx)[:, site])
    mean_b = float(gc.prob @ B)
    d = ctx.describe()
    base = {"j": site, "epsilon": epsilon, "a_child": a_child, "c_beta": cb}
    slack = 1 + 4 * epsilon
    out = [InequalityReport("bd_m_1", 1.0 / float(gc.prob @ np.cosh(B) ** 2),
                            slack * (1 - m * m), hyp, d, base)]
    for K in K_grid:
        params = {**base, "K": float(K)}
        out.append(InequalityReport("bd_m_2", gc.prob @ np.exp(-K * B),
                                    slack * math.exp(-K * mean_b), hyp, d, params))
        ratio = float(gc.prob @ np.cosh(K * B)) / math.cosh(K * mean_b)
        out.append(InequalityReport("bd_m_3", ratio, slack, hyp, d, params))
        out.append(InequalityReport("bd_m_3_jensen", 1.0, ratio, True, d, params))
    return out


def c_k_beta(K: float, beta: float) -> float:
    # |K| in the exponent: the bound (e^x - 1)^2 <= x^2 e^{2|x|} behind it needs it
    x = 20.0 * abs(K) * beta
    try:
        return x * x * math.exp(x)
    except OverflowError:
        return math.inf


def exp_moment_check(model: SpinGlass, ctx: SubsystemContext, site: int, K: float,
                     epsilon: float = DEFAULT_EPSILON, omega_holds: bool = False
                     ) -> InequalityReport:
    """<exp(K B_j)>_{[A,B]} <= (1 + 4 eps) exp(K <B_j>_{[A,B u {j}]})."""
    g = _gibbs(model, ctx)
    child, B_child = _cavity_on_removed(model, ctx, site)
    gc = _gibbs(model, child)
    a_child = _gap(model, child)
    ck = c_k_beta(K, model.beta)
    lhs = float(g.prob @ np.exp(K * g.fields[:, ctx.bit(site)]))
    rhs = (1 + 4 * epsilon) * math.exp(K * float(gc.prob @ B_child))
    hyp = bool(omega_holds and ck * a_child < epsilon)
    return InequalityReport("exp_moment", lhs, rhs, hyp, ctx.describe(),
                            {"j": site, "K": float(K), "epsilon": epsilon,
                             "c_k_beta": ck, "a_child": a_child})


def lm41_check(model: SpinGlass, ctx: SubsystemContext, f: FunctionTable,
               epsilon: float = DEFAULT_EPSILON, omega_holds: bool = False
               ) -> InequalityReport:
    """sum_j <sigma_j;f>^2/(1-m_j^2) <= (1+4eps)^5 D(f) + ||S|| Var(f) / (2 eps)."""
    g = _gibbs(model, ctx)
    cb = c_beta(model.beta)
    params = {"epsilon": epsilon, "c_beta": cb}
    hyp = False
    # a_{n-1} >= 1 always (take f = sigma_j), so C_beta >= eps already rules the hypothesis out
    if omega_holds and ctx.k <= model.n - 2 and cb < epsilon:
        a_prev = max_subsystem_gap(model, ctx.k + 1).a
        params["a_prev"] = a_prev
        hyp = a_prev * cb < epsilon
    sn = s_norm(g)
    params["s_norm"] = sn
    rhs = (1 + 4 * epsilon) ** 5 * dirichlet_form(g, f) + sn * covariance(g, f, f) / (2 * epsilon)
    return InequalityReport("lm41", _spin_cov_sum(g, f), rhs, hyp, ctx.describe(), params)


def _level_contexts(model, k, max_contexts, rng):
    total = count_subsystems(model.n, k)
    if total <= max_contexts:
        return list(iter_subsystems(model.n, k)), True
    return [random_subsystem(model.n, k, rng) for _ in range(max_contexts)], False


def max_s_norm(model: SpinGlass, k: int, max_contexts: int = 5000,
               rng: np.random.Generator | None = None) -> tuple[float, bool]:
    rng = rng if rng is not None else np.random.default_rng([model.spec.seed, k])
    contexts, exact = _level_contexts(model, k, max_contexts, rng)
    return max(s_norm(gibbs_measure(model, c)) for c in contexts), exact


def dichotomy_check(model: SpinGlass, k: int, epsilon: float = DEFAULT_EPSILON,
                    max_contexts: int = 5000) -> InequalityReport:
    """a_{N-k} against (1 - 1/n) a_{N-k-1} + (1 + 4 eps)^5 / n with the C-dependent
    factor dropped. Never hard-asserted; ``required_correction`` is the smallest
    value of that factor that would restore the inequality."""
    if not 0 <= k <= model.n - 2:
        raise ValueError("the iteration step needs 0 <= k <= N - 2")
    n = model.n - k
    a = max_subsystem_gap(model, k).a
    a_prev = max_subsystem_gap(model, k + 1).a
    rhs = (1 - 1 / n) * a_prev + (1 + 4 * epsilon) ** 5 / n
    sn, exact = max_s_norm(model, k, max_contexts)
    params = {"k": k, "a": a, "a_prev": a_prev, "s_norm_max": sn, "s_norm_exact": exact,
              "epsilon": epsilon, "required_correction": max(0.0, 1.0 - rhs / a)}
    return InequalityReport("dichotomy", a, rhs, False, {"k": k}, params)


@dataclass
class ReplayStep:
    k: int
    n_free: int
    a: float
    a_prev: float | None
    within_bound: bool
    jump_ok: bool | None
    hypothesis: bool | None
    report: InequalityReport | None = None


def induction_replay(model: SpinGlass, epsilon: float = DEFAULT_EPSILON,
                     with_reports: bool = True, max_contexts: int = 5000) -> list[ReplayStep]:
    """a_{N-k} from k = N-1 (single spins) down to k = 0, with the flags
    a <= 1 + 40 eps^{1/4} and a_{N-k} <= 5 a_{N-k-1}."""
    bound = 1 + 40 * epsilon**0.25
    cb = c_beta(model.beta)
    steps = []
    prev = None
    for k in range(model.n - 1, -1, -1):
        a = max_subsystem_gap(model, k).a
        report = None
        if prev is not None and with_reports:
            report = dichotomy_check(model, k, epsilon, max_contexts)
        steps.append(ReplayStep(
            k, model.n - k, a, prev, a <= bound,
            None if prev is None else a <= 5 * prev,
            None if prev is None else prev * cb < epsilon,
            report))
        prev = a
    return steps


# --------------------------------------------------------------------------- orchestration

CHECKS = ("identities", "hjid", "smatrix", "condition", "indu_m", "bd_m", "exp_moment",
          "lm41", "xq_iq", "omega", "jacobian", "dichotomy")


def run_diagnostics(model: SpinGlass, checks: Sequence[str], seed: int,
                    epsilon: float = DEFAULT_EPSILON, n_contexts: int = 3,
                    n_functions: int = 2, max_k: int = 2, exact_omega: bool = False,
                    omega_samples: int = 256, K_grid=DEFAULT_K_GRID,
                    exp_K_grid=DEFAULT_EXP_K_GRID) -> list[InequalityReport]:
    """Run the named checks on the full system plus random subsystems.

    Contexts, functions and sampled configurations are all drawn from ``seed``,
    so the report list is a pure function of the arguments.
    """
    unknown = set(checks) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")
    rng = np.random.default_rng([seed, 0xD1A6])
    n = model.n
    if exact_omega:
        omega = omega_check(model, "exact")
    else:
        omega = omega_check(model, "sampled", omega_samples, np.random.default_rng([seed, 0x0E6A]))
    reports: list[InequalityReport] = []
    if "omega" in checks:
        reports.append(InequalityReport("omega", omega.observed_sup, omega.bound, False, {},
                                        {"mode": omega.mode, "n_evaluated": omega.n_evaluated}))
    contexts = [SubsystemContext.full(n)]
    top_k = min(max_k, n - 2)
    for _ in range(max(0, n_contexts - 1)):
        if top_k < 1:
            break
        contexts.append(random_subsystem(n, int(rng.integers(1, top_k + 1)), rng))
    for ctx in contexts:
        g = _gibbs(model, ctx)
        fs = [FunctionTable.random(ctx, rng) for _ in range(n_functions)]
        free = ctx.free_sites
        d = ctx.describe()
        if "identities" in checks:
            for f in fs:
                reports += identity_checks(model, g, f, free[int(rng.integers(len(free)))])
        if "hjid" in checks:
            for f in fs:
                reports += [hjid_check(g, f, j) for j in free]
        if "smatrix" in checks:
            lam = np.linalg.eigvalsh(s_matrix(g))
            reports.append(InequalityReport("smatrix_psd", 0.0, lam[0], True, d,
                                            {"s_norm": float(lam[-1])}))
            mu = np.linalg.eigvalsh(correlation_matrices(g).M)
            reports.append(InequalityReport("m_psd", 0.0, mu[0], True, d, {}))
        if "condition" in checks and ctx.k <= n - 2:
            reports += [conditioning_lemma_check(model, ctx, f) for f in fs]
        if "indu_m" in checks:
            reports += indu_m_check(model, ctx, fs)
        if "bd_m" in checks:
            for j in free:
                reports += bd_m_check(model, ctx, j, K_grid, epsilon, omega.holds)
        if "exp_moment" in checks:
            for j in free:
                reports += [exp_moment_check(model, ctx, j, K, epsilon, omega.holds)
                            for K in exp_K_grid]
        if "lm41" in checks:
            reports += [lm41_check(model, ctx, f, epsilon, omega.holds) for f in fs]
        if "xq_iq" in checks or "jacobian" in checks:
            sigma = int(rng.integers(ctx.n_states))
            jac = cavity_jacobian(model, ctx, sigma)
            if "jacobian" in checks:
                reports.append(_identity("jacobian_diag", float(np.max(np.abs(np.diag(jac.J)))),
                                         0.0, d, sigma=sigma))
            if "xq_iq" in checks:
                reports += xq_iq_check(jac, model.beta, omega.holds)
    if "dichotomy" in checks:
        reports += [dichotomy_check(model, k, epsilon) for k in range(min(n - 2, 1) + 1)]
    return reports


def write_reports(reports: Iterable[InequalityReport], path) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")


def write_summary(reports: Sequence[InequalityReport], path) -> None:
    by_name: dict[str, list[InequalityReport]] = {}
    for r in reports:
        by_name.setdefault(r.name, []).append(r)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "count", "min_slack", "hypothesis_met_fraction",
                    "min_slack_when_met", "violations"])
        for name in sorted(by_name):
            rs = by_name[name]
            met = [r.slack for r in rs if r.hypothesis_met]
            w.writerow([name, len(rs), repr(min(r.slack for r in rs)),
                        repr(len(met) / len(rs)), repr(min(met)) if met else "",
                        sum(r.violated() for r in rs)])
