"""Disorder ensembles: a_{H_N} per realization across a grid of beta scales and sizes."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .diagnostics import CHECKS, omega_check, run_diagnostics
from .gap import inverse_spectral_gap
from .model import ModelSpec, SpinGlass, SubsystemContext

__all__ = ["ExperimentPlan", "EnsembleReport", "realization_seed", "run_ensemble",
           "aggregate", "sweep_report", "plan_from_config"]

log = logging.getLogger(__name__)

OMEGA_MODES = ("sampled", "exact")


@dataclass(frozen=True)
class ExperimentPlan:
    base: ModelSpec
    beta_scales: tuple[float, ...]
    n_realizations: int
    epsilon: float = 0.1
    checks: tuple[str, ...] = ()
    output: str | None = None
    sizes: tuple[int, ...] = ()
    omega_mode: str = "sampled"
    omega_samples: int = 256

    def __post_init__(self):
        object.__setattr__(self, "beta_scales", tuple(float(x) for x in self.beta_scales))
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes) or (self.base.n_spins,))
        object.__setattr__(self, "checks", tuple(self.checks))
        if not self.beta_scales:
            raise ValueError("beta_scales must be nonempty")
        if any(not (x >= 0) for x in self.beta_scales):
            raise ValueError("beta scales must be nonnegative")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be at least 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.omega_mode not in OMEGA_MODES:
            raise ValueError(f"omega_mode must be one of {OMEGA_MODES}")
        bad = set(self.checks) - set(CHECKS)
        if bad:
            raise ValueError(f"unknown checks: {sorted(bad)}")
        if any(n != self.base.n_spins for n in self.sizes) and np.any(self.base.eta != 0):
            raise ValueError("a size grid needs a zero external field in the base model")

    def grid(self) -> list[tuple[int, float]]:
        """(N, beta_scale) pairs in grid-index order."""
        return [(n, x) for n in self.sizes for x in self.beta_scales]

    def spec_at(self, n: int, scale: float, seed: int) -> ModelSpec:
        eta = self.base.external_field if n == self.base.n_spins else ()
        return ModelSpec(n, self.base.mixing, eta, seed).scaled(scale)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base"] = self.base.to_dict()
        # the output location is not part of the experiment
        d.pop("output")
        return d


def plan_from_config(cfg: dict, spec: ModelSpec, output: str | None = None) -> ExperimentPlan:
    exp = dict(cfg.get("experiment", {}))
    known = {"beta_scales", "n_realizations", "epsilon", "checks", "output", "sizes",
             "omega_mode", "omega_samples"}
    unknown = set(exp) - known
    if unknown:
        raise ValueError(f"unknown [experiment] keys: {sorted(unknown)}")
    if "beta_scales" not in exp or "n_realizations" not in exp:
        raise ValueError("[experiment] needs beta_scales and n_realizations")
    if output is not None:
        exp["output"] = output
    return ExperimentPlan(base=spec, **exp)


def realization_seed(base_seed: int, grid_index: int, realization: int) -> int:
    ss = np.random.SeedSequence([base_seed, grid_index, realization])
    return int(ss.generate_state(1, np.uint64)[0])


def _realization(task) -> dict:
    plan, grid_index, n, scale, r = task
    seed = realization_seed(plan.base.seed, grid_index, r)
    with threadpool_limits(1):
        model = SpinGlass(plan.spec_at(n, scale, seed))
        a = inverse_spectral_gap(model, SubsystemContext.full(n)).a
        omega_rng = np.random.default_rng([seed, 0x0E6A])
        om = omega_check(model, plan.omega_mode, plan.omega_samples, omega_rng)
        row = {"beta_scale": scale, "n_spins": n, "realization": r, "seed": seed, "a": a,
               "exceed": a > 1 + plan.epsilon, "omega": om.holds, "omega_sup": om.observed_sup,
               "omega_mode": om.mode}
        if plan.checks:
            reports = run_diagnostics(model, plan.checks, seed, plan.epsilon,
                                      exact_omega=plan.omega_mode == "exact",
                                      omega_samples=plan.omega_samples)
            met = [rep.slack for rep in reports if rep.hypothesis_met]
            row["n_reports"] = len(reports)
            row["n_hypothesis_met"] = len(met)
            row["n_violations"] = sum(rep.violated() for rep in reports)
            row["min_slack_met"] = min(met) if met else math.nan
    return row


@dataclass
class EnsembleReport:
    plan: ExperimentPlan
    rows: list[dict]
    aggregates: list[dict] = field(default_factory=list)
    complete: bool = True


def aggregate(rows: list[dict], epsilon: float) -> list[dict]:
    """One row per (N, beta_scale), in first-seen order."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["n_spins"], row["beta_scale"]), []).append(row)
    out = []
    for (n, scale), rs in groups.items():
        a = np.array([r["a"] for r in rs])
        exceed = sum(bool(r["exceed"]) for r in rs)
        count = len(rs)
        p_hat = exceed / count
        out.append({
            "beta_scale": scale, "n_spins": n, "n": count, "epsilon": epsilon,
            "exceed_count": exceed, "p_hat": p_hat,
            "stderr": math.sqrt(p_hat * (1 - p_hat) / count),
            "a_mean": float(a.mean()), "a_q10": float(np.quantile(a, 0.1)),
            "a_q50": float(np.quantile(a, 0.5)), "a_q90": float(np.quantile(a, 0.9)),
            "a_max": float(a.max()),
            "omega_freq": sum(bool(r["omega"]) for r in rs) / count,
        })
    return out


def run_ensemble(plan: ExperimentPlan, workers: int = 1) -> EnsembleReport:
    """Every realization is a pure function of (plan, grid index, realization
    index), so the report does not depend on ``workers``. On interruption the
    rows finished so far are flushed to ``plan.output`` before re-raising."""
    tasks = [(plan, gi, n, scale, r) for gi, (n, scale) in enumerate(plan.grid())
             for r in range(plan.n_realizations)]
    rows: list[dict] = []
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                for row in pool.map(_realization, tasks, chunksize=4):
                    rows.append(row)
        else:
            for t in tasks:
                rows.append(_realization(t))
    except KeyboardInterrupt:
        if plan.output:
            partial = EnsembleReport(plan, rows, aggregate(rows, plan.epsilon), complete=False)
            sweep_report(partial)
            log.warning("interrupted; %d rows flushed to %s", len(rows), plan.output)
        raise
    return EnsembleReport(plan, rows, aggregate(rows, plan.epsilon))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})


def sweep_report(report: EnsembleReport, out_dir=None) -> list[Path]:
    """Write realizations.csv, aggregate.csv and summary.json; returns the paths."""
    out = Path(out_dir if out_dir is not None else report.plan.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "realizations.csv", out / "aggregate.csv", out / "summary.json"]
    _write_csv(paths[0], report.rows)
    _write_csv(paths[1], report.aggregates)
    summary = {
        "version": __version__,
        "complete": report.complete,
        "plan": report.plan.to_dict(),
        "n_rows": len(report.rows),
        "omega_mode": report.plan.omega_mode,
        "aggregates": report.aggregates,
    }
    paths[2].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return paths
