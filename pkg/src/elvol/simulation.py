"""Monte Carlo harness for the simulation scenarios.

Each replicate draws its own finite population from a stream derived from
``(seed, replicate)``, so results do not depend on scheduling. Replicates can
run in a process pool; the reduce is always in replicate order.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from elvol.errors import ElvolError
from elvol.estimators import EstimatorKind
from elvol.pipeline import DEFAULT_ESTIMATORS, estimate_frame
from elvol.population import Scenario, ScenarioConfig, generate_population

SUMMARY_COLUMNS = ("scenario", "method", "bias", "var_x1000", "mse_x1000",
                   "mean_vhat_x1000", "coverage", "failures")
MAX_FAILURE_SHARE = 0.10


class MonteCarloAborted(ElvolError):
    """Too many replicates failed for some estimator."""


@dataclass(frozen=True)
class McConfig:
    scenario: Scenario = Scenario.M1
    n_units: int = 5000
    replications: int = 1000
    seed: int = 20240101
    estimators: tuple = DEFAULT_ESTIMATORS
    ci_level: float = 0.95
    workers: int = 1
    phi_true: tuple = (-2.0, 1.0, 0.5)
    out: Optional[str] = None
    fmt: str = "csv"

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(str(getattr(self.scenario, "value", self.scenario)).upper()))
        kinds = tuple(EstimatorKind(k) for k in self.estimators)
        if not kinds:
            raise ValueError("at least one estimator is required")
        if len(set(kinds)) != len(kinds):
            raise ValueError("duplicate estimators")
        object.__setattr__(self, "estimators", kinds)
        if int(self.replications) < 1:
            raise ValueError("replications must be >= 1")
        if not 0.0 <= self.ci_level < 1.0:
            raise ValueError("ci_level must be in [0, 1)")
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")
        if self.fmt not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        # validates n_units / phi_true
        self.scenario_config()

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(self.scenario, int(self.n_units), tuple(self.phi_true), int(self.seed))


@dataclass
class EstimatorRecord:
    theta: float = math.nan
    vhat: float = math.nan
    hit: Optional[bool] = None
    error: Optional[str] = None


@dataclass
class ReplicateRecord:
    index: int
    theta_n: float
    records: dict = field(default_factory=dict)


def run_replicate(config: McConfig, index: int) -> ReplicateRecord:
    frame = generate_population(config.scenario_config(), index)
    theta_n = float(np.mean(frame.oracle.y_full))
    out = ReplicateRecord(index, theta_n)
    for rep in estimate_frame(frame, config.estimators, config.ci_level):
        if not rep.ok:
            out.records[rep.kind] = EstimatorRecord(error=f"{type(rep.error).__name__}: {rep.error}")
            continue
        rec = EstimatorRecord(float(rep.theta))
        if rep.vhat is not None:
            rec.vhat = float(rep.vhat)
            lo, hi = rep.ci
            rec.hit = bool(lo <= theta_n <= hi)
        out.records[rep.kind] = rec
    return out


@dataclass
class EstimatorSummary:
    method: str
    bias: float
    variance: float
    mse: float
    mean_vhat: float
    coverage: float
    n_ok: int
    failures: int

    @property
    def vhat_relative_bias(self) -> float:
        return self.mean_vhat / self.variance - 1.0


@dataclass
class McSummary:
    config: McConfig
    rows: list

    def row(self, kind) -> EstimatorSummary:
        label = EstimatorKind(kind).label
        for r in self.rows:
            if r.method == label:
                return r
        raise KeyError(label)

    def table(self) -> list:
        sc = self.config.scenario.value
        return [[sc, r.method, _fmt(r.bias), _fmt(r.variance * 1e3), _fmt(r.mse * 1e3),
                 _fmt(r.mean_vhat * 1e3), _fmt(r.coverage), str(r.failures)] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(self.table())
        return buf.getvalue()

    def to_json(self) -> str:
        cfg = asdict(self.config)
        cfg["scenario"] = self.config.scenario.value
        cfg["estimators"] = [k.value for k in self.config.estimators]
        rows = [dict(zip(SUMMARY_COLUMNS, r)) for r in self.table()]
        return json.dumps({"config": cfg, "rows": rows}, indent=2, sort_keys=True) + "\n"

    def render(self, fmt: str = "csv") -> str:
        return self.to_json() if fmt == "json" else self.to_csv()


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def summarize(config: McConfig, replicates: Sequence[ReplicateRecord]) -> McSummary:
    """Aggregate replicate records (in index order) into Table-1 style rows.

    bias is the mean of theta_hat - theta_N, variance the replicate variance of
    theta_hat (divisor B - 1) and mse = bias^2 + variance.
    """
    replicates = sorted(replicates, key=lambda r: r.index)
    rows = []
    for kind in config.estimators:
        recs = [(r.theta_n, r.records[kind]) for r in replicates]
        ok = [(tn, rec) for tn, rec in recs if rec.error is None]
        failures = len(recs) - len(ok)
        if failures > MAX_FAILURE_SHARE * len(recs):
            first = next(rec.error for _, rec in recs if rec.error is not None)
            raise MonteCarloAborted(f"{kind.label}: {failures} of {len(recs)} replicates failed "
                                    f"(first: {first})")
        theta = np.array([rec.theta for _, rec in ok])
        theta_n = np.array([tn for tn, _ in ok])
        bias = float(np.mean(theta - theta_n)) if ok else math.nan
        var = float(np.var(theta, ddof=1)) if len(ok) > 1 else math.nan
        vhat = np.array([rec.vhat for _, rec in ok])
        has_v = bool(ok) and not np.all(np.isnan(vhat))
        rows.append(EstimatorSummary(
            kind.label, bias, var, bias * bias + var,
            float(np.mean(vhat)) if has_v else math.nan,
            float(np.mean([rec.hit for _, rec in ok])) if has_v else math.nan,
            len(ok), failures))
    return McSummary(config, rows)


def collect_replicates(config: McConfig, indices=None) -> list:
    indices = list(range(config.replications)) if indices is None else list(indices)
    if config.workers == 1 or len(indices) < 2:
        return [run_replicate(config, i) for i in indices]
    chunk = max(1, len(indices) // (4 * config.workers))
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(run_replicate, [config] * len(indices), indices, chunksize=chunk))


def run_monte_carlo(config: McConfig) -> McSummary:
    summary = summarize(config, collect_replicates(config))
    if config.out:
        with open(config.out, "w", newline="") as fh:
            fh.write(summary.render(config.fmt))
    return summary


@dataclass
class CoverageReport:
    scenario: str
    method: str
    coverage: float
    mean_vhat: float
    mc_variance: float
    relative_bias: float
    n_ok: int
    failures: int


def run_coverage(config: McConfig, replicates: Optional[Sequence[ReplicateRecord]] = None) -> CoverageReport:
    """Realized CI coverage of theta_N and V-hat relative bias for EL-2."""
    if EstimatorKind.EL2 not in config.estimators:
        config = McConfig(**{**asdict(config), "estimators": (*config.estimators, EstimatorKind.EL2)})
    if replicates is None:
        replicates = collect_replicates(config)
    row = summarize(config, replicates).row(EstimatorKind.EL2)
    return CoverageReport(config.scenario.value, row.method, row.coverage, row.mean_vhat,
                          row.variance, row.vhat_relative_bias, row.n_ok, row.failures)
