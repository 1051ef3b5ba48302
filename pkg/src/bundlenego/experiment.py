"""Batch experiments: sessions per customer, metrics, CSV artifacts."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .background import (Estimator, LambdaSchedule, LearningEstimator, OracleEstimator,
                         RandomEstimator)
from .bundles import Bundle, ConfigurationError, bundles_at_distance
from .foreground import Recommender
from .negotiation import Bargainer, Role, SessionResult, StrategyParams, run_session, write_trace
from .preferences import (CustomerValuation, PopulationParams, PreferencePopulation, ShopValuation,
                          best_bundles, sample_population, sample_shop, save_population)

log = logging.getLogger(__name__)

METHODS = ("MU", "S", "B")
STRATEGIES = ("TDF", "TFTM")
RECORD_FIELDS = ("run", "customer", "max_gains", "min_gains", "gains_init", "gains_interest",
                 "gains_final", "percentage", "rel_percentage", "deal", "rounds")
SUMMARY_ROWS = (("max. gains", "max_gains"), ("min. gains", "min_gains"),
                ("gains b_init", "gains_init"), ("gains b_int", "gains_interest"),
                ("gains b_final", "gains_final"), ("percentage", "percentage"),
                ("rel. percentage", "rel_percentage"), ("rounds", "rounds"), ("deals", "deals"))

# independent random streams per run / customer
_POPULATION, _VALUES, _INIT, _BREAKDOWN, _RECOMMENDER, _ORACLE = range(6)


@dataclass
class ExperimentConfig:
    n: int = 6
    num_customers: int = 2000
    num_distributions: int = 3
    breakdown_prob: float = 0.02
    customer_strategy: str = "TDF"
    method: str = "MU"
    customer_gap_init: float = 0.5
    customer_delta: float = 0.03
    shop_gap_init: float = 1.5
    shop_delta: float = 0.03
    population: PopulationParams = field(default_factory=PopulationParams)
    lambda_schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    window: int = 100
    seed: int = 12345
    output_dir: str = "results"
    oracle_budget: int = 20_000
    max_rounds: int = 1000
    trace_customers: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.num_customers < 1 or self.num_distributions < 1 or self.window < 1:
            raise ConfigurationError("counts and window must be >= 1")
        if not 1 <= self.n <= 16:
            raise ConfigurationError(f"n must be in [1, 16], got {self.n}")
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.customer_strategy not in STRATEGIES:
            raise ConfigurationError(f"customer_strategy must be one of {STRATEGIES}")
        if not 0 <= self.breakdown_prob <= 1:
            raise ConfigurationError("breakdown_prob must be in [0, 1]")

    @classmethod
    def full_scale(cls, **overrides) -> ExperimentConfig:
        base = dict(n=10, num_customers=12_000, num_distributions=10,
                    population=PopulationParams.full())
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["population"] = self.population.to_dict()
        d["lambda_schedule"] = asdict(self.lambda_schedule)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "population" in d:
            d["population"] = PopulationParams.from_dict(d["population"] or {})
        if "lambda_schedule" in d:
            d["lambda_schedule"] = LambdaSchedule(**(d["lambda_schedule"] or {}))
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: expected a mapping of config keys")
        return cls.from_dict(data)

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    @property
    def label(self) -> str:
        return f"{self.method}_{self.customer_strategy}"


def initial_bundle(cv: CustomerValuation, sv: ShopValuation, rng: np.random.Generator,
                   distance: int = 3) -> Bundle:
    """Random bundle at Hamming distance 3 from a random best bundle."""
    best, _, _ = best_bundles(cv, sv)
    star = best[int(rng.integers(len(best)))]
    for d in (distance, 2, 1):
        candidates = bundles_at_distance(star, d)
        if candidates:
            return candidates[int(rng.integers(len(candidates)))]
    return star


@dataclass
class CustomerRecord:
    run: int
    customer: int
    max_gains: float
    min_gains: float
    gains_init: float
    gains_interest: float
    gains_final: float
    percentage: float
    rel_percentage: float
    deal: bool
    rounds: int

    def as_row(self) -> list[str]:
        return [str(self.run), str(self.customer)] + [fmt(getattr(self, k)) for k in RECORD_FIELDS[2:9]] \
            + [str(int(self.deal)), str(self.rounds)]


def fmt(x: float) -> str:
    return f"{x:.6g}"


def compute_metrics(result: SessionResult, cv: CustomerValuation, sv: ShopValuation,
                    b_init: Bundle, interest: Bundle, run: int = 0, customer: int = 0) -> CustomerRecord:
    """Per-customer indicators; the final bundle counts whether or not a deal was made."""
    g = cv.values - sv.values
    g_max, g_min = float(g.max()), float(g.min())
    g_init = float(g[b_init.bits - 1])
    g_final = float(g[result.outcome.final_bundle.bits - 1])
    g_int = float(g[interest.bits - 1])
    pct = 1.0 if g_max == g_min else (g_final - g_min) / (g_max - g_min)
    rel = 1.0 if g_max == g_init else (g_final - g_init) / (g_max - g_init)
    return CustomerRecord(run, customer, g_max, g_min, g_init, g_int, g_final, pct, rel,
                          result.outcome.deal, result.outcome.rounds)


def make_estimator(method: str, pop: PreferencePopulation, sv: ShopValuation,
                   config: ExperimentConfig, rng: np.random.Generator) -> Estimator:
    if method == "MU":
        return LearningEstimator(sv, config.lambda_schedule)
    if method == "S":
        return OracleEstimator(pop, sv, rng, config.oracle_budget)
    if method == "B":
        return RandomEstimator()
    raise ConfigurationError(f"unknown method {method!r}")


def _rng(config: ExperimentConfig, run: int, stream: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, run, stream, *extra])


def run_environment(config: ExperimentConfig, run: int):
    """Population, shop, and customer valuation tables of one run; method-independent."""
    prng = _rng(config, run, _POPULATION)
    pop = sample_population(config.n, prng, config.population)
    sv = sample_shop(config.n, prng, config.population)
    values = pop.sample_values(_rng(config, run, _VALUES), config.num_customers)
    return pop, sv, values


def simulate_run(config: ExperimentConfig, run: int) -> tuple[list[CustomerRecord], list]:
    """Negotiate with every customer of one run, in order."""
    pop, sv, values = run_environment(config, run)
    estimator = make_estimator(config.method, pop, sv, config, _rng(config, run, _ORACLE))
    cparams = StrategyParams(config.customer_strategy, config.customer_gap_init, config.customer_delta)
    sparams = StrategyParams("TDF", config.shop_gap_init, config.shop_delta)
    records, traces = [], []
    for c in range(config.num_customers):
        cv = CustomerValuation(config.n, values[c])
        b_init = initial_bundle(cv, sv, _rng(config, run, _INIT, c))
        customer = Bargainer(Role.CUSTOMER, cv, cparams)
        shop = Bargainer(Role.SHOP, sv, sparams)
        rec = Recommender(sv, estimator, _rng(config, run, _RECOMMENDER, c))
        result = run_session(customer, shop, b_init, rec, config.breakdown_prob,
                             _rng(config, run, _BREAKDOWN, c), config.max_rounds)
        records.append(compute_metrics(result, cv, sv, b_init, rec.state.interest_bundle, run, c))
        if c < config.trace_customers:
            traces.append(({"run": run, "customer": c}, result.trace))
    return records, traces


@dataclass
class RunMetrics:
    label: str
    records: list[CustomerRecord]
    num_runs: int

    def per_run(self) -> dict[str, np.ndarray]:
        """Run-level averages for every Table-1 indicator."""
        out: dict[str, list[float]] = {key: [] for _, key in SUMMARY_ROWS}
        for r in range(self.num_runs):
            recs = [x for x in self.records if x.run == r]
            for _, key in SUMMARY_ROWS:
                if key == "deals":
                    out[key].append(float(sum(x.deal for x in recs)))
                elif key == "rounds":
                    deal_rounds = [x.rounds for x in recs if x.deal]
                    out[key].append(float(np.mean(deal_rounds)) if deal_rounds else math.nan)
                else:
                    out[key].append(float(np.mean([getattr(x, key) for x in recs])))
        return {k: np.array(v) for k, v in out.items()}

    def summary(self) -> dict[str, tuple[float, float]]:
        res = {}
        for key, vals in self.per_run().items():
            sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            res[key] = (float(np.mean(vals)), sd)
        return res

    def series(self, key: str = "rel_percentage") -> np.ndarray:
        """Per-customer indicator averaged across runs, indexed by customer."""
        by_run = {}
        for x in self.records:
            by_run.setdefault(x.run, {})[x.customer] = getattr(x, key)
        mat = np.array([[row[c] for c in sorted(row)] for _, row in sorted(by_run.items())], float)
        return mat.mean(axis=0)

    def moving_average(self, window: int = 100, key: str = "rel_percentage") -> np.ndarray:
        return moving_average(self.series(key), window)


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over ``window`` points; only full windows are returned."""
    x = np.asarray(x, float)
    w = min(window, len(x))
    c = np.cumsum(np.insert(x, 0, 0.0))
    return (c[w:] - c[:-w]) / w


def decile_means(x: np.ndarray) -> tuple[float, float]:
    """Mean of the first and last tenth of a series."""
    k = max(1, len(x) // 10)
    return float(np.mean(x[:k])), float(np.mean(x[-k:]))


def run_metrics(config: ExperimentConfig) -> tuple[RunMetrics, list]:
    runs = range(config.num_distributions)
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as ex:
            results = list(ex.map(simulate_run, [config] * len(runs), runs))
    else:
        results = [simulate_run(config, r) for r in runs]
    records = [rec for recs, _ in results for rec in recs]
    traces = [t for _, tr in results for t in tr]
    return RunMetrics(config.label, records, config.num_distributions), traces


def write_per_customer(path, metrics: Sequence[RunMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        multi = len(metrics) > 1
        w.writerow((["system"] if multi else []) + list(RECORD_FIELDS))
        for m in metrics:
            for rec in m.records:
                w.writerow(([m.label] if multi else []) + rec.as_row())


def write_moving_avg(path, metrics: Sequence[RunMetrics], window: int) -> None:
    cols = [m.moving_average(window) for m in metrics]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["customer_index"] + [m.label for m in metrics])
        start = min(window, len(metrics[0].series())) - 1
        for i in range(len(cols[0])):
            w.writerow([str(start + i)] + [fmt(col[i]) for col in cols])


def write_summary(path, metrics: Sequence[RunMetrics]) -> None:
    summaries = [m.summary() for m in metrics]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["indicator"]
        for m in metrics:
            header += [f"{m.label}_mean", f"{m.label}_sd"]
        w.writerow(header)
        for name, key in SUMMARY_ROWS:
            row = [name]
            for s in summaries:
                mean, sd = s[key]
                row += [fmt(mean), fmt(sd)]
            w.writerow(row)


def prepare_output(output_dir) -> Path:
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"output directory {out} is not writable: {exc}") from exc
    return out


def write_outputs(output_dir, metrics: Sequence[RunMetrics], window: int,
                  traces: Iterable = ()) -> Path:
    out = prepare_output(output_dir)
    write_per_customer(out / "per_customer.csv", metrics)
    write_moving_avg(out / "moving_avg.csv", metrics, window)
    write_summary(out / "summary.csv", metrics)
    traces = list(traces)
    if traces:
        write_trace(out / "traces.jsonl", traces)
    return out


def run_experiment(config: ExperimentConfig, write: bool = True) -> RunMetrics:
    """Run every distribution of ``config`` and write the CSV artifacts."""
    if write:
        prepare_output(config.output_dir)
    metrics, traces = run_metrics(config)
    if write:
        out = write_outputs(config.output_dir, [metrics], config.window, traces)
        config.dump(out / "config.yaml")
        for r in range(config.num_distributions):
            pop, sv, _ = run_environment(replace(config, num_customers=1), r)
            save_population(out / f"population_run{r}.json", pop, sv, config.population, config.seed)
    return metrics


def compare(config: ExperimentConfig, methods: Sequence[str] = METHODS,
            strategies: Sequence[str] = STRATEGIES, write: bool = True) -> list[RunMetrics]:
    """Every method x strategy on shared seeds, so customers are paired across systems."""
    if write:
        prepare_output(config.output_dir)
    results, all_traces = [], []
    for method in methods:
        for strategy in strategies:
            cfg = replace(config, method=method, customer_strategy=strategy)
            m, traces = run_metrics(cfg)
            results.append(m)
            all_traces += [({**k, "system": cfg.label}, t) for k, t in traces]
    if write:
        write_outputs(config.output_dir, results, config.window, all_traces)
    return results
