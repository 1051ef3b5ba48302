"""Estimators that order an interest bundle's neighborhood.

``LearningEstimator`` (MU) learns mean gains differences from the customers'
own counter-offers, ``OracleEstimator`` (S) reads conditional expectations off
the true preference distribution, ``RandomEstimator`` (B) shuffles.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .bundles import Bundle, hamming
from .preferences import PreferencePopulation, ShopValuation

log = logging.getLogger(__name__)

MIN_ACCEPT_RATE = 1e-3


@dataclass(frozen=True)
class TrainingExample:
    from_bundle: Bundle
    to_bundle: Bundle
    price_delta: float

    def __post_init__(self) -> None:
        if hamming(self.from_bundle, self.to_bundle) != 1:
            raise ValueError("training examples must link neighboring bundles")


class GainsTable:
    """Running means of gains differences, keyed by (from, to) bundle pair.

    ``mean(b, b2)`` estimates the change in gains from trade when the
    negotiation moves from ``b`` to ``b2``.  Unseen pairs read as 0.
    """

    def __init__(self) -> None:
        self._entries: dict[tuple[int, int], list] = {}
        self.examples_recorded = 0

    def add(self, ex: TrainingExample) -> None:
        key = (ex.from_bundle.bits, ex.to_bundle.bits)
        entry = self._entries.get(key)
        if entry is None:
            entry = self._entries[key] = [0.0, 0, ex.from_bundle.n]
        entry[1] += 1
        entry[0] += (ex.price_delta - entry[0]) / entry[1]
        self.examples_recorded += 1

    def mean(self, b_from: Bundle, b_to: Bundle) -> float:
        entry = self._entries.get((b_from.bits, b_to.bits))
        return entry[0] if entry else 0.0

    def count(self, b_from: Bundle, b_to: Bundle) -> int:
        entry = self._entries.get((b_from.bits, b_to.bits))
        return entry[1] if entry else 0

    def __len__(self) -> int:
        return len(self._entries)

    def rows(self) -> list[tuple[Bundle, Bundle, float, int]]:
        return [(Bundle(f, e[2]), Bundle(t, e[2]), e[0], e[1])
                for (f, t), e in sorted(self._entries.items())]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["from", "to", "mean", "count"])
            for f, t, m, c in self.rows():
                w.writerow([f.to_string(), t.to_string(), repr(m), c])

    @classmethod
    def from_csv(cls, path) -> GainsTable:
        table = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                f, t = Bundle.from_string(row["from"]), Bundle.from_string(row["to"])
                c = int(row["count"])
                table._entries[(f.bits, t.bits)] = [float(row["mean"]), c, f.n]
                table.examples_recorded += c
        return table


def record_exchange(table: GainsTable, b: Bundle, p: float, b2: Bundle, p2: float,
                    sv: ShopValuation) -> None:
    """Store one recommendation exchange as a pair of opposite examples.

    ``p`` is the customer's bid on ``b`` right before ``b2`` was recommended,
    ``p2`` her counter-offer on ``b2``.
    """
    if hamming(b, b2) != 1:
        raise ValueError(f"{b} and {b2} are not neighbors")
    delta = (p2 - sv(b2)) - (p - sv(b))
    table.add(TrainingExample(b, b2, delta))
    table.add(TrainingExample(b2, b, -delta))


@dataclass(frozen=True)
class LambdaSchedule:
    lambda0: float = 0.0
    growth: float = 1e-5
    cap: float = 0.2

    def __post_init__(self) -> None:
        if self.lambda0 < 0 or self.growth < 0 or self.cap < self.lambda0:
            raise ValueError("schedule must be nonnegative and nondecreasing")


def lambda_value(sched: LambdaSchedule, examples_recorded: int) -> float:
    return min(sched.cap, sched.lambda0 + sched.growth * examples_recorded)


def softmax_probabilities(values: Sequence[float], lam: float) -> np.ndarray:
    """Boltzmann weights ``exp(lam * v)`` normalized; max-shifted for stability."""
    z = lam * np.asarray(values, dtype=float)
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def softmax_order(table: GainsTable, b: Bundle, neighbors: Sequence[Bundle], lam: float,
                  rng: np.random.Generator) -> list[Bundle]:
    """Order ``neighbors`` by repeated softmax draws without replacement."""
    if not neighbors:
        raise ValueError("neighbors must be nonempty")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    remaining = list(neighbors)
    values = [table.mean(b, c) for c in remaining]
    out = []
    while len(remaining) > 1:
        probs = softmax_probabilities(values, lam)
        k = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
        k = min(k, len(remaining) - 1)
        out.append(remaining.pop(k))
        values.pop(k)
    out.extend(remaining)
    return out


def benchmark_order(neighbors: Sequence[Bundle], rng: np.random.Generator) -> list[Bundle]:
    if not neighbors:
        raise ValueError("neighbors must be nonempty")
    return [neighbors[i] for i in rng.permutation(len(neighbors))]


def conditional_value_means(pool: np.ndarray, b: Bundle, p: float,
                            targets: Sequence[Bundle],
                            fallback: np.ndarray | None = None) -> np.ndarray:
    """Monte-Carlo ``E[v(b2) | v(b) >= p]`` for each ``b2`` in ``targets``.

    ``pool`` holds sampled valuation tables with one *row per bundle* (shape
    ``(2**n - 1, samples)``); samples failing the condition are rejected.  When
    fewer than ``MIN_ACCEPT_RATE`` of samples survive, the unconditioned
    ``fallback`` means are returned instead.
    """
    idx = [t.bits - 1 for t in targets]
    accepted = pool[b.bits - 1] >= p
    k = int(accepted.sum())
    if k < MIN_ACCEPT_RATE * pool.shape[1] or k == 0:
        log.warning("acceptance rate %.2g below %g for %s at price %.6g; using unconditional means",
                    k / pool.shape[1], MIN_ACCEPT_RATE, b, p)
        if fallback is None:
            return pool[idx].mean(axis=1)
        return np.asarray(fallback)[idx]
    return pool[idx][:, accepted].mean(axis=1)


def s_oracle_order(pop: PreferencePopulation, sv: ShopValuation, b: Bundle, p: float,
                   neighbors: Sequence[Bundle], rng: np.random.Generator | None = None,
                   budget: int = 20_000, pool: np.ndarray | None = None) -> list[Bundle]:
    """Order by estimated ``E[v(b2) | v(b) >= p] - v_s(b2)``, best first.

    Ties fall back to bundle order.  Pass ``pool`` to reuse samples.
    """
    if pool is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        pool = pop.sample_values(rng, budget).T
    est = conditional_value_means(pool, b, p, neighbors, pop.value_mean)
    est = est - np.array([sv(c) for c in neighbors])
    return [c for _, c in sorted(zip(-est, neighbors), key=lambda x: (x[0], x[1]))]


class Estimator(Protocol):
    name: str

    def order(self, interest: Bundle, price: float, neighbors: Sequence[Bundle],
              rng: np.random.Generator) -> list[Bundle]: ...

    def record(self, b: Bundle, p: float, b2: Bundle, p2: float) -> None: ...


class LearningEstimator:
    """Online tabular learner; the table persists across customers."""

    name = "MU"

    def __init__(self, sv: ShopValuation, schedule: LambdaSchedule | None = None,
                 table: GainsTable | None = None) -> None:
        self.sv = sv
        self.schedule = schedule or LambdaSchedule()
        self.table = table if table is not None else GainsTable()

    @property
    def lam(self) -> float:
        return lambda_value(self.schedule, self.table.examples_recorded)

    def order(self, interest, price, neighbors, rng):
        return softmax_order(self.table, interest, neighbors, self.lam, rng)

    def record(self, b, p, b2, p2):
        record_exchange(self.table, b, p, b2, p2, self.sv)


class OracleEstimator:
    """Knows the true coefficient distribution; conditions on the customer's bid."""

    name = "S"

    def __init__(self, pop: PreferencePopulation, sv: ShopValuation, rng: np.random.Generator,
                 budget: int = 20_000) -> None:
        self.pop = pop
        self.sv = sv
        self.pool = np.ascontiguousarray(pop.sample_values(rng, budget).T)

    def order(self, interest, price, neighbors, rng):
        return s_oracle_order(self.pop, self.sv, interest, price, neighbors, pool=self.pool)

    def record(self, b, p, b2, p2):
        pass


class RandomEstimator:
    name = "B"

    def order(self, interest, price, neighbors, rng):
        return benchmark_order(neighbors, rng)

    def record(self, b, p, b2, p2):
        pass
