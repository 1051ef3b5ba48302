"""Brute-force consistency checks, runnable from the command line.

Each check draws random instances, compares a fast code path against a slow
direct computation (or a stated property), and counts failures.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .bundles import Bundle, all_bundles
from .preferences import (CustomerValuation, PopulationParams, ShopValuation, best_bundles,
                          build_transform, coefficient_terms, sample_population, sample_shop)


@dataclass
class CheckResult:
    name: str
    cases: int
    failures: int

    @property
    def ok(self) -> bool:
        return self.failures == 0


def polynomial_value(coeffs: dict[tuple[int, ...], float], goods: set[int]) -> float:
    """Evaluate the cubic valuation term by term on an explicit good set."""
    total = coeffs.get((), 0.0)
    for order in (1, 2, 3):
        for term in combinations(sorted(goods), order):
            total += coeffs.get(term, 0.0)
    return total


def check_transform(rng: np.random.Generator, cases: int = 50, max_n: int = 6) -> CheckResult:
    failures = 0
    for _ in range(cases):
        n = int(rng.integers(1, max_n + 1))
        terms = coefficient_terms(n)
        a = rng.normal(size=len(terms))
        coeffs = dict(zip(terms, a))
        fast = build_transform(n) @ a
        for b in all_bundles(n):
            slow = polynomial_value(coeffs, set(b.goods()))
            if not np.isclose(fast[b.index], slow, rtol=1e-9, atol=1e-9):
                failures += 1
                break
    return CheckResult("transform", cases, failures)


def random_instance(rng: np.random.Generator, max_n: int = 6):
    n = int(rng.integers(2, max_n + 1))
    pop = sample_population(n, rng, PopulationParams())
    sv = sample_shop(n, rng, PopulationParams())
    return CustomerValuation(n, pop.sample_values(rng, 1)[0]), sv


def check_pareto(rng: np.random.Generator, cases: int = 1000, max_n: int = 6) -> list[CheckResult]:
    """Optimal-bundle dominance and the price-shift improvement, on random instances.

    For b* with maximal gains and any other b, no pair of prices lets the deal
    on b weakly beat the deal on b* for both sides.  Moving from b to b* at
    ``p + v_s(b*) - v_s(b)`` keeps the shop's net value and raises the
    customer's.
    """
    dom_fail = shift_fail = 0
    for _ in range(cases):
        cv, sv = random_instance(rng, max_n)
        best, g_max, _ = best_bundles(cv, sv)
        best_bits = {b.bits for b in best}
        others = [b for b in all_bundles(cv.n) if b.bits not in best_bits]
        if not others:
            continue
        b_star = best[int(rng.integers(len(best)))]
        b = others[int(rng.integers(len(others)))]
        scale = float(np.abs(cv.values).max()) + 1.0
        p, p_star = rng.uniform(-scale, 2 * scale, size=2)
        xc = cv(b) - p
        xs = p - sv(b)
        xc_star = cv(b_star) - p_star
        xs_star = p_star - sv(b_star)
        if not (xc < xc_star or xs < xs_star):
            dom_fail += 1
        p2 = p + sv(b_star) - sv(b)
        if not (np.isclose(p2 - sv(b_star), xs, rtol=1e-12, atol=1e-9) and cv(b_star) - p2 > xc):
            shift_fail += 1
    return [CheckResult("dominance", cases, dom_fail), CheckResult("price-shift", cases, shift_fail)]


def run_all(seed: int = 0, cases: int = 1000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check_transform(rng, max(1, cases // 20)), *check_pareto(rng, cases)]
