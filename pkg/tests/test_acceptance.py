"""One check per acceptance criterion, at the stated tolerances.

Criteria 1 to 5 share a single desk-scale comparison (n=6, 2000 customers,
3 runs, every method and strategy on the default master seed).
"""

import math
import subprocess
import sys
import time
from itertools import permutations

import numpy as np
import pytest
import yaml
from scipy import stats

from bundlenego.background import (GainsTable, TrainingExample, benchmark_order,
                                   softmax_probabilities, softmax_order)
from bundlenego.bundles import Bundle, all_bundles, neighborhood
from bundlenego.experiment import ExperimentConfig, compare, compute_metrics, decile_means
from bundlenego.foreground import predict_rounds, sign
from bundlenego.negotiation import (Bargainer, History, Offer, Role, SessionOutcome, SessionResult,
                                    StrategyParams, run_session, tdf_price)
from bundlenego.preferences import (CustomerValuation, ShopValuation, best_bundles, build_transform,
                                    coefficient_terms, sample_population, sample_shop)

STRATEGIES = ("TDF", "TFTM")
METHODS = ("MU", "S", "B")


@pytest.fixture(scope="session")
def desk():
    start = time.perf_counter()
    results = compare(ExperimentConfig(), write=False)
    elapsed = time.perf_counter() - start
    return {m.label: m for m in results}, elapsed


def mean(desk, label, key):
    return desk[0][label].summary()[key][0]


def test_criterion_1_method_ordering(desk, criterion):
    for strat in STRATEGIES:
        s, mu, b = (mean(desk, f"{m}_{strat}", "rel_percentage") for m in ("S", "MU", "B"))
        ok = s - mu > 0.02 and mu - b > 0.02
        criterion(1, ok, f"{strat} S={s:.3f} MU={mu:.3f} B={b:.3f}")
        assert ok, (strat, s, mu, b)
    criterion(1, desk[1] < 300, f"{desk[1]:.0f}s")
    assert desk[1] < 300


def test_criterion_2_learning_curve(desk, criterion):
    for strat in STRATEGIES:
        first, last = decile_means(desk[0][f"MU_{strat}"].moving_average(100))
        ok = last - first > 0.05
        criterion(2, ok, f"{strat} {first:.3f}->{last:.3f}")
        assert ok, (strat, first, last)


def test_criterion_3_gap_closing(desk, criterion):
    for strat in STRATEGIES:
        gap = desk[0][f"S_{strat}"].moving_average(100) - desk[0][f"MU_{strat}"].moving_average(100)
        first, last = decile_means(gap)
        ok = last < first
        criterion(3, ok, f"{strat} {first:.3f}->{last:.3f}")
        assert ok, (strat, first, last)


def test_criterion_4_strategy_tradeoff(desk, criterion):
    for m in METHODS:
        tdf, tftm = desk[0][f"{m}_TDF"].summary(), desk[0][f"{m}_TFTM"].summary()
        ok = (tftm["deals"][0] > tdf["deals"][0] and tftm["rounds"][0] < tdf["rounds"][0]
              and tdf["gains_final"][0] > tftm["gains_final"][0])
        criterion(4, ok, f"{m} deals {tdf['deals'][0]:.0f}/{tftm['deals'][0]:.0f} "
                         f"rounds {tdf['rounds'][0]:.2f}/{tftm['rounds'][0]:.2f}")
        assert ok, m


def test_criterion_5_benchmark_beaten(desk, criterion):
    for strat in STRATEGIES:
        b = desk[0][f"B_{strat}"].summary()
        for m in ("MU", "S"):
            x = desk[0][f"{m}_{strat}"].summary()
            ok = x["rounds"][0] < b["rounds"][0] and x["deals"][0] >= b["deals"][0]
            criterion(5, ok, f"{m}_{strat} rounds {x['rounds'][0]:.2f} vs {b['rounds'][0]:.2f}")
            assert ok, (m, strat)


def test_criterion_6_pareto_properties(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    dominance_fail = shift_fail = checked = 0
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        pop = sample_population(n, rng)
        sv = sample_shop(n, rng)
        cv = pop.sample_customer(rng)
        best, _, _ = best_bundles(cv, sv)
        others = [b for b in all_bundles(n) if b not in best]
        if not others:
            continue
        checked += 1
        scale = float(np.abs(cv.values).max()) + 1
        for b_star in best:
            for b in others:
                p, p_star = rng.uniform(-scale, 2 * scale, size=2)
                if not (cv(b) - p < cv(b_star) - p_star or p - sv(b) < p_star - sv(b_star)):
                    dominance_fail += 1
                p2 = p + sv(b_star) - sv(b)
                if not (abs((p2 - sv(b_star)) - (p - sv(b))) <= 1e-9 * scale and cv(b_star) - p2 > cv(b) - p):
                    shift_fail += 1
    elapsed = time.perf_counter() - start
    ok = dominance_fail == 0 and shift_fail == 0 and elapsed < 10 and checked > 900
    criterion(6, ok, f"{checked} instances, failures {dominance_fail}/{shift_fail}, {elapsed:.1f}s")
    assert ok


def rel(a, b):
    return abs(a - b) <= 1e-9 * max(1.0, abs(b))


def test_criterion_7_formula_exactness(criterion):
    checks = {}
    # predicted rounds: (v_s - p) / (p - p')
    cases = [(100, 80, 70, 2.0), (250.5, 100.25, 90.0, 150.25 / 10.25), (60, 10, 9.5, 100.0)]
    checks["rounds"] = all(rel(predict_rounds(v, p, q), want) for v, p, q, want in cases)
    # sign: strict improvement of the shop's net value
    sv = ShopValuation((10.0, 20.0))
    b1, b2 = Bundle(1, 2), Bundle(2, 2)
    cases = [((b1, 22), (b2, 34), 1), ((b1, 22), (b2, 32), 0), ((b2, 40), (b1, 15), 0)]
    checks["sign"] = all(sign(Offer(x, p, Role.CUSTOMER, 0), Offer(y, q, Role.CUSTOMER, 2), sv) == want
                         for (x, p), (y, q), want in cases)
    # running mean of recorded deltas
    ok = True
    for deltas in ([5, 7, 9], [1e-3, 2e5, -7.25, 3.5], list(np.linspace(-4, 11, 17))):
        t = GainsTable()
        for d in deltas:
            t.add(TrainingExample(b1, Bundle(3, 2), d))
        ok &= rel(t.mean(b1, Bundle(3, 2)), math.fsum(deltas) / len(deltas))
    checks["mean"] = ok
    # softmax weights exp(lam * g) / sum
    ok = True
    for vals, lam in (([1.0, 0.0], 1.0), ([0.5, -2.0, 3.0], 0.7), ([10.0, 10.5, 9.0, 8.0], 2.0)):
        w = [math.exp(lam * v) for v in vals]
        ok &= all(rel(a, x / sum(w)) for a, x in zip(softmax_probabilities(vals, lam), w))
    checks["softmax"] = ok
    # valuation polynomial through the transform
    ok = True
    rng = np.random.default_rng(0)
    for n in (2, 4, 6):
        terms = coefficient_terms(n)
        a = rng.normal(size=len(terms)) * 10
        v = build_transform(n) @ a
        for b in all_bundles(n):
            direct = sum(c for term, c in zip(terms, a) if all(i in b for i in term))
            ok &= rel(v[b.index], direct)
    checks["transform"] = ok
    # concession gap
    ok = True
    for v, g, d, t in ((100, 0.5, 0.03, 0), (80, 0.5, 0.03, 7), (1234.5, 0.3, 0.1, 25)):
        ok &= rel(tdf_price(v, Role.CUSTOMER, StrategyParams("TDF", g, d), t), v * (1 - g * math.exp(-d * t)))
        ok &= rel(tdf_price(v, Role.SHOP, StrategyParams("TDF", 1 + g, d), t), v * (1 + g * math.exp(-d * t)))
    checks["gap"] = ok
    # percentage and relative percentage
    ok = True
    for g, init, final in (([1, 4, -2], 0, 1), ([3.5, -1, 9], 1, 0), ([0, 2, 5], 0, 2)):
        sv = ShopValuation((1.0, 1.0))
        cv = CustomerValuation(2, np.asarray(g, float) + sv.values)
        bi, bf = all_bundles(2)[init], all_bundles(2)[final]
        res = SessionResult(SessionOutcome("deal", Offer(bf, 0.0, Role.SHOP, 1), 1), History(), [])
        rec = compute_metrics(res, cv, sv, bi, bi)
        ok &= rel(rec.percentage, (g[final] - min(g)) / (max(g) - min(g)))
        ok &= rel(rec.rel_percentage, 1.0 if max(g) == g[init] else (g[final] - g[init]) / (max(g) - g[init]))
    checks["percentages"] = ok
    failed = [k for k, v in checks.items() if not v]
    criterion(7, not failed, f"{len(checks)} formulas, failed: {failed or 'none'}")
    assert not failed


def test_criterion_8_statistics(criterion):
    results = {}
    # sampler moments at 1e5 draws
    n, draws = 4, 100_000
    pop = sample_population(n, 11)
    vals = pop.sample_values(np.random.default_rng(12), draws)
    t = build_transform(n)
    m, cov = t @ pop.mu, t @ pop.sigma @ t.T
    var = np.diag(cov)
    results["mean"] = bool(np.all(np.abs(vals.mean(0) - m) < 3 * np.sqrt(var / draws)))
    se_cov = np.sqrt((np.outer(var, var) + cov**2) / draws)
    results["cov"] = bool(np.all(np.abs(np.cov(vals, rowvar=False) - cov) < 3 * se_cov))
    # softmax at the extremes
    b = Bundle.from_goods([1, 2], 4)
    nbrs = neighborhood(b)
    table = GainsTable()
    for nb, g in zip(nbrs, (3.0, -1.0, 2.0, 0.5)):
        table._entries[(b.bits, nb.bits)] = [g, 1, 4]
    rng = np.random.default_rng(13)
    firsts = [softmax_order(table, b, nbrs, 0.0, rng)[0] for _ in range(20_000)]
    freqs = np.array([firsts.count(x) for x in nbrs]) / 20_000
    results["uniform"] = bool(np.all(np.abs(freqs - 0.25) < 3 * math.sqrt(0.25 * 0.75 / 20_000)))
    want = [nbrs[0], nbrs[2], nbrs[3], nbrs[1]]
    results["argmax"] = all(softmax_order(table, b, nbrs, 1e3, rng) == want for _ in range(1000))
    # benchmark permutations
    counts = {p: 0 for p in permutations(nbrs[:3])}
    for _ in range(60_000):
        counts[tuple(benchmark_order(nbrs[:3], rng))] += 1
    results["chi2"] = bool(stats.chisquare(list(counts.values())).pvalue > 0.01)
    # breakdown tail at q = 0.02
    q, sessions = 0.02, 10_000
    lengths = []
    for _ in range(sessions):
        c = Bargainer(Role.CUSTOMER, lambda _: 50.0, StrategyParams("TDF", 0.5, 0.03))
        s = Bargainer(Role.SHOP, lambda _: 100.0, StrategyParams("TDF", 1.5, 0.03))
        lengths.append(run_session(c, s, Bundle(1, 1), breakdown_prob=q, rng=rng).outcome.rounds)
    lengths = np.array(lengths)
    tail_ok = True
    for k in (1, 10, 50, 100, 200):
        p = (1 - q) ** k
        tail_ok &= bool(np.mean(lengths > k) <= p + 3 * math.sqrt(p * (1 - p) / sessions))
    results["tail"] = tail_ok
    failed = [k for k, v in results.items() if not v]
    criterion(8, not failed, f"failed: {failed or 'none'}")
    assert not failed


def test_criterion_9_determinism(tmp_path, criterion):
    cfg = tmp_path / "config.yaml"
    cfg.write_text(yaml.safe_dump({"num_customers": 150, "num_distributions": 2, "seed": 777}))
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "bundlenego", "compare", "--config", str(cfg),
                               "--output", str(out)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append({f: (out / f).read_bytes()
                        for f in ("per_customer.csv", "moving_avg.csv", "summary.csv")})
    ok = outputs[0] == outputs[1]
    criterion(9, ok, "per_customer, moving_avg, summary")
    assert ok
