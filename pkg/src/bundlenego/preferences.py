"""Customer and shop valuations.

A customer's valuation of a bundle is a cubic polynomial in the bundle's
indicator vector::

    v(b) = a0 + sum_i a_i x_i + sum_{i<j} a_ij x_i x_j + sum_{i<j<k} a_ijk x_i x_j x_k

Coefficients are multivariate normal, so the vector of all bundle valuations
is multivariate normal too: ``values = T @ a`` with ``T[b, s] = 1`` iff the
index tuple ``s`` is a subset of ``b``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Sequence

import numpy as np

from .bundles import Bundle, ConfigurationError, _check_n, all_bundles

Term = tuple[int, ...]


@lru_cache(maxsize=None)
def coefficient_terms(n: int) -> tuple[Term, ...]:
    """Index tuples of the polynomial coefficients: (), (i,), (i, j), (i, j, k)."""
    _check_n(n)
    terms: list[Term] = [()]
    for order in (1, 2, 3):
        terms.extend(combinations(range(n), order))
    return tuple(terms)


def build_transform(n: int) -> np.ndarray:
    """0/1 matrix mapping coefficient vectors to bundle valuations.

    Rows follow :func:`all_bundles` order, columns :func:`coefficient_terms`.
    """
    return _transform(n).copy()


@lru_cache(maxsize=None)
def _transform(n: int) -> np.ndarray:
    terms = coefficient_terms(n)
    masks = np.array([sum(1 << g for g in t) for t in terms], dtype=np.int64)
    rows = np.arange(1, 1 << n, dtype=np.int64)[:, None]
    t = ((rows & masks[None, :]) == masks[None, :]).astype(float)
    t.flags.writeable = False
    return t


def default_blocks(n: int) -> tuple[tuple[int, ...], ...]:
    """Split goods into three contiguous blocks, larger blocks last.

    n=10 gives sizes (3, 3, 4); n=6 gives (2, 2, 2).
    """
    if n < 3:
        return (tuple(range(n)),)
    base, extra = divmod(n, 3)
    sizes = [base] * (3 - extra) + [base + 1] * extra
    blocks, start = [], 0
    for s in sizes:
        blocks.append(tuple(range(start, start + s)))
        start += s
    return tuple(blocks)


def validate_blocks(blocks: Sequence[Sequence[int]], n: int) -> None:
    flat = sorted(g for blk in blocks for g in blk)
    if flat != list(range(n)):
        raise ConfigurationError(f"blocks {blocks!r} do not partition {n} goods")


@dataclass(frozen=True)
class PopulationParams:
    """Knobs for random population generation.

    Monetary magnitudes are multiples of ``value_scale``.  Interaction
    coefficients are further scaled by ``order_scales`` (linear, quadratic,
    cubic).  A quadratic or cubic term is *within* a block when all its goods
    share a block, *cross* otherwise.
    """

    blocks: tuple[tuple[int, ...], ...] | None = None
    value_scale: float = 100.0
    order_scales: tuple[float, float, float] = (1.0, 0.3, 0.1)
    constant_mean: float = 0.0
    linear_mean: tuple[float, float] = (0.7, 1.3)
    within_mean: tuple[float, float] = (2.0, 3.0)
    cross_mean: tuple[float, float] = (-1.5, -0.5)
    std_frac: tuple[float, float] = (0.3, 0.6)
    within_corr: tuple[float, float] = (0.5, 0.9)
    cross_corr: tuple[float, float] = (-0.2, 0.2)
    corr_seed: int = 0
    unit_cost: tuple[float, float] = (0.6, 1.0)
    discount_frac: tuple[tuple[int, float], ...] = ((2, 0.25), (3, 0.35))

    @classmethod
    def full(cls) -> PopulationParams:
        """Preset for ten goods in blocks of 3, 3 and 4.

        Milder cross-block penalties than the default so that a block is the
        best bundle for only a minority of customers.
        """
        return cls(cross_mean=(-1.0, 0.0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["discount_frac"] = {str(k): v for k, v in self.discount_frac}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> PopulationParams:
        d = dict(d)
        if d.get("blocks") is not None:
            d["blocks"] = tuple(tuple(int(g) for g in blk) for blk in d["blocks"])
        for key in ("order_scales", "linear_mean", "within_mean", "cross_mean", "std_frac",
                    "within_corr", "cross_corr", "unit_cost"):
            if key in d:
                d[key] = tuple(float(x) for x in d[key])
        if "discount_frac" in d:
            df = d["discount_frac"]
            items = df.items() if isinstance(df, dict) else df
            d["discount_frac"] = tuple(sorted((int(k), float(v)) for k, v in items))
        return cls(**d)


def symmetric_factor(cov: np.ndarray) -> np.ndarray:
    """Return ``L`` with ``L @ L.T == cov`` for symmetric PSD ``cov``.

    Uses an eigendecomposition so singular covariances are fine.
    """
    w, v = np.linalg.eigh(cov)
    return v * np.sqrt(np.clip(w, 0.0, None))


def nearest_correlation(c: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to zero, then rescale to unit diagonal."""
    w, v = np.linalg.eigh((c + c.T) / 2)
    repaired = (v * np.clip(w, 0.0, None)) @ v.T
    d = np.sqrt(np.diag(repaired))
    d[d == 0] = 1.0
    out = repaired / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return out


@dataclass(frozen=True, eq=False)
class CustomerValuation:
    n: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != ((1 << self.n) - 1,):
            raise ValueError("valuation table must cover every nonempty bundle")

    def __call__(self, b: Bundle) -> float:
        return float(self.values[b.bits - 1])


@dataclass(frozen=True, eq=False)
class ShopValuation:
    """Additive unit costs minus a size-indexed bundle reduction."""

    unit_costs: tuple[float, ...]
    discount: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(c <= 0 for c in self.unit_costs):
            raise ValueError("unit costs must be positive")
        for k, d in self.discount.items():
            if d < 0:
                raise ValueError("discounts must be nonnegative")
            if k > 3 and d != 0:
                raise ValueError("bundles with more than 3 goods get no reduction")
            if k <= len(self.unit_costs) and d >= k * min(self.unit_costs):
                raise ValueError(f"discount for size {k} would make some bundle free")
        object.__setattr__(self, "_values", self._table())

    @property
    def n(self) -> int:
        return len(self.unit_costs)

    def _table(self) -> np.ndarray:
        n = self.n
        costs = np.asarray(self.unit_costs, dtype=float)
        t = _transform(n)[:, 1 : n + 1]
        sizes = t.sum(axis=1).astype(int)
        disc = np.array([self.discount.get(int(k), 0.0) if k <= 3 else 0.0 for k in sizes])
        out = t @ costs - disc
        out.flags.writeable = False
        return out

    @property
    def values(self) -> np.ndarray:
        return self._values  # type: ignore[attr-defined]

    def __call__(self, b: Bundle) -> float:
        return float(self._values[b.bits - 1])  # type: ignore[attr-defined]

    def to_dict(self) -> dict:
        return {"unit_costs": list(self.unit_costs),
                "discount": {str(k): v for k, v in sorted(self.discount.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> ShopValuation:
        return cls(tuple(float(c) for c in d["unit_costs"]),
                   {int(k): float(v) for k, v in d.get("discount", {}).items()})


def shop_value(sv: ShopValuation, b: Bundle) -> float:
    return sv(b)


@dataclass(frozen=True, eq=False)
class PreferencePopulation:
    """Multivariate normal over polynomial coefficients."""

    n: int
    mu: np.ndarray
    std: np.ndarray
    corr: np.ndarray
    blocks: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self) -> None:
        m = len(coefficient_terms(self.n))
        if self.mu.shape != (m,) or self.std.shape != (m,) or self.corr.shape != (m, m):
            raise ValueError(f"expected {m} coefficients for n={self.n}")
        if np.any(self.std < 0):
            raise ValueError("standard deviations must be nonnegative")
        sigma = self.corr * np.outer(self.std, self.std)
        if not np.allclose(sigma, sigma.T):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(sigma).min() < -1e-9 * max(1.0, float(np.abs(sigma).max())):
            raise ValueError("covariance is not positive semi-definite")
        t = _transform(self.n)
        factor = symmetric_factor(sigma)
        object.__setattr__(self, "_sigma", sigma)
        object.__setattr__(self, "_value_mean", t @ self.mu)
        object.__setattr__(self, "_value_factor", t @ factor)

    @property
    def sigma(self) -> np.ndarray:
        return self._sigma  # type: ignore[attr-defined]

    @property
    def transform(self) -> np.ndarray:
        return _transform(self.n)

    @property
    def value_mean(self) -> np.ndarray:
        """Expected valuation of every bundle, ``T @ mu``."""
        return self._value_mean  # type: ignore[attr-defined]

    def value_cov(self) -> np.ndarray:
        f = self._value_factor  # type: ignore[attr-defined]
        return f @ f.T

    def sample_values(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Valuation tables of ``size`` independent customers, shape (size, 2**n - 1)."""
        f = self._value_factor  # type: ignore[attr-defined]
        z = rng.standard_normal((size, f.shape[1]))
        return self.value_mean + z @ f.T

    def sample_customer(self, rng: np.random.Generator) -> CustomerValuation:
        return CustomerValuation(self.n, self.sample_values(rng, 1)[0])

    def to_dict(self) -> dict:
        return {"n": self.n, "mu": self.mu.tolist(), "std": self.std.tolist(),
                "corr": self.corr.tolist(), "blocks": [list(b) for b in self.blocks]}

    @classmethod
    def from_dict(cls, d: dict) -> PreferencePopulation:
        return cls(int(d["n"]), np.asarray(d["mu"], float), np.asarray(d["std"], float),
                   np.asarray(d["corr"], float), tuple(tuple(b) for b in d.get("blocks", ())))


def sample_customer(pop: PreferencePopulation, rng: np.random.Generator) -> CustomerValuation:
    return pop.sample_customer(rng)


def _term_block(term: Term, block_of: dict[int, int]) -> int | None:
    if len(term) < 2:
        return None
    ids = {block_of[g] for g in term}
    return ids.pop() if len(ids) == 1 else None


def structure_correlation(n: int, params: PopulationParams) -> np.ndarray:
    """Correlation over coefficients: high inside a block, weak across blocks."""
    blocks = params.blocks or default_blocks(n)
    block_of = {g: i for i, blk in enumerate(blocks) for g in blk}
    # linear terms belong to the block of their good
    ids = [block_of[t[0]] if len(t) == 1 else _term_block(t, block_of)
           for t in coefficient_terms(n)]
    rng = np.random.default_rng(params.corr_seed)
    m = len(ids)
    c = np.eye(m)
    lo_w, hi_w = params.within_corr
    lo_x, hi_x = params.cross_corr
    for i in range(m):
        for j in range(i + 1, m):
            if ids[i] is not None and ids[i] == ids[j]:
                c[i, j] = c[j, i] = rng.uniform(lo_w, hi_w)
            else:
                c[i, j] = c[j, i] = rng.uniform(lo_x, hi_x)
    return nearest_correlation(c)


def sample_population(n: int, seed: int | np.random.Generator,
                      params: PopulationParams | None = None,
                      max_tries: int = 10) -> PreferencePopulation:
    """Draw random coefficient means and variances around a fixed correlation."""
    params = params or PopulationParams()
    blocks = params.blocks or default_blocks(n)
    validate_blocks(blocks, n)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    block_of = {g: i for i, blk in enumerate(blocks) for g in blk}
    corr = structure_correlation(n, PopulationParams.from_dict({**params.to_dict(), "blocks": blocks}))
    terms = coefficient_terms(n)
    scale = params.value_scale
    for _ in range(max_tries):
        mu = np.empty(len(terms))
        std = np.empty(len(terms))
        for idx, term in enumerate(terms):
            order = len(term)
            if order == 0:
                mu[idx] = params.constant_mean * scale
                std[idx] = 0.0
                continue
            s = scale * params.order_scales[order - 1]
            if order == 1:
                lo, hi = params.linear_mean
            elif _term_block(term, block_of) is not None:
                lo, hi = params.within_mean
            else:
                lo, hi = params.cross_mean
            mu[idx] = rng.uniform(lo, hi) * s
            std[idx] = rng.uniform(*params.std_frac) * s
        sigma = corr * np.outer(std, std)
        if np.linalg.eigvalsh(sigma).min() >= -1e-9 * max(1.0, float(np.abs(sigma).max())):
            return PreferencePopulation(n, mu, std, corr, tuple(blocks))
    raise RuntimeError("could not draw a positive semi-definite covariance")


def sample_shop(n: int, rng: np.random.Generator,
                params: PopulationParams | None = None) -> ShopValuation:
    params = params or PopulationParams()
    costs = rng.uniform(*params.unit_cost, size=n) * params.value_scale
    cheapest = float(costs.min())
    discount = {k: frac * k * cheapest for k, frac in params.discount_frac if k <= 3}
    return ShopValuation(tuple(float(c) for c in costs), discount)


def customer_net(value: float, price: float) -> float:
    return value - price


def shop_net(value: float, price: float) -> float:
    return price - value


def gains(cv: CustomerValuation, sv: ShopValuation, b: Bundle) -> float:
    """Gains from trade: customer valuation minus shop valuation."""
    return cv(b) - sv(b)


def gains_table(cv: CustomerValuation, sv: ShopValuation) -> np.ndarray:
    return cv.values - sv.values


def best_bundles(cv: CustomerValuation, sv: ShopValuation) -> tuple[list[Bundle], float, float]:
    """Exhaustive scan: bundles with maximal gains, the maximum, and the minimum."""
    g = gains_table(cv, sv)
    top = g.max()
    bundles = all_bundles(cv.n)
    best = [bundles[i] for i in np.flatnonzero(g == top)]
    return best, float(top), float(g.min())


def save_population(path, pop: PreferencePopulation, sv: ShopValuation,
                    params: PopulationParams, seed: int) -> None:
    with open(path, "w") as fh:
        json.dump({"seed": seed, "params": params.to_dict(), "population": pop.to_dict(),
                   "shop": sv.to_dict()}, fh, indent=1)


def load_population(path) -> tuple[PreferencePopulation, ShopValuation, PopulationParams, int]:
    with open(path) as fh:
        d = json.load(fh)
    return (PreferencePopulation.from_dict(d["population"]), ShopValuation.from_dict(d["shop"]),
            PopulationParams.from_dict(d["params"]), int(d["seed"]))
