"""Bundles of goods as fixed-width bit vectors.

Bit ``i`` of :attr:`Bundle.bits` is set when good ``i`` is in the bundle.
Bundles order by their integer bit value, which gives every downstream
enumeration a reproducible order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

MAX_GOODS = 16


class ConfigurationError(ValueError):
    """Raised for invalid catalog sizes or inconsistent settings."""


def _check_n(n: int) -> None:
    if not isinstance(n, int) or n < 1 or n > MAX_GOODS:
        raise ConfigurationError(f"catalog size must be in [1, {MAX_GOODS}], got {n!r}")


@dataclass(frozen=True, order=True, slots=True)
class Bundle:
    bits: int
    n: int

    def __post_init__(self) -> None:
        _check_n(self.n)
        if self.bits <= 0 or self.bits >= (1 << self.n):
            raise ValueError(f"bits {self.bits} is not a nonempty subset of {self.n} goods")

    @classmethod
    def from_goods(cls, goods: Iterable[int], n: int) -> Bundle:
        bits = 0
        for g in goods:
            if not 0 <= g < n:
                raise ValueError(f"good {g} outside catalog of size {n}")
            bits |= 1 << g
        return cls(bits, n)

    @classmethod
    def from_string(cls, s: str) -> Bundle:
        """Inverse of :meth:`to_string` (most significant good first)."""
        return cls(int(s, 2), len(s))

    @property
    def index(self) -> int:
        """Position of this bundle in :func:`all_bundles` (``bits - 1``)."""
        return self.bits - 1

    @property
    def size(self) -> int:
        return self.bits.bit_count()

    def goods(self) -> list[int]:
        return [i for i in range(self.n) if self.bits >> i & 1]

    def __contains__(self, good: int) -> bool:
        return bool(self.bits >> good & 1)

    def to_string(self) -> str:
        return format(self.bits, f"0{self.n}b")

    def __str__(self) -> str:
        return "{" + ",".join(map(str, self.goods())) + "}"


def all_bundles(n: int) -> list[Bundle]:
    """All ``2**n - 1`` nonempty bundles in ascending bit order."""
    _check_n(n)
    return list(_all_bundles(n))


@lru_cache(maxsize=None)
def _all_bundles(n: int) -> tuple[Bundle, ...]:
    return tuple(Bundle(bits, n) for bits in range(1, 1 << n))


def hamming(a: Bundle, b: Bundle) -> int:
    if a.n != b.n:
        raise ValueError(f"catalog sizes differ: {a.n} vs {b.n}")
    return (a.bits ^ b.bits).bit_count()


def neighborhood(b: Bundle) -> list[Bundle]:
    """Bundles at Hamming distance 1 from ``b``, empty set excluded."""
    return list(_neighborhood(b.bits, b.n))


@lru_cache(maxsize=1 << 16)
def _neighborhood(bits: int, n: int) -> tuple[Bundle, ...]:
    flipped = sorted(bits ^ (1 << i) for i in range(n))
    return tuple(Bundle(f, n) for f in flipped if f)


def bundles_at_distance(b: Bundle, k: int) -> list[Bundle]:
    """Nonempty bundles at Hamming distance exactly ``k`` from ``b``."""
    return [c for c in _all_bundles(b.n) if (c.bits ^ b.bits).bit_count() == k]
