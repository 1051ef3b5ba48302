"""Alternating-offers bargaining between a customer and the shop.

Each loop iteration ``t`` the customer bids on the bundle on the table, the
shop either accepts or (if the negotiation survives the breakdown draw)
counter-offers on the current or a recommended bundle, and the customer in
turn accepts or goes on to the next iteration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Literal, Protocol

import numpy as np

from .bundles import Bundle

Valuation = Callable[[Bundle], float]


class Role(str, Enum):
    CUSTOMER = "customer"
    SHOP = "shop"

    @property
    def other(self) -> Role:
        return Role.SHOP if self is Role.CUSTOMER else Role.CUSTOMER


@dataclass(frozen=True, slots=True)
class Offer:
    bundle: Bundle
    price: float
    proposer: Role
    round: int


def net_value(role: Role, valuation: float, price: float) -> float:
    """Net monetary value of a deal at ``price`` for ``role``."""
    return valuation - price if role is Role.CUSTOMER else price - valuation


@dataclass
class History:
    offers: list[Offer] = field(default_factory=list)

    def append(self, offer: Offer) -> None:
        if offer.round != len(self.offers):
            raise ValueError(f"offer round {offer.round} != history index {len(self.offers)}")
        if self.offers and self.offers[-1].proposer is offer.proposer:
            raise ValueError("proposers must alternate")
        self.offers.append(offer)

    def by(self, role: Role) -> list[Offer]:
        return [o for o in self.offers if o.proposer is role]

    def __len__(self) -> int:
        return len(self.offers)

    def __iter__(self):
        return iter(self.offers)


@dataclass(frozen=True)
class StrategyParams:
    kind: Literal["TDF", "TFTM"] = "TDF"
    gap_init: float = 0.5
    delta: float = 0.03

    def __post_init__(self) -> None:
        if self.kind not in ("TDF", "TFTM"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.gap_init <= 0 or self.delta <= 0:
            raise ValueError("gap_init and delta must be positive")


def tdf_multiplier(role: Role, gap_init: float, delta: float, t: float) -> float:
    """Price as a multiple of valuation at iteration ``t``.

    The customer's gap is a fraction below valuation, ``gap_init * exp(-delta t)``.
    The shop's ``gap_init`` is his opening multiple, so his markup starts at
    ``gap_init - 1`` and decays the same way.
    """
    decay = math.exp(-delta * t)
    if role is Role.CUSTOMER:
        return 1.0 - gap_init * decay
    return 1.0 + (gap_init - 1.0) * decay


def tdf_price(valuation: float, role: Role, params: StrategyParams, t: float) -> float:
    """Time-dependent-fraction price.

    A customer with ``gap_init=0.5`` opens at half her valuation, a shop with
    ``gap_init=1.5`` at one and a half times his; both close the gap at rate
    ``delta``.  The gap depends on time only, not on the bundle.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    return valuation * tdf_multiplier(role, params.gap_init, params.delta, t)


def tftm_concession(role: Role, own_valuation: Valuation, opponent_offers: list[Offer]) -> float:
    """Improvement of the opponent's latest offer over the one before, as seen by ``role``.

    Never negative; zero until the opponent has made two offers.
    """
    if len(opponent_offers) < 2:
        return 0.0
    prev, last = opponent_offers[-2], opponent_offers[-1]
    gain = (net_value(role, own_valuation(last.bundle), last.price)
            - net_value(role, own_valuation(prev.bundle), prev.price))
    return max(0.0, gain)


def tftm_price(own_valuation: Valuation, opponent_offers: list[Offer], own_last: Offer,
               bundle: Bundle, params: StrategyParams, role: Role = Role.CUSTOMER) -> float:
    """Tit-for-tat-monotone-fraction price for ``bundle``.

    The previous own price is carried over as a fraction of the valuation of
    the bundle it was placed on, re-applied to ``bundle``'s valuation, and then
    moved toward the opponent by the concession.  On an unchanged bundle this
    is exactly the previous price plus (minus, for the shop) the concession.
    The price never crosses the bargainer's own valuation.
    """
    c = tftm_concession(role, own_valuation, opponent_offers)
    v = own_valuation(bundle)
    v_last = own_valuation(own_last.bundle)
    if bundle == own_last.bundle or v_last <= 0 or v <= 0:
        base = own_last.price
    else:
        base = v * own_last.price / v_last
    if role is Role.CUSTOMER:
        return min(base + c, max(v, own_last.price) if bundle == own_last.bundle else v)
    return max(base - c, min(v, own_last.price) if bundle == own_last.bundle else v)


def accept(role: Role, responder_valuation: float, incoming: Offer, planned_counter_price: float) -> bool:
    """Accept iff the incoming offer is at least as good as one's own planned counter."""
    return (net_value(role, responder_valuation, incoming.price)
            >= net_value(role, responder_valuation, planned_counter_price))


class Bargainer:
    """A negotiating party with a fixed valuation and concession strategy.

    ``t`` counts loop iterations.  A TFTM bargainer opens like TDF and
    afterwards only mirrors the opponent's concessions.
    """

    def __init__(self, role: Role, valuation: Valuation, params: StrategyParams) -> None:
        self.role = role
        self.valuation = valuation
        self.params = params
        self.last_offer: Offer | None = None

    def planned_price(self, bundle: Bundle, t: int, opponent_offers: list[Offer]) -> float:
        if self.params.kind == "TDF" or self.last_offer is None:
            return tdf_price(self.valuation(bundle), self.role, self.params, t)
        return tftm_price(self.valuation, opponent_offers, self.last_offer, bundle,
                          self.params, self.role)

    def propose(self, bundle: Bundle, t: int, opponent_offers: list[Offer]) -> float:
        p = self.planned_price(bundle, t, opponent_offers)
        self.last_offer = Offer(bundle, p, self.role, -1)
        return p

    def accepts(self, incoming: Offer, t_next: int, opponent_offers: list[Offer]) -> bool:
        planned = self.planned_price(incoming.bundle, t_next, opponent_offers)
        return accept(self.role, self.valuation(incoming.bundle), incoming, planned)


@dataclass(frozen=True)
class SessionOutcome:
    result: Literal["deal", "breakdown"]
    final_offer: Offer
    rounds: int

    @property
    def deal(self) -> bool:
        return self.result == "deal"

    @property
    def final_bundle(self) -> Bundle:
        return self.final_offer.bundle

    @property
    def deal_bundle(self) -> Bundle | None:
        return self.final_offer.bundle if self.deal else None

    @property
    def deal_price(self) -> float | None:
        return self.final_offer.price if self.deal else None


class ShopAdvisor(Protocol):
    """What the shop consults after each customer offer to pick his next bundle."""

    def start(self, opening: Offer) -> list[dict]: ...

    def on_customer_offer(self, offer: Offer) -> tuple[Bundle, list[dict]]: ...


@dataclass
class SessionResult:
    outcome: SessionOutcome
    history: History
    trace: list[dict]


def _event(round_: int, proposer: str, bundle: Bundle, price: float | None, event: str, **extra) -> dict:
    rec = {"round": round_, "proposer": proposer, "bundle": bundle.to_string(),
           "price": price, "event": event}
    rec.update(extra)
    return rec


def run_session(customer: Bargainer, shop: Bargainer, b_init: Bundle,
                advisor: ShopAdvisor | None = None, breakdown_prob: float = 0.02,
                rng: np.random.Generator | None = None, max_rounds: int = 1000) -> SessionResult:
    """Play one negotiation to a deal or a breakdown.

    The breakdown draw happens once per iteration, after the shop has
    declined the customer's offer and before he counters.  ``max_rounds``
    bounds sessions that could otherwise never end (e.g. negative gains with
    ``breakdown_prob=0``); hitting it counts as a breakdown.
    """
    if not 0.0 <= breakdown_prob <= 1.0:
        raise ValueError("breakdown_prob must be a probability")
    rng = rng if rng is not None else np.random.default_rng()
    history = History()
    trace: list[dict] = []
    c_offers: list[Offer] = []
    s_offers: list[Offer] = []
    bundle = b_init
    t = 0
    while True:
        bid = customer.propose(bundle, t, s_offers)
        offer = Offer(bundle, bid, Role.CUSTOMER, len(history))
        history.append(offer)
        c_offers.append(offer)
        trace.append(_event(offer.round, "customer", bundle, bid, "offer"))
        if t == 0 and advisor is not None:
            trace.extend(advisor.start(offer))

        if shop.accepts(offer, t, c_offers):
            trace.append(_event(offer.round, "shop", bundle, bid, "accept"))
            return SessionResult(SessionOutcome("deal", offer, t + 1), history, trace)
        if rng.random() < breakdown_prob or t + 1 >= max_rounds:
            trace.append(_event(offer.round, "shop", bundle, None, "breakdown"))
            return SessionResult(SessionOutcome("breakdown", offer, t + 1), history, trace)

        if advisor is not None:
            bundle, events = advisor.on_customer_offer(offer)
            trace.extend(events)
        ask = shop.propose(bundle, t, c_offers)
        counter = Offer(bundle, ask, Role.SHOP, len(history))
        history.append(counter)
        s_offers.append(counter)
        trace.append(_event(counter.round, "shop", bundle, ask, "offer"))

        if customer.accepts(counter, t + 1, s_offers):
            trace.append(_event(counter.round, "customer", bundle, ask, "accept"))
            return SessionResult(SessionOutcome("deal", counter, t + 1), history, trace)
        t += 1


def write_trace(path, traces: Iterable[tuple[dict, list[dict]]]) -> None:
    """Write traces as JSON lines; each record carries its session keys."""
    with open(path, "w") as fh:
        for keys, trace in traces:
            for rec in trace:
                fh.write(json.dumps({**keys, **rec}) + "\n")


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
