"""The shop's recommendation controller.

Decides *when* to recommend (from the pace of the customer's concessions)
and *what* to recommend (the head of an ordered neighborhood of the
customer's interest bundle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .bundles import Bundle, neighborhood
from .negotiation import Offer
from .preferences import ShopValuation

if TYPE_CHECKING:
    from .background import Estimator

NO_CONCESSION_EPS = 1e-9
RECOMMEND_RATE = 0.25


def predict_rounds(v_s_b: float, p: float, p_prev: float) -> float:
    """Rounds until the customer's bid reaches the shop's valuation at her current pace."""
    if p >= v_s_b:
        return 0.0
    step = p - p_prev
    if step <= NO_CONCESSION_EPS:
        return math.inf
    return (v_s_b - p) / step


def recommend_probability(dt: float) -> float:
    if dt <= 0:
        return 0.0
    if math.isinf(dt):
        return 1.0
    return 1.0 - math.exp(-RECOMMEND_RATE * dt)


def sign(best: Offer, current: Offer, sv: ShopValuation) -> int:
    """1 if ``current`` beats ``best`` in the shop's net value, else 0."""
    return int(current.price - sv(current.bundle) > best.price - sv(best.bundle))


@dataclass
class RecommenderState:
    interest_bundle: Bundle
    rec_set: list[Bundle]
    best_customer_offer: Offer
    pending_recommendation: Bundle | None = None
    last_customer_offers: list[Offer] = field(default_factory=list)
    # customer's offer on the interest bundle just before the pending recommendation
    anchor_offer: Offer | None = None
    recommend_next: bool = False
    recommended: set[int] = field(default_factory=set)
    exhausted: bool = False
    interest_price: float = 0.0


def rebuild_rec_set(state: RecommenderState, estimator: Estimator, sv: ShopValuation,
                    rng: np.random.Generator) -> list[Bundle]:
    """Order the interest bundle's neighborhood, skipping bundles already tried."""
    candidates = [b for b in neighborhood(state.interest_bundle) if b.bits not in state.recommended]
    if not candidates:
        return []
    return estimator.order(state.interest_bundle, state.interest_price, candidates, rng)


class Recommender:
    """Per-session controller.  One instance per negotiation."""

    def __init__(self, sv: ShopValuation, estimator: Estimator, rng: np.random.Generator) -> None:
        self.sv = sv
        self.estimator = estimator
        self.rng = rng
        self.state: RecommenderState | None = None

    def start(self, opening: Offer) -> list[dict]:
        self.state = RecommenderState(opening.bundle, [], opening, interest_price=opening.price)
        self.state.rec_set = rebuild_rec_set(self.state, self.estimator, self.sv, self.rng)
        return []

    def _event(self, offer: Offer, event: str, bundle: Bundle, **extra) -> dict:
        rec = {"round": offer.round, "proposer": "shop", "bundle": bundle.to_string(),
               "price": None, "event": event,
               "interest": self.state.interest_bundle.to_string()}
        rec.update(extra)
        return rec

    def _next_recommendation(self) -> Bundle | None:
        st = self.state
        if st.exhausted:
            return None
        if not st.rec_set:
            st.rec_set = rebuild_rec_set(st, self.estimator, self.sv, self.rng)
            if not st.rec_set:
                st.exhausted = True
                return None
        return st.rec_set.pop(0)

    def _recommend(self, offer: Offer, events: list[dict], **extra) -> Bundle:
        st = self.state
        nxt = self._next_recommendation()
        if nxt is None:
            events.append(self._event(offer, "exhausted", st.interest_bundle))
            return offer.bundle
        st.pending_recommendation = nxt
        st.anchor_offer = offer
        st.recommended.add(nxt.bits)
        events.append(self._event(offer, "recommend", nxt, **extra))
        return nxt

    def on_customer_offer(self, offer: Offer) -> tuple[Bundle, list[dict]]:
        """Return the bundle for the shop's next offer plus trace events."""
        st = self.state
        if st is None:
            raise RuntimeError("start() must be called with the customer's opening offer")
        events: list[dict] = []
        prev_best = st.best_customer_offer
        if st.last_customer_offers and st.last_customer_offers[-1].bundle != offer.bundle:
            st.last_customer_offers = []
        st.last_customer_offers = (st.last_customer_offers + [offer])[-2:]
        if offer.bundle == st.interest_bundle:
            st.interest_price = offer.price

        pending = st.pending_recommendation
        if pending is not None and offer.bundle == pending:
            s = sign(prev_best, offer, self.sv)
            anchor = st.anchor_offer
            self.estimator.record(anchor.bundle, anchor.price, offer.bundle, offer.price)
            st.pending_recommendation = None
            st.anchor_offer = None
            if s == 1:
                st.interest_bundle = pending
                st.interest_price = offer.price
                st.recommended = set()
                st.exhausted = False
                st.rec_set = rebuild_rec_set(st, self.estimator, self.sv, self.rng)
                events.append(self._event(offer, "interest", pending, sign=s))
                choice = pending
            else:
                st.recommend_next = True
                events.append(self._event(offer, "return", st.interest_bundle, sign=s))
                choice = st.interest_bundle
        elif st.recommend_next and offer.bundle == st.interest_bundle:
            st.recommend_next = False
            choice = self._recommend(offer, events)
        else:
            choice = offer.bundle
            if len(st.last_customer_offers) == 2 and offer.bundle == st.interest_bundle:
                p_prev, p = (o.price for o in st.last_customer_offers)
                dt = predict_rounds(self.sv(offer.bundle), p, p_prev)
                prob = recommend_probability(dt)
                u = self.rng.random()
                if u < prob:
                    choice = self._recommend(offer, events, dt=dt, probability=prob)

        if offer.price - self.sv(offer.bundle) > prev_best.price - self.sv(prev_best.bundle):
            st.best_customer_offer = offer
        return choice, events
