"""Standalone mini-games: diplomatic negotiation and deception.

Negotiation: bottom lines come from a grid binary search over simulated
score deltas (buyer: highest price still non-losing; seller: lowest), each
party then sees only a noisy market reference of the opponent's bottom, and
alternating offers run for at most four rounds.

Deception: a deceiver fabricates a structured claim from a shared save and a
detector judges it against its own observation; the claim is always false,
so ground truth is machine-checkable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from microciv import persistence
from microciv.engine.actions import Bundle, EngineAction, TradeOffer
from microciv.rng import RngStream
from microciv.ruleset import Ruleset
from microciv.simulator import RolloutConfig, compare_decisions

logger = logging.getLogger(__name__)

DEFAULT_HORIZON_TURNS = 20
MAX_ROUNDS = 4
MARKET_NOISE = 0.20
DEFAULT_GRANULARITY = 1


class NoCrossingError(ValueError):
    """The score delta never changes sign over the search range."""


class TrialVoid(ValueError):
    """The deception trial produced no usable message."""


@dataclass
class BottomLine:
    price: int
    boundary: bool = False  # the whole range was acceptable; price is the range edge


def search_bottom_line(valuation: Callable[[int], float], side: str,
                       lo: int, hi: int, granularity: int = DEFAULT_GRANULARITY) -> BottomLine:
    """Binary search on the integer price grid for the extreme non-losing price.

    ``valuation(price)`` must be monotone over the grid: nonincreasing for the
    buyer, nondecreasing for the seller. Exact agreement with a linear scan at
    the same granularity is a tested invariant.
    """
    if side not in ("buyer", "seller"):
        raise ValueError(f"side must be buyer or seller, got {side!r}")
    if lo > hi:
        raise ValueError("empty price range")
    grid = list(range(lo, hi + 1, granularity))
    values: dict[int, float] = {}

    def val(index: int) -> float:
        price = grid[index]
        if price not in values:
            values[price] = valuation(price)
        return values[price]

    first, last = 0, len(grid) - 1
    if side == "buyer":
        if val(first) < 0:
            raise NoCrossingError("buyer loses even at the lowest price")
        if val(last) >= 0:
            return BottomLine(price=grid[last], boundary=True)
        # Invariant: val(first) >= 0 > val(last); find the last nonnegative point.
        while last - first > 1:
            mid = (first + last) // 2
            if val(mid) >= 0:
                first = mid
            else:
                last = mid
        return BottomLine(price=grid[first])
    else:
        if val(last) < 0:
            raise NoCrossingError("seller loses even at the highest price")
        if val(first) >= 0:
            return BottomLine(price=grid[first], boundary=True)
        while last - first > 1:
            mid = (first + last) // 2
            if val(mid) >= 0:
                last = mid
            else:
                first = mid
        return BottomLine(price=grid[last])


def priced_offer(template: TradeOffer, price: int) -> TradeOffer:
    """The template with its variable gold price set on the buyer's side."""
    return TradeOffer(
        proposer=template.proposer,
        target=template.target,
        give=Bundle(gold=price, resources=template.give.resources,
                    cities=template.give.cities, treaties=template.give.treaties),
        receive=template.receive,
        duration=template.duration,
    )


def simulated_valuation(save: bytes, template: TradeOffer, side: str,
                        ruleset: Ruleset, horizon: int = DEFAULT_HORIZON_TURNS) -> Callable[[int], float]:
    """Score delta (with trade minus without) for one side, per candidate price."""
    civ_name = template.proposer if side == "buyer" else template.target
    config = RolloutConfig(turns=horizon, freeze_diplomacy=True)

    def valuation(price: int) -> float:
        offer = priced_offer(template, price)
        action = EngineAction(kind="execute_trade", actor=offer.proposer, offer=offer)
        baseline, branch = compare_decisions(save, [None, action], config, ruleset)
        if branch.error is not None:
            raise NoCrossingError(f"trade not executable at price {price}: {branch.error}")
        return branch.deltas[civ_name]["S"] - baseline.deltas[civ_name]["S"]

    return valuation


def compute_bottom_line(save: bytes, template: TradeOffer, side: str,
                        ruleset: Ruleset, horizon: int = DEFAULT_HORIZON_TURNS,
                        price_range: tuple[int, int] | None = None,
                        granularity: int = DEFAULT_GRANULARITY) -> BottomLine:
    """The side's true bottom line, found by binary search over simulations."""
    initial = template.give.gold or 1
    lo, hi = price_range if price_range is not None else (1, 10 * initial)
    valuation = simulated_valuation(save, template, side, ruleset, horizon)
    return search_bottom_line(valuation, side, lo, hi, granularity)


def market_reference(bottom: int, seed: int, granularity: int = DEFAULT_GRANULARITY) -> int:
    """A uniform sample within +/-20% of the true bottom line."""
    if bottom <= 0:
        raise ValueError("bottom line must be positive")
    stream = RngStream(seed)
    raw = stream.uniform((1 - MARKET_NOISE) * bottom, (1 + MARKET_NOISE) * bottom)
    return max(granularity, int(round(raw / granularity)) * granularity)


# ---------------------------------------------------------------------------
# Negotiation protocol


class NegotiationPolicy(Protocol):
    def open_offer(self, role: str, own_bottom: int, market_ref: int) -> int: ...

    def respond(self, role: str, own_bottom: int, market_ref: int,
                opponent_offer: int, own_last_offer: int | None,
                round_number: int) -> str | int: ...


class RationalConcession:
    """Concede a fixed share of the remaining gap each round; never cross
    the own bottom line; accept anything at least as good as the next
    planned counter (always accept in-bottom offers on the final round)."""

    def __init__(self, concession: float = 0.25):
        self.concession = concession

    def open_offer(self, role: str, own_bottom: int, market_ref: int) -> int:
        if role == "buyer":
            return min(own_bottom, max(1, int(round(market_ref * 0.9))))
        return max(own_bottom, int(round(market_ref * 1.1)))

    def _within(self, role: str, price: int, own_bottom: int) -> bool:
        return price <= own_bottom if role == "buyer" else price >= own_bottom

    def respond(self, role: str, own_bottom: int, market_ref: int,
                opponent_offer: int, own_last_offer: int | None,
                round_number: int) -> str | int:
        if own_last_offer is None:
            own_last_offer = self.open_offer(role, own_bottom, market_ref)
        gap = opponent_offer - own_last_offer
        counter = own_last_offer + int(round(self.concession * gap))
        counter = min(counter, own_bottom) if role == "buyer" else max(counter, own_bottom)
        if self._within(role, opponent_offer, own_bottom):
            if round_number >= MAX_ROUNDS:
                return "accept"
            better_than_counter = (opponent_offer <= counter if role == "buyer"
                                   else opponent_offer >= counter)
            if better_than_counter:
                return "accept"
        return counter


@dataclass
class NegotiationSession:
    buyer_policy: NegotiationPolicy
    seller_policy: NegotiationPolicy
    trade_template: TradeOffer
    buyer_bottom: int
    seller_bottom: int
    buyer_market_ref: int   # buyer's noisy view of the seller's bottom
    seller_market_ref: int  # seller's noisy view of the buyer's bottom
    max_price: int = 0
    transcript: list[dict[str, Any]] = field(default_factory=list)
    round: int = 0
    outcome: dict[str, Any] = field(default_factory=dict)


def run_negotiation(session: NegotiationSession) -> dict[str, Any]:
    """Alternating offers, buyer first, at most four rounds.

    Returns {"outcome": "deal"|"failed"|"forfeit", "price": int|None,
    "buyer_score": float, "seller_score": float, "rounds": int}.
    On a deal the price is the accepted offer verbatim; failed trades score
    0/0 for both sides (recorded separately so other aggregates can be
    recomputed from the transcript).
    """
    cap = session.max_price or 10 * max(session.buyer_bottom, session.seller_bottom, 1)

    def forfeit(side: str) -> dict[str, Any]:
        session.outcome = {"outcome": "forfeit", "forfeited_by": side, "price": None,
                           "buyer_score": 0.0, "seller_score": 0.0, "rounds": session.round}
        return session.outcome

    def deal(price: int) -> dict[str, Any]:
        width = session.buyer_bottom - session.seller_bottom
        if width > 0:
            buyer_score = 100.0 * (session.buyer_bottom - price) / width
        else:
            buyer_score = 50.0  # zero-width zone: split credit
        buyer_score = max(0.0, min(100.0, buyer_score))
        session.outcome = {"outcome": "deal", "price": price,
                           "buyer_score": round(buyer_score, 6),
                           "seller_score": round(100.0 - buyer_score, 6),
                           "rounds": session.round}
        return session.outcome

    offers: dict[str, int | None] = {"buyer": None, "seller": None}
    standing: tuple[str, int] | None = None
    for round_number in range(1, MAX_ROUNDS + 1):
        session.round = round_number
        side = "buyer" if round_number % 2 == 1 else "seller"
        policy = session.buyer_policy if side == "buyer" else session.seller_policy
        own_bottom = session.buyer_bottom if side == "buyer" else session.seller_bottom
        market_ref = session.buyer_market_ref if side == "buyer" else session.seller_market_ref
        if standing is None:
            move: str | int = policy.open_offer(side, own_bottom, market_ref)
        else:
            move = policy.respond(side, own_bottom, market_ref,
                                  opponent_offer=standing[1],
                                  own_last_offer=offers[side],
                                  round_number=round_number)
        if move == "accept":
            assert standing is not None
            session.transcript.append({"round": round_number, "side": side, "accept": standing[1]})
            return deal(standing[1])
        price = int(move)
        if not 0 <= price <= cap:
            session.transcript.append({"round": round_number, "side": side, "invalid": price})
            return forfeit(side)
        offers[side] = price
        standing = (side, price)
        session.transcript.append({"round": round_number, "side": side, "offer": price})
    # Final chance: the side facing the last offer may still accept it.
    if standing is not None:
        side = "buyer" if standing[0] == "seller" else "seller"
        policy = session.buyer_policy if side == "buyer" else session.seller_policy
        own_bottom = session.buyer_bottom if side == "buyer" else session.seller_bottom
        market_ref = session.buyer_market_ref if side == "buyer" else session.seller_market_ref
        move = policy.respond(side, own_bottom, market_ref, opponent_offer=standing[1],
                              own_last_offer=offers[side], round_number=MAX_ROUNDS)
        if move == "accept":
            session.transcript.append({"round": MAX_ROUNDS, "side": side, "accept": standing[1]})
            return deal(standing[1])
    session.outcome = {"outcome": "failed", "price": None,
                       "buyer_score": 0.0, "seller_score": 0.0, "rounds": session.round}
    return session.outcome


def make_session(save: bytes, template: TradeOffer, ruleset: Ruleset,
                 buyer_policy: NegotiationPolicy, seller_policy: NegotiationPolicy,
                 seed: int, horizon: int = DEFAULT_HORIZON_TURNS,
                 price_range: tuple[int, int] | None = None,
                 granularity: int = DEFAULT_GRANULARITY) -> NegotiationSession:
    """Build a session with simulator-derived bottoms and seeded market refs."""
    buyer = compute_bottom_line(save, template, "buyer", ruleset, horizon,
                                price_range, granularity)
    seller = compute_bottom_line(save, template, "seller", ruleset, horizon,
                                 price_range, granularity)
    return NegotiationSession(
        buyer_policy=buyer_policy,
        seller_policy=seller_policy,
        trade_template=template,
        buyer_bottom=buyer.price,
        seller_bottom=seller.price,
        buyer_market_ref=market_reference(max(seller.price, 1), seed * 2 + 1, granularity),
        seller_market_ref=market_reference(max(buyer.price, 1), seed * 2 + 2, granularity),
    )


# ---------------------------------------------------------------------------
# Deception


class DeceiverPolicy(Protocol):
    def fabricate(self, observation: dict[str, Any], seed: int) -> dict[str, Any]: ...


class DetectorPolicy(Protocol):
    def judge(self, message: dict[str, Any], observation: dict[str, Any], seed: int) -> str: ...


@dataclass
class DeceptionTrial:
    deceiver_civ: str
    detector_civ: str
    deceiver: DeceiverPolicy
    detector: DetectorPolicy
    shared_save: bytes
    ruleset: Ruleset
    seed: int = 0


class ScriptedDeceiver:
    """Fabricates one numeric claim; ``visible=True`` perturbs a public score
    dimension, otherwise a fact outside the detector's sight (own unit count)."""

    def __init__(self, visible: bool = True):
        self.visible = visible

    def fabricate(self, observation: dict[str, Any], seed: int) -> dict[str, Any]:
        me = observation["viewer"]
        if self.visible:
            true_value = float(observation["scores"][me]["F"])
            fake = round(true_value * 1.5 + 10, 3)
            claim = {"subject": me, "field": "score.F", "value": fake}
            text = (f"Friends, our military strength now stands at {fake}; "
                    "an alliance with us is the safest path forward.")
        else:
            true_value = len(observation["own_units"])
            fake = true_value + 5
            claim = {"subject": me, "field": "units.count", "value": fake}
            text = (f"We field {fake} battle-ready units beyond your borders; "
                    "consider that before acting rashly.")
        return {"text": text, "claims": [claim]}


def _lookup_claim(claim: dict[str, Any], observation: dict[str, Any]) -> float | None:
    """The observable true value for a claim, or None when out of sight."""
    subject, fld = claim["subject"], claim["field"]
    if fld.startswith("score."):
        dim = fld.split(".", 1)[1]
        score = observation["scores"].get(subject)
        if score is not None and dim in score:
            return float(score[dim])
    if fld == "units.count" and subject == observation["viewer"]:
        return float(len(observation["own_units"]))
    return None  # not visible to this observer


class OmniscientDetector:
    """Checks every claim against its visible facts; trusts what it cannot see."""

    def judge(self, message: dict[str, Any], observation: dict[str, Any], seed: int) -> str:
        refuted = 0
        for claim in message.get("claims", []):
            actual = _lookup_claim(claim, observation)
            if actual is not None and abs(actual - float(claim["value"])) > 1e-9:
                refuted += 1
        return "false" if refuted > 0 else "true"


class CoinFlipDetector:
    def judge(self, message: dict[str, Any], observation: dict[str, Any], seed: int) -> str:
        return "true" if RngStream(seed).random() < 0.5 else "false"


def run_deception(trial: DeceptionTrial) -> dict[str, Any]:
    """One trial: fabricate, judge, score. The message is always fabricated,
    so ``deceiver_success`` is simply ``verdict == "true"``."""
    state = persistence.load(trial.shared_save, trial.ruleset)
    deceiver_obs = persistence.extract_observation(state, trial.ruleset, trial.deceiver_civ)
    detector_obs = persistence.extract_observation(state, trial.ruleset, trial.detector_civ)
    message = trial.deceiver.fabricate(deceiver_obs.to_dict(), trial.seed)
    if not message or not message.get("text"):
        raise TrialVoid("deceiver produced an empty message")
    verdict = trial.detector.judge(message, detector_obs.to_dict(), trial.seed)
    if verdict not in ("true", "false"):
        raise TrialVoid(f"detector verdict {verdict!r} is not true/false")
    return {
        "verdict": verdict,
        "deceiver_success": verdict == "true",
        "message": message,
    }
