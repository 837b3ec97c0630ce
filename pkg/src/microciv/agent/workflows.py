"""The two decision workflows: proposing skills and answering them.

Both follow a staged pipeline: reason about the situation, set goals with
retrieved experience, evaluate candidates (through the simulator when one is
attached, through advisor heuristics otherwise), then let the advisor commit
to a final structured decision.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable

from microciv.agent.memory import AgentMemory
from microciv.agent.skills import RESPONDED_SKILLS, SkillCall, SkillError, acceptance_action, describe
from microciv.engine.actions import EngineAction, TradeOffer
from microciv.persistence import Observation
from microciv.policy import Advisor, AdvisorError, DecisionContext
from microciv.ruleset import Ruleset, researchable_techs
from microciv.simulator import SimulatorHandle

logger = logging.getLogger(__name__)

MAX_SKILLS_PER_PROPOSAL = 3
PROPOSAL_CADENCE_TURNS = 5

# Static valuations used when no simulator is attached (gold-equivalents).
RESOURCE_GOLD_VALUE = 20
CITY_GOLD_VALUE = 200
TREATY_GOLD_VALUE = 10

DECLARE_WAR_CANDIDATE_RATIO = 1.2


@dataclass
class SkillResponse:
    response: str  # "agree" | "disagree"
    counter_offer: TradeOffer | None = None
    reason: str = ""

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"response": self.response, "reason": self.reason}
        if self.counter_offer is not None:
            out["counter_offer"] = self.counter_offer.to_dict()
        return out


def _situation_summary(observation: Observation | dict) -> str:
    obs = observation.to_dict() if isinstance(observation, Observation) else observation
    me = obs["viewer"]
    wars = [row["civ"] for row in obs["diplomacy"] if row["at_war"]]
    friends = [row["civ"] for row in obs["diplomacy"]
               if row["treaties"].get("declaration_of_friendship")]
    my_score = obs["scores"].get(me, {})
    lines = [
        f"turn {obs['turn']} as {me}",
        f"score {my_score.get('S', 0):.1f} military {my_score.get('F', 0):.1f}",
        f"at war with {', '.join(wars) if wars else 'nobody'}",
        f"friends with {', '.join(friends) if friends else 'nobody'}",
    ]
    return "; ".join(lines)


def _goal_summary(observation: Observation | dict, retrieved: list[str]) -> str:
    obs = observation.to_dict() if isinstance(observation, Observation) else observation
    me = obs["viewer"]
    scores = {name: s.get("S", 0.0) for name, s in obs["scores"].items()}
    leader = max(scores, key=lambda n: (scores[n], n))
    long_term = (
        f"long-term: overtake {leader}" if leader != me
        else "long-term: hold the lead"
    )
    short_term = "short-term: grow economy and keep borders safe"
    if any(row["at_war"] for row in obs["diplomacy"]):
        short_term = "short-term: win or exit the current war"
    hint = f" (experience: {retrieved[0][:80]})" if retrieved else ""
    return f"{long_term}; {short_term}{hint}"


def _strength(obs: dict, name: str) -> float:
    return float(obs["scores"].get(name, {}).get("F", 0.0))


def enumerate_candidate_skills(observation: Observation | dict, ruleset: Ruleset,
                               include_cheat: bool = False) -> list[SkillCall]:
    """All structurally sensible skills for this observation, in stable order."""
    obs = observation.to_dict() if isinstance(observation, Observation) else observation
    me = obs["viewer"]
    mine = _strength(obs, me)
    candidates: list[SkillCall] = []
    rows = {row["civ"]: row for row in obs["diplomacy"]}
    others = sorted(rows)

    for other in others:
        row = rows[other]
        if row["at_war"]:
            candidates.append(SkillCall("SeekPeace", me, other))
            for third in others:
                if third != other and not rows[third]["at_war"]:
                    candidates.append(SkillCall("CommonEnemy", me, third, {"victim": other}))
        else:
            theirs = _strength(obs, other)
            if mine >= DECLARE_WAR_CANDIDATE_RATIO * max(theirs, 0.1):
                candidates.append(SkillCall("DeclareWar", me, other))
            if not row["treaties"].get("research_agreement"):
                candidates.append(SkillCall("ResearchAgreement", me, other))
            if not row["treaties"].get("defensive_pact") and row["closeness"] >= 0:
                candidates.append(SkillCall("DefenseAgreement", me, other))
            candidates.append(SkillCall("ChangeCloseness", me, other, {"delta": 10}))
            trade = _template_trade(obs, ruleset, me, other)
            if trade is not None:
                candidates.append(SkillCall("ProposeTrade", me, other, {"offer": trade.to_dict()}))
            if include_cheat:
                candidates.append(SkillCall("Cheat", me, other,
                                            {"message": "all is quiet on our borders"}))

    at_war = any(row["at_war"] for row in obs["diplomacy"])
    candidates.append(SkillCall("ProductionPriority", me, None,
                                {"priority": "military" if at_war else "economic"}))
    if obs["technology"]["current"] is None:
        options = researchable_techs(ruleset, set(obs["technology"]["researched"]))
        if options:
            cheapest = min(options, key=lambda t: (ruleset.tech(t).cost, t))
            candidates.append(SkillCall("ChooseTechnology", me, None, {"tech": cheapest}))
    return candidates


def _template_trade(obs: dict, ruleset: Ruleset, me: str, other: str) -> TradeOffer | None:
    """Default buy offer: 20 gold for 2 of a luxury the cities demand."""
    me_row = next((c for c in obs["civilizations"] if c["civ"] == me), {})
    gold = int(me_row.get("gold", 0))
    if gold < 20:
        return None
    demanded = [c.get("demanded_resource") for c in obs["own_cities"] if c.get("demanded_resource")]
    luxuries = sorted(r.id for r in ruleset.resources if r.kind == "luxury")
    want = demanded[0] if demanded else (luxuries[0] if luxuries else None)
    if want is None:
        return None
    from microciv.engine.actions import Bundle
    return TradeOffer(
        proposer=me, target=other,
        give=Bundle(gold=20),
        receive=Bundle(resources=((want, 2),)),
    )


def _candidate_option(index: int, call: SkillCall) -> dict[str, Any]:
    return {"id": f"s{index}", "skill": call.skill, "call": call.to_dict()}


def propose_skills(observation: Observation | dict, memory: AgentMemory, advisor: Advisor,
                   ruleset: Ruleset, simulator_handle: SimulatorHandle | None = None,
                   legality: Callable[[SkillCall], bool] | None = None,
                   max_skills: int = MAX_SKILLS_PER_PROPOSAL,
                   transcript: list[dict] | None = None) -> list[SkillCall]:
    """Four-step proposal workflow; returns at most ``max_skills`` calls."""
    obs = observation.to_dict() if isinstance(observation, Observation) else observation
    # Step 1: situation reasoning.
    situation = _situation_summary(obs)
    # Step 2: goals informed by retrieved reflections.
    digest = memory.digest(situation)
    goals = _goal_summary(obs, digest["retrieved"])
    # Step 3: candidates, legality checks, simulator adjustment.
    candidates = [c for c in enumerate_candidate_skills(obs, ruleset)
                  if _passes(legality, c)]
    if not candidates:
        return []
    options = [_candidate_option(i, c) for i, c in enumerate(candidates)]
    if simulator_handle is not None:
        decisions: list[EngineAction | None] = [None]
        evaluable: list[int] = []
        for i, call in enumerate(candidates):
            action = acceptance_action(call)
            if action is not None and call.skill != "CommonEnemy" and action.actor == call.proposer:
                decisions.append(action)
                evaluable.append(i)
        results = simulator_handle.compare(decisions)
        baseline_delta = simulator_handle.score_delta(results[0], obs["viewer"])
        for slot, i in enumerate(evaluable, start=1):
            delta = simulator_handle.score_delta(results[slot], obs["viewer"])
            options[i]["sim_delta"] = round(delta - baseline_delta, 6)
    # Step 4: advisor commits; top-ranked candidates become skill calls.
    context = DecisionContext(kind="skill_proposal", civ=obs["viewer"], options=options,
                              observation=obs, memory_digest=digest)
    try:
        decision = advisor(context)
    except (AdvisorError, Exception) as exc:  # noqa: BLE001 - advisor is untrusted
        logger.warning("advisor failed during proposal for %s: %s", obs["viewer"], exc)
        return []
    order = list(decision.ranking) if decision.ranking else [decision.choice]
    by_id = {o["id"]: SkillCall.from_dict(o["call"]) for o in options}
    chosen: list[SkillCall] = []
    for option_id in order:
        call = by_id.get(option_id)
        if call is None:
            continue
        try:
            call.validate()
        except SkillError:
            continue
        if not _passes(legality, call):
            continue
        chosen.append(call)
        if len(chosen) >= max_skills:
            break
    if transcript is not None:
        transcript.append({
            "step": "propose_skills",
            "situation": situation,
            "goals": goals,
            "candidates": [describe(c) for c in candidates],
            "chosen": [describe(c) for c in chosen],
            "rationale": decision.rationale,
        })
    memory.add_line(f"t{obs['turn']}: proposed {', '.join(describe(c) for c in chosen) or 'nothing'}")
    return chosen


def _passes(legality: Callable[[SkillCall], bool] | None, call: SkillCall) -> bool:
    if legality is None:
        return True
    try:
        return bool(legality(call))
    except Exception:  # noqa: BLE001 - a failing check rejects the candidate
        return False


def respond_to_skill(incoming: SkillCall, observation: Observation | dict,
                     memory: AgentMemory, advisor: Advisor, ruleset: Ruleset,
                     simulator_handle: SimulatorHandle | None = None,
                     legality: Callable[[SkillCall], bool] | None = None,
                     transcript: list[dict] | None = None) -> SkillResponse:
    """Three-step response workflow ending in agree/disagree."""
    obs = observation.to_dict() if isinstance(observation, Observation) else observation
    me = obs["viewer"]
    try:
        incoming.validate()
    except SkillError as exc:
        return SkillResponse("disagree", reason=f"malformed:{exc.code}")
    if incoming.skill not in RESPONDED_SKILLS:
        return SkillResponse("disagree", reason="not_negotiable")
    if incoming.target != me:
        return SkillResponse("disagree", reason="wrong_recipient")
    if legality is not None and not _passes(legality, incoming):
        return SkillResponse("disagree", reason="illegal")

    # Step 1: intent reasoning about the proposer.
    proposer_strength = _strength(obs, incoming.proposer)
    my_strength = _strength(obs, me)
    intent = (
        f"{incoming.proposer} proposes {describe(incoming)}; "
        f"their military {proposer_strength:.1f} vs ours {my_strength:.1f}. "
        "Why would the opponent propose this?"
    )
    # Step 2: evaluate both branches.
    payload: dict[str, Any] = {"id": "agree", "skill": incoming.skill}
    row = next((r for r in obs["diplomacy"] if r["civ"] == incoming.proposer), None)
    payload["at_war"] = bool(row and row["at_war"])
    payload["closeness"] = int(row["closeness"]) if row else 0
    payload["strength_ratio"] = round(my_strength / max(proposer_strength, 0.1), 3)
    if incoming.skill == "ProposeTrade":
        offer = TradeOffer.from_dict(incoming.params["offer"])
        payload["net_value"] = _static_trade_value(offer, recipient=me)
    if incoming.skill == "CommonEnemy":
        victim = str(incoming.params.get("victim"))
        victim_row = next((r for r in obs["diplomacy"] if r["civ"] == victim), None)
        payload["already_hostile"] = bool(victim_row and victim_row["at_war"])
    if simulator_handle is not None:
        action = acceptance_action(incoming)
        if action is not None:
            results = simulator_handle.compare([None, action])
            base = simulator_handle.score_delta(results[0], me)
            accept = simulator_handle.score_delta(results[1], me)
            if results[1].error is None:
                payload["sim_delta"] = round(accept - base, 6)
    # Step 3: retrieval-augmented final decision.
    digest = memory.digest(intent)
    context = DecisionContext(
        kind="diplomacy_response", civ=me,
        options=[payload, {"id": "disagree"}],
        observation=obs, memory_digest=digest,
    )
    try:
        decision = advisor(context)
    except (AdvisorError, Exception) as exc:  # noqa: BLE001
        logger.warning("advisor failed during response for %s: %s", me, exc)
        return SkillResponse("disagree", reason="advisor_failure")
    response = "agree" if decision.choice == "agree" else "disagree"
    counter = None
    if response == "disagree" and incoming.skill == "ProposeTrade":
        counter = _counter_offer(TradeOffer.from_dict(incoming.params["offer"]))
    if transcript is not None:
        transcript.append({
            "step": "respond_to_skill",
            "incoming": incoming.to_dict(),
            "intent": intent,
            "payload": {k: v for k, v in payload.items() if k != "id"},
            "response": response,
        })
    memory.add_line(f"t{obs['turn']}: {response} to {describe(incoming)} from {incoming.proposer}")
    return SkillResponse(response, counter_offer=counter,
                         reason=decision.rationale or "evaluated")


def _bundle_value(bundle) -> int:
    return (
        bundle.gold
        + RESOURCE_GOLD_VALUE * sum(n for _, n in bundle.resources)
        + CITY_GOLD_VALUE * len(bundle.cities)
        + TREATY_GOLD_VALUE * len(bundle.treaties)
    )


def _static_trade_value(offer: TradeOffer, recipient: str) -> int:
    """Gold-equivalent net value of a trade for the named side."""
    incoming_value = _bundle_value(offer.give)
    outgoing_value = _bundle_value(offer.receive)
    if recipient == offer.proposer:
        incoming_value, outgoing_value = outgoing_value, incoming_value
    return incoming_value - outgoing_value


def _counter_offer(offer: TradeOffer) -> TradeOffer:
    """The recipient's counter: 25% better gold terms, goods unchanged."""
    from microciv.engine.actions import Bundle
    give, receive = offer.give, offer.receive
    if give.gold > 0:  # proposer pays gold; ask for more
        give = Bundle(gold=int(round(give.gold * 1.25)),
                      resources=give.resources, cities=give.cities, treaties=give.treaties)
    elif receive.gold > 0:  # recipient pays gold; offer less
        receive = Bundle(gold=max(1, int(round(receive.gold * 0.75))),
                         resources=receive.resources, cities=receive.cities,
                         treaties=receive.treaties)
    return TradeOffer(proposer=offer.proposer, target=offer.target,
                      give=give, receive=receive, duration=offer.duration)
