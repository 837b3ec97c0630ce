"""The in-game agent controller: cadence, skill dispatch, and reflection hooks.

One :class:`CivAgent` instance drives one civ for one game. Skill proposals
happen only on turns divisible by five with at most three skills dispatched;
recipients answer queued skills at the start of their own turns. Unit,
production, and research control stays with the baseline rule AI.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

from microciv import persistence
from microciv.agent.memory import AgentMemory
from microciv.agent.reflection import (
    DEFAULT_KEY_ACTIONS,
    ReflectionRoles,
    Trajectory,
    TrajectoryStep,
    reflect_rearview,
    reflect_with_simulator,
)
from microciv.agent.skills import (
    RESPONDED_SKILLS,
    SELF_SKILLS,
    SkillCall,
    acceptance_action,
    describe,
)
from microciv.agent.workflows import (
    MAX_SKILLS_PER_PROPOSAL,
    PROPOSAL_CADENCE_TURNS,
    propose_skills,
    respond_to_skill,
)
from microciv.engine.actions import EngineAction, IllegalAction, TradeOffer
from microciv.engine.rules import apply_action, check_action
from microciv.engine.state import GameState
from microciv.persistence import extract_observation
from microciv.policy import Advisor, AspectSwitches, BaselinePolicy, ScriptedAdvisor
from microciv.ruleset import Ruleset
from microciv.scoring import civ_score
from microciv.simulator import SimulatorHandle

logger = logging.getLogger(__name__)

TRADE_BARGAIN_ROUNDS = 4


@dataclass
class SkillBus:
    """Shared per-match mailbox and ledger for skill traffic."""

    queues: dict[str, list[SkillCall]] = field(default_factory=dict)
    ledger: list[dict[str, Any]] = field(default_factory=list)

    def post(self, call: SkillCall, turn: int, via: str = "proposal") -> dict[str, Any]:
        record = {"turn": turn, "skill": call.skill, "proposer": call.proposer,
                  "target": call.target, "params": dict(call.params),
                  "via": via, "response": None}
        self.ledger.append(record)
        if call.target and call.skill in RESPONDED_SKILLS:
            self.queues.setdefault(call.target, []).append(call)
        return record

    def drain(self, civ_name: str) -> list[SkillCall]:
        return self.queues.pop(civ_name, [])

    def record_response(self, call: SkillCall, response: str) -> None:
        for record in reversed(self.ledger):
            if (record["skill"], record["proposer"], record["target"]) == \
                    (call.skill, call.proposer, call.target) and record["response"] is None:
                record["response"] = response
                return


class CivAgent:
    """Advisor-driven controller for one civ.

    ``use_simulator`` attaches rollout-based candidate evaluation;
    ``use_reflection`` adds end-of-game (and periodic) reflection into
    long-term memory. Either can be disabled to reproduce the simpler agent
    variants.
    """

    def __init__(self, name: str, advisor: Advisor, ruleset: Ruleset, bus: SkillBus,
                 use_simulator: bool = False, use_reflection: bool = False,
                 memory: AgentMemory | None = None, horizon: int = 10,
                 reflection_period: int = 25, max_skills: int = MAX_SKILLS_PER_PROPOSAL):
        self.name = name
        self.advisor = advisor
        self.ruleset = ruleset
        self.bus = bus
        self.use_simulator = use_simulator
        self.use_reflection = use_reflection
        self.memory = memory if memory is not None else AgentMemory()
        self.horizon = horizon
        self.reflection_period = reflection_period
        self.max_skills = max_skills
        self.baseline = BaselinePolicy(AspectSwitches(diplomacy=False))
        self.trajectory = Trajectory(civ=name)
        self.transcript: list[dict[str, Any]] = []
        self.proposal_turns: list[int] = []
        self.score_history: dict[int, float] = {}
        self.archive: dict[int, bytes] = {}

    # -- runner interface ----------------------------------------------------

    def play_turn(self, state: GameState, ruleset: Ruleset, civ_name: str) -> None:
        assert civ_name == self.name
        civ = state.civ(self.name)
        if not civ.is_alive():
            return
        self.score_history[state.turn] = civ_score(civ, state, self.ruleset).S
        simulator = self._simulator(state) if self.use_simulator else None
        legality = self._legality_check(state)

        observation = extract_observation(state, self.ruleset, self.name)
        for incoming in self.bus.drain(self.name):
            self._handle_incoming(state, observation, incoming, simulator, legality)
            observation = extract_observation(state, self.ruleset, self.name)

        self.baseline.play_turn(state, ruleset, self.name)

        if state.turn % PROPOSAL_CADENCE_TURNS == 0:
            observation = extract_observation(state, self.ruleset, self.name)
            self.proposal_turns.append(state.turn)
            chosen = propose_skills(
                observation, self.memory, self.advisor, self.ruleset,
                simulator_handle=simulator, legality=legality,
                max_skills=self.max_skills, transcript=self.transcript,
            )
            for call in chosen:
                self._dispatch(state, call)
        if self.use_reflection and state.turn > 0 and \
                state.turn % self.reflection_period == 0:
            self._reflect(state, winner=None)

    def on_game_end(self, state: GameState, winner: str | None) -> None:
        self.trajectory.result = {
            "winner": winner,
            "final_score": self.score_history.get(state.turn,
                                                  civ_score(state.civ(self.name), state,
                                                            self.ruleset).S),
        }
        if self.use_reflection:
            self._reflect(state, winner)

    # -- internals -------------------------------------------------------------

    def _simulator(self, state: GameState) -> SimulatorHandle:
        return SimulatorHandle(
            save_provider=lambda: persistence.save(state, self.ruleset),
            ruleset=self.ruleset,
            horizon=self.horizon,
        )

    def _legality_check(self, state: GameState):
        def check(call: SkillCall) -> bool:
            action = acceptance_action(call)
            if action is None:
                return True
            try:
                check_action(state, self.ruleset, action)
                return True
            except IllegalAction:
                return False
        return check

    def _handle_incoming(self, state: GameState, observation, incoming: SkillCall,
                         simulator, legality) -> None:
        result = respond_to_skill(
            incoming, observation, self.memory, self.advisor, self.ruleset,
            simulator_handle=simulator, legality=legality, transcript=self.transcript,
        )
        self.bus.record_response(incoming, result.response)
        if result.response == "agree":
            action = acceptance_action(incoming)
            if action is not None:
                try:
                    apply_action(state, self.ruleset, action)
                except IllegalAction as exc:
                    logger.warning("agreed skill no longer legal: %s", exc.code)
        elif result.counter_offer is not None:
            rounds = int(incoming.params.get("round", 1))
            if rounds < TRADE_BARGAIN_ROUNDS:
                counter = SkillCall(
                    "ProposeTrade", self.name, incoming.proposer,
                    {"offer": self._flip_offer(result.counter_offer).to_dict(),
                     "round": rounds + 1},
                )
                self.bus.post(counter, state.turn, via="counter")

    def _flip_offer(self, offer: TradeOffer) -> TradeOffer:
        """Restate a counter so the new proposer is this agent."""
        return TradeOffer(proposer=self.name, target=offer.proposer,
                          give=offer.receive, receive=offer.give,
                          duration=offer.duration)

    def _dispatch(self, state: GameState, call: SkillCall) -> None:
        record = self.bus.post(call, state.turn)
        self.trajectory.steps.append(TrajectoryStep(
            index=len(self.trajectory.steps),
            turn=state.turn,
            kind=call.skill,
            data={"action": (acceptance_action(call).to_dict()
                             if acceptance_action(call) is not None else None),
                  "call": call.to_dict()},
        ))
        self.memory.add_line(f"t{state.turn}: dispatched {describe(call)}")
        if call.skill == "DeclareWar" or call.skill in SELF_SKILLS or call.skill == "Cheat":
            record["response"] = "executed"
            self._execute_now(state, call)
        self.archive[state.turn] = persistence.save(state, self.ruleset)

    def _execute_now(self, state: GameState, call: SkillCall) -> None:
        if call.skill == "ProductionPriority":
            _apply_production_priority(state, self.ruleset, self.name,
                                       str(call.params["priority"]))
            return
        action = acceptance_action(call)
        if action is None:
            return
        try:
            apply_action(state, self.ruleset, action)
        except IllegalAction as exc:
            logger.warning("dispatched skill failed: %s (%s)", describe(call), exc.code)

    def _attach_feedback(self) -> None:
        """Feedback per step: own score change over the next proposal window."""
        turns = sorted(self.score_history)
        for step in self.trajectory.steps:
            if step.turn not in self.score_history or not turns:
                continue
            horizon = [t for t in turns if t >= step.turn + PROPOSAL_CADENCE_TURNS]
            reference = horizon[0] if horizon else turns[-1]
            delta = self.score_history[reference] - self.score_history[step.turn]
            step.data.setdefault("score_delta", round(delta, 3))

    def _reflect(self, state: GameState, winner: str | None) -> None:
        self._attach_feedback()
        roles = ReflectionRoles(actor=self.advisor, evaluator=self.advisor,
                                self_reflection=self.advisor, memory=self.memory)
        trajectory = Trajectory(civ=self.name, steps=list(self.trajectory.steps),
                                result={"winner": winner})
        entries = reflect_rearview(trajectory, roles, DEFAULT_KEY_ACTIONS)
        if self.use_simulator and self.archive:
            archive = _DictArchive(self.archive)
            simulator = self._simulator(state)
            entries += reflect_with_simulator(trajectory, roles, simulator, archive,
                                              DEFAULT_KEY_ACTIONS)
        self.transcript.append({
            "step": "reflection",
            "turn": state.turn,
            "entries": [e.to_dict() for e in entries],
        })


class _DictArchive:
    def __init__(self, saves: dict[int, bytes]):
        self._saves = dict(saves)

    def get_save(self, turn: int) -> bytes | None:
        return self._saves.get(turn)


class ScriptedResponder:
    """Stateless responder for baseline civs that receive skills anyway."""

    def __init__(self, name: str, ruleset: Ruleset, bus: SkillBus):
        self.name = name
        self.ruleset = ruleset
        self.bus = bus
        self.advisor = ScriptedAdvisor()
        self.memory = AgentMemory()

    def respond_pending(self, state: GameState) -> None:
        for incoming in self.bus.drain(self.name):
            observation = extract_observation(state, self.ruleset, self.name)
            result = respond_to_skill(incoming, observation, self.memory,
                                      self.advisor, self.ruleset)
            self.bus.record_response(incoming, result.response)
            if result.response == "agree":
                action = acceptance_action(incoming)
                if action is not None:
                    try:
                        apply_action(state, self.ruleset, action)
                    except IllegalAction:
                        pass


def _apply_production_priority(state: GameState, ruleset: Ruleset,
                               civ_name: str, priority: str) -> None:
    """Point every city at the best available item of the prioritized kind."""
    civ = state.civ(civ_name)
    for city in civ.cities:
        items = sorted(ruleset.available_items(civ.techs_researched))
        best: tuple | None = None
        for item in items:
            action = EngineAction(kind="set_production", actor=civ_name,
                                  city_id=city.id, item_id=item)
            try:
                check_action(state, ruleset, action)
            except IllegalAction:
                continue
            d = ruleset.lookup(item)
            if priority == "military":
                value = d.strength / max(d.cost, 1) if getattr(d, "is_military", False) else -1.0
            else:
                y = getattr(d, "yields", None)
                value = ((y.food + y.production + y.gold + y.science) / max(d.cost, 1)
                         if y is not None and hasattr(d, "is_wonder") else -1.0)
            if value > 0 and (best is None or value > best[0]):
                best = (value, item)
        if best is not None:
            apply_action(state, ruleset, EngineAction(
                kind="set_production", actor=civ_name, city_id=city.id, item_id=best[1]))
