"""Baseline rule AI and the pluggable advisor interface.

Advisors fill the role of an external decision oracle. They receive a
:class:`DecisionContext` (a closed set of options plus observation and memory
digest) and must answer with one of the offered options. Implementations:
scripted heuristics (default, fully deterministic), recording/replay wrappers,
and a remote advisor that delegates over HTTP with a scripted fallback.
"""

from __future__ import annotations

import json
import logging
import socket
import urllib.error
import urllib.request
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable

from microciv import hexgrid
from microciv.engine.actions import EngineAction, IllegalAction
from microciv.engine.rules import apply_action, check_action, reachable_tiles
from microciv.engine.state import GameState, Unit
from microciv.ruleset import Ruleset, researchable_techs
from microciv.scoring import military_strength

logger = logging.getLogger(__name__)

REMOTE_TIMEOUT_SECONDS = 30.0

# Baseline diplomacy thresholds: attack only with a clear strength advantage
# against a neighbor, sue for peace when clearly outmatched.
WAR_STRENGTH_RATIO = 1.5
PEACE_STRENGTH_RATIO = 0.6


# ---------------------------------------------------------------------------
# Advisor interface


@dataclass
class AdvisorDecision:
    choice: str
    ranking: tuple[str, ...] | None = None
    rationale: str = ""

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"choice": self.choice}
        if self.ranking is not None:
            out["ranking"] = list(self.ranking)
        if self.rationale:
            out["rationale"] = self.rationale
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AdvisorDecision":
        ranking = tuple(d["ranking"]) if "ranking" in d else None
        return cls(choice=str(d["choice"]), ranking=ranking, rationale=str(d.get("rationale", "")))


@dataclass
class DecisionContext:
    """Everything an advisor may see for one decision.

    ``options`` is the closed world: each entry carries a unique ``id`` plus
    whatever evaluation payload the caller prepared. All content is plain
    JSON data so contexts survive the wire unchanged.
    """

    kind: str
    civ: str
    options: list[dict[str, Any]]
    observation: dict[str, Any] = field(default_factory=dict)
    memory_digest: dict[str, Any] = field(default_factory=dict)

    def option_ids(self) -> list[str]:
        return [o["id"] for o in self.options]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "civ": self.civ,
            "options": self.options,
            "observation": self.observation,
            "memory_digest": self.memory_digest,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DecisionContext":
        return cls(
            kind=d["kind"],
            civ=d["civ"],
            options=list(d.get("options", [])),
            observation=dict(d.get("observation", {})),
            memory_digest=dict(d.get("memory_digest", {})),
        )


class AdvisorError(RuntimeError):
    pass


def validate_decision(decision: AdvisorDecision, context: DecisionContext) -> AdvisorDecision:
    """Enforce the closed world: the chosen option must be one that was offered."""
    ids = set(context.option_ids())
    if decision.choice not in ids:
        raise AdvisorError(f"decision {decision.choice!r} outside offered options")
    if decision.ranking is not None:
        filtered = tuple(r for r in decision.ranking if r in ids)
        decision = AdvisorDecision(decision.choice, filtered, decision.rationale)
    return decision


class Advisor(ABC):
    """Maps a structured decision context to a structured decision."""

    @abstractmethod
    def decide(self, context: DecisionContext) -> AdvisorDecision:
        raise NotImplementedError

    def __call__(self, context: DecisionContext) -> AdvisorDecision:
        return validate_decision(self.decide(context), context)


# Fixed skill preference of the scripted advisor, best first.
SKILL_PRIORITY = (
    "SeekPeace",
    "DeclareWar",
    "ResearchAgreement",
    "DefenseAgreement",
    "ProposeTrade",
    "ChangeCloseness",
    "CommonEnemy",
    "ProductionPriority",
    "ChooseTechnology",
    "Cheat",
)


class ScriptedAdvisor(Advisor):
    """Deterministic heuristic advisor; the offline stand-in for an LLM.

    Heuristic table (pinned by tests):

    - production: prefer military while at war, economic otherwise.
    - research: cheapest option.
    - skill_proposal: greedy on ``sim_delta`` payloads when present, fixed
      priority order otherwise.
    - diplomacy_response: accept peace when outmatched, accept cooperative
      treaties when relations are not hostile, accept trades valued >= 0.
    - deception_judgement: call out any claim that contradicts the
      observation; trust what cannot be checked.
    """

    def decide(self, context: DecisionContext) -> AdvisorDecision:
        if not context.options:
            raise AdvisorError("no options offered")
        handler = getattr(self, f"_decide_{context.kind}", None)
        if handler is None:
            return AdvisorDecision(choice=context.options[0]["id"])
        return handler(context)

    @staticmethod
    def _at_war(observation: dict[str, Any]) -> bool:
        return any(row.get("at_war") for row in observation.get("diplomacy", []))

    def _decide_production(self, context: DecisionContext) -> AdvisorDecision:
        wanted = "military" if self._at_war(context.observation) else "economic"
        for option in context.options:
            if option.get("category") == wanted:
                return AdvisorDecision(choice=option["id"], rationale=f"prefer {wanted}")
        return AdvisorDecision(choice=context.options[0]["id"])

    def _decide_research(self, context: DecisionContext) -> AdvisorDecision:
        best = min(context.options, key=lambda o: (o.get("cost", 0), o["id"]))
        return AdvisorDecision(choice=best["id"], rationale="cheapest tech")

    def _decide_skill_proposal(self, context: DecisionContext) -> AdvisorDecision:
        options = context.options
        if any("sim_delta" in o for o in options):
            ordered = sorted(options, key=lambda o: (-float(o.get("sim_delta", 0.0)), o["id"]))
            rationale = "greedy on simulated deltas"
        else:
            def priority(option: dict[str, Any]) -> int:
                skill = option.get("skill", "")
                return SKILL_PRIORITY.index(skill) if skill in SKILL_PRIORITY else len(SKILL_PRIORITY)
            ordered = sorted(options, key=lambda o: (priority(o), o["id"]))
            rationale = "fixed skill priority"
        return AdvisorDecision(
            choice=ordered[0]["id"],
            ranking=tuple(o["id"] for o in ordered),
            rationale=rationale,
        )

    def _decide_diplomacy_response(self, context: DecisionContext) -> AdvisorDecision:
        ids = context.option_ids()
        if "agree" not in ids or "disagree" not in ids:
            return AdvisorDecision(choice=context.options[0]["id"])
        payload = next(o for o in context.options if o["id"] == "agree")
        skill = payload.get("skill", "")
        agree = False
        if "sim_delta" in payload:
            agree = float(payload["sim_delta"]) >= 0.0
        elif skill == "SeekPeace":
            agree = float(payload.get("strength_ratio", 1.0)) >= 1.0
        elif skill in ("ResearchAgreement", "DefenseAgreement", "ChangeCloseness"):
            agree = not payload.get("at_war", False) and int(payload.get("closeness", 0)) >= -10
        elif skill == "ProposeTrade":
            agree = float(payload.get("net_value", -1.0)) >= 0.0
        elif skill == "CommonEnemy":
            agree = bool(payload.get("already_hostile", False))
        return AdvisorDecision(choice="agree" if agree else "disagree")

    def _decide_deception_judgement(self, context: DecisionContext) -> AdvisorDecision:
        ids = context.option_ids()
        if "true" not in ids or "false" not in ids:
            return AdvisorDecision(choice=context.options[0]["id"])
        payload = next(o for o in context.options if o["id"] == "false")
        refuted = int(payload.get("refuted_claims", 0))
        return AdvisorDecision(choice="false" if refuted > 0 else "true")


class RecordingAdvisor(Advisor):
    """Wraps another advisor and records every decision for later replay."""

    def __init__(self, inner: Advisor):
        self.inner = inner
        self.log: list[dict[str, Any]] = []

    def decide(self, context: DecisionContext) -> AdvisorDecision:
        decision = self.inner(context)
        self.log.append({"kind": context.kind, "decision": decision.to_dict()})
        return decision


class ReplayAdvisor(Advisor):
    """Replays a recorded decision log in order."""

    def __init__(self, log: list[dict[str, Any]]):
        self._log = list(log)
        self._cursor = 0

    def decide(self, context: DecisionContext) -> AdvisorDecision:
        if self._cursor >= len(self._log):
            raise AdvisorError("replay log exhausted")
        entry = self._log[self._cursor]
        self._cursor += 1
        return AdvisorDecision.from_dict(entry["decision"])


def http_post_json(url: str, payload: dict[str, Any], timeout: float) -> dict[str, Any]:
    body = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    with urllib.request.urlopen(request, timeout=timeout) as response:
        return json.loads(response.read().decode("utf-8"))


class RemoteAdvisor(Advisor):
    """Delegates decisions to an external HTTP endpoint.

    The endpoint receives the serialized context and must reply with a
    serialized decision. Any transport failure, timeout, or closed-world
    violation falls back to the local fallback advisor so a dead endpoint can
    never deadlock a game.
    """

    def __init__(self, url: str, timeout: float = REMOTE_TIMEOUT_SECONDS,
                 fallback: Advisor | None = None,
                 post_fn: Callable[[str, dict, float], dict] | None = None):
        self.url = url
        self.timeout = timeout
        self.fallback = fallback or ScriptedAdvisor()
        self.post_fn = post_fn or http_post_json
        self.fallback_count = 0

    def decide(self, context: DecisionContext) -> AdvisorDecision:
        try:
            reply = self.post_fn(self.url, context.to_dict(), self.timeout)
            decision = AdvisorDecision.from_dict(reply)
            return validate_decision(decision, context)
        except (AdvisorError, OSError, socket.timeout, urllib.error.URLError,
                ValueError, KeyError, TimeoutError) as exc:
            self.fallback_count += 1
            logger.warning("remote advisor %s failed (%s); using fallback", self.url, exc)
            return self.fallback(context)


# ---------------------------------------------------------------------------
# Baseline rule AI


@dataclass(frozen=True)
class AspectSwitches:
    """Per-aspect toggles so researchers can replace only part of the AI."""

    units: bool = True
    production: bool = True
    research: bool = True
    diplomacy: bool = True
    workers: bool = True


class BaselinePolicy:
    """Deterministic heuristic play over units, production, research, diplomacy.

    These heuristics are original stand-ins, not a reconstruction of any
    other engine's AI: production buys the best yield per cost (military
    first while at war), research always takes the cheapest option, military
    units head for the nearest enemy city, workers improve the nearest rough
    tile, and wars only start with a 1.5x strength advantage over a neighbor.
    """

    def __init__(self, switches: AspectSwitches = AspectSwitches()):
        self.switches = switches
        self.suppressed_diplomacy: list[EngineAction] = []

    # -- public surface -----------------------------------------------------

    def baseline_turn(self, state: GameState, ruleset: Ruleset, civ_name: str) -> list[EngineAction]:
        """Plan the civ's actions for this turn without touching the input state."""
        clone = state.clone()
        return self.play_turn(clone, ruleset, civ_name)

    def play_turn(self, state: GameState, ruleset: Ruleset, civ_name: str,
                  suppress_diplomacy: bool = False) -> list[EngineAction]:
        """Choose and apply this civ's actions; returns the actions applied."""
        applied: list[EngineAction] = []
        civ = state.civ(civ_name)
        if not civ.is_alive():
            return applied
        if self.switches.research:
            applied += self._research(state, ruleset, civ_name)
        if self.switches.production:
            applied += self._production(state, ruleset, civ_name)
        if self.switches.units:
            applied += self._units(state, ruleset, civ_name)
        if self.switches.diplomacy:
            intents = self._diplomacy_intents(state, ruleset, civ_name)
            if suppress_diplomacy:
                # Intents are still computed so frozen rollouts stay observable.
                self.suppressed_diplomacy.extend(intents)
            else:
                for action in intents:
                    applied += self._apply(state, ruleset, action)
        return applied

    def _apply(self, state: GameState, ruleset: Ruleset, action: EngineAction) -> list[EngineAction]:
        try:
            apply_action(state, ruleset, action)
            return [action]
        except IllegalAction as exc:  # planning raced a state change; skip
            logger.debug("baseline skipped %s: %s", action.kind, exc.code)
            return []

    # -- research -------------------------------------------------------------

    def _research(self, state: GameState, ruleset: Ruleset, civ_name: str) -> list[EngineAction]:
        civ = state.civ(civ_name)
        if civ.current_research is not None:
            return []
        options = researchable_techs(ruleset, civ.techs_researched)
        if not options:
            return []
        best = min(options, key=lambda tid: (ruleset.tech(tid).cost, tid))
        action = EngineAction(kind="set_research", actor=civ_name, tech_id=best)
        return self._apply(state, ruleset, action)

    # -- production -----------------------------------------------------------

    def _production(self, state: GameState, ruleset: Ruleset, civ_name: str) -> list[EngineAction]:
        civ = state.civ(civ_name)
        applied: list[EngineAction] = []
        at_war = any(
            state.diplomacy.at_war(civ_name, other.name)
            for other in state.civs if other.name != civ_name and other.is_alive()
        )
        for city in civ.cities:
            if city.production_current is not None:
                continue
            item = self._pick_production(state, ruleset, civ_name, city.id, at_war)
            if item is None:
                continue
            action = EngineAction(kind="set_production", actor=civ_name,
                                  city_id=city.id, item_id=item)
            applied += self._apply(state, ruleset, action)
        return applied

    def _pick_production(self, state: GameState, ruleset: Ruleset, civ_name: str,
                         city_id: str, at_war: bool) -> str | None:
        civ = state.civ(civ_name)
        legal_items = []
        for item in sorted(ruleset.available_items(civ.techs_researched)):
            action = EngineAction(kind="set_production", actor=civ_name,
                                  city_id=city_id, item_id=item)
            try:
                check_action(state, ruleset, action)
            except IllegalAction:
                continue
            legal_items.append(item)
        if not legal_items:
            return None

        def military_value(item: str) -> float:
            d = ruleset.lookup(item)
            if not getattr(d, "is_military", False):
                return -1.0
            return d.strength / max(d.cost, 1)

        def economic_value(item: str) -> float:
            d = ruleset.lookup(item)
            if not hasattr(d, "is_wonder"):
                return -1.0
            y = d.yields
            return (y.food + y.production + y.gold + y.science) / max(d.cost, 1)

        if at_war:
            best = max(legal_items, key=lambda i: (military_value(i), i))
            if military_value(best) > 0:
                return best

        founders = [u for u in ruleset.unit_types if u.can_found_city]
        workers = [u for u in ruleset.unit_types if u.can_improve]
        if founders and len(civ.cities) < 3:
            founder_id = min(founders, key=lambda u: (u.cost, u.id)).id
            have = sum(1 for u in civ.units if ruleset.unit_type(u.type_id).can_found_city)
            queued = sum(1 for c in civ.cities if c.production_current == founder_id)
            if founder_id in legal_items and have + queued == 0:
                return founder_id
        if workers:
            worker_id = min(workers, key=lambda u: (u.cost, u.id)).id
            have = sum(1 for u in civ.units if ruleset.unit_type(u.type_id).can_improve)
            rough = sum(
                1 for pos in state.map.coords()
                if state.map.tile(pos).owner == civ_name
                and state.map.tile(pos).improvement_count == 0
                and not ruleset.terrain(state.map.tile(pos).base_terrain).is_water
            )
            if worker_id in legal_items and have < len(civ.cities) and rough >= 2:
                return worker_id

        best = max(legal_items, key=lambda i: (economic_value(i), i))
        if economic_value(best) > 0:
            return best
        best = max(legal_items, key=lambda i: (military_value(i), i))
        if military_value(best) > 0:
            return best
        return legal_items[0]

    # -- units ------------------------------------------------------------------

    def _units(self, state: GameState, ruleset: Ruleset, civ_name: str) -> list[EngineAction]:
        applied: list[EngineAction] = []
        civ = state.civ(civ_name)
        for unit_id in [u.id for u in civ.units]:
            found = state.find_unit(unit_id)
            if found is None:  # died to retaliation earlier this turn
                continue
            unit = found[1]
            unit_type = ruleset.unit_type(unit.type_id)
            if unit_type.can_found_city:
                applied += self._play_settler(state, ruleset, unit)
            elif unit_type.can_improve:
                if self.switches.workers:
                    applied += self._play_worker(state, ruleset, unit)
            elif unit_type.is_military:
                applied += self._play_military(state, ruleset, unit)
        return applied

    def _play_settler(self, state: GameState, ruleset: Ruleset, unit: Unit) -> list[EngineAction]:
        found_here = EngineAction(kind="found_city", actor=unit.owner, unit_id=unit.id)
        try:
            check_action(state, ruleset, found_here)
            return self._apply(state, ruleset, found_here)
        except IllegalAction:
            pass
        # Walk toward the closest tile where founding would be legal.
        candidates = []
        for pos in state.map.coords():
            tile = state.map.tile(pos)
            if ruleset.terrain(tile.base_terrain).is_water:
                continue
            if tile.owner not in (None, unit.owner):
                continue
            if any(hexgrid.distance(pos, c.position) < 2
                   for cv in state.civs for c in cv.cities):
                continue
            candidates.append(pos)
        return self._step_toward(state, ruleset, unit, candidates)

    def _play_worker(self, state: GameState, ruleset: Ruleset, unit: Unit) -> list[EngineAction]:
        tile = state.map.tile(unit.position)
        if tile.owner == unit.owner and tile.improvement_count < 3 \
                and state.city_at(unit.position) is None \
                and not ruleset.terrain(tile.base_terrain).is_water:
            item = self._best_improvement(ruleset)
            action = EngineAction(kind="improve_tile", actor=unit.owner,
                                  unit_id=unit.id, item_id=item)
            try:
                check_action(state, ruleset, action)
                return self._apply(state, ruleset, action)
            except IllegalAction:
                pass
        targets = [
            pos for pos in state.map.coords()
            if state.map.tile(pos).owner == unit.owner
            and state.map.tile(pos).improvement_count == 0
            and state.city_at(pos) is None
            and not ruleset.terrain(state.map.tile(pos).base_terrain).is_water
        ]
        return self._step_toward(state, ruleset, unit, targets)

    @staticmethod
    def _best_improvement(ruleset: Ruleset) -> str:
        def value(improvement) -> tuple:
            y = improvement.yields
            return (-(y.food + y.production + y.gold + y.science), improvement.id)
        return min(ruleset.improvements, key=value).id

    def _play_military(self, state: GameState, ruleset: Ruleset, unit: Unit) -> list[EngineAction]:
        applied: list[EngineAction] = []
        enemies = [
            c for c in state.civs
            if c.name != unit.owner and c.is_alive() and state.diplomacy.at_war(unit.owner, c.name)
        ]
        if enemies:
            target_positions = [c.position for e in enemies for c in e.cities]
            if not target_positions:
                target_positions = [u.position for e in enemies for u in e.units]
            applied += self._step_toward(state, ruleset, unit, target_positions)
            if state.find_unit(unit.id) is not None:
                applied += self._try_attack(state, ruleset, unit)
        else:
            unexplored = [
                pos for pos in state.map.coords()
                if unit.owner not in state.map.tile(pos).explored_by
            ]
            applied += self._step_toward(state, ruleset, unit, unexplored)
        return applied

    def _try_attack(self, state: GameState, ruleset: Ruleset, unit: Unit) -> list[EngineAction]:
        unit_type = ruleset.unit_type(unit.type_id)
        if unit.moves_left < 1 or not unit_type.is_military or unit_type.strength <= 0:
            return []
        best: tuple | None = None
        for civ in state.civs:
            if civ.name == unit.owner or not state.diplomacy.at_war(unit.owner, civ.name):
                continue
            for city in civ.cities:
                if hexgrid.distance(unit.position, city.position) <= unit_type.attack_range:
                    key = (0, city.health, city.id)  # cities first
                    if best is None or key < best[:3]:
                        best = (*key, city.id)
            for other in civ.units:
                if hexgrid.distance(unit.position, other.position) <= unit_type.attack_range:
                    key = (1, other.health, other.id)
                    if best is None or key < best[:3]:
                        best = (*key, other.id)
        if best is None:
            return []
        action = EngineAction(kind="attack", actor=unit.owner,
                              unit_id=unit.id, target_id=best[3])
        return self._apply(state, ruleset, action)

    def _step_toward(self, state: GameState, ruleset: Ruleset, unit: Unit,
                     targets: list) -> list[EngineAction]:
        if not targets or unit.moves_left < 1:
            return []
        goal = min(targets, key=lambda pos: (hexgrid.distance(unit.position, pos), pos))
        if goal == unit.position:
            return []
        reach = reachable_tiles(state, ruleset, unit)
        if not reach:
            return []
        dest = min(reach, key=lambda pos: (hexgrid.distance(pos, goal), reach[pos], pos))
        if hexgrid.distance(dest, goal) >= hexgrid.distance(unit.position, goal):
            return []
        action = EngineAction(kind="move_unit", actor=unit.owner,
                              unit_id=unit.id, destination=dest)
        return self._apply(state, ruleset, action)

    # -- diplomacy ---------------------------------------------------------------

    def _diplomacy_intents(self, state: GameState, ruleset: Ruleset,
                           civ_name: str) -> list[EngineAction]:
        civ = state.civ(civ_name)
        my_strength = military_strength(civ, ruleset)
        intents: list[EngineAction] = []
        for other in state.civs:
            if other.name == civ_name or not other.is_alive():
                continue
            their_strength = military_strength(other, ruleset)
            pd = state.diplomacy.get(civ_name, other.name)
            if pd.at_war:
                if my_strength < PEACE_STRENGTH_RATIO * their_strength:
                    action = EngineAction(kind="offer_peace", actor=civ_name, other_civ=other.name)
                    if self._legal(state, ruleset, action):
                        intents.append(action)
            else:
                is_neighbor = civ.proximity.get(other.name) == "neighbors"
                if is_neighbor and my_strength >= WAR_STRENGTH_RATIO * max(their_strength, 0.1):
                    action = EngineAction(kind="declare_war", actor=civ_name, other_civ=other.name)
                    if self._legal(state, ruleset, action):
                        intents.append(action)
        return intents

    @staticmethod
    def _legal(state: GameState, ruleset: Ruleset, action: EngineAction) -> bool:
        try:
            check_action(state, ruleset, action)
            return True
        except IllegalAction:
            return False


def baseline_turn(state: GameState, ruleset: Ruleset, civ_name: str,
                  switches: AspectSwitches = AspectSwitches()) -> list[EngineAction]:
    """Plan one civ's baseline actions without mutating the input state."""
    return BaselinePolicy(switches).baseline_turn(state, ruleset, civ_name)


def scripted_advisor(context: DecisionContext) -> AdvisorDecision:
    """Module-level convenience around :class:`ScriptedAdvisor`."""
    return ScriptedAdvisor()(context)
