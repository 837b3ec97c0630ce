"""The high-level skill catalog and its mapping onto engine actions.

A :class:`SkillCall` is a typed diplomatic/strategic proposal. Parameters are
validated against a per-skill schema before dispatch, and every dispatched
call must pass engine legality at dispatch time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from microciv.engine.actions import EngineAction, TradeOffer
from microciv.engine.state import private_channel

SKILLS = (
    "DeclareWar",
    "DefenseAgreement",
    "CommonEnemy",
    "SeekPeace",
    "ResearchAgreement",
    "ChangeCloseness",
    "ProposeTrade",
    "ProductionPriority",
    "ChooseTechnology",
    "Cheat",
)

# Skills whose recipient answers agree/disagree on their own turn.
RESPONDED_SKILLS = frozenset({
    "DefenseAgreement", "CommonEnemy", "SeekPeace",
    "ResearchAgreement", "ChangeCloseness", "ProposeTrade",
})

# Self-directed skills execute immediately on the proposer's turn.
SELF_SKILLS = frozenset({"ProductionPriority", "ChooseTechnology"})

_SCHEMAS: dict[str, dict[str, Any]] = {
    "DeclareWar": {"target": True, "params": ()},
    "DefenseAgreement": {"target": True, "params": ()},
    "CommonEnemy": {"target": True, "params": ("victim",)},
    "SeekPeace": {"target": True, "params": ()},
    "ResearchAgreement": {"target": True, "params": ()},
    "ChangeCloseness": {"target": True, "params": ("delta",)},
    "ProposeTrade": {"target": True, "params": ("offer",)},
    "ProductionPriority": {"target": False, "params": ("priority",)},
    "ChooseTechnology": {"target": False, "params": ("tech",)},
    "Cheat": {"target": True, "params": ("message",)},
}


class SkillError(ValueError):
    """Malformed skill call: unknown skill, bad target, or missing parameters."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


@dataclass(frozen=True)
class SkillCall:
    skill: str
    proposer: str
    target: str | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> "SkillCall":
        if self.skill not in SKILLS:
            raise SkillError("unknown_skill", self.skill)
        schema = _SCHEMAS[self.skill]
        if schema["target"]:
            if not self.target or self.target == self.proposer:
                raise SkillError("bad_target", f"{self.skill} needs a distinct target")
        for key in schema["params"]:
            if key not in self.params:
                raise SkillError("missing_param", f"{self.skill} needs {key!r}")
        if self.skill == "ChangeCloseness" and not isinstance(self.params["delta"], int):
            raise SkillError("bad_param", "delta must be an integer")
        if self.skill == "ProductionPriority" and \
                self.params["priority"] not in ("military", "economic"):
            raise SkillError("bad_param", "priority must be military or economic")
        return self

    def to_dict(self) -> dict[str, Any]:
        return {
            "skill": self.skill,
            "proposer": self.proposer,
            "target": self.target,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SkillCall":
        return cls(
            skill=d["skill"],
            proposer=d["proposer"],
            target=d.get("target"),
            params=dict(d.get("params", {})),
        )


def acceptance_action(call: SkillCall) -> EngineAction | None:
    """The engine action executed when the skill is confirmed or agreed to.

    Returns None for skills that do not map onto a single engine action
    (ProductionPriority steers production choices instead).
    """
    skill, proposer, target = call.skill, call.proposer, call.target
    if skill == "DeclareWar":
        return EngineAction(kind="declare_war", actor=proposer, other_civ=target)
    if skill == "SeekPeace":
        return EngineAction(kind="offer_peace", actor=proposer, other_civ=target)
    if skill == "DefenseAgreement":
        return EngineAction(kind="sign_defensive_pact", actor=proposer, other_civ=target)
    if skill == "ResearchAgreement":
        return EngineAction(kind="sign_research_agreement", actor=proposer, other_civ=target)
    if skill == "ChangeCloseness":
        return EngineAction(kind="adjust_closeness", actor=proposer, other_civ=target,
                            delta=int(call.params["delta"]))
    if skill == "CommonEnemy":
        # The recipient joins the war against the named victim.
        return EngineAction(kind="declare_war", actor=target or "",
                            other_civ=str(call.params["victim"]))
    if skill == "ProposeTrade":
        offer = call.params["offer"]
        if isinstance(offer, dict):
            offer = TradeOffer.from_dict(offer)
        return EngineAction(kind="execute_trade", actor=offer.proposer, offer=offer)
    if skill == "ChooseTechnology":
        return EngineAction(kind="set_research", actor=proposer,
                            tech_id=str(call.params["tech"]))
    if skill == "Cheat":
        return EngineAction(kind="send_chat", actor=proposer,
                            channel=private_channel(proposer, target or ""),
                            text=str(call.params["message"]))
    return None


def describe(call: SkillCall) -> str:
    """One-line human-readable form used in memory lines and transcripts."""
    target = f" -> {call.target}" if call.target else ""
    extras = ""
    if call.skill == "CommonEnemy":
        extras = f" against {call.params.get('victim')}"
    elif call.skill == "ChooseTechnology":
        extras = f" ({call.params.get('tech')})"
    elif call.skill == "ProductionPriority":
        extras = f" ({call.params.get('priority')})"
    return f"{call.skill}{target}{extras}"
