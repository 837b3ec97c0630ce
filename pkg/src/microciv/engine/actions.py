"""Typed engine actions and the illegality error they can raise.

Every state mutation flows through one :class:`EngineAction`. The action is a
single frozen record discriminated by ``kind``; unused fields stay ``None``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from microciv.hexgrid import Coord

ACTION_KINDS = (
    "move_unit",
    "found_city",
    "improve_tile",
    "attack",
    "promote_unit",
    "set_production",
    "set_research",
    "declare_war",
    "offer_peace",
    "sign_defensive_pact",
    "sign_research_agreement",
    "declare_friendship",
    "set_open_borders",
    "adjust_closeness",
    "execute_trade",
    "send_chat",
    "noop",
)


class IllegalAction(Exception):
    """Raised when an action fails legality; carries a machine-readable code."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


@dataclass(frozen=True)
class Bundle:
    """One side of a trade: gold, resource quantities, cities, timed treaties."""

    gold: int = 0
    resources: tuple[tuple[str, int], ...] = ()
    cities: tuple[str, ...] = ()
    treaties: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "gold": self.gold,
            "resources": [[r, n] for r, n in self.resources],
            "cities": list(self.cities),
            "treaties": list(self.treaties),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Bundle":
        return cls(
            gold=int(d.get("gold", 0)),
            resources=tuple((str(r), int(n)) for r, n in d.get("resources", [])),
            cities=tuple(d.get("cities", [])),
            treaties=tuple(d.get("treaties", [])),
        )


@dataclass(frozen=True)
class TradeOffer:
    proposer: str
    target: str
    give: Bundle = Bundle()     # what the proposer hands over
    receive: Bundle = Bundle()  # what the proposer gets back
    duration: int = 30          # turns for timed treaty items

    def to_dict(self) -> dict[str, Any]:
        return {
            "proposer": self.proposer,
            "target": self.target,
            "give": self.give.to_dict(),
            "receive": self.receive.to_dict(),
            "duration": self.duration,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TradeOffer":
        return cls(
            proposer=d["proposer"],
            target=d["target"],
            give=Bundle.from_dict(d.get("give", {})),
            receive=Bundle.from_dict(d.get("receive", {})),
            duration=int(d.get("duration", 30)),
        )


@dataclass(frozen=True)
class EngineAction:
    kind: str
    actor: str
    unit_id: str | None = None
    destination: Coord | None = None
    target_id: str | None = None        # unit or city id (attack)
    city_id: str | None = None
    item_id: str | None = None          # production item / improvement
    tech_id: str | None = None
    other_civ: str | None = None        # diplomacy counterpart
    delta: int | None = None            # closeness adjustment
    offer: TradeOffer | None = None
    channel: str | None = None
    text: str | None = None
    terms: TradeOffer | None = None     # optional peace sweetener

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.destination is not None:
            object.__setattr__(self, "destination", tuple(self.destination))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "actor": self.actor}
        for key in ("unit_id", "target_id", "city_id", "item_id", "tech_id",
                    "other_civ", "delta", "channel", "text"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.destination is not None:
            out["destination"] = list(self.destination)
        if self.offer is not None:
            out["offer"] = self.offer.to_dict()
        if self.terms is not None:
            out["terms"] = self.terms.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EngineAction":
        kwargs: dict[str, Any] = {"kind": d["kind"], "actor": d["actor"]}
        for key in ("unit_id", "target_id", "city_id", "item_id", "tech_id",
                    "other_civ", "delta", "channel", "text"):
            if key in d:
                kwargs[key] = d[key]
        if "destination" in d:
            kwargs["destination"] = tuple(d["destination"])
        if "offer" in d:
            kwargs["offer"] = TradeOffer.from_dict(d["offer"])
        if "terms" in d:
            kwargs["terms"] = TradeOffer.from_dict(d["terms"])
        return cls(**kwargs)


def noop(actor: str) -> EngineAction:
    return EngineAction(kind="noop", actor=actor)
