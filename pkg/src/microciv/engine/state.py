"""Mutable game-state value types.

A :class:`GameState` is a plain value: it owns every piece of world data and
is mutated only through ``rules.apply_action`` / ``rules.end_turn``. Cloning
goes through the persistence module's canonical serialization, so a clone is
guaranteed to round-trip bit-identically.

All collections that feed serialization or iteration are kept in stable id
order; sets are sorted at the serialization boundary.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from microciv import hexgrid
from microciv.hexgrid import Coord
from microciv.rng import RngState

# Diplomacy treaty flags that require peace. War/peace is tracked separately;
# together these are the six diplomatic states.
TREATY_KINDS = ("declaration_of_friendship", "defensive_pact", "open_borders", "research_agreement")
DEFAULT_TREATY_DURATION = 30

MAX_UNIT_HEALTH = 100
MAX_CITY_HEALTH = 200
CITY_HEALTH_REGEN = 10
MAX_NOTIFICATIONS = 10
MAX_EVENTS = 200
SIGHT_RADIUS = 2
CITY_WORK_RADIUS = 2
MIN_CITY_SPACING = 2


@dataclass
class Tile:
    base_terrain: str
    feature: str | None = None
    resource: str | None = None
    improvement: str | None = None
    improvement_count: int = 0  # total modifications, capped at 3
    owner: str | None = None
    road: bool = False
    explored_by: set[str] = field(default_factory=set)


@dataclass
class HexMap:
    width: int
    height: int
    tiles: list[Tile]

    def in_bounds(self, pos: Coord) -> bool:
        x, y = pos
        return 0 <= x < self.width and 0 <= y < self.height

    def tile(self, pos: Coord) -> Tile:
        x, y = pos
        return self.tiles[y * self.width + x]

    def neighbors(self, pos: Coord) -> list[Coord]:
        return [p for p in hexgrid.neighbors(pos) if self.in_bounds(p)]

    def within(self, center: Coord, radius: int) -> list[Coord]:
        return [p for p in hexgrid.within(center, radius) if self.in_bounds(p)]

    def coords(self) -> list[Coord]:
        return [(x, y) for y in range(self.height) for x in range(self.width)]


@dataclass
class Unit:
    id: str
    type_id: str
    owner: str
    position: Coord
    health: int = MAX_UNIT_HEALTH
    moves_left: int = 0
    promotions_count: int = 0
    promotion_charges: int = 0
    # Optional unit path history ("movement memories"); no engine consumer yet.
    movement_memory: list[Coord] = field(default_factory=list)


@dataclass
class City:
    id: str
    name: str
    position: Coord
    owner: str
    founder: str
    population: int = 1
    food_stock: int = 0
    production_current: str | None = None
    production_progress: int = 0
    buildings: set[str] = field(default_factory=set)
    health: int = MAX_CITY_HEALTH
    worked_tiles: list[Coord] = field(default_factory=list)
    is_original_capital: bool = False
    connected_to_capital: bool = False
    demanded_resource: str | None = None
    attacked_this_turn: bool = False


@dataclass
class Civilization:
    name: str
    gold: int = 0
    techs_researched: set[str] = field(default_factory=set)
    current_research: str | None = None
    research_progress: int = 0
    cities: list[City] = field(default_factory=list)
    units: list[Unit] = field(default_factory=list)
    notifications: list[str] = field(default_factory=list)
    proximity: dict[str, str] = field(default_factory=dict)
    resource_stock: dict[str, int] = field(default_factory=dict)
    eliminated: bool = False

    def is_alive(self) -> bool:
        return not self.eliminated and bool(self.cities or self.units)

    def notify(self, text: str) -> None:
        self.notifications.append(text)
        del self.notifications[:-MAX_NOTIFICATIONS]


@dataclass
class PairDiplomacy:
    at_war: bool = False
    treaties: dict[str, int] = field(default_factory=dict)  # treaty kind -> turns left
    closeness: int = 0
    last_war_start: int = -1
    last_peace: int = -1
    history: list[dict] = field(default_factory=list)


def pair_key(a: str, b: str) -> str:
    return "|".join(sorted((a, b)))


@dataclass
class DiplomacyTable:
    """Symmetric per-pair diplomatic state keyed by the sorted name pair."""

    pairs: dict[str, PairDiplomacy] = field(default_factory=dict)

    def get(self, a: str, b: str) -> PairDiplomacy:
        key = pair_key(a, b)
        if key not in self.pairs:
            self.pairs[key] = PairDiplomacy()
        return self.pairs[key]

    def at_war(self, a: str, b: str) -> bool:
        return self.get(a, b).at_war

    def has_treaty(self, a: str, b: str, kind: str) -> bool:
        return kind in self.get(a, b).treaties


@dataclass
class Event:
    turn: int
    kind: str
    data: dict


@dataclass
class ChatMessage:
    index: int
    turn: int
    sender: str
    text: str


@dataclass
class GameState:
    game_id: str
    ruleset_id: str
    turn: int = 0
    map: HexMap = None  # type: ignore[assignment]
    civs: list[Civilization] = field(default_factory=list)
    diplomacy: DiplomacyTable = field(default_factory=DiplomacyTable)
    events: list[Event] = field(default_factory=list)
    chat: dict[str, list[ChatMessage]] = field(default_factory=dict)
    rng: RngState = None  # type: ignore[assignment]
    next_unit_id: int = 1
    next_city_id: int = 1
    next_chat_index: int = 1

    def civ(self, name: str) -> Civilization:
        for c in self.civs:
            if c.name == name:
                return c
        raise KeyError(f"unknown civ {name!r}")

    def has_civ(self, name: str) -> bool:
        return any(c.name == name for c in self.civs)

    def find_unit(self, unit_id: str) -> tuple[Civilization, Unit] | None:
        for c in self.civs:
            for u in c.units:
                if u.id == unit_id:
                    return c, u
        return None

    def find_city(self, city_id: str) -> tuple[Civilization, City] | None:
        for c in self.civs:
            for city in c.cities:
                if city.id == city_id:
                    return c, city
        return None

    def city_at(self, pos: Coord) -> City | None:
        for c in self.civs:
            for city in c.cities:
                if city.position == pos:
                    return city
        return None

    def units_at(self, pos: Coord) -> list[Unit]:
        return [u for c in self.civs for u in c.units if u.position == pos]

    def log_event(self, kind: str, **data) -> Event:
        event = Event(turn=self.turn, kind=kind, data=data)
        self.events.append(event)
        del self.events[:-MAX_EVENTS]
        return event

    def channel(self, name: str) -> list[ChatMessage]:
        if name not in self.chat:
            self.chat[name] = []
        return self.chat[name]

    def post_message(self, channel: str, sender: str, text: str) -> ChatMessage:
        msg = ChatMessage(index=self.next_chat_index, turn=self.turn, sender=sender, text=text)
        self.next_chat_index += 1
        self.channel(channel).append(msg)
        return msg

    def clone(self) -> "GameState":
        return copy.deepcopy(self)


def group_channel() -> str:
    return "group"


def private_channel(a: str, b: str) -> str:
    return "dm:" + ":".join(sorted((a, b)))


def channel_members(channel: str, state: GameState) -> list[str]:
    """Civs allowed to read/post on a channel."""
    if channel == group_channel():
        return [c.name for c in state.civs]
    if channel.startswith("dm:"):
        return channel.split(":")[1:]
    return []
