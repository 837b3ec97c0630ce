"""Canonical save files and per-civ observations with incomplete information.

Saves are canonical JSON: sorted keys, compact separators, ASCII escapes,
lists in id order, explicit schema version. Identical states always produce
identical bytes, which is what turn synchronization and replay checks rely
on. The format is documented bit-exactly in ``docs/savefile.md``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from microciv.engine.rules import visible_tiles
from microciv.engine.state import (
    MAX_CITY_HEALTH,
    MAX_UNIT_HEALTH,
    ChatMessage,
    City,
    Civilization,
    DiplomacyTable,
    Event,
    GameState,
    HexMap,
    PairDiplomacy,
    Tile,
    Unit,
    channel_members,
)
from microciv.hexgrid import distance
from microciv.rng import RngState
from microciv.ruleset import Ruleset

SCHEMA_VERSION = 1

NOTIFICATION_WINDOW = 10
EVENT_WINDOW = 20


class SaveError(ValueError):
    """Unreadable, incompatible, or invariant-violating save data."""


# ---------------------------------------------------------------------------
# Serialization


def _tile_to_dict(tile: Tile) -> dict[str, Any]:
    out: dict[str, Any] = {"terrain": tile.base_terrain}
    if tile.feature is not None:
        out["feature"] = tile.feature
    if tile.resource is not None:
        out["resource"] = tile.resource
    if tile.improvement is not None:
        out["improvement"] = tile.improvement
    if tile.improvement_count:
        out["improvement_count"] = tile.improvement_count
    if tile.owner is not None:
        out["owner"] = tile.owner
    if tile.road:
        out["road"] = True
    if tile.explored_by:
        out["explored_by"] = sorted(tile.explored_by)
    return out


def _tile_from_dict(d: dict[str, Any]) -> Tile:
    return Tile(
        base_terrain=d["terrain"],
        feature=d.get("feature"),
        resource=d.get("resource"),
        improvement=d.get("improvement"),
        improvement_count=int(d.get("improvement_count", 0)),
        owner=d.get("owner"),
        road=bool(d.get("road", False)),
        explored_by=set(d.get("explored_by", [])),
    )


def _unit_to_dict(unit: Unit) -> dict[str, Any]:
    return {
        "id": unit.id,
        "type": unit.type_id,
        "owner": unit.owner,
        "position": list(unit.position),
        "health": unit.health,
        "moves_left": unit.moves_left,
        "promotions": unit.promotions_count,
        "promotion_charges": unit.promotion_charges,
        "movement_memory": [list(p) for p in unit.movement_memory],
    }


def _unit_from_dict(d: dict[str, Any]) -> Unit:
    return Unit(
        id=d["id"],
        type_id=d["type"],
        owner=d["owner"],
        position=tuple(d["position"]),
        health=int(d["health"]),
        moves_left=int(d["moves_left"]),
        promotions_count=int(d.get("promotions", 0)),
        promotion_charges=int(d.get("promotion_charges", 0)),
        movement_memory=[tuple(p) for p in d.get("movement_memory", [])],
    )


def _city_to_dict(city: City) -> dict[str, Any]:
    return {
        "id": city.id,
        "name": city.name,
        "position": list(city.position),
        "owner": city.owner,
        "founder": city.founder,
        "population": city.population,
        "food_stock": city.food_stock,
        "production_current": city.production_current,
        "production_progress": city.production_progress,
        "buildings": sorted(city.buildings),
        "health": city.health,
        "worked_tiles": sorted([list(p) for p in city.worked_tiles]),
        "is_original_capital": city.is_original_capital,
        "connected_to_capital": city.connected_to_capital,
        "demanded_resource": city.demanded_resource,
        "attacked_this_turn": city.attacked_this_turn,
        # Out-of-scope systems kept as empty placeholders for schema shape.
        "religion": {},
        "espionage": {},
    }


def _city_from_dict(d: dict[str, Any]) -> City:
    return City(
        id=d["id"],
        name=d["name"],
        position=tuple(d["position"]),
        owner=d["owner"],
        founder=d["founder"],
        population=int(d["population"]),
        food_stock=int(d["food_stock"]),
        production_current=d.get("production_current"),
        production_progress=int(d["production_progress"]),
        buildings=set(d.get("buildings", [])),
        health=int(d["health"]),
        worked_tiles=[tuple(p) for p in d.get("worked_tiles", [])],
        is_original_capital=bool(d["is_original_capital"]),
        connected_to_capital=bool(d.get("connected_to_capital", False)),
        demanded_resource=d.get("demanded_resource"),
        attacked_this_turn=bool(d.get("attacked_this_turn", False)),
    )


def _civ_to_dict(civ: Civilization) -> dict[str, Any]:
    return {
        "name": civ.name,
        "gold": civ.gold,
        "techs_researched": sorted(civ.techs_researched),
        "current_research": civ.current_research,
        "research_progress": civ.research_progress,
        "cities": [_city_to_dict(c) for c in civ.cities],
        "units": [_unit_to_dict(u) for u in civ.units],
        "notifications": list(civ.notifications),
        "proximity": dict(sorted(civ.proximity.items())),
        "resource_stock": dict(sorted(civ.resource_stock.items())),
        "eliminated": civ.eliminated,
    }


def _civ_from_dict(d: dict[str, Any]) -> Civilization:
    return Civilization(
        name=d["name"],
        gold=int(d["gold"]),
        techs_researched=set(d.get("techs_researched", [])),
        current_research=d.get("current_research"),
        research_progress=int(d.get("research_progress", 0)),
        cities=[_city_from_dict(c) for c in d.get("cities", [])],
        units=[_unit_from_dict(u) for u in d.get("units", [])],
        notifications=list(d.get("notifications", [])),
        proximity=dict(d.get("proximity", {})),
        resource_stock={k: int(v) for k, v in d.get("resource_stock", {}).items()},
        eliminated=bool(d.get("eliminated", False)),
    )


def state_to_dict(state: GameState, ruleset: Ruleset) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "ruleset_id": state.ruleset_id,
        "ruleset_hash": ruleset.content_hash,
        "state": {
            "game_id": state.game_id,
            "turn": state.turn,
            "map": {
                "width": state.map.width,
                "height": state.map.height,
                "tiles": [_tile_to_dict(t) for t in state.map.tiles],
            },
            "civs": [_civ_to_dict(c) for c in state.civs],
            "diplomacy": {
                key: {
                    "at_war": pd.at_war,
                    "treaties": dict(sorted(pd.treaties.items())),
                    "closeness": pd.closeness,
                    "last_war_start": pd.last_war_start,
                    "last_peace": pd.last_peace,
                    "history": list(pd.history),
                }
                for key, pd in sorted(state.diplomacy.pairs.items())
            },
            "events": [{"turn": e.turn, "kind": e.kind, "data": e.data} for e in state.events],
            "chat": {
                channel: [
                    {"index": m.index, "turn": m.turn, "sender": m.sender, "text": m.text}
                    for m in messages
                ]
                for channel, messages in sorted(state.chat.items())
            },
            "rng": state.rng.state_dict(),
            "next_unit_id": state.next_unit_id,
            "next_city_id": state.next_city_id,
            "next_chat_index": state.next_chat_index,
        },
    }


def state_from_dict(doc: dict[str, Any]) -> GameState:
    s = doc["state"]
    game_map = HexMap(
        width=int(s["map"]["width"]),
        height=int(s["map"]["height"]),
        tiles=[_tile_from_dict(t) for t in s["map"]["tiles"]],
    )
    diplomacy = DiplomacyTable()
    for key, pd in s.get("diplomacy", {}).items():
        diplomacy.pairs[key] = PairDiplomacy(
            at_war=bool(pd["at_war"]),
            treaties={k: int(v) for k, v in pd.get("treaties", {}).items()},
            closeness=int(pd.get("closeness", 0)),
            last_war_start=int(pd.get("last_war_start", -1)),
            last_peace=int(pd.get("last_peace", -1)),
            history=list(pd.get("history", [])),
        )
    state = GameState(
        game_id=s["game_id"],
        ruleset_id=doc["ruleset_id"],
        turn=int(s["turn"]),
        map=game_map,
        civs=[_civ_from_dict(c) for c in s.get("civs", [])],
        diplomacy=diplomacy,
        events=[Event(turn=int(e["turn"]), kind=e["kind"], data=dict(e.get("data", {})))
                for e in s.get("events", [])],
        chat={
            channel: [ChatMessage(index=int(m["index"]), turn=int(m["turn"]),
                                  sender=m["sender"], text=m["text"])
                      for m in messages]
            for channel, messages in s.get("chat", {}).items()
        },
        rng=RngState.from_state(s["rng"]),
        next_unit_id=int(s["next_unit_id"]),
        next_city_id=int(s["next_city_id"]),
        next_chat_index=int(s.get("next_chat_index", 1)),
    )
    return state


def save(state: GameState, ruleset: Ruleset) -> bytes:
    """Serialize to canonical bytes: same state, same bytes."""
    doc = state_to_dict(state, ruleset)
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def load(data: bytes, ruleset: Ruleset) -> GameState:
    """Parse, verify schema version and ruleset hash, and validate invariants."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SaveError(f"unreadable save: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise SaveError("not a save document")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SaveError(f"schema version mismatch: {doc['schema_version']} != {SCHEMA_VERSION}")
    if doc.get("ruleset_hash") != ruleset.content_hash:
        raise SaveError("ruleset hash mismatch")
    try:
        state = state_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise SaveError(f"malformed save: {exc}") from exc
    validate_state(state, ruleset)
    return state


def validate_state(state: GameState, ruleset: Ruleset) -> None:
    """Check the engine-level state invariants; raise SaveError on violation."""
    seen_city_tiles: set = set()
    live = {c.name for c in state.civs if c.is_alive()}
    for civ in state.civs:
        if civ.gold < 0:
            raise SaveError(f"negative gold for {civ.name}")
        for unit in civ.units:
            if not state.map.in_bounds(unit.position):
                raise SaveError(f"unit {unit.id} out of bounds")
            if not 1 <= unit.health <= MAX_UNIT_HEALTH:
                raise SaveError(f"unit {unit.id} health {unit.health} out of range")
        for city in civ.cities:
            if not state.map.in_bounds(city.position):
                raise SaveError(f"city {city.id} out of bounds")
            if city.position in seen_city_tiles:
                raise SaveError(f"two cities on tile {city.position}")
            seen_city_tiles.add(city.position)
            if not 0 <= city.health <= MAX_CITY_HEALTH:
                raise SaveError(f"city {city.id} health out of range")
            if city.population < 1:
                raise SaveError(f"city {city.id} has no population")
            if len(city.worked_tiles) > city.population:
                raise SaveError(f"city {city.id} works more tiles than population")
            if len(set(city.worked_tiles)) != len(city.worked_tiles):
                raise SaveError(f"city {city.id} works duplicate tiles")
            for pos in city.worked_tiles:
                if state.map.tile(pos).owner != civ.name:
                    raise SaveError(f"city {city.id} works unowned tile {pos}")
                if distance(pos, city.position) > 2:
                    raise SaveError(f"city {city.id} works distant tile {pos}")
    for pos in state.map.coords():
        tile = state.map.tile(pos)
        if tile.improvement_count > 3:
            raise SaveError(f"tile {pos} over improvement cap")
        if tile.owner is not None and tile.owner not in live:
            raise SaveError(f"tile {pos} owned by dead civ {tile.owner}")
    for key, pd in state.diplomacy.pairs.items():
        if pd.at_war and pd.treaties:
            raise SaveError(f"pair {key} has treaties while at war")
        for treaty, countdown in pd.treaties.items():
            if countdown <= 0:
                raise SaveError(f"pair {key} treaty {treaty} has countdown {countdown}")


# ---------------------------------------------------------------------------
# Observations


@dataclass
class Observation:
    """A visibility-filtered projection of the state for one civ.

    All content is plain JSON-serializable data so an observation can cross
    the wire unchanged.
    """

    viewer: str
    turn: int
    map: dict[str, Any]
    own_units: list[dict[str, Any]]
    visible_foreign_units: list[dict[str, Any]]
    own_cities: list[dict[str, Any]]
    visible_foreign_cities: list[dict[str, Any]]
    technology: dict[str, Any]
    diplomacy: list[dict[str, Any]]
    civilizations: list[dict[str, Any]]
    scores: dict[str, dict[str, Any]]
    notifications: list[str]
    events: list[dict[str, Any]]
    chat: dict[str, list[dict[str, Any]]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "viewer": self.viewer,
            "turn": self.turn,
            "map": self.map,
            "own_units": self.own_units,
            "visible_foreign_units": self.visible_foreign_units,
            "own_cities": self.own_cities,
            "visible_foreign_cities": self.visible_foreign_cities,
            "technology": self.technology,
            "diplomacy": self.diplomacy,
            "civilizations": self.civilizations,
            "scores": self.scores,
            "notifications": self.notifications,
            "events": self.events,
            "chat": self.chat,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Observation":
        return cls(**{k: d[k] for k in (
            "viewer", "turn", "map", "own_units", "visible_foreign_units",
            "own_cities", "visible_foreign_cities", "technology", "diplomacy",
            "civilizations", "scores", "notifications", "events", "chat",
        )})


def extract_observation(state: GameState, ruleset: Ruleset, viewer: str) -> Observation:
    """Project the state down to what ``viewer`` is allowed to know."""
    from microciv.scoring import all_scores

    civ = state.civ(viewer)
    if not civ.is_alive():
        raise ValueError(f"viewer {viewer!r} is not alive")
    visible = visible_tiles(state, viewer)

    tiles = []
    for pos in state.map.coords():
        tile = state.map.tile(pos)
        if viewer not in tile.explored_by:
            continue
        entry: dict[str, Any] = {"x": pos[0], "y": pos[1], "terrain": tile.base_terrain}
        if tile.feature:
            entry["feature"] = tile.feature
        if tile.resource:
            entry["resource"] = tile.resource
        if tile.improvement:
            entry["improvement"] = tile.improvement
            entry["improvement_count"] = tile.improvement_count
        if tile.owner:
            entry["owner"] = tile.owner
        if tile.road:
            entry["road"] = True
        tiles.append(entry)

    own_units = [_unit_to_dict(u) for u in civ.units]
    foreign_units = []
    for other in state.civs:
        if other.name == viewer:
            continue
        for unit in other.units:
            if unit.position in visible:
                foreign_units.append({
                    "id": unit.id, "type": unit.type_id, "owner": unit.owner,
                    "position": list(unit.position), "health": unit.health,
                })

    own_cities = [_city_to_dict(c) for c in civ.cities]
    foreign_cities = []
    for other in state.civs:
        if other.name == viewer:
            continue
        for city in other.cities:
            if city.position in visible:
                foreign_cities.append({
                    "id": city.id, "name": city.name, "owner": city.owner,
                    "position": list(city.position), "population": city.population,
                    "health": city.health,
                })

    diplomacy_rows = []
    for other in state.civs:
        if other.name == viewer or not other.is_alive():
            continue
        pd = state.diplomacy.get(viewer, other.name)
        diplomacy_rows.append({
            "civ": other.name,
            "at_war": pd.at_war,
            "peace": not pd.at_war,
            "treaties": dict(sorted(pd.treaties.items())),
            "closeness": pd.closeness,
            "history": list(pd.history),
        })

    scores = {name: score.to_dict() for name, score in all_scores(state, ruleset).items()}
    civ_rows = []
    for other in state.civs:
        row: dict[str, Any] = {"civ": other.name, "alive": other.is_alive()}
        if other.name == viewer:
            row.update({
                "gold": other.gold,
                "resource_stock": dict(sorted(other.resource_stock.items())),
                "proximity": dict(sorted(other.proximity.items())),
            })
        civ_rows.append(row)

    channels = {}
    for channel, messages in sorted(state.chat.items()):
        if viewer in channel_members(channel, state):
            channels[channel] = [
                {"index": m.index, "turn": m.turn, "sender": m.sender, "text": m.text}
                for m in messages
            ]

    return Observation(
        viewer=viewer,
        turn=state.turn,
        map={"width": state.map.width, "height": state.map.height, "tiles": tiles},
        own_units=own_units,
        visible_foreign_units=foreign_units,
        own_cities=own_cities,
        visible_foreign_cities=foreign_cities,
        technology={
            "researched": sorted(civ.techs_researched),
            "current": civ.current_research,
            "progress": civ.research_progress,
        },
        diplomacy=diplomacy_rows,
        civilizations=civ_rows,
        scores=scores,
        notifications=list(reversed(civ.notifications))[:NOTIFICATION_WINDOW],
        events=[
            {"turn": e.turn, "kind": e.kind, "data": e.data}
            for e in reversed(state.events[-EVENT_WINDOW:])
        ],
        chat=channels,
    )
