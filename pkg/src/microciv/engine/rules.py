"""Game rules: map generation, action legality and effects, turn resolution.

Mutation contract: every action is validated in full before any effect is
applied, so an :class:`IllegalAction` always leaves the state untouched.
All iteration runs in stable id/list order and every random draw goes through
a named RNG stream, which makes whole games replayable bit-for-bit.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

from microciv import hexgrid
from microciv.engine.actions import Bundle, EngineAction, IllegalAction, TradeOffer
from microciv.engine.state import (
    CITY_HEALTH_REGEN,
    CITY_WORK_RADIUS,
    DEFAULT_TREATY_DURATION,
    MAX_CITY_HEALTH,
    MAX_UNIT_HEALTH,
    MIN_CITY_SPACING,
    SIGHT_RADIUS,
    TREATY_KINDS,
    ChatMessage,
    City,
    Civilization,
    DiplomacyTable,
    Event,
    GameState,
    HexMap,
    Tile,
    Unit,
    group_channel,
    channel_members,
    pair_key,
    private_channel,
)
from microciv.hexgrid import Coord
from microciv.rng import RngState
from microciv.ruleset import Ruleset, UnitTypeDef, Yields

logger = logging.getLogger(__name__)

# Combat tuning. Equal strengths deal DAMAGE_BASE to each side; damage grows
# with the 1.5 power of the strength ratio and is clamped to [1, 100].
DAMAGE_BASE = 30
DAMAGE_EXPONENT = 1.5
CITY_BASE_DEFENSE = 8
CITY_DEFENSE_PER_POP = 2
CAPTURED_CITY_HEALTH = 100

# Healing per turn (in own city / in own borders / outside).
HEAL_IN_CITY = 10
HEAL_IN_BORDERS = 3
PROMOTION_HEAL = 20

# City economy.
FOOD_PER_POP = 2
GROWTH_BASE = 10
GROWTH_PER_POP = 6
CITY_BASE_SCIENCE = 1
RESEARCH_AGREEMENT_SCIENCE = 2
LUXURY_FOOD_BONUS = 1       # food per city per distinct luxury type held
LUXURY_FOOD_TYPES_CAP = 2
BORDER_GROWTH_POPULATION = 4

STARTING_GOLD = 20
MIN_TILES_PER_CIV = 16

WAR_CLOSENESS = -30
PEACE_CLOSENESS = 10
FRIENDSHIP_CLOSENESS = 20
TREATY_CLOSENESS = 5

ROAD_IMPROVEMENT = "road"


@dataclass(frozen=True)
class GameConfig:
    civ_names: tuple[str, ...]
    seed: int
    width: int = 20
    height: int = 16
    game_id: str | None = None


@dataclass
class CombatReport:
    attacker_id: str
    defender_id: str
    damage_to_defender: int
    damage_to_attacker: int
    defender_destroyed: bool = False
    attacker_destroyed: bool = False
    city_captured: bool = False


# ---------------------------------------------------------------------------
# Game creation


def new_game(ruleset: Ruleset, config: GameConfig) -> GameState:
    """Create a deterministic fresh game: same (ruleset, config) -> same state."""
    names = list(config.civ_names)
    if len(names) < 2:
        raise ValueError("need at least 2 civilizations")
    if len(set(names)) != len(names) or any(not isinstance(n, str) or not n for n in names):
        raise ValueError("unknown civ name: names must be unique non-empty strings")
    area = config.width * config.height
    if area < MIN_TILES_PER_CIV * len(names):
        raise ValueError(
            f"too many civs for map: {len(names)} civs need >= "
            f"{MIN_TILES_PER_CIV * len(names)} tiles, map has {area}"
        )

    rng = RngState(config.seed)
    game_map = _generate_map(ruleset, config, rng)
    state = GameState(
        game_id=config.game_id or f"g{config.seed}",
        ruleset_id=ruleset.id,
        map=game_map,
        rng=rng,
    )

    spawns = _pick_spawns(state, ruleset, names)
    founder = _founder_type(ruleset)
    scout = _scout_type(ruleset)
    for name, pos in zip(names, spawns):
        civ = Civilization(name=name, gold=STARTING_GOLD)
        state.civs.append(civ)
        for unit_type in (founder, scout):
            _spawn_unit(state, civ, unit_type, pos, full_moves=True)

    for i, a in enumerate(names):
        for b in names[i + 1:]:
            state.diplomacy.get(a, b)  # materialize the pair at peace
            state.channel(private_channel(a, b))
    state.channel(group_channel())

    _refresh_proximity(state)
    refresh_exploration(state)
    state.log_event("game_started", civs=names, seed=config.seed)
    return state


def _generate_map(ruleset: Ruleset, config: GameConfig, rng: RngState) -> HexMap:
    stream = rng.stream("mapgen")
    terrains = list(ruleset.terrains)
    weights = [t.map_weight for t in terrains]
    features = list(ruleset.features)
    resources = list(ruleset.resources)
    tiles: list[Tile] = []
    for _ in range(config.width * config.height):
        terrain = stream.weighted_choice(terrains, weights)
        tile = Tile(base_terrain=terrain.id)
        if not terrain.is_water and features:
            roll = stream.random()
            acc = 0.0
            for f in features:
                acc += f.spawn_weight
                if roll < acc:
                    tile.feature = f.id
                    break
        roll = stream.random()
        acc = 0.0
        for r in resources:
            acc += r.spawn_weight
            if roll < acc:
                tile.resource = r.id
                break
        tiles.append(tile)
    return HexMap(width=config.width, height=config.height, tiles=tiles)


def _pick_spawns(state: GameState, ruleset: Ruleset, names: list[str]) -> list[Coord]:
    land = [
        pos for pos in state.map.coords()
        if not ruleset.terrain(state.map.tile(pos).base_terrain).is_water
    ]
    if len(land) < len(names):
        raise ValueError("too many civs for map: not enough land tiles")
    stream = state.rng.stream("spawn")
    spawns = [land[stream.randint(0, len(land) - 1)]]
    while len(spawns) < len(names):
        best = max(
            (pos for pos in land if pos not in spawns),
            key=lambda pos: (min(hexgrid.distance(pos, s) for s in spawns), pos),
        )
        spawns.append(best)
    return spawns


def _founder_type(ruleset: Ruleset) -> UnitTypeDef:
    founders = [u for u in ruleset.unit_types if u.can_found_city]
    if not founders:
        raise ValueError("ruleset has no city-founding unit type")
    return min(founders, key=lambda u: (u.cost, u.id))


def _scout_type(ruleset: Ruleset) -> UnitTypeDef:
    military = [u for u in ruleset.unit_types if u.is_military and not u.is_water]
    if not military:
        raise ValueError("ruleset has no land military unit type")
    return min(military, key=lambda u: (u.cost, u.id))


def _spawn_unit(state: GameState, civ: Civilization, unit_type: UnitTypeDef,
                pos: Coord, full_moves: bool = False) -> Unit:
    unit = Unit(
        id=f"u{state.next_unit_id}",
        type_id=unit_type.id,
        owner=civ.name,
        position=pos,
        moves_left=unit_type.movement if full_moves else 0,
    )
    state.next_unit_id += 1
    civ.units.append(unit)
    return unit


# ---------------------------------------------------------------------------
# Visibility and exploration


def visible_tiles(state: GameState, civ_name: str) -> set[Coord]:
    """Tiles currently in sight: owned tiles plus radius-2 around units/cities."""
    civ = state.civ(civ_name)
    visible: set[Coord] = set()
    for pos in state.map.coords():
        if state.map.tile(pos).owner == civ_name:
            visible.add(pos)
    for unit in civ.units:
        visible.update(state.map.within(unit.position, SIGHT_RADIUS))
    for city in civ.cities:
        visible.update(state.map.within(city.position, SIGHT_RADIUS))
    return visible


def refresh_exploration(state: GameState) -> None:
    """Exploration is sticky: every currently visible tile stays explored."""
    for civ in state.civs:
        if not civ.is_alive():
            continue
        for pos in visible_tiles(state, civ.name):
            state.map.tile(pos).explored_by.add(civ.name)


# ---------------------------------------------------------------------------
# Movement


def _tile_passable(state: GameState, ruleset: Ruleset, unit_type: UnitTypeDef,
                   owner: str, pos: Coord) -> bool:
    tile = state.map.tile(pos)
    water = ruleset.terrain(tile.base_terrain).is_water
    if water != unit_type.is_water:
        return False
    city = state.city_at(pos)
    if city is not None and city.owner != owner:
        return False
    for other in state.units_at(pos):
        if other.owner != owner:
            return False
    if tile.owner is not None and tile.owner != owner:
        if not state.diplomacy.at_war(owner, tile.owner) and \
                not state.diplomacy.has_treaty(owner, tile.owner, "open_borders"):
            return False
    return True


def reachable_tiles(state: GameState, ruleset: Ruleset, unit: Unit) -> dict[Coord, int]:
    """Destinations reachable this turn, mapped to their movement cost."""
    unit_type = ruleset.unit_type(unit.type_id)
    budget = unit.moves_left
    costs: dict[Coord, int] = {unit.position: 0}
    queue: deque[Coord] = deque([unit.position])
    while queue:
        pos = queue.popleft()
        cost = costs[pos]
        if cost >= budget:
            continue
        for nxt in state.map.neighbors(pos):
            if nxt in costs:
                continue
            if not _tile_passable(state, ruleset, unit_type, unit.owner, nxt):
                continue
            costs[nxt] = cost + 1
            queue.append(nxt)
    del costs[unit.position]
    return costs


# ---------------------------------------------------------------------------
# Legality


def _require(cond: bool, code: str, message: str = "") -> None:
    if not cond:
        raise IllegalAction(code, message)


def _get_unit(state: GameState, action: EngineAction) -> Unit:
    found = state.find_unit(action.unit_id or "")
    _require(found is not None, "unknown_unit", f"no unit {action.unit_id!r}")
    civ, unit = found  # type: ignore[misc]
    _require(civ.name == action.actor, "not_owner", f"{action.actor} does not own {unit.id}")
    return unit


def _get_city(state: GameState, action: EngineAction) -> City:
    found = state.find_city(action.city_id or "")
    _require(found is not None, "unknown_city", f"no city {action.city_id!r}")
    civ, city = found  # type: ignore[misc]
    _require(civ.name == action.actor, "not_owner", f"{action.actor} does not own {city.id}")
    return city


def _check_found_city(state: GameState, ruleset: Ruleset, action: EngineAction) -> Unit:
    unit = _get_unit(state, action)
    _require(ruleset.unit_type(unit.type_id).can_found_city, "cannot_found", unit.type_id)
    tile = state.map.tile(unit.position)
    _require(not ruleset.terrain(tile.base_terrain).is_water, "water_tile")
    _require(tile.owner in (None, action.actor), "foreign_territory")
    for civ in state.civs:
        for city in civ.cities:
            _require(
                hexgrid.distance(city.position, unit.position) >= MIN_CITY_SPACING,
                "too_close_to_city", city.id,
            )
    return unit


def _check_improve(state: GameState, ruleset: Ruleset, action: EngineAction) -> Unit:
    unit = _get_unit(state, action)
    _require(ruleset.unit_type(unit.type_id).can_improve, "cannot_improve", unit.type_id)
    _require(unit.moves_left >= 1, "unit_exhausted")
    tile = state.map.tile(unit.position)
    _require(not ruleset.terrain(tile.base_terrain).is_water, "water_tile")
    _require(tile.owner == action.actor, "not_own_territory")
    _require(state.city_at(unit.position) is None, "city_tile")
    _require(tile.improvement_count < 3, "tile_improvement_cap")
    item = action.item_id or ""
    if item == ROAD_IMPROVEMENT:
        _require(not tile.road, "already_has_road")
    else:
        _require(any(i.id == item for i in ruleset.improvements), "unknown_improvement", item)
    return unit


def _check_attack(state: GameState, ruleset: Ruleset, action: EngineAction) -> tuple[Unit, object]:
    unit = _get_unit(state, action)
    unit_type = ruleset.unit_type(unit.type_id)
    _require(unit_type.is_military and unit_type.strength > 0, "not_military")
    _require(unit.moves_left >= 1, "attacker_exhausted")
    target_id = action.target_id or ""
    target_unit = state.find_unit(target_id)
    target_city = state.find_city(target_id)
    _require(target_unit is not None or target_city is not None, "unknown_target", target_id)
    if target_unit is not None:
        owner, target = target_unit
        pos = target.position
    else:
        owner, target = target_city  # type: ignore[misc]
        pos = target.position
    _require(owner.name != action.actor, "own_target")
    _require(state.diplomacy.at_war(action.actor, owner.name), "not_at_war")
    _require(hexgrid.distance(unit.position, pos) <= unit_type.attack_range, "out_of_range")
    return unit, target


def _check_production_item(state: GameState, ruleset: Ruleset, city: City, item: str) -> None:
    civ = state.civ(city.owner)
    _require(item in ruleset.available_items(civ.techs_researched), "item_locked", item)
    definition = ruleset.lookup(item)
    if hasattr(definition, "is_wonder"):  # building
        _require(item not in city.buildings, "already_built", item)
        if definition.is_wonder:
            for other in state.civs:
                for c in other.cities:
                    _require(item not in c.buildings, "wonder_taken", item)
    else:  # unit
        if definition.is_military:
            _require(city.population >= 2, "population_too_low")
        if definition.is_water:
            has_water = any(
                ruleset.terrain(state.map.tile(p).base_terrain).is_water
                for p in state.map.neighbors(city.position)
            )
            _require(has_water, "no_water_access")


def _check_diplomacy_pair(state: GameState, action: EngineAction) -> str:
    other = action.other_civ or ""
    _require(other != action.actor, "self_target")
    _require(state.has_civ(other), "unknown_civ", other)
    _require(state.civ(other).is_alive(), "civ_eliminated", other)
    _require(state.civ(action.actor).is_alive(), "civ_eliminated", action.actor)
    return other


def _check_trade(state: GameState, action: EngineAction) -> TradeOffer:
    offer = action.offer
    _require(offer is not None, "missing_offer")
    assert offer is not None
    _require(offer.proposer == action.actor, "not_proposer")
    _require(offer.target != offer.proposer, "self_target")
    _require(state.has_civ(offer.target), "unknown_civ", offer.target)
    for giver_name, bundle in ((offer.proposer, offer.give), (offer.target, offer.receive)):
        giver = state.civ(giver_name)
        _require(giver.gold >= bundle.gold, "insufficient_gold", giver_name)
        _require(bundle.gold >= 0, "negative_gold")
        for resource, count in bundle.resources:
            _require(count > 0, "bad_quantity", resource)
            _require(giver.resource_stock.get(resource, 0) >= count, "insufficient_resources", resource)
        for city_id in bundle.cities:
            found = state.find_city(city_id)
            _require(found is not None and found[0].name == giver_name, "city_not_owned", city_id)
        for treaty in bundle.treaties:
            _require(treaty in TREATY_KINDS, "unknown_treaty", treaty)
            _require(not state.diplomacy.at_war(offer.proposer, offer.target), "not_at_peace")
    return offer


def check_action(state: GameState, ruleset: Ruleset, action: EngineAction) -> None:
    """Raise IllegalAction if the action cannot be applied to this state."""
    _require(state.has_civ(action.actor), "unknown_civ", action.actor)
    kind = action.kind
    if kind == "noop":
        return
    if kind == "move_unit":
        unit = _get_unit(state, action)
        dest = action.destination
        _require(dest is not None and state.map.in_bounds(dest), "out_of_bounds")
        _require(dest != unit.position, "no_move")
        _require(dest in reachable_tiles(state, ruleset, unit), "unreachable", str(dest))
    elif kind == "found_city":
        _check_found_city(state, ruleset, action)
    elif kind == "improve_tile":
        _check_improve(state, ruleset, action)
    elif kind == "attack":
        _check_attack(state, ruleset, action)
    elif kind == "promote_unit":
        unit = _get_unit(state, action)
        _require(unit.promotion_charges >= 1, "no_promotion_charge")
    elif kind == "set_production":
        city = _get_city(state, action)
        _require(action.item_id is not None, "missing_item")
        _check_production_item(state, ruleset, city, action.item_id or "")
    elif kind == "set_research":
        civ = state.civ(action.actor)
        tech_id = action.tech_id or ""
        _require(any(t.id == tech_id for t in ruleset.techs), "unknown_tech", tech_id)
        _require(tech_id not in civ.techs_researched, "already_researched", tech_id)
        tech = ruleset.tech(tech_id)
        _require(all(p in civ.techs_researched for p in tech.prerequisites), "missing_prerequisite")
    elif kind == "declare_war":
        other = _check_diplomacy_pair(state, action)
        pd = state.diplomacy.get(action.actor, other)
        _require(not pd.at_war, "already_at_war")
        _require(state.turn > pd.last_peace, "war_interval", "must wait 1 turn after peace")
    elif kind == "offer_peace":
        other = _check_diplomacy_pair(state, action)
        pd = state.diplomacy.get(action.actor, other)
        _require(pd.at_war, "not_at_war")
        _require(state.turn > pd.last_war_start, "peace_interval", "must wait 1 turn after declaring war")
        if action.terms is not None:
            _check_trade(state, EngineAction(kind="execute_trade", actor=action.terms.proposer,
                                             offer=action.terms))
    elif kind in ("sign_defensive_pact", "sign_research_agreement",
                  "declare_friendship", "set_open_borders"):
        other = _check_diplomacy_pair(state, action)
        pd = state.diplomacy.get(action.actor, other)
        _require(not pd.at_war, "not_at_peace")
        _require(_treaty_kind(kind) not in pd.treaties, "treaty_active")
    elif kind == "adjust_closeness":
        _check_diplomacy_pair(state, action)
        _require(action.delta is not None, "missing_delta")
    elif kind == "execute_trade":
        _check_trade(state, action)
    elif kind == "send_chat":
        channel = action.channel or ""
        _require(channel in state.chat, "unknown_channel", channel)
        _require(action.actor in channel_members(channel, state), "not_channel_member")
        _require(bool(action.text), "empty_message")
    else:  # pragma: no cover - ACTION_KINDS is closed
        raise IllegalAction("unknown_kind", kind)


def _treaty_kind(action_kind: str) -> str:
    return {
        "sign_defensive_pact": "defensive_pact",
        "sign_research_agreement": "research_agreement",
        "declare_friendship": "declaration_of_friendship",
        "set_open_borders": "open_borders",
    }[action_kind]


# ---------------------------------------------------------------------------
# Action application


def apply_action(state: GameState, ruleset: Ruleset,
                 action: EngineAction) -> tuple[GameState, list[Event]]:
    """Validate and apply one action, returning the state and emitted events."""
    check_action(state, ruleset, action)
    events: list[Event] = []
    kind = action.kind
    if kind == "noop":
        pass
    elif kind == "move_unit":
        _do_move(state, ruleset, action)
    elif kind == "found_city":
        _do_found_city(state, ruleset, action, events)
    elif kind == "improve_tile":
        _do_improve(state, ruleset, action)
    elif kind == "attack":
        state, report = resolve_combat(state, ruleset, action.unit_id or "", action.target_id or "",
                                       events=events)
    elif kind == "promote_unit":
        unit = _get_unit(state, action)
        unit.promotion_charges -= 1
        unit.promotions_count += 1
        unit.health = min(MAX_UNIT_HEALTH, unit.health + PROMOTION_HEAL)
    elif kind == "set_production":
        city = _get_city(state, action)
        if city.production_current != action.item_id:
            city.production_current = action.item_id
            city.production_progress = 0
    elif kind == "set_research":
        civ = state.civ(action.actor)
        if civ.current_research != action.tech_id:
            civ.current_research = action.tech_id
            civ.research_progress = 0
    elif kind == "declare_war":
        _do_declare_war(state, action.actor, action.other_civ or "", events, cascade=True)
    elif kind == "offer_peace":
        _do_make_peace(state, action, events)
    elif kind in ("sign_defensive_pact", "sign_research_agreement",
                  "declare_friendship", "set_open_borders"):
        _do_sign_treaty(state, action, events)
    elif kind == "adjust_closeness":
        pd = state.diplomacy.get(action.actor, action.other_civ or "")
        pd.closeness = max(-100, min(100, pd.closeness + (action.delta or 0)))
    elif kind == "execute_trade":
        _do_trade(state, action.offer, events)  # type: ignore[arg-type]
    elif kind == "send_chat":
        state.post_message(action.channel or "", action.actor, action.text or "")
    return state, events


def _emit(state: GameState, events: list[Event], kind: str, **data) -> None:
    events.append(state.log_event(kind, **data))


def _do_move(state: GameState, ruleset: Ruleset, action: EngineAction) -> None:
    unit = _get_unit(state, action)
    cost = reachable_tiles(state, ruleset, unit)[action.destination]  # type: ignore[index]
    unit.position = action.destination  # type: ignore[assignment]
    unit.moves_left -= cost
    unit.movement_memory.append(action.destination)  # type: ignore[arg-type]
    del unit.movement_memory[:-10]
    for pos in state.map.within(unit.position, SIGHT_RADIUS):
        state.map.tile(pos).explored_by.add(unit.owner)


def _do_found_city(state: GameState, ruleset: Ruleset, action: EngineAction,
                   events: list[Event]) -> None:
    unit = _get_unit(state, action)
    civ = state.civ(action.actor)
    is_capital = not any(c.founder == civ.name and c.is_original_capital
                         for cv in state.civs for c in cv.cities)
    luxuries = sorted(r.id for r in ruleset.resources if r.kind == "luxury")
    demanded = state.rng.stream("city").choice(luxuries) if luxuries else None
    city = City(
        id=f"c{state.next_city_id}",
        name=f"{civ.name}-{state.next_city_id}",
        position=unit.position,
        owner=civ.name,
        founder=civ.name,
        is_original_capital=is_capital,
        demanded_resource=demanded,
    )
    state.next_city_id += 1
    civ.cities.append(city)
    for pos in state.map.within(city.position, 1):
        tile = state.map.tile(pos)
        if tile.owner is None:
            tile.owner = civ.name
    civ.units.remove(unit)
    _assign_worked_tiles(state, ruleset, civ)
    for pos in state.map.within(city.position, SIGHT_RADIUS):
        state.map.tile(pos).explored_by.add(civ.name)
    civ.notify(f"Founded {city.name}")
    _emit(state, events, "city_founded", city=city.id, civ=civ.name, position=list(city.position))


def _do_improve(state: GameState, ruleset: Ruleset, action: EngineAction) -> None:
    unit = _get_unit(state, action)
    tile = state.map.tile(unit.position)
    civ = state.civ(action.actor)
    if tile.improvement_count == 0 and tile.resource:
        civ.resource_stock[tile.resource] = civ.resource_stock.get(tile.resource, 0) + 1
    if action.item_id == ROAD_IMPROVEMENT:
        tile.road = True
    else:
        tile.improvement = action.item_id
    tile.improvement_count += 1
    unit.moves_left = 0


def _do_declare_war(state: GameState, aggressor: str, target: str,
                    events: list[Event], cascade: bool) -> None:
    pd = state.diplomacy.get(aggressor, target)
    pd.at_war = True
    pd.treaties.clear()
    pd.last_war_start = state.turn
    pd.closeness = max(-100, pd.closeness + WAR_CLOSENESS)
    pd.history.append({"turn": state.turn, "event": "war_declared", "by": aggressor})
    _emit(state, events, "war_declared", aggressor=aggressor, target=target)
    state.civ(target).notify(f"{aggressor} declared war on you")
    if cascade:
        # A declaration of war pulls in every defensive-pact partner of the target.
        partners = [
            c.name for c in state.civs
            if c.name not in (aggressor, target) and c.is_alive()
            and state.diplomacy.has_treaty(c.name, target, "defensive_pact")
        ]
        for partner in partners:
            if not state.diplomacy.at_war(aggressor, partner):
                _do_declare_war(state, aggressor, partner, events, cascade=False)


def _do_make_peace(state: GameState, action: EngineAction, events: list[Event]) -> None:
    other = action.other_civ or ""
    pd = state.diplomacy.get(action.actor, other)
    pd.at_war = False
    pd.last_peace = state.turn
    pd.closeness = min(100, pd.closeness + PEACE_CLOSENESS)
    pd.history.append({"turn": state.turn, "event": "peace_made", "by": action.actor})
    _emit(state, events, "peace_made", a=action.actor, b=other)
    if action.terms is not None:
        _do_trade(state, action.terms, events)


def _do_sign_treaty(state: GameState, action: EngineAction, events: list[Event]) -> None:
    other = action.other_civ or ""
    treaty = _treaty_kind(action.kind)
    pd = state.diplomacy.get(action.actor, other)
    pd.treaties[treaty] = DEFAULT_TREATY_DURATION
    bump = FRIENDSHIP_CLOSENESS if treaty == "declaration_of_friendship" else TREATY_CLOSENESS
    pd.closeness = min(100, pd.closeness + bump)
    pd.history.append({"turn": state.turn, "event": treaty, "by": action.actor})
    _emit(state, events, "treaty_signed", treaty=treaty, a=action.actor, b=other)


def _do_trade(state: GameState, offer: TradeOffer, events: list[Event]) -> None:
    proposer = state.civ(offer.proposer)
    target = state.civ(offer.target)
    for giver, taker, bundle in ((proposer, target, offer.give), (target, proposer, offer.receive)):
        giver.gold -= bundle.gold
        taker.gold += bundle.gold
        for resource, count in bundle.resources:
            giver.resource_stock[resource] = giver.resource_stock.get(resource, 0) - count
            if giver.resource_stock[resource] == 0:
                del giver.resource_stock[resource]
            taker.resource_stock[resource] = taker.resource_stock.get(resource, 0) + count
        for city_id in bundle.cities:
            _, city = state.find_city(city_id)  # type: ignore[misc]
            _transfer_city(state, city, taker.name)
    treaties = set(offer.give.treaties) | set(offer.receive.treaties)
    pd = state.diplomacy.get(offer.proposer, offer.target)
    for treaty in sorted(treaties):
        pd.treaties[treaty] = offer.duration
    _emit(state, events, "trade_executed", proposer=offer.proposer, target=offer.target,
          give=offer.give.to_dict(), receive=offer.receive.to_dict())


def _transfer_city(state: GameState, city: City, new_owner: str) -> None:
    old_owner = city.owner
    old_civ = state.civ(old_owner)
    new_civ = state.civ(new_owner)
    old_civ.cities.remove(city)
    new_civ.cities.append(city)
    city.owner = new_owner
    city.worked_tiles = []
    city.production_current = None
    city.production_progress = 0
    for pos in state.map.within(city.position, CITY_WORK_RADIUS):
        tile = state.map.tile(pos)
        if tile.owner == old_owner:
            tile.owner = new_owner
    for pos in state.map.within(city.position, SIGHT_RADIUS):
        state.map.tile(pos).explored_by.add(new_owner)


# ---------------------------------------------------------------------------
# Combat


def _clamped_damage(attack_strength: float, defense_strength: float) -> int:
    ratio = attack_strength / defense_strength
    return max(1, min(100, round(DAMAGE_BASE * ratio ** DAMAGE_EXPONENT)))


def _city_defense(state: GameState, ruleset: Ruleset, city: City) -> int:
    garrison = 0
    for unit in state.units_at(city.position):
        if unit.owner == city.owner:
            garrison = max(garrison, ruleset.unit_type(unit.type_id).strength)
    return CITY_BASE_DEFENSE + CITY_DEFENSE_PER_POP * city.population + garrison


def _remove_unit(state: GameState, unit: Unit) -> None:
    for civ in state.civs:
        if unit in civ.units:
            civ.units.remove(unit)
            return


def resolve_combat(state: GameState, ruleset: Ruleset, attacker_id: str, defender_id: str,
                   events: list[Event] | None = None) -> tuple[GameState, CombatReport]:
    """Resolve one attack. Both sides take damage unless the attacker is ranged."""
    action = EngineAction(kind="attack", actor=_owner_of(state, attacker_id),
                          unit_id=attacker_id, target_id=defender_id)
    attacker, target = _check_attack(state, ruleset, action)
    events = events if events is not None else []
    attacker_type = ruleset.unit_type(attacker.type_id)
    attack_strength = attacker_type.strength

    report = CombatReport(attacker_id=attacker_id, defender_id=defender_id,
                          damage_to_defender=0, damage_to_attacker=0)
    if isinstance(target, City):
        defense = _city_defense(state, ruleset, target)
        damage = _clamped_damage(attack_strength, defense)
        if attacker_type.is_ranged:
            damage = min(damage, target.health - 1)  # ranged cannot take a city
            damage = max(damage, 0)
        target.health -= damage
        target.attacked_this_turn = True
        report.damage_to_defender = damage
        if not attacker_type.is_ranged:
            report.damage_to_attacker = _clamped_damage(defense, attack_strength)
            attacker.health -= report.damage_to_attacker
        if target.health <= 0:
            report.city_captured = True
            old_owner = target.owner
            target.health = CAPTURED_CITY_HEALTH
            for unit in list(state.units_at(target.position)):
                if unit.owner == old_owner:
                    _remove_unit(state, unit)
            _transfer_city(state, target, attacker.owner)
            _emit(state, events, "city_captured", city=target.id,
                  by=attacker.owner, from_civ=old_owner)
            state.civ(old_owner).notify(f"{target.name} was captured by {attacker.owner}")
    else:
        defender: Unit = target
        defender_type = ruleset.unit_type(defender.type_id)
        if defender_type.strength <= 0:
            # Lone civilians cannot resist; they are destroyed outright.
            report.damage_to_defender = defender.health
            defender.health = 0
        else:
            report.damage_to_defender = _clamped_damage(attack_strength, defender_type.strength)
            defender.health -= report.damage_to_defender
            if not attacker_type.is_ranged:
                report.damage_to_attacker = _clamped_damage(defender_type.strength, attack_strength)
                attacker.health -= report.damage_to_attacker
        if defender.health <= 0:
            report.defender_destroyed = True
            _remove_unit(state, defender)
            attacker.promotion_charges += 1
            _emit(state, events, "unit_destroyed", unit=defender.id,
                  owner=defender.owner, by=attacker.owner)

    if attacker.health <= 0:
        report.attacker_destroyed = True
        _remove_unit(state, attacker)
        if isinstance(target, Unit) and not report.defender_destroyed:
            target.promotion_charges += 1
        _emit(state, events, "unit_destroyed", unit=attacker.id,
              owner=attacker.owner, by=_owner_of_safe(state, defender_id) or "defender")
    else:
        attacker.moves_left = 0
    return state, report


def _owner_of(state: GameState, entity_id: str) -> str:
    found = state.find_unit(entity_id)
    if found:
        return found[0].name
    found = state.find_city(entity_id)
    if found:
        return found[0].name
    raise IllegalAction("unknown_unit", entity_id)


def _owner_of_safe(state: GameState, entity_id: str) -> str | None:
    try:
        return _owner_of(state, entity_id)
    except IllegalAction:
        return None


# ---------------------------------------------------------------------------
# Turn resolution


def tile_yields(state: GameState, ruleset: Ruleset, pos: Coord) -> Yields:
    tile = state.map.tile(pos)
    total = ruleset.terrain(tile.base_terrain).yields
    if tile.feature:
        total = total + ruleset.feature(tile.feature).yields
    if tile.resource:
        total = total + ruleset.resource(tile.resource).yields
    if tile.improvement:
        total = total + ruleset.improvement(tile.improvement).yields.scaled(tile.improvement_count)
    return total


def city_yields(state: GameState, ruleset: Ruleset, city: City) -> Yields:
    total = Yields(science=CITY_BASE_SCIENCE) + tile_yields(state, ruleset, city.position)
    for pos in city.worked_tiles:
        total = total + tile_yields(state, ruleset, pos)
    for building_id in sorted(city.buildings):
        total = total + ruleset.building(building_id).yields
    civ = state.civ(city.owner)
    luxury_types = sum(
        1 for r in ruleset.resources
        if r.kind == "luxury" and civ.resource_stock.get(r.id, 0) > 0
    )
    bonus_food = LUXURY_FOOD_BONUS * min(luxury_types, LUXURY_FOOD_TYPES_CAP)
    return total + Yields(food=bonus_food)


def _assign_worked_tiles(state: GameState, ruleset: Ruleset, civ: Civilization) -> None:
    """Greedy per-civ tile assignment: best total yield first, stable tie-break."""
    taken: set[Coord] = set()
    for city in civ.cities:
        candidates = []
        for pos in state.map.within(city.position, CITY_WORK_RADIUS):
            if pos == city.position or pos in taken:
                continue
            if state.map.tile(pos).owner != civ.name:
                continue
            y = tile_yields(state, ruleset, pos)
            candidates.append((-(y.food + y.production + y.gold + y.science), pos))
        candidates.sort()
        city.worked_tiles = sorted(pos for _, pos in candidates[:city.population])
        taken.update(city.worked_tiles)


def growth_threshold(population: int) -> int:
    return GROWTH_BASE + GROWTH_PER_POP * (population - 1)


def end_turn(state: GameState, ruleset: Ruleset,
             freeze_diplomacy: bool = False) -> tuple[GameState, list[Event]]:
    """Resolve the turn in fixed phase order and advance the turn counter."""
    events: list[Event] = []
    for civ in state.civs:
        if not civ.is_alive():
            continue
        _assign_worked_tiles(state, ruleset, civ)
        income = 0
        science = 0
        for city in civ.cities:
            y = city_yields(state, ruleset, city)
            income += y.gold
            science += y.science
            # Phase 2: food growth / starvation.
            city.food_stock += y.food - FOOD_PER_POP * city.population
            if city.food_stock >= growth_threshold(city.population):
                city.food_stock -= growth_threshold(city.population)
                city.population += 1
                civ.notify(f"{city.name} grew to {city.population}")
            elif city.food_stock < 0:
                city.food_stock = 0
                if city.population > 1:
                    city.population -= 1
                    del city.worked_tiles[city.population:]
                    civ.notify(f"{city.name} is starving")
            # Phase 3: production.
            city.production_progress += y.production
            _complete_production(state, ruleset, civ, city, events)
        # Phase 4: research.
        for other in state.civs:
            if other.name != civ.name and other.is_alive() and \
                    state.diplomacy.has_treaty(civ.name, other.name, "research_agreement"):
                science += RESEARCH_AGREEMENT_SCIENCE
        civ.research_progress += science
        if civ.current_research is not None:
            tech = ruleset.tech(civ.current_research)
            if civ.research_progress >= tech.cost:
                civ.techs_researched.add(tech.id)
                civ.research_progress = 0
                civ.current_research = None
                civ.notify(f"Research complete: {tech.name}")
        # Phase 5: gold income minus maintenance.
        upkeep = sum(ruleset.building(b).maintenance for c in civ.cities for b in sorted(c.buildings))
        upkeep += sum(ruleset.unit_type(u.type_id).maintenance for u in civ.units)
        civ.gold += income - upkeep
        if civ.gold < 0:
            civ.gold = 0
            if civ.units:
                costly = max(civ.units,
                             key=lambda u: (ruleset.unit_type(u.type_id).maintenance, u.id))
                _remove_unit(state, costly)
                civ.notify(f"Disbanded {costly.id}: treasury empty")
        # Phase 6: unit healing.
        for unit in civ.units:
            if unit.health >= MAX_UNIT_HEALTH:
                continue
            tile_owner = state.map.tile(unit.position).owner
            city_here = state.city_at(unit.position)
            if city_here is not None and city_here.owner == civ.name:
                heal = HEAL_IN_CITY
            elif tile_owner == civ.name:
                heal = HEAL_IN_BORDERS
            else:
                heal = 0
            unit.health = min(MAX_UNIT_HEALTH, unit.health + heal)

    # Phase 7: treaty countdowns, border growth, housekeeping.
    for key in sorted(state.diplomacy.pairs):
        pd = state.diplomacy.pairs[key]
        expired = []
        for treaty in sorted(pd.treaties):
            pd.treaties[treaty] -= 1
            if pd.treaties[treaty] <= 0:
                if freeze_diplomacy:
                    pd.treaties[treaty] = 1  # expiry suppressed while frozen
                else:
                    expired.append(treaty)
        for treaty in expired:
            del pd.treaties[treaty]
            a, b = key.split("|")
            _emit(state, events, "treaty_expired", treaty=treaty, a=a, b=b)
    for civ in state.civs:
        for city in civ.cities:
            if city.population >= BORDER_GROWTH_POPULATION:
                for pos in state.map.within(city.position, CITY_WORK_RADIUS):
                    tile = state.map.tile(pos)
                    if tile.owner is None:
                        tile.owner = civ.name
            if not city.attacked_this_turn:
                city.health = min(MAX_CITY_HEALTH, city.health + CITY_HEALTH_REGEN)
            city.attacked_this_turn = False
    _eliminate_dead_civs(state, ruleset, events)
    _refresh_connectivity(state)
    _refresh_proximity(state)

    # Phase 8: next turn begins.
    state.turn += 1
    for civ in state.civs:
        for unit in civ.units:
            unit.moves_left = ruleset.unit_type(unit.type_id).movement
    refresh_exploration(state)
    return state, events


def _complete_production(state: GameState, ruleset: Ruleset, civ: Civilization,
                         city: City, events: list[Event]) -> None:
    item = city.production_current
    if item is None:
        return
    definition = ruleset.lookup(item)
    if city.production_progress < definition.cost:
        return
    if hasattr(definition, "is_wonder"):
        if definition.is_wonder and any(item in c.buildings for cv in state.civs for c in cv.cities):
            civ.notify(f"{definition.name} was already built elsewhere")
            city.production_current = None
            city.production_progress = 0
            return
        city.buildings.add(item)
        civ.notify(f"{city.name} completed {definition.name}")
        if definition.is_wonder:
            _emit(state, events, "wonder_built", wonder=item, city=city.id, civ=civ.name)
    else:
        if definition.is_military and city.population < 2:
            return  # completion waits until the city can spare the population
        spawn_pos = city.position
        if definition.is_water:
            water = [p for p in state.map.neighbors(city.position)
                     if ruleset.terrain(state.map.tile(p).base_terrain).is_water]
            if not water:
                civ.notify(f"{city.name} cannot launch {definition.name}: no water access")
                city.production_current = None
                city.production_progress = 0
                return
            spawn_pos = water[0]
        _spawn_unit(state, civ, definition, spawn_pos)
        if definition.is_military:
            city.population -= 1
            del city.worked_tiles[city.population:]
        civ.notify(f"{city.name} trained {definition.name}")
    city.production_current = None
    city.production_progress = 0


def _eliminate_dead_civs(state: GameState, ruleset: Ruleset, events: list[Event]) -> None:
    for civ in state.civs:
        if civ.eliminated or civ.cities:
            continue
        has_founder = any(ruleset.unit_type(u.type_id).can_found_city for u in civ.units)
        if not has_founder:
            civ.units.clear()
            civ.eliminated = True
            _emit(state, events, "civ_eliminated", civ=civ.name)


def _refresh_connectivity(state: GameState) -> None:
    for civ in state.civs:
        if not civ.cities:
            continue
        capital = next((c for c in civ.cities if c.is_original_capital), civ.cities[0])
        reachable = {capital.position}
        queue = deque([capital.position])
        while queue:
            pos = queue.popleft()
            for nxt in state.map.neighbors(pos):
                if nxt in reachable:
                    continue
                tile = state.map.tile(nxt)
                if tile.road or state.city_at(nxt) is not None:
                    reachable.add(nxt)
                    queue.append(nxt)
        for city in civ.cities:
            city.connected_to_capital = city.position in reachable


def _proximity_class(dist: int) -> str:
    if dist <= 4:
        return "neighbors"
    if dist <= 9:
        return "close"
    return "distant"


def _refresh_proximity(state: GameState) -> None:
    for civ in state.civs:
        civ.proximity = {}
        mine = [u.position for u in civ.units] + [c.position for c in civ.cities]
        if not mine:
            continue
        for other in state.civs:
            if other.name == civ.name or not other.is_alive():
                continue
            theirs = [u.position for u in other.units] + [c.position for c in other.cities]
            if not theirs:
                continue
            dist = min(hexgrid.distance(a, b) for a in mine for b in theirs)
            civ.proximity[other.name] = _proximity_class(dist)


# ---------------------------------------------------------------------------
# Victory and enumeration


def check_victory(state: GameState, ruleset: Ruleset) -> str | None:
    """Sole civ holding cities wins once nobody else can found a replacement."""
    with_cities = [c for c in state.civs if c.cities]
    if len(with_cities) != 1:
        return None
    winner = with_cities[0]
    for civ in state.civs:
        if civ.name == winner.name:
            continue
        if any(ruleset.unit_type(u.type_id).can_found_city for u in civ.units):
            return None
    return winner.name


def legal_actions(state: GameState, ruleset: Ruleset, civ_name: str) -> list[EngineAction]:
    """Enumerate the legal actions for one civ this turn.

    Parameterized action spaces (execute_trade, send_chat, adjust_closeness,
    noop) are excluded from enumeration; their legality is still enforced by
    apply_action.
    """
    civ = state.civ(civ_name)
    out: list[EngineAction] = []
    for unit in civ.units:
        unit_type = ruleset.unit_type(unit.type_id)
        for dest in sorted(reachable_tiles(state, ruleset, unit)):
            out.append(EngineAction(kind="move_unit", actor=civ_name,
                                    unit_id=unit.id, destination=dest))
        if unit_type.can_found_city:
            if _legal(state, ruleset, EngineAction(kind="found_city", actor=civ_name, unit_id=unit.id)):
                out.append(EngineAction(kind="found_city", actor=civ_name, unit_id=unit.id))
        if unit_type.can_improve:
            for improvement in [i.id for i in ruleset.improvements] + [ROAD_IMPROVEMENT]:
                action = EngineAction(kind="improve_tile", actor=civ_name,
                                      unit_id=unit.id, item_id=improvement)
                if _legal(state, ruleset, action):
                    out.append(action)
        if unit_type.is_military and unit_type.strength > 0 and unit.moves_left >= 1:
            for target_id in _attackable_targets(state, ruleset, unit):
                out.append(EngineAction(kind="attack", actor=civ_name,
                                        unit_id=unit.id, target_id=target_id))
        if unit.promotion_charges >= 1:
            out.append(EngineAction(kind="promote_unit", actor=civ_name, unit_id=unit.id))
    for city in civ.cities:
        for item in sorted(ruleset.available_items(civ.techs_researched)):
            action = EngineAction(kind="set_production", actor=civ_name,
                                  city_id=city.id, item_id=item)
            if _legal(state, ruleset, action):
                out.append(action)
    from microciv.ruleset import researchable_techs
    for tech_id in researchable_techs(ruleset, civ.techs_researched):
        out.append(EngineAction(kind="set_research", actor=civ_name, tech_id=tech_id))
    for other in state.civs:
        if other.name == civ_name or not other.is_alive():
            continue
        for kind in ("declare_war", "offer_peace", "sign_defensive_pact",
                     "sign_research_agreement", "declare_friendship", "set_open_borders"):
            action = EngineAction(kind=kind, actor=civ_name, other_civ=other.name)
            if _legal(state, ruleset, action):
                out.append(action)
    return out


def _legal(state: GameState, ruleset: Ruleset, action: EngineAction) -> bool:
    try:
        check_action(state, ruleset, action)
        return True
    except IllegalAction:
        return False


def _attackable_targets(state: GameState, ruleset: Ruleset, unit: Unit) -> list[str]:
    unit_type = ruleset.unit_type(unit.type_id)
    targets: list[str] = []
    for civ in state.civs:
        if civ.name == unit.owner or not state.diplomacy.at_war(unit.owner, civ.name):
            continue
        for other in civ.units:
            if hexgrid.distance(unit.position, other.position) <= unit_type.attack_range:
                targets.append(other.id)
        for city in civ.cities:
            if hexgrid.distance(unit.position, city.position) <= unit_type.attack_range:
                targets.append(city.id)
    return sorted(targets)
