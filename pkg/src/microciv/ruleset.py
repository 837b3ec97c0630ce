"""Data-driven game content: terrains, resources, techs, buildings, units.

All content lives in a JSON pack (see ``docs/ruleset.md``); engine code holds
no content constants. A pack is validated on load and immutable afterwards,
so a :class:`Ruleset` may be shared freely across threads and games.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Iterable


class RulesetError(ValueError):
    """Malformed or inconsistent content pack."""


@dataclass(frozen=True)
class Yields:
    food: int = 0
    production: int = 0
    gold: int = 0
    science: int = 0

    def __add__(self, other: "Yields") -> "Yields":
        return Yields(
            self.food + other.food,
            self.production + other.production,
            self.gold + other.gold,
            self.science + other.science,
        )

    def scaled(self, n: int) -> "Yields":
        return Yields(self.food * n, self.production * n, self.gold * n, self.science * n)

    def to_dict(self) -> dict[str, int]:
        return {"food": self.food, "production": self.production, "gold": self.gold, "science": self.science}


def _yields_from(d: dict[str, Any] | None) -> Yields:
    d = d or {}
    return Yields(
        int(d.get("food", 0)),
        int(d.get("production", 0)),
        int(d.get("gold", 0)),
        int(d.get("science", 0)),
    )


@dataclass(frozen=True)
class TerrainDef:
    id: str
    name: str
    yields: Yields = Yields()
    is_water: bool = False
    map_weight: float = 1.0


@dataclass(frozen=True)
class FeatureDef:
    id: str
    name: str
    yields: Yields = Yields()
    spawn_weight: float = 0.0


@dataclass(frozen=True)
class ResourceDef:
    id: str
    name: str
    kind: str  # strategic | luxury | bonus
    yields: Yields = Yields()
    spawn_weight: float = 0.0


@dataclass(frozen=True)
class TechDef:
    id: str
    name: str
    era: str
    cost: int
    prerequisites: tuple[str, ...] = ()
    unlocks: tuple[str, ...] = ()


@dataclass(frozen=True)
class BuildingDef:
    id: str
    name: str
    cost: int
    maintenance: int = 0
    yields: Yields = Yields()
    is_wonder: bool = False


@dataclass(frozen=True)
class UnitTypeDef:
    id: str
    name: str
    cost: int
    maintenance: int = 0
    strength: int = 0
    movement: int = 2
    is_water: bool = False
    is_military: bool = False
    is_ranged: bool = False
    attack_range: int = 1
    can_found_city: bool = False
    can_improve: bool = False


@dataclass(frozen=True)
class ImprovementDef:
    id: str
    name: str
    yields: Yields = Yields()
    # Per-tile application cap; the engine rejects a fourth modification.
    max_applications: int = 3


RESOURCE_KINDS = ("strategic", "luxury", "bonus")

# Table-4 value-domain ceilings the schema must respect.
MAX_BASE_TERRAINS = 9
MAX_FEATURES = 23
MAX_RESOURCES = 35


@dataclass(frozen=True)
class Ruleset:
    """A validated, immutable content pack."""

    id: str
    terrains: tuple[TerrainDef, ...]
    features: tuple[FeatureDef, ...]
    resources: tuple[ResourceDef, ...]
    techs: tuple[TechDef, ...]
    buildings: tuple[BuildingDef, ...]
    unit_types: tuple[UnitTypeDef, ...]
    improvements: tuple[ImprovementDef, ...]
    content_hash: str = ""
    _index: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        index: dict[str, Any] = {}
        for group in (self.terrains, self.features, self.resources, self.techs,
                      self.buildings, self.unit_types, self.improvements):
            for item in group:
                if item.id in index:
                    raise RulesetError(f"duplicate id {item.id!r}")
                index[item.id] = item
        object.__setattr__(self, "_index", index)

    def lookup(self, item_id: str) -> Any:
        try:
            return self._index[item_id]
        except KeyError:
            raise RulesetError(f"unknown id {item_id!r}") from None

    def terrain(self, tid: str) -> TerrainDef:
        return self._index[tid]

    def tech(self, tid: str) -> TechDef:
        return self._index[tid]

    def building(self, bid: str) -> BuildingDef:
        return self._index[bid]

    def unit_type(self, uid: str) -> UnitTypeDef:
        return self._index[uid]

    def improvement(self, iid: str) -> ImprovementDef:
        return self._index[iid]

    def resource(self, rid: str) -> ResourceDef:
        return self._index[rid]

    def feature(self, fid: str) -> FeatureDef:
        return self._index[fid]

    def base_items(self) -> set[str]:
        """Buildings/units available without research (never listed as an unlock)."""
        unlocked = {u for t in self.techs for u in t.unlocks}
        return {d.id for d in (*self.buildings, *self.unit_types) if d.id not in unlocked}

    def available_items(self, researched: Iterable[str]) -> set[str]:
        researched = set(researched)
        out = self.base_items()
        for t in self.techs:
            if t.id in researched:
                out.update(t.unlocks)
        return out


def _build_defs(data: dict[str, Any]) -> dict[str, tuple]:
    def build(cls, rows, extra=None):
        out = []
        known = {f.name for f in fields(cls)}
        for row in rows:
            kwargs = dict(row)
            unknown = set(kwargs) - known
            if unknown:
                raise RulesetError(f"unknown field(s) {sorted(unknown)} in {cls.__name__} {row.get('id')!r}")
            if "yields" in kwargs:
                kwargs["yields"] = _yields_from(kwargs["yields"])
            for k in ("prerequisites", "unlocks"):
                if k in kwargs:
                    kwargs[k] = tuple(kwargs[k])
            out.append(cls(**kwargs))
        return tuple(out)

    return {
        "terrains": build(TerrainDef, data.get("terrains", [])),
        "features": build(FeatureDef, data.get("features", [])),
        "resources": build(ResourceDef, data.get("resources", [])),
        "techs": build(TechDef, data.get("techs", [])),
        "buildings": build(BuildingDef, data.get("buildings", [])),
        "unit_types": build(UnitTypeDef, data.get("unit_types", [])),
        "improvements": build(ImprovementDef, data.get("improvements", [])),
    }


def _validate(rs: Ruleset) -> None:
    for group, cap, label in (
        (rs.terrains, MAX_BASE_TERRAINS, "base terrains"),
        (rs.features, MAX_FEATURES, "features"),
        (rs.resources, MAX_RESOURCES, "resources"),
    ):
        if len(group) > cap:
            raise RulesetError(f"too many {label}: {len(group)} > {cap}")

    for r in rs.resources:
        if r.kind not in RESOURCE_KINDS:
            raise RulesetError(f"resource {r.id!r} has unknown kind {r.kind!r}")

    for d in (*rs.techs, *rs.buildings, *rs.unit_types):
        if d.cost < 0:
            raise RulesetError(f"{d.id!r} has negative cost")
    for d in (*rs.buildings, *rs.unit_types):
        if d.maintenance < 0:
            raise RulesetError(f"{d.id!r} has negative maintenance")

    buildable = {d.id for d in (*rs.buildings, *rs.unit_types)}
    tech_ids = {t.id for t in rs.techs}
    for t in rs.techs:
        for p in t.prerequisites:
            if p not in tech_ids:
                raise RulesetError(f"tech {t.id!r} requires unknown tech {p!r}")
        for u in t.unlocks:
            if u not in buildable:
                raise RulesetError(f"tech {t.id!r} unlocks unknown item {u!r}")

    # Prerequisite graph must be acyclic; report the first cycle found.
    color: dict[str, int] = {}
    stack: list[str] = []

    def visit(tid: str) -> None:
        color[tid] = 1
        stack.append(tid)
        for p in rs.tech(tid).prerequisites:
            if color.get(p, 0) == 1:
                cycle = stack[stack.index(p):] + [p]
                raise RulesetError(f"tech prerequisite cycle: {' -> '.join(cycle)}")
            if color.get(p, 0) == 0:
                visit(p)
        stack.pop()
        color[tid] = 2

    for t in rs.techs:
        if color.get(t.id, 0) == 0:
            visit(t.id)


def ruleset_from_dict(data: dict[str, Any]) -> Ruleset:
    """Build and validate a ruleset from already-parsed pack data."""
    if not isinstance(data, dict):
        raise RulesetError("pack root must be an object")
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    content_hash = hashlib.sha256(canonical).hexdigest()
    defs = _build_defs(data)
    rs = Ruleset(id=str(data.get("id", "unnamed")), content_hash=content_hash, **defs)
    _validate(rs)
    return rs


def load_ruleset(path: str | Path) -> Ruleset:
    """Load and validate a content pack from a JSON file."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RulesetError(f"cannot parse {path}: {exc}") from exc
    return ruleset_from_dict(data)


def mini_ruleset() -> Ruleset:
    """The content pack shipped with the package."""
    raw = resources.files("microciv").joinpath("data/mini_ruleset.json").read_text("utf-8")
    return ruleset_from_dict(json.loads(raw))


def researchable_techs(ruleset: Ruleset, researched: set[str]) -> list[str]:
    """Techs not yet researched whose prerequisites are all satisfied, in id order."""
    tech_ids = {t.id for t in ruleset.techs}
    unknown = set(researched) - tech_ids
    if unknown:
        raise RulesetError(f"unknown tech id {sorted(unknown)[0]!r} in researched set")
    return sorted(
        t.id for t in ruleset.techs
        if t.id not in researched and all(p in researched for p in t.prerequisites)
    )
