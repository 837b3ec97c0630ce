"""Civilization score dimensions and the strength formulas.

The headline score combines city count, population, territory, wonders,
techs, future techs, and military strength, with map-size scaling applied to
the territorial terms. Military strength sums unit combat strength (water
units at half weight) and scales by a square-root gold factor capped at 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from microciv.engine.state import Civilization, GameState
from microciv.ruleset import Ruleset

# Baseline tile count of a medium map; m scales scores linearly around it.
MAP_SIZE_BASELINE_TILES = 1276

WEIGHT_CITIES = 10
WEIGHT_POPULATION = 3
WEIGHT_TILES = 1
WEIGHT_WONDERS = 40
WEIGHT_TECHS = 4
WEIGHT_FUTURE_TECHS = 10
WEIGHT_MILITARY = 0.1

GOLD_BONUS_CAP = 2.0
WATER_UNIT_FACTOR = 0.5


@dataclass(frozen=True)
class ScoreBreakdown:
    """The ten score dimensions plus the raw components they derive from."""

    # Dimensions: total, population, crops, production, gold, territory,
    # military, happiness, tech, culture. Happiness and culture are stubs.
    S: float = 0.0
    N: int = 0
    C: int = 0
    P: int = 0
    G: int = 0
    T: int = 0
    F: float = 0.0
    H: int = 0
    W: int = 0
    A: int = 0
    components: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "S": self.S, "N": self.N, "C": self.C, "P": self.P, "G": self.G,
            "T": self.T, "F": self.F, "H": self.H, "W": self.W, "A": self.A,
            "components": dict(self.components),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreBreakdown":
        return cls(
            S=float(d["S"]), N=int(d["N"]), C=int(d["C"]), P=int(d["P"]),
            G=int(d["G"]), T=int(d["T"]), F=float(d["F"]), H=int(d["H"]),
            W=int(d["W"]), A=int(d["A"]), components=dict(d.get("components", {})),
        )


def map_size_factor(map_tile_count: int) -> float:
    """Linear map-size factor: 1.0 at the baseline tile count.

    Applies below the baseline as well (m < 1 on small maps); callers that
    report scores flag sub-baseline maps.
    """
    if map_tile_count <= 0:
        raise ValueError("map tile count must be positive")
    return map_tile_count / MAP_SIZE_BASELINE_TILES


def gold_bonus(g: float) -> float:
    """sqrt of gold as a percentage, capped at 2."""
    if g < 0:
        raise ValueError("gold must be nonnegative")
    return min(math.sqrt(g) / 100.0, GOLD_BONUS_CAP)


def military_strength(civ: Civilization, ruleset: Ruleset, mode: str = "strength") -> float:
    """Unit-strength sum (water units halved) scaled by the capped gold factor.

    ``mode="count"`` weights every unit as 1 instead of its combat strength,
    for sensitivity runs.
    """
    total = 0.0
    for unit in civ.units:
        unit_type = ruleset.unit_type(unit.type_id)
        value = 1.0 if mode == "count" else float(unit_type.strength)
        if unit_type.is_water:
            value *= WATER_UNIT_FACTOR
        total += value
    return total * min(gold_bonus(civ.gold), GOLD_BONUS_CAP)


def eq1_score(c: int, p: int, t_owned: int, w: int, s: int, f: int, k: float, m: float) -> float:
    """The headline score as a pure function of its components."""
    return (
        c * WEIGHT_CITIES * m
        + p * WEIGHT_POPULATION * m
        + t_owned * WEIGHT_TILES * m
        + w * WEIGHT_WONDERS * m
        + s * WEIGHT_TECHS
        + f * WEIGHT_FUTURE_TECHS
        + k * WEIGHT_MILITARY
    )


def recompute_total(breakdown: ScoreBreakdown) -> float:
    comp = breakdown.components
    return eq1_score(comp["c"], comp["p"], comp["t_owned"], comp["w"],
                     comp["s"], comp["f"], comp["k"], comp["m"])


def civ_score(civ: Civilization, state: GameState, ruleset: Ruleset) -> ScoreBreakdown:
    """Full per-civ breakdown computed from the current state."""
    from microciv.engine.rules import city_yields  # local import avoids a cycle

    m = map_size_factor(state.map.width * state.map.height)
    c = len(civ.cities)
    p = sum(city.population for city in civ.cities)
    t_owned = sum(1 for pos in state.map.coords() if state.map.tile(pos).owner == civ.name)
    w = sum(
        1 for city in civ.cities for b in city.buildings
        if ruleset.building(b).is_wonder
    )
    s = len(civ.techs_researched)
    f = 0  # no repeatable future tech in shipped content
    k = military_strength(civ, ruleset)

    crops = 0
    production = 0
    for city in civ.cities:
        y = city_yields(state, ruleset, city)
        crops += y.food
        production += y.production

    total = eq1_score(c, p, t_owned, w, s, f, k, m)
    return ScoreBreakdown(
        S=total,
        N=p,
        C=crops,
        P=production,
        G=civ.gold,
        T=t_owned,
        F=k,
        H=0,
        W=s,
        A=0,
        components={"c": c, "p": p, "t_owned": t_owned, "w": w, "s": s,
                    "f": f, "k": k, "m": m, "g": civ.gold},
    )


def all_scores(state: GameState, ruleset: Ruleset) -> dict[str, ScoreBreakdown]:
    return {civ.name: civ_score(civ, state, ruleset) for civ in state.civs}
