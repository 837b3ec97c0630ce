"""Rollout tool: clone a save, advance N turns under baseline AI, diff scores.

Rollouts never mutate the input save. With ``freeze_diplomacy`` the baseline
AI still computes diplomatic intents but suppresses them, and end-of-turn
treaty expiry is held, so the diplomacy table is flag-for-flag constant.
``compare_decisions`` runs one branch per candidate decision from the same
starting bytes, so every branch shares the same RNG stream state and any
outcome difference is attributable to the decision alone.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from microciv import persistence
from microciv.engine.actions import EngineAction, IllegalAction
from microciv.engine.rules import apply_action
from microciv.policy import AspectSwitches
from microciv.rng import RngState
from microciv.runner import BaselineController, advance_turn
from microciv.ruleset import Ruleset
from microciv.scoring import ScoreBreakdown, all_scores

logger = logging.getLogger(__name__)

MAX_ROLLOUT_TURNS = 500

SCORE_DIMENSIONS = ("S", "N", "C", "P", "G", "T", "F", "H", "W", "A")


@dataclass(frozen=True)
class RolloutConfig:
    turns: int
    freeze_diplomacy: bool = False
    disable_workers: bool = False
    seed: int | None = None  # when set, replaces the save's RNG streams


@dataclass
class RolloutResult:
    final_save: bytes = b""
    start_scores: dict[str, ScoreBreakdown] = field(default_factory=dict)
    end_scores: dict[str, ScoreBreakdown] = field(default_factory=dict)
    deltas: dict[str, dict[str, float]] = field(default_factory=dict)
    elapsed_seconds: float = 0.0
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "error": self.error,
            "elapsed_seconds": self.elapsed_seconds,
            "deltas": self.deltas,
            "end_scores": {k: v.to_dict() for k, v in self.end_scores.items()},
        }


def _score_deltas(start: dict[str, ScoreBreakdown],
                  end: dict[str, ScoreBreakdown]) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for name in start:
        s, e = start[name].to_dict(), end[name].to_dict()
        out[name] = {dim: round(e[dim] - s[dim], 6) for dim in SCORE_DIMENSIONS}
    return out


def rollout(save: bytes, config: RolloutConfig, ruleset: Ruleset) -> RolloutResult:
    """Simulate ``config.turns`` turns of baseline play; deterministic per input."""
    if not 1 <= config.turns <= MAX_ROLLOUT_TURNS:
        raise ValueError(f"turns must be in [1, {MAX_ROLLOUT_TURNS}]")
    started = time.perf_counter()
    state = persistence.load(save, ruleset)
    if config.seed is not None:
        state.rng = RngState(config.seed)
    start_scores = all_scores(state, ruleset)

    switches = AspectSwitches(workers=not config.disable_workers)
    controllers = {
        civ.name: BaselineController(switches, suppress_diplomacy=config.freeze_diplomacy)
        for civ in state.civs
    }
    for _ in range(config.turns):
        advance_turn(state, ruleset, controllers, freeze_diplomacy=config.freeze_diplomacy)

    end_scores = all_scores(state, ruleset)
    return RolloutResult(
        final_save=persistence.save(state, ruleset),
        start_scores=start_scores,
        end_scores=end_scores,
        deltas=_score_deltas(start_scores, end_scores),
        elapsed_seconds=time.perf_counter() - started,
    )


def compare_decisions(save: bytes, decisions: list[EngineAction | None],
                      config: RolloutConfig, ruleset: Ruleset) -> list[RolloutResult]:
    """One rollout branch per decision (None = no-op), in input order.

    Each branch starts from the same save bytes. Illegal decisions are
    reported on their own branch without aborting the others.
    """
    results: list[RolloutResult] = []
    for decision in decisions:
        state = persistence.load(save, ruleset)
        if decision is not None and decision.kind != "noop":
            try:
                apply_action(state, ruleset, decision)
            except IllegalAction as exc:
                results.append(RolloutResult(error=f"illegal_decision:{exc.code}"))
                continue
        branch_save = persistence.save(state, ruleset)
        results.append(rollout(branch_save, config, ruleset))
    return results


class SimulatorHandle:
    """A bound simulator an agent can consult mid-game.

    Wraps a save provider (usually "serialize the live state now") so the
    agent never touches engine internals directly.
    """

    def __init__(self, save_provider, ruleset: Ruleset, horizon: int = 10,
                 freeze_diplomacy: bool = True):
        self._save_provider = save_provider
        self._ruleset = ruleset
        self.horizon = horizon
        self.freeze_diplomacy = freeze_diplomacy

    def compare(self, decisions: list[EngineAction | None],
                horizon: int | None = None) -> list[RolloutResult]:
        config = RolloutConfig(turns=horizon or self.horizon,
                               freeze_diplomacy=self.freeze_diplomacy)
        return compare_decisions(self._save_provider(), decisions, config, self._ruleset)

    def compare_from_save(self, save: bytes, decisions: list[EngineAction | None],
                          horizon: int | None = None) -> list[RolloutResult]:
        config = RolloutConfig(turns=horizon or self.horizon,
                               freeze_diplomacy=self.freeze_diplomacy)
        return compare_decisions(save, decisions, config, self._ruleset)

    def score_delta(self, result: RolloutResult, civ_name: str) -> float:
        if result.error is not None:
            return float("-inf")
        return result.deltas.get(civ_name, {}).get("S", 0.0)
