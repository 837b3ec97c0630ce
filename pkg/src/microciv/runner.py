"""The shared game loop: per-civ controllers, then end-of-turn resolution.

Used by the simulator (baseline-only rollouts), the bench harness (agent
tournaments), and the game host (remote-driven sessions). One global turn is:
every living civ's controller plays in fixed seat order, then ``end_turn``
resolves the world.
"""

from __future__ import annotations

import logging
from typing import Callable, Protocol

from microciv.engine.rules import check_victory, end_turn
from microciv.engine.state import GameState
from microciv.policy import AspectSwitches, BaselinePolicy
from microciv.ruleset import Ruleset

logger = logging.getLogger(__name__)


class Controller(Protocol):
    def play_turn(self, state: GameState, ruleset: Ruleset, civ_name: str) -> None: ...


class BaselineController:
    """Drives one civ with the baseline rule AI."""

    def __init__(self, switches: AspectSwitches = AspectSwitches(),
                 suppress_diplomacy: bool = False):
        self.policy = BaselinePolicy(switches)
        self.suppress_diplomacy = suppress_diplomacy

    def play_turn(self, state: GameState, ruleset: Ruleset, civ_name: str) -> None:
        self.policy.play_turn(state, ruleset, civ_name,
                              suppress_diplomacy=self.suppress_diplomacy)


def advance_turn(state: GameState, ruleset: Ruleset,
                 controllers: dict[str, Controller],
                 freeze_diplomacy: bool = False) -> None:
    for name in [c.name for c in state.civs]:
        if not state.civ(name).is_alive():
            continue
        controller = controllers.get(name)
        if controller is not None:
            controller.play_turn(state, ruleset, name)
    end_turn(state, ruleset, freeze_diplomacy=freeze_diplomacy)


def run_game(state: GameState, ruleset: Ruleset,
             controllers: dict[str, Controller],
             max_turns: int,
             freeze_diplomacy: bool = False,
             on_turn_end: Callable[[GameState], None] | None = None) -> str | None:
    """Advance until conquest victory or the turn cap; returns the winner, if any."""
    while state.turn < max_turns:
        advance_turn(state, ruleset, controllers, freeze_diplomacy=freeze_diplomacy)
        if on_turn_end is not None:
            on_turn_end(state)
        winner = check_victory(state, ruleset)
        if winner is not None:
            return winner
    return None
