from __future__ import annotations

import pytest

from microciv import persistence
from microciv.engine.rules import GameConfig, new_game
from microciv.ruleset import mini_ruleset
from microciv.simulator import RolloutConfig, rollout

STANDARD_CIVS = ("Rome", "Aztecs", "Greece", "Egypt")


@pytest.fixture(scope="session")
def ruleset():
    return mini_ruleset()


@pytest.fixture(scope="session")
def fresh_state(ruleset):
    return new_game(ruleset, GameConfig(civ_names=STANDARD_CIVS, seed=7))


@pytest.fixture()
def state(ruleset):
    """A mutable fresh game, new per test."""
    return new_game(ruleset, GameConfig(civ_names=STANDARD_CIVS, seed=7))


def make_state(ruleset, seed=7, civs=STANDARD_CIVS, width=20, height=16):
    return new_game(ruleset, GameConfig(civ_names=civs, seed=seed,
                                        width=width, height=height))


def evolve(ruleset, seed, turns):
    """A mid-game state produced by baseline play from a fresh seed."""
    state = make_state(ruleset, seed=seed)
    if turns <= 0:
        return state
    save = persistence.save(state, ruleset)
    result = rollout(save, RolloutConfig(turns=turns), ruleset)
    return persistence.load(result.final_save, ruleset)


@pytest.fixture(scope="session")
def state_pool(ruleset):
    """Evolved states for sampling-style suites (fog, round-trip, legality)."""
    pool = []
    for seed in range(1, 11):
        for turns in (0, 4, 10, 18):
            pool.append(evolve(ruleset, seed, turns))
    return pool
