"""The authoritative turn-based rules engine."""

from microciv.engine.actions import (  # noqa: F401
    ACTION_KINDS,
    Bundle,
    EngineAction,
    IllegalAction,
    TradeOffer,
)
from microciv.engine.state import (  # noqa: F401
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
)
from microciv.engine.rules import (  # noqa: F401
    CombatReport,
    GameConfig,
    apply_action,
    check_victory,
    end_turn,
    legal_actions,
    new_game,
    resolve_combat,
)
