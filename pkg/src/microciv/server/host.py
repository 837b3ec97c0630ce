"""The game host: session registry, save sync, chat, archiving, ratings.

Sessions are isolated: one lock and one data directory per game, exactly one
writer for the turn pipeline. The archive is append-only files under the data
directory (per-turn saves, chat, transcripts, ratings), exportable as a
dataset bundle.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from microciv import persistence
from microciv.agent.controller import CivAgent, ScriptedResponder, SkillBus
from microciv.engine.actions import EngineAction, IllegalAction
from microciv.engine.rules import GameConfig, apply_action, new_game
from microciv.engine.state import GameState, channel_members
from microciv.policy import (
    Advisor,
    AdvisorDecision,
    DecisionContext,
    RemoteAdvisor,
    ScriptedAdvisor,
)
from microciv.runner import run_game as _run_game_loop
from microciv.ruleset import Ruleset, mini_ruleset

logger = logging.getLogger(__name__)

RATING_MIN, RATING_MAX = 1, 5


class HostError(Exception):
    def __init__(self, status: int, code: str, message: str = ""):
        super().__init__(message or code)
        self.status = status
        self.code = code


class _LoggedAdvisor(Advisor):
    """Wraps a session advisor so every decision lands in the decision log."""

    def __init__(self, inner: Advisor, session: "GameSession", civ: str):
        self.inner = inner
        self._session = session
        self._civ = civ

    def decide(self, context: DecisionContext) -> AdvisorDecision:
        started = time.perf_counter()
        decision = self.inner(context)
        self._session.decision_log.append({
            "turn": self._session.state.turn,
            "civ": self._civ,
            "kind": context.kind,
            "choice": decision.choice,
            "latency_seconds": round(time.perf_counter() - started, 6),
        })
        return decision


@dataclass(frozen=True)
class RatingRecord:
    game_id: str
    turn: int
    rater: str
    target_civ: str
    decision_ref: str
    score: int
    comment: str = ""

    def validate(self) -> "RatingRecord":
        if not RATING_MIN <= self.score <= RATING_MAX:
            raise HostError(400, "bad_rating", f"score must be in [{RATING_MIN},{RATING_MAX}]")
        return self

    def to_dict(self) -> dict[str, Any]:
        return {
            "game_id": self.game_id, "turn": self.turn, "rater": self.rater,
            "target_civ": self.target_civ, "decision_ref": self.decision_ref,
            "score": self.score, "comment": self.comment,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RatingRecord":
        return cls(
            game_id=str(d["game_id"]), turn=int(d["turn"]), rater=str(d["rater"]),
            target_civ=str(d["target_civ"]), decision_ref=str(d.get("decision_ref", "")),
            score=int(d["score"]), comment=str(d.get("comment", "")),
        )


@dataclass
class GameSession:
    game_id: str
    ruleset: Ruleset
    state: GameState
    participants: dict[str, str]  # civ -> "scripted" | "remote:<base-url>" | "human"
    save_version: int = 1
    data_dir: Path | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    bus: SkillBus = field(default_factory=SkillBus)
    decision_log: list[dict[str, Any]] = field(default_factory=list)
    archived_turns: list[int] = field(default_factory=list)

    def save_bytes(self) -> bytes:
        return persistence.save(self.state, self.ruleset)


class GameHost:
    """Hosts many concurrent sessions; each session's pipeline is sequential."""

    def __init__(self, data_dir: str | Path | None = None,
                 rulesets: dict[str, Ruleset] | None = None,
                 decision_timeout: float = 30.0):
        self.data_dir = Path(data_dir) if data_dir else None
        mini = mini_ruleset()
        self.rulesets = rulesets or {mini.id: mini}
        self.decision_timeout = decision_timeout
        self.sessions: dict[str, GameSession] = {}
        self._registry_lock = threading.Lock()
        self._counter = 0

    # -- session lifecycle ----------------------------------------------------

    def create_game(self, config: dict[str, Any]) -> str:
        ruleset_id = config.get("ruleset", next(iter(sorted(self.rulesets))))
        if ruleset_id not in self.rulesets:
            raise HostError(400, "unknown_ruleset", ruleset_id)
        ruleset = self.rulesets[ruleset_id]
        civs = tuple(config.get("civs", ()))
        seed = int(config.get("seed", 0))
        try:
            game_config = GameConfig(
                civ_names=civs, seed=seed,
                width=int(config.get("width", 20)),
                height=int(config.get("height", 16)),
                game_id=config.get("game_id"),
            )
            state = new_game(ruleset, game_config)
        except ValueError as exc:
            raise HostError(400, "bad_config", str(exc)) from exc
        participants = {name: "scripted" for name in civs}
        participants.update({str(k): str(v) for k, v in config.get("advisors", {}).items()})
        for name in participants:
            if name not in civs:
                raise HostError(400, "unknown_civ", name)
        with self._registry_lock:
            if config.get("game_id"):
                game_id = str(config["game_id"])
                if game_id in self.sessions:
                    raise HostError(409, "duplicate_game", game_id)
            else:
                self._counter += 1
                game_id = f"{state.game_id}-{self._counter}"
        state.game_id = game_id
        session = GameSession(game_id=game_id, ruleset=ruleset, state=state,
                              participants=participants,
                              data_dir=self._game_dir(game_id))
        if session.data_dir is not None:
            (session.data_dir / "saves").mkdir(parents=True, exist_ok=True)
        with self._registry_lock:
            self.sessions[game_id] = session
        return game_id

    def _game_dir(self, game_id: str) -> Path | None:
        if self.data_dir is None:
            return None
        return self.data_dir / "games" / game_id

    def session(self, game_id: str) -> GameSession:
        session = self.sessions.get(game_id)
        if session is None:
            raise HostError(404, "unknown_game", game_id)
        return session

    # -- save synchronization ---------------------------------------------------

    def fetch_save(self, game_id: str) -> tuple[bytes, int]:
        session = self.session(game_id)
        with session.lock:
            return session.save_bytes(), session.save_version

    def submit_save(self, game_id: str, data: bytes, version: int) -> int:
        session = self.session(game_id)
        with session.lock:
            if version <= session.save_version:
                raise HostError(409, "stale_save",
                                f"version {version} <= stored {session.save_version}")
            try:
                session.state = persistence.load(data, session.ruleset)
            except persistence.SaveError as exc:
                raise HostError(400, "bad_save", str(exc)) from exc
            session.save_version = version
            return session.save_version

    # -- decisions ----------------------------------------------------------------

    def advisor_for(self, game_id: str, civ: str) -> Advisor:
        session = self.session(game_id)
        role = session.participants.get(civ)
        if role is None:
            raise HostError(404, "unknown_civ", civ)
        if role.startswith("remote:"):
            base = role.split(":", 1)[1]
            url = f"{base.rstrip('/')}/games/{game_id}/decision"
            return RemoteAdvisor(url, timeout=self.decision_timeout)
        return ScriptedAdvisor()

    def request_decision(self, game_id: str, civ: str,
                         context: DecisionContext) -> AdvisorDecision:
        """Forward one decision to the civ's registered module and log it."""
        session = self.session(game_id)
        advisor = self.advisor_for(game_id, civ)
        started = time.perf_counter()
        decision = advisor(context)
        session.decision_log.append({
            "turn": session.state.turn,
            "civ": civ,
            "kind": context.kind,
            "choice": decision.choice,
            "latency_seconds": round(time.perf_counter() - started, 6),
        })
        return decision

    # -- chat ------------------------------------------------------------------------

    def post_chat(self, game_id: str, channel: str, sender: str, text: str) -> int:
        session = self.session(game_id)
        with session.lock:
            action = EngineAction(kind="send_chat", actor=sender, channel=channel, text=text)
            try:
                apply_action(session.state, session.ruleset, action)
            except IllegalAction as exc:
                status = 403 if exc.code == "not_channel_member" else 404
                raise HostError(status, exc.code, str(exc)) from exc
            message = session.state.chat[channel][-1]
            self._append_jsonl(session, "chat.jsonl", {
                "channel": channel, "index": message.index, "turn": message.turn,
                "sender": sender, "text": text,
            })
            return message.index

    def poll_chat(self, game_id: str, channel: str, since: int,
                  reader: str) -> list[dict[str, Any]]:
        session = self.session(game_id)
        with session.lock:
            if channel not in session.state.chat:
                raise HostError(404, "unknown_channel", channel)
            if reader not in channel_members(channel, session.state):
                raise HostError(403, "not_channel_member", reader)
            return [
                {"index": m.index, "turn": m.turn, "sender": m.sender, "text": m.text}
                for m in session.state.chat[channel] if m.index > since
            ]

    # -- archive and ratings -------------------------------------------------------

    def archive_turn(self, game_id: str, turn: int, save: bytes,
                     transcripts: list[dict[str, Any]] | None = None) -> None:
        session = self.session(game_id)
        session.archived_turns.append(turn)
        if session.data_dir is None:
            return
        try:
            path = session.data_dir / "saves" / f"turn_{turn:05d}.json"
            path.write_bytes(save)
            for record in transcripts or []:
                self._append_jsonl(session, "transcripts.jsonl", {"turn": turn, **record})
        except OSError as exc:  # archive failures must never corrupt game flow
            logger.error("archive write failed for %s turn %d: %s", game_id, turn, exc)

    def archived_save(self, game_id: str, turn: int) -> bytes | None:
        session = self.session(game_id)
        if session.data_dir is None:
            return None
        path = session.data_dir / "saves" / f"turn_{turn:05d}.json"
        return path.read_bytes() if path.exists() else None

    def submit_rating(self, record: RatingRecord) -> None:
        record.validate()
        session = self.session(record.game_id)
        self._append_jsonl(session, "ratings.jsonl", record.to_dict())

    def export_dataset(self, game_id: str) -> dict[str, Any]:
        """Manifest of everything archived for one game."""
        session = self.session(game_id)
        if session.data_dir is None:
            return {"game_id": game_id, "saves": [], "files": []}
        saves = sorted(str(p) for p in (session.data_dir / "saves").glob("turn_*.json"))
        files = sorted(
            str(p) for p in session.data_dir.glob("*.jsonl")
        )
        return {"game_id": game_id, "saves": saves, "files": files}

    def _append_jsonl(self, session: GameSession, filename: str, record: dict[str, Any]) -> None:
        if session.data_dir is None:
            return
        try:
            session.data_dir.mkdir(parents=True, exist_ok=True)
            with (session.data_dir / filename).open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        except OSError as exc:
            logger.error("append to %s failed: %s", filename, exc)

    # -- turn pipeline ------------------------------------------------------------

    def run_game(self, game_id: str, max_turns: int = 250,
                 use_simulator: bool = False) -> str | None:
        """Drive the session to victory or the cap, archiving every turn."""
        session = self.session(game_id)
        with session.lock:
            controllers = {}
            responders = {}
            for civ, role in session.participants.items():
                if role == "human":
                    # Humans act through submitted saves and chat, not this loop.
                    responders[civ] = ScriptedResponder(civ, session.ruleset, session.bus)
                    continue
                advisor = _LoggedAdvisor(self.advisor_for(game_id, civ), session, civ)
                controllers[civ] = CivAgent(civ, advisor, session.ruleset, session.bus,
                                            use_simulator=use_simulator)

            def on_turn_end(state: GameState) -> None:
                transcripts = []
                for civ, agent in controllers.items():
                    transcripts.extend(
                        {"civ": civ, **entry} for entry in agent.transcript
                    )
                    agent.transcript.clear()
                for responder in responders.values():
                    responder.respond_pending(state)
                self.archive_turn(game_id, state.turn, session.save_bytes(), transcripts)
                session.save_version += 1

            winner = _run_game_loop(session.state, session.ruleset, controllers,
                                    max_turns=max_turns, on_turn_end=on_turn_end)
            for agent in controllers.values():
                agent.on_game_end(session.state, winner)
            return winner
