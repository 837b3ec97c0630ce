"""Post-game reflection: rearview segmentation and simulator counterfactuals.

Rearview reflection partitions the action trajectory at key actions (war
declarations by default), scores each segment against the final result, and
writes one memory entry per segment. Simulator reflection instead isolates
each key decision, reconstructs the game from an archived save, and compares
the taken action against alternatives before reflecting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

from microciv.agent.memory import AgentMemory, ReflectionEntry
from microciv.engine.actions import EngineAction
from microciv.policy import Advisor, DecisionContext
from microciv.simulator import SimulatorHandle

logger = logging.getLogger(__name__)

DEFAULT_KEY_ACTIONS = frozenset({"DeclareWar", "SeekPeace", "DefenseAgreement", "CommonEnemy"})

OUTCOME_TAGS = ("success", "mixed", "failure")


@dataclass
class TrajectoryStep:
    index: int
    turn: int
    kind: str                     # skill or action name
    data: dict[str, Any] = field(default_factory=dict)
    feedback: str | None = None   # environment feedback attached at segment ends


@dataclass
class Trajectory:
    civ: str
    steps: list[TrajectoryStep] = field(default_factory=list)
    result: dict[str, Any] = field(default_factory=dict)  # winner, score deltas


@dataclass
class ReflectionRoles:
    actor: Advisor
    evaluator: Advisor
    self_reflection: Advisor
    memory: AgentMemory


class SaveArchive(Protocol):
    """Turn-indexed access to archived saves (the game host records these)."""

    def get_save(self, turn: int) -> bytes | None: ...


def segment_trajectory(steps: list[TrajectoryStep],
                       key_actions: frozenset[str] = DEFAULT_KEY_ACTIONS) -> list[list[TrajectoryStep]]:
    """Contiguous, disjoint, ordered segments whose boundaries sit on key actions.

    Each key action closes its segment (inclusive); a trailing remainder
    forms the final segment. Concatenating the segments reproduces the input.
    """
    segments: list[list[TrajectoryStep]] = []
    current: list[TrajectoryStep] = []
    for step in steps:
        current.append(step)
        if step.kind in key_actions:
            segments.append(current)
            current = []
    if current:
        segments.append(current)
    return segments


def _segment_summary(segment: list[TrajectoryStep]) -> str:
    names = ", ".join(s.kind for s in segment) or "no actions"
    return f"turns {segment[0].turn}-{segment[-1].turn}: {names}"


def _segment_fit(segment: list[TrajectoryStep], result: dict[str, Any], civ: str) -> float:
    fit = sum(float(s.data.get("score_delta", 0.0)) for s in segment)
    if result.get("winner") == civ:
        fit += 10.0
    elif result.get("winner"):
        fit -= 10.0
    return fit


def _evaluate(roles: ReflectionRoles, civ: str, summary: str, fit: float,
              feedback: str) -> str:
    """Ask the evaluator for an outcome tag; options are ordered by fit."""
    if fit > 0:
        ordered = ("success", "mixed", "failure")
    elif fit < 0:
        ordered = ("failure", "mixed", "success")
    else:
        ordered = ("mixed", "success", "failure")
    context = DecisionContext(
        kind="chat", civ=civ,
        options=[{"id": tag, "segment": summary, "fit": fit, "feedback": feedback}
                 for tag in ordered],
    )
    return roles.evaluator(context).choice


def _reflect_text(roles: ReflectionRoles, civ: str, summary: str, tag: str,
                  feedback: str) -> str:
    templates = {
        "success": f"Kept doing what worked: {summary}. Outcome positive ({feedback}).",
        "mixed": f"Ambiguous stretch: {summary}. Outcome unclear ({feedback}).",
        "failure": f"Avoid repeating: {summary}. Outcome negative ({feedback}).",
    }
    context = DecisionContext(
        kind="chat", civ=civ,
        options=[{"id": tag, "text": templates[tag]}]
                + [{"id": t, "text": templates[t]} for t in OUTCOME_TAGS if t != tag],
    )
    decision = roles.self_reflection(context)
    return templates.get(decision.choice, templates[tag])


def reflect_rearview(trajectory: Trajectory, roles: ReflectionRoles,
                     key_actions: frozenset[str] = DEFAULT_KEY_ACTIONS) -> list[ReflectionEntry]:
    """Segment the finished trajectory and append one reflection per segment."""
    segments = segment_trajectory(trajectory.steps, key_actions)
    entries: list[ReflectionEntry] = []
    for segment in segments:
        endpoint = segment[-1]
        feedback = endpoint.feedback or f"score delta {_segment_fit(segment, {}, trajectory.civ):+.1f}"
        endpoint.feedback = feedback
        summary = _segment_summary(segment)
        fit = _segment_fit(segment, trajectory.result, trajectory.civ)
        tag = _evaluate(roles, trajectory.civ, summary, fit, feedback)
        text = _reflect_text(roles, trajectory.civ, summary, tag, feedback)
        entry = roles.memory.add_entry(
            text,
            turn_range=(segment[0].turn, segment[-1].turn),
            key_actions=tuple(s.kind for s in segment if s.kind in key_actions),
            outcome=tag,
        )
        entries.append(entry)
    return entries


def reflect_with_simulator(trajectory: Trajectory, roles: ReflectionRoles,
                           simulator_handle: SimulatorHandle, archive: SaveArchive,
                           key_actions: frozenset[str] = DEFAULT_KEY_ACTIONS,
                           alternatives_fn: Callable[[TrajectoryStep], list[EngineAction | None]] | None = None,
                           ) -> list[ReflectionEntry]:
    """Counterfactually re-simulate each key decision from its archived save.

    For every key point the taken action and its alternatives are rolled out
    from the save recorded at that turn (branch count = alternatives + 1).
    Points without an archived save are skipped with a warning.
    """
    entries: list[ReflectionEntry] = []
    for step in trajectory.steps:
        if step.kind not in key_actions:
            continue
        save = archive.get_save(step.turn)
        if save is None:
            logger.warning("no archived save for turn %d; skipping key point %s",
                           step.turn, step.kind)
            continue
        taken = step.data.get("action")
        taken_action = EngineAction.from_dict(taken) if isinstance(taken, dict) else None
        alternatives = alternatives_fn(step) if alternatives_fn else [None]
        branches: list[EngineAction | None] = [taken_action] + list(alternatives)
        results = simulator_handle.compare_from_save(save, branches)
        taken_delta = simulator_handle.score_delta(results[0], trajectory.civ)
        alt_deltas = [simulator_handle.score_delta(r, trajectory.civ) for r in results[1:]]
        best_alt = max(alt_deltas) if alt_deltas else 0.0
        feedback = (f"taken {step.kind} delta {taken_delta:+.1f}, "
                    f"best alternative {best_alt:+.1f} over {len(branches)} branches")
        step.feedback = feedback
        fit = taken_delta - best_alt
        summary = f"turn {step.turn}: {step.kind}"
        tag = _evaluate(roles, trajectory.civ, summary, fit, feedback)
        text = _reflect_text(roles, trajectory.civ, summary, tag, feedback)
        entry = roles.memory.add_entry(
            text,
            turn_range=(step.turn, step.turn),
            key_actions=(step.kind,),
            outcome=tag,
        )
        entries.append(entry)
    return entries
