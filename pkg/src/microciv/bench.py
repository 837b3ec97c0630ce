"""Experiment harness: full-game tournaments, metric tables, mini-game grids.

Metrics follow the benchmark conventions: ``Freq`` is average uses of a skill
per match, ``SR`` the acceptance rate of skills that take a response (war
declarations are unilateral and get no SR). Aggregation runs in exact
rational arithmetic and rounds to one decimal only at the edge.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import logging
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

from microciv import persistence
from microciv.agent.controller import CivAgent, SkillBus
from microciv.agent.skills import RESPONDED_SKILLS, SKILLS
from microciv.engine.rules import GameConfig, new_game
from microciv.minigames import (
    CoinFlipDetector,
    DeceptionTrial,
    NegotiationSession,
    OmniscientDetector,
    RationalConcession,
    ScriptedDeceiver,
    compute_bottom_line,
    market_reference,
    run_deception,
    run_negotiation,
)
from microciv.engine.actions import Bundle, TradeOffer
from microciv.policy import Advisor, AdvisorDecision, DecisionContext, ScriptedAdvisor
from microciv.runner import run_game
from microciv.ruleset import Ruleset
from microciv.scoring import all_scores

logger = logging.getLogger(__name__)

DEFAULT_CIVS = ("Rome", "Aztecs", "Greece", "Egypt")
DEFAULT_TURN_CAP = 250


def _stable_seed(*parts: Any) -> int:
    digest = hashlib.blake2b(":".join(map(str, parts)).encode(), digest_size=4).digest()
    return int.from_bytes(digest, "big")


class FirstOptionAdvisor(Advisor):
    """Always takes the first offered option; the most basic agent variant."""

    def decide(self, context: DecisionContext) -> AdvisorDecision:
        ids = context.option_ids()
        return AdvisorDecision(choice=ids[0], ranking=tuple(ids))


def _make_agent(variant: str) -> Callable[[str, Ruleset, SkillBus], CivAgent]:
    def factory(civ: str, ruleset: Ruleset, bus: SkillBus) -> CivAgent:
        if variant == "naive":
            return CivAgent(civ, FirstOptionAdvisor(), ruleset, bus)
        if variant == "workflow":
            return CivAgent(civ, ScriptedAdvisor(), ruleset, bus)
        if variant == "sim":
            return CivAgent(civ, ScriptedAdvisor(), ruleset, bus, use_simulator=True)
        if variant == "sim-reflect":
            return CivAgent(civ, ScriptedAdvisor(), ruleset, bus,
                            use_simulator=True, use_reflection=True)
        raise ValueError(f"unknown agent variant {variant!r}")
    return factory


AGENT_VARIANTS = ("naive", "workflow", "sim", "sim-reflect")


@dataclass(frozen=True)
class TournamentConfig:
    civs: tuple[str, ...] = DEFAULT_CIVS
    variants: tuple[str, ...] = ("naive", "workflow", "sim", "sim-reflect")
    permutations: bool = False
    turn_cap: int = DEFAULT_TURN_CAP
    map_seeds: tuple[int, ...] = (1,)
    width: int = 20
    height: int = 16


@dataclass
class MatchReport:
    match_id: str
    map_seed: int
    seating: dict[str, str]  # civ -> variant
    turn_scores: list[dict[str, Any]] = field(default_factory=list)
    skill_ledger: list[dict[str, Any]] = field(default_factory=list)
    final_scores: dict[str, dict[str, Any]] = field(default_factory=dict)
    ranking: list[str] = field(default_factory=list)
    winner: str | None = None
    error: str | None = None


def run_match(ruleset: Ruleset, civs: tuple[str, ...], variants: tuple[str, ...],
              map_seed: int, turn_cap: int, width: int = 20, height: int = 16) -> MatchReport:
    seating = dict(zip(civs, variants))
    report = MatchReport(
        match_id=f"seed{map_seed}-" + "-".join(variants),
        map_seed=map_seed,
        seating=seating,
    )
    try:
        state = new_game(ruleset, GameConfig(civ_names=civs, seed=map_seed,
                                             width=width, height=height))
        bus = SkillBus()
        controllers = {
            civ: _make_agent(variant)(civ, ruleset, bus)
            for civ, variant in seating.items()
        }

        def on_turn_end(s):
            scores = all_scores(s, ruleset)
            report.turn_scores.append(
                {"turn": s.turn, "scores": {n: b.to_dict() for n, b in scores.items()}}
            )

        winner = run_game(state, ruleset, controllers, max_turns=turn_cap,
                          on_turn_end=on_turn_end)
        for agent in controllers.values():
            agent.on_game_end(state, winner)
        report.skill_ledger = list(bus.ledger)
        final = all_scores(state, ruleset)
        report.final_scores = {n: b.to_dict() for n, b in final.items()}
        # Rank by headline score; break ties by military strength, then name.
        report.ranking = sorted(
            final, key=lambda n: (-final[n].S, -final[n].F, n)
        )
        report.winner = winner
    except Exception as exc:  # noqa: BLE001 - matches are isolated
        logger.exception("match %s failed", report.match_id)
        report.error = f"{type(exc).__name__}: {exc}"
    return report


def run_tournament(ruleset: Ruleset, config: TournamentConfig) -> list[MatchReport]:
    """All matches for the config: per seed, one seating or all permutations."""
    if len(config.variants) != len(config.civs):
        raise ValueError("one variant per seat required")
    reports: list[MatchReport] = []
    for seed in config.map_seeds:
        if config.permutations:
            seatings = sorted(set(itertools.permutations(config.variants)))
        else:
            seatings = [tuple(config.variants)]
        for seating in seatings:
            reports.append(run_match(ruleset, config.civs, seating, seed,
                                     config.turn_cap, config.width, config.height))
    return reports


# ---------------------------------------------------------------------------
# Metrics


def compute_metrics(reports: list[MatchReport]) -> dict[str, Any]:
    """Per-variant Freq/SR/Avg-Score in exact arithmetic, rounded at the edge."""
    if not reports:
        raise ValueError("no reports")
    usable = [r for r in reports if r.error is None]
    variants: dict[str, dict[str, Any]] = {}
    names = sorted({v for r in usable for v in r.seating.values()})
    for variant in names:
        matches = [r for r in usable if variant in r.seating.values()]
        skill_rows: dict[str, dict[str, Any]] = {}
        total_score = Fraction(0)
        for skill in SKILLS:
            uses = 0
            proposed = 0
            accepted = 0
            for report in matches:
                civs = [c for c, v in report.seating.items() if v == variant]
                for entry in report.skill_ledger:
                    if entry["skill"] != skill or entry["proposer"] not in civs:
                        continue
                    uses += 1
                    if skill in RESPONDED_SKILLS and entry["response"] in ("agree", "disagree"):
                        proposed += 1
                        if entry["response"] == "agree":
                            accepted += 1
            freq = Fraction(uses, len(matches)) if matches else Fraction(0)
            row: dict[str, Any] = {
                "uses": uses,
                "freq": _round1(freq),
                "proposed": proposed,
                "accepted": accepted,
            }
            if skill in RESPONDED_SKILLS:
                row["sr"] = _round1(Fraction(100 * accepted, proposed)) if proposed else None
            else:
                row["sr"] = None  # unilateral skill: Freq only
            skill_rows[skill] = row
        for report in matches:
            for civ, v in report.seating.items():
                if v == variant:
                    total_score += Fraction(report.final_scores[civ]["S"])
        seats = sum(1 for r in matches for v in r.seating.values() if v == variant)
        avg_score = _round1(total_score / seats) if seats else 0.0
        variants[variant] = {
            "matches": len(matches),
            "avg_score": avg_score,
            "skills": skill_rows,
        }
    return {"kind": "full_game", "variants": variants, "skills": list(SKILLS)}


def _round1(x: Fraction | float) -> float:
    return round(float(x), 1)


# ---------------------------------------------------------------------------
# Reports


def emit_report(summary: dict[str, Any], fmt: str = "text-table") -> bytes:
    """Render a metrics summary or a mini-game cross-table to bytes."""
    if fmt not in ("text-table", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    if summary.get("kind") == "crosstable":
        return _emit_crosstable(summary, fmt)
    return _emit_full_game(summary, fmt)


def _full_game_rows(summary: dict[str, Any]) -> tuple[list[str], list[list[str]]]:
    skills = [s for s in summary["skills"]
              if any(v["skills"][s]["uses"] for v in summary["variants"].values())]
    header = ["Variant", "Avg. Score"]
    for skill in skills:
        header.append(f"{skill} Freq.")
        if skill in RESPONDED_SKILLS:
            header.append(f"{skill} SR")
    rows = []
    for variant in sorted(summary["variants"]):
        data = summary["variants"][variant]
        row = [variant, f"{data['avg_score']:.1f}"]
        for skill in skills:
            cell = data["skills"][skill]
            row.append(f"{cell['freq']:.1f}")
            if skill in RESPONDED_SKILLS:
                row.append("N/A" if cell["sr"] is None else f"{cell['sr']:.1f}%")
        rows.append(row)
    return header, rows


def _emit_full_game(summary: dict[str, Any], fmt: str) -> bytes:
    header, rows = _full_game_rows(summary)
    if fmt == "csv":
        return _csv_bytes([header] + rows)
    return _text_table([header] + rows)


def crosstable_summary(rows: list[str], cols: list[str],
                       cells: dict[tuple[str, str], list[float]],
                       title: str = "") -> dict[str, Any]:
    return {
        "kind": "crosstable",
        "title": title,
        "rows": list(rows),
        "cols": list(cols),
        "cells": {f"{r}|{c}": list(v) for (r, c), v in cells.items()},
    }


def _cell_text(values: list[float]) -> str:
    if not values:
        return "N/A"
    mean = statistics.mean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return f"{mean:.1f}(±{std:.1f})"


def _emit_crosstable(summary: dict[str, Any], fmt: str) -> bytes:
    header = [summary.get("title", "")] + list(summary["cols"])
    rows = []
    for row_name in summary["rows"]:
        row = [row_name]
        for col_name in summary["cols"]:
            row.append(_cell_text(summary["cells"].get(f"{row_name}|{col_name}", [])))
        rows.append(row)
    if fmt == "csv":
        return _csv_bytes([header] + rows)
    return _text_table([header] + rows)


def _csv_bytes(rows: list[list[str]]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerows(rows)
    return buffer.getvalue().encode("utf-8")


def _text_table(rows: list[list[str]]) -> bytes:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for index, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if index == 0:
            lines.append("  ".join("-" * w for w in widths))
    return ("\n".join(lines) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Mini-game cross-tables


NEGOTIATION_POLICIES: dict[str, Callable[[], Any]] = {
    "rational": lambda: RationalConcession(0.25),
    "stubborn": lambda: RationalConcession(0.10),
    "eager": lambda: RationalConcession(0.50),
}

DECEIVER_POLICIES: dict[str, Callable[[], Any]] = {
    "visible": lambda: ScriptedDeceiver(visible=True),
    "hidden": lambda: ScriptedDeceiver(visible=False),
}

DETECTOR_POLICIES: dict[str, Callable[[], Any]] = {
    "omniscient": lambda: OmniscientDetector(),
    "coinflip": lambda: CoinFlipDetector(),
}


def default_trade_template(ruleset: Ruleset, buyer: str, seller: str,
                           gold: int = 20, quantity: int = 2) -> TradeOffer:
    """The benchmark's default proposal: gold for two luxury goods."""
    luxuries = sorted(r.id for r in ruleset.resources if r.kind == "luxury")
    if not luxuries:
        raise ValueError("ruleset has no luxury resource to trade")
    return TradeOffer(proposer=buyer, target=seller,
                      give=Bundle(gold=gold),
                      receive=Bundle(resources=((luxuries[0], quantity),)))


def negotiation_crosstable(ruleset: Ruleset, saves: list[bytes],
                           buyers: list[str] | None = None,
                           sellers: list[str] | None = None,
                           reps: int = 10, horizon: int = 20,
                           price_range: tuple[int, int] | None = None) -> dict[str, Any]:
    """Buyer-score grid: one trial score per (pair, save) = mean over reps."""
    buyers = buyers or sorted(NEGOTIATION_POLICIES)
    sellers = sellers or sorted(NEGOTIATION_POLICIES)
    cells: dict[tuple[str, str], list[float]] = {}
    failed: dict[tuple[str, str], int] = {}
    for save in saves:
        state = persistence.load(save, ruleset)
        civ_names = [c.name for c in state.civs if c.is_alive()]
        template = default_trade_template(ruleset, civ_names[0], civ_names[1])
        buyer_bottom = compute_bottom_line(save, template, "buyer", ruleset,
                                           horizon, price_range)
        seller_bottom = compute_bottom_line(save, template, "seller", ruleset,
                                            horizon, price_range)
        for buyer_name in buyers:
            for seller_name in sellers:
                scores = []
                for rep in range(reps):
                    seed = _stable_seed(buyer_name, seller_name, rep)
                    session = NegotiationSession(
                        buyer_policy=NEGOTIATION_POLICIES[buyer_name](),
                        seller_policy=NEGOTIATION_POLICIES[seller_name](),
                        trade_template=template,
                        buyer_bottom=buyer_bottom.price,
                        seller_bottom=seller_bottom.price,
                        buyer_market_ref=market_reference(max(seller_bottom.price, 1), seed * 2 + 1),
                        seller_market_ref=market_reference(max(buyer_bottom.price, 1), seed * 2 + 2),
                    )
                    outcome = run_negotiation(session)
                    scores.append(outcome["buyer_score"])
                    if outcome["outcome"] != "deal":
                        failed[(buyer_name, seller_name)] = \
                            failed.get((buyer_name, seller_name), 0) + 1
                cells.setdefault((buyer_name, seller_name), []).append(
                    statistics.mean(scores))
    summary = crosstable_summary(buyers, sellers, cells, title="buyer\\seller")
    summary["failed_sessions"] = {f"{b}|{s}": n for (b, s), n in sorted(failed.items())}
    return summary


def deception_crosstable(ruleset: Ruleset, saves: list[bytes],
                         deceivers: list[str] | None = None,
                         detectors: list[str] | None = None,
                         reps: int = 10) -> dict[str, Any]:
    """Deceiver success-rate grid (percent), one trial score per (pair, save)."""
    deceivers = deceivers or sorted(DECEIVER_POLICIES)
    detectors = detectors or sorted(DETECTOR_POLICIES)
    cells: dict[tuple[str, str], list[float]] = {}
    for save in saves:
        state = persistence.load(save, ruleset)
        civ_names = [c.name for c in state.civs if c.is_alive()]
        for deceiver_name in deceivers:
            for detector_name in detectors:
                successes = 0
                for rep in range(reps):
                    trial = DeceptionTrial(
                        deceiver_civ=civ_names[0],
                        detector_civ=civ_names[1],
                        deceiver=DECEIVER_POLICIES[deceiver_name](),
                        detector=DETECTOR_POLICIES[detector_name](),
                        shared_save=save,
                        ruleset=ruleset,
                        seed=_stable_seed(deceiver_name, detector_name, rep),
                    )
                    if run_deception(trial)["deceiver_success"]:
                        successes += 1
                cells.setdefault((deceiver_name, detector_name), []).append(
                    100.0 * successes / reps)
    return crosstable_summary(deceivers, detectors, cells, title="deceiver\\detector")
