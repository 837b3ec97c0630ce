"""Command-line interface: game setup, rollouts, serving, and benchmarks."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from microciv import bench, persistence
from microciv.engine.rules import GameConfig, new_game
from microciv.ruleset import Ruleset, load_ruleset, mini_ruleset
from microciv.simulator import RolloutConfig, rollout


def _ruleset_from_arg(path: str | None) -> Ruleset:
    return load_ruleset(path) if path else mini_ruleset()


def _cmd_new_game(args: argparse.Namespace) -> int:
    ruleset = _ruleset_from_arg(args.ruleset)
    config = GameConfig(
        civ_names=tuple(args.civs.split(",")),
        seed=args.seed,
        width=args.width,
        height=args.height,
    )
    state = new_game(ruleset, config)
    data = persistence.save(state, ruleset)
    Path(args.out).write_bytes(data)
    print(f"wrote {args.out} ({len(data)} bytes, {len(state.civs)} civs, seed {args.seed})")
    return 0


def _cmd_rollout(args: argparse.Namespace) -> int:
    ruleset = _ruleset_from_arg(args.ruleset)
    save = Path(args.save).read_bytes()
    config = RolloutConfig(
        turns=args.turns,
        freeze_diplomacy=args.freeze_diplomacy,
        disable_workers=args.no_workers,
        seed=args.seed,
    )
    result = rollout(save, config, ruleset)
    report = {
        "turns": args.turns,
        "freeze_diplomacy": args.freeze_diplomacy,
        "disable_workers": args.no_workers,
        "elapsed_seconds": round(result.elapsed_seconds, 4),
        "deltas": result.deltas,
    }
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    print()
    if args.out:
        Path(args.out).write_bytes(result.final_save)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from microciv.server import GameHost, serve_host

    port = int(os.environ.get("MICROCIV_PORT", args.port))
    data_dir = os.environ.get("MICROCIV_DATA_DIR", args.data_dir)
    host = GameHost(data_dir=data_dir)
    if args.config:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        for game in config.get("games", []):
            game_id = host.create_game(game)
            print(f"created game {game_id}")
    print(f"serving on port {port}, data dir {data_dir}")
    serve_host(host, port)
    return 0


def _load_saves(directory: str) -> list[bytes]:
    paths = sorted(Path(directory).glob("*.json"))
    if not paths:
        raise SystemExit(f"no .json saves found in {directory}")
    return [p.read_bytes() for p in paths]


def _write_reports(summary: dict, out_dir: str, stem: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.txt").write_bytes(bench.emit_report(summary, "text-table"))
    (out / f"{stem}.csv").write_bytes(bench.emit_report(summary, "csv"))
    (out / f"{stem}.json").write_text(json.dumps(summary, indent=2, sort_keys=True),
                                      encoding="utf-8")


def _cmd_bench_full_game(args: argparse.Namespace) -> int:
    ruleset = _ruleset_from_arg(args.ruleset)
    kwargs = {}
    if args.config:
        kwargs = json.loads(Path(args.config).read_text(encoding="utf-8"))
        for key in ("civs", "variants", "map_seeds"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
    config = bench.TournamentConfig(**kwargs)
    reports = bench.run_tournament(ruleset, config)
    summary = bench.compute_metrics(reports)
    _write_reports(summary, args.out, "full_game")
    matches = [
        {"match_id": r.match_id, "seating": r.seating, "winner": r.winner,
         "ranking": r.ranking, "error": r.error}
        for r in reports
    ]
    Path(args.out, "matches.json").write_text(json.dumps(matches, indent=2),
                                              encoding="utf-8")
    sys.stdout.write(bench.emit_report(summary, "text-table").decode())
    crashed = [r.match_id for r in reports if r.error]
    if crashed:
        print(f"{len(crashed)} match(es) crashed: {', '.join(crashed)}", file=sys.stderr)
        return 1
    return 0


def _cmd_bench_negotiation(args: argparse.Namespace) -> int:
    ruleset = _ruleset_from_arg(args.ruleset)
    saves = _load_saves(args.saves)
    pairs = args.pairs.split(",") if args.pairs else None
    summary = bench.negotiation_crosstable(ruleset, saves, buyers=pairs, sellers=pairs,
                                           reps=args.reps)
    _write_reports(summary, args.out, "negotiation")
    sys.stdout.write(bench.emit_report(summary, "text-table").decode())
    return 0


def _cmd_bench_deception(args: argparse.Namespace) -> int:
    ruleset = _ruleset_from_arg(args.ruleset)
    saves = _load_saves(args.saves)
    summary = bench.deception_crosstable(ruleset, saves, reps=args.reps)
    _write_reports(summary, args.out, "deception")
    sys.stdout.write(bench.emit_report(summary, "text-table").decode())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microciv",
                                     description="Desk-scale strategy testbed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("new-game", help="create a fresh game save")
    p.add_argument("--out", required=True)
    p.add_argument("--civs", default="Rome,Aztecs,Greece,Egypt")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--width", type=int, default=20)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--ruleset", default=None, help="path to a ruleset pack (default: mini)")
    p.set_defaults(fn=_cmd_new_game)

    p = sub.add_parser("rollout", help="simulate N turns from a save")
    p.add_argument("--save", required=True)
    p.add_argument("--turns", type=int, required=True)
    p.add_argument("--freeze-diplomacy", action="store_true")
    p.add_argument("--no-workers", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="write the final save here")
    p.add_argument("--ruleset", default=None)
    p.set_defaults(fn=_cmd_rollout)

    p = sub.add_parser("serve", help="run the multiplayer game host")
    p.add_argument("--port", type=int, default=8099)
    p.add_argument("--data-dir", default="./microciv-data")
    p.add_argument("--config", default=None, help="JSON config with games to pre-create")
    p.set_defaults(fn=_cmd_serve)

    p_bench = sub.add_parser("bench", help="benchmark harnesses")
    bench_sub = p_bench.add_subparsers(dest="bench_command", required=True)

    p = bench_sub.add_parser("full-game", help="tournament over full games")
    p.add_argument("--config", default=None, help="JSON TournamentConfig overrides")
    p.add_argument("--out", required=True)
    p.add_argument("--ruleset", default=None)
    p.set_defaults(fn=_cmd_bench_full_game)

    p = bench_sub.add_parser("negotiation", help="negotiation cross-table")
    p.add_argument("--saves", required=True, help="directory of save files")
    p.add_argument("--pairs", default=None, help="comma-separated policy names")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--ruleset", default=None)
    p.set_defaults(fn=_cmd_bench_negotiation)

    p = bench_sub.add_parser("deception", help="deception cross-table")
    p.add_argument("--saves", required=True)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--ruleset", default=None)
    p.set_defaults(fn=_cmd_bench_deception)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
