"""Operator command line: seed-demo generation, collection campaigns, plan
validation, episode replay, and dataset statistics.

Exit codes: 0 success, 1 validation/config error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import (
    ConfigError,
    ENV_PREFIX,
    BackendConfig,
    TaskConfig,
    apply_env_overrides,
    load_config,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _env_int(name: str):
    value = os.environ.get(ENV_PREFIX + name)
    return int(value) if value is not None else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autocollect",
        description="Autonomous tabletop data collection engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    record = sub.add_parser("record-seed-demos",
                            help="write scripted seed demonstrations")
    record.add_argument("--out", required=True, help="library file to write")
    record.add_argument("--per-skill", type=int, default=None,
                        help="exact demos per skill verb (default: 2-5 natural)")
    record.add_argument("--seed", type=int, default=None)
    record.add_argument("--templates", default=None,
                        help="scene template registry file")

    collect = sub.add_parser("collect", help="run a collection campaign")
    collect.add_argument("--config", required=True)
    collect.add_argument("--seed", type=int, default=None)
    collect.add_argument("--episodes", type=int, default=None,
                         help="override episode count for every task")
    collect.add_argument("--workers", type=int, default=None)
    collect.add_argument("--backend", choices=["oracle", "external"],
                         default=None)
    collect.add_argument("--endpoint", default=None)
    collect.add_argument("--dry-run", action="store_true",
                         help="plan and validate only; execute nothing")

    validate = sub.add_parser("validate-plan",
                              help="check a plan file's undo ordering")
    validate.add_argument("plan_file")

    rep = sub.add_parser("replay", help="re-execute stored episodes")
    rep.add_argument("--dataset", required=True)
    rep.add_argument("--episode", type=int, default=None,
                     help="episode id (default: all)")
    rep.add_argument("--library", default=None)
    rep.add_argument("--respawn-seed", type=int, default=None)
    rep.add_argument("--templates", default=None)

    stats = sub.add_parser("stats", help="summarize a dataset file")
    stats.add_argument("--dataset", required=True)

    return parser


def cmd_record(args) -> int:
    from .demos import record_seed_demos
    from .scenes import load_templates

    registry = load_templates(args.templates) if args.templates else None
    seed = args.seed if args.seed is not None else (_env_int("SEED") or 0)
    lib = record_seed_demos(per_skill=args.per_skill, base_seed=seed,
                            registry=registry, out_path=args.out)
    print(f"wrote {len(lib)} demonstrations to {args.out}")
    return EXIT_OK


def _merged_config(args):
    cfg = load_config(args.config)
    cfg = apply_env_overrides(cfg)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.episodes is not None:
        cfg.tasks = [TaskConfig(t.template, args.episodes) for t in cfg.tasks]
    if args.backend is not None or args.endpoint is not None:
        cfg.backend = BackendConfig(
            kind=args.backend or cfg.backend.kind,
            endpoint=args.endpoint or cfg.backend.endpoint,
            timeout_s=cfg.backend.timeout_s,
            retries=cfg.backend.retries,
        )
    return cfg


def cmd_collect(args) -> int:
    from .fsm import CampaignError, make_reasoner, run_campaign
    from .library import LibraryError, load_library
    from .planner import PlannerError, ground_objects, plan_task, validate_lifo
    from .scenes import TemplateRegistry, load_templates
    from .sim import describe_scene, spawn_scene
    from .wire import WireError

    cfg = _merged_config(args)
    if cfg.workers > 1:
        print(f"note: requested {cfg.workers} workers; executing serially "
              f"for deterministic output", file=sys.stderr)

    if args.dry_run:
        registry = (load_templates(cfg.templates_path) if cfg.templates_path
                    else TemplateRegistry())
        library = load_library(cfg.library_path)
        for task in cfg.tasks:
            world = spawn_scene(task.template, cfg.master_seed,
                                registry=registry)
            backend = make_reasoner(cfg, world, cfg.master_seed)
            obs = describe_scene(world)
            scene = ground_objects(backend, obs)
            plan = plan_task(backend, obs, scene, library, r=cfg.retrieval_r)
            violations = validate_lifo(plan)
            status = "valid" if not violations else f"INVALID: {violations}"
            print(f"[{task.template}] {len(plan.forward)} forward / "
                  f"{len(plan.reverse)} reverse subtasks -- {status}")
            print(json.dumps(plan.to_dict(), indent=2))
            if violations:
                return EXIT_INVALID
        print("dry run complete; nothing executed")
        return EXIT_OK

    try:
        stats, _ = run_campaign(cfg)
    except (CampaignError, WireError, LibraryError, PlannerError, OSError) as e:
        print(f"campaign failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(stats.to_table())
    if not stats.reconciles():
        print("episode accounting does not reconcile", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _parse_plan_file(path: str):
    from .library import Verb
    from .planner import ActionRef, PlanAction

    data = json.loads(Path(path).read_text(encoding="utf-8"))

    def parse_side(side):
        actions = []
        for i, raw in enumerate(data.get(side, [])):
            try:
                action = PlanAction(
                    verb=Verb(raw["verb"]),
                    subject=ActionRef(int(raw.get("subject_id", -1)),
                                      str(raw["subject"])),
                    dest_object=(ActionRef(-1, str(raw["dest_object"]))
                                 if raw.get("dest_object") else None),
                    dest_region=raw.get("dest_region"),
                )
            except (KeyError, ValueError) as e:
                raise ConfigError(f"{side}[{i}]: {e}") from e
            actions.append(action)
        return tuple(actions)

    class FilePlan:
        forward = parse_side("forward")
        reverse = parse_side("reverse")

    return FilePlan


def cmd_validate_plan(args) -> int:
    from .planner import validate_lifo

    try:
        plan = _parse_plan_file(args.plan_file)
    except (OSError, json.JSONDecodeError, ConfigError) as e:
        print(f"cannot parse plan: {e}", file=sys.stderr)
        return EXIT_INVALID
    violations = validate_lifo(plan)
    if not violations:
        print(f"plan is valid ({len(plan.forward)} forward subtasks)")
        return EXIT_OK
    for j, reason in violations:
        print(f"violation at reverse step {j}: {reason}")
    return EXIT_INVALID


def cmd_replay(args) -> int:
    from .dataset import DatasetError, read_episodes, replay
    from .library import load_library
    from .scenes import load_templates

    registry = load_templates(args.templates) if args.templates else None
    library = load_library(args.library) if args.library else None
    try:
        result = read_episodes(args.dataset)
    except DatasetError as e:
        print(f"cannot read dataset: {e}", file=sys.stderr)
        return EXIT_INVALID
    episodes = result.episodes
    if args.episode is not None:
        episodes = [e for e in episodes if e.episode_id == args.episode]
        if not episodes:
            print(f"episode {args.episode} not found", file=sys.stderr)
            return EXIT_INVALID
    all_ok = True
    for episode in episodes:
        report = replay(episode, registry=registry, library=library,
                        respawn_seed=args.respawn_seed)
        restored = ("" if report.reset_restored is None
                    else f" reset_restored={report.reset_restored}")
        print(f"episode {episode.episode_id} [{episode.task}] "
              f"agreement={report.agreement}{restored} "
              f"pose_delta={report.initial_pose_delta:.4f}")
        for diff in report.predicate_diffs:
            print(f"  predicate changed: {diff}")
        for row in report.per_subtask:
            if not row["match"]:
                print(f"  mismatch [{row['phase']}] {row['description']}: "
                      f"recorded={row['recorded']} replayed={row['replayed']}")
        all_ok = all_ok and report.agreement
    return EXIT_OK if all_ok else EXIT_RUNTIME


def cmd_stats(args) -> int:
    from .dataset import DatasetError, read_episodes

    try:
        result = read_episodes(args.dataset)
    except DatasetError as e:
        print(f"cannot read dataset: {e}", file=sys.stderr)
        return EXIT_INVALID
    by_task: dict[str, dict[str, int]] = {}
    for episode in result.episodes:
        counts = by_task.setdefault(episode.task, {"dual": 0, "single": 0})
        counts[episode.kind] += 1
    header = f"{'Task':34s} {'dual':>6s} {'single':>7s} {'stored':>7s}"
    print(header)
    print("-" * len(header))
    for task in sorted(by_task):
        c = by_task[task]
        print(f"{task:34s} {c['dual']:6d} {c['single']:7d} "
              f"{c['dual'] + c['single']:7d}")
    print(f"total episodes stored: {len(result.episodes)}")
    if result.corrupt:
        print(f"corrupt records skipped: {len(result.corrupt)}")
        for lineno, msg in result.corrupt:
            print(f"  line {lineno}: {msg}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "record-seed-demos":
            return cmd_record(args)
        if args.command == "collect":
            return cmd_collect(args)
        if args.command == "validate-plan":
            return cmd_validate_plan(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "stats":
            return cmd_stats(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # pragma: no cover - last-resort diagnostics
        print(f"unexpected failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
