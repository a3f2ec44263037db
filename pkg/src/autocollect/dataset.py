"""Episode persistence and replay.

Episodes are appended one JSON record per line. Dual records carry both the
forward and the reverse trajectory; single records carry only the forward one
and never archive the failed reset. Replay re-applies recorded waypoints to
the recorded initial world and re-judges every subtask with the oracle
evaluator, reporting agreement and (for dual episodes) predicate restoration.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .evaluator import oracle_evaluator, evaluate
from .geometry import Pose
from .library import Verb
from .planner import ActionRef, PlanAction
from .sim import (
    all_predicates,
    apply_waypoint,
    describe_scene,
    spawn_scene,
    world_from_dict,
)

SCHEMA_VERSION = 1


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class SubtaskTrace:
    """One executed subtask: action metadata, applied waypoints, verdict."""

    action: dict
    demo_id: str
    description: str
    mask: tuple[int, ...]
    waypoints: tuple[tuple[Pose, int], ...]
    success: bool
    flagged: bool
    query: str | None
    assessment: str | None

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "demo_id": self.demo_id,
            "description": self.description,
            "mask": list(self.mask),
            "waypoints": [{"t": p.to_dict()["t"], "q": p.to_dict()["q"], "g": g}
                          for p, g in self.waypoints],
            "success": self.success,
            "flagged": self.flagged,
            "query": self.query,
            "assessment": self.assessment,
        }

    @staticmethod
    def from_dict(d: dict) -> "SubtaskTrace":
        return SubtaskTrace(
            action=dict(d["action"]),
            demo_id=str(d["demo_id"]),
            description=str(d["description"]),
            mask=tuple(int(m) for m in d["mask"]),
            waypoints=tuple(
                (Pose.from_dict({"t": w["t"], "q": w["q"]}), int(w["g"]))
                for w in d["waypoints"]),
            success=bool(d["success"]),
            flagged=bool(d["flagged"]),
            query=d.get("query"),
            assessment=d.get("assessment"),
        )

    def plan_action(self, world) -> PlanAction:
        subject = world.find(str(self.action["subject"]))
        dest_object = None
        if self.action.get("dest_object"):
            dest = world.find(str(self.action["dest_object"]))
            dest_object = ActionRef(dest.id, dest.name)
        return PlanAction(
            verb=Verb(self.action["verb"]),
            subject=ActionRef(subject.id, subject.name),
            dest_object=dest_object,
            dest_region=self.action.get("dest_region"),
        )


@dataclass(frozen=True)
class StoredEpisode:
    episode_id: int
    task: str
    kind: str                      # "dual" | "single"
    plan: dict
    initial_world: dict
    forward: tuple[SubtaskTrace, ...]
    reverse: tuple[SubtaskTrace, ...] | None
    seeds: dict
    library_hash: str
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.kind not in ("dual", "single"):
            raise DatasetError(f"unknown storage kind {self.kind!r}")
        if (self.kind == "dual") != (self.reverse is not None):
            raise DatasetError("reverse trajectory present iff kind is dual")
        if not self.forward:
            raise DatasetError("episode must carry a forward trajectory")

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "episode_id": self.episode_id,
            "task": self.task,
            "kind": self.kind,
            "plan": self.plan,
            "initial_world": self.initial_world,
            "forward": [t.to_dict() for t in self.forward],
            "reverse": None if self.reverse is None
            else [t.to_dict() for t in self.reverse],
            "seeds": self.seeds,
            "library_hash": self.library_hash,
        }

    @staticmethod
    def from_dict(d: dict) -> "StoredEpisode":
        version = int(d.get("schema_version", -1))
        if version != SCHEMA_VERSION:
            raise DatasetError(f"unsupported schema version {version}")
        reverse = d.get("reverse")
        return StoredEpisode(
            episode_id=int(d["episode_id"]),
            task=str(d["task"]),
            kind=str(d["kind"]),
            plan=dict(d["plan"]),
            initial_world=dict(d["initial_world"]),
            forward=tuple(SubtaskTrace.from_dict(t) for t in d["forward"]),
            reverse=None if reverse is None
            else tuple(SubtaskTrace.from_dict(t) for t in reverse),
            seeds=dict(d["seeds"]),
            library_hash=str(d["library_hash"]),
        )


class DatasetWriter:
    """Append-only episode writer with monotonically increasing ids."""

    def __init__(self, path):
        self.path = Path(path)
        self._next_id = 1
        if self.path.exists():
            result = read_episodes(self.path)
            if result.episodes:
                self._next_id = result.episodes[-1].episode_id + 1

    def _store(self, episode: StoredEpisode) -> int:
        with self.path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(episode.to_dict(), separators=(",", ":")))
            f.write("\n")
            f.flush()
        self._next_id = episode.episode_id + 1
        return episode.episode_id

    def store_dual(self, forward, reverse, meta: dict) -> int:
        if not forward or not reverse:
            raise DatasetError("dual storage needs both trajectories non-empty")
        episode = StoredEpisode(
            episode_id=self._next_id, task=meta["task"], kind="dual",
            plan=meta["plan"], initial_world=meta["initial_world"],
            forward=tuple(forward), reverse=tuple(reverse),
            seeds=meta["seeds"], library_hash=meta["library_hash"])
        return self._store(episode)

    def store_single(self, forward, meta: dict) -> int:
        if not forward:
            raise DatasetError("single storage needs a forward trajectory")
        if "reverse" in meta:
            raise DatasetError("single storage must not carry reverse data")
        episode = StoredEpisode(
            episode_id=self._next_id, task=meta["task"], kind="single",
            plan=meta["plan"], initial_world=meta["initial_world"],
            forward=tuple(forward), reverse=None,
            seeds=meta["seeds"], library_hash=meta["library_hash"])
        return self._store(episode)


@dataclass
class ReadResult:
    episodes: list[StoredEpisode]
    corrupt: list[tuple[int, str]] = field(default_factory=list)


def read_episodes(path, task: str | None = None, kind: str | None = None,
                  id_range: tuple[int, int] | None = None) -> ReadResult:
    """Read and schema-validate episodes; corrupt lines are isolated."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset {path} does not exist")
    episodes: list[StoredEpisode] = []
    corrupt: list[tuple[int, str]] = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                episode = StoredEpisode.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError,
                    DatasetError) as e:
                corrupt.append((lineno, str(e)))
                continue
            if task is not None and episode.task != task:
                continue
            if kind is not None and episode.kind != kind:
                continue
            if id_range is not None and not (
                    id_range[0] <= episode.episode_id <= id_range[1]):
                continue
            episodes.append(episode)
    return ReadResult(episodes=episodes, corrupt=corrupt)


@dataclass
class ReplayReport:
    episode_id: int
    agreement: bool
    per_subtask: list[dict]
    initial_pose_delta: float
    reset_restored: bool | None
    predicate_diffs: list[str]

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "agreement": self.agreement,
            "per_subtask": self.per_subtask,
            "initial_pose_delta": self.initial_pose_delta,
            "reset_restored": self.reset_restored,
            "predicate_diffs": self.predicate_diffs,
        }


def replay(episode: StoredEpisode, registry=None, library=None,
           respawn_seed: int | None = None) -> ReplayReport:
    """Re-run an episode's waypoints and re-judge it with the oracle chain.

    By default the recorded initial world snapshot is restored; passing
    respawn_seed re-spawns from the scene template instead (a wrong seed then
    shows up as pose deltas and verdict mismatches).
    """
    import numpy as np

    snapshot = world_from_dict(episode.initial_world)
    if respawn_seed is None:
        world = snapshot
        pose_delta = 0.0
    else:
        world = spawn_scene(episode.task, respawn_seed, registry=registry)
        deltas = []
        for obj_id, obj in world.objects.items():
            ref = snapshot.objects.get(obj_id)
            if ref is not None:
                deltas.append(float(np.linalg.norm(
                    obj.pose.translation - ref.pose.translation)))
        pose_delta = max(deltas) if deltas else 0.0

    if library is not None:
        for trace in episode.forward + (episode.reverse or ()):
            if trace.demo_id not in library:
                raise DatasetError(
                    f"episode {episode.episode_id} references demo "
                    f"{trace.demo_id!r} missing from the library")

    initial_predicates = all_predicates(world)
    backends = oracle_evaluator()
    per_subtask = []
    agreement = True
    for phase, traces in (("forward", episode.forward),
                          ("reverse", episode.reverse or ())):
        for trace in traces:
            for pose, gripper in trace.waypoints:
                world = apply_waypoint(world, pose, gripper)
            action = trace.plan_action(world)
            signal = evaluate(backends, trace.description, action,
                              describe_scene(world))
            match = signal.value == trace.success
            agreement = agreement and match
            per_subtask.append({
                "phase": phase,
                "description": trace.description,
                "recorded": trace.success,
                "replayed": signal.value,
                "match": match,
            })

    reset_restored = None
    predicate_diffs: list[str] = []
    if episode.kind == "dual":
        final_predicates = all_predicates(world)
        for key, before in initial_predicates.items():
            after = final_predicates.get(key)
            if after != before:
                predicate_diffs.append(f"{key}: {before} -> {after}")
        reset_restored = not predicate_diffs

    return ReplayReport(
        episode_id=episode.episode_id,
        agreement=agreement,
        per_subtask=per_subtask,
        initial_pose_delta=pose_delta,
        reset_restored=reset_restored,
        predicate_diffs=predicate_diffs,
    )
