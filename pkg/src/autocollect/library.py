"""Demonstration library: seed and harvested skill records plus ranked retrieval.

Records pair an atomic verb with a target descriptor and a dense trajectory of
(cloud, end-effector pose, gripper bit) steps. Retrieval scores candidates on
two axes -- verb affinity and shape/name affinity -- and returns a
deterministic ordering.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .geometry import PointCloud, Pose

MAX_STEP_JUMP = 0.10          # trajectory continuity bound between steps, meters
MAX_STORED_POINTS = 512       # per-step cloud budget at rest
CLOUD_DECIMALS = 7            # stored cloud coordinate rounding

ACTION_WEIGHT = 0.6
GEOMETRY_WEIGHT = 0.4
NAME_BONUS = 0.2


class Verb(str, Enum):
    PICK = "pick"
    PLACE = "place"
    PUSH_IN = "push_in"
    PUSH_OUT = "push_out"
    STACK = "stack"
    UNSTACK = "unstack"
    OPEN = "open"
    CLOSE = "close"
    FOLD = "fold"
    UNFOLD = "unfold"


class Shape(str, Enum):
    CUBOID = "cuboid"
    OVAL = "oval"
    CONICAL = "conical"
    FLAT = "flat"
    CYLINDRICAL = "cylindrical"
    ARTICULATED = "articulated"


INVERSE_VERB: dict[Verb, Verb] = {
    Verb.PICK: Verb.PLACE, Verb.PLACE: Verb.PICK,
    Verb.PUSH_IN: Verb.PUSH_OUT, Verb.PUSH_OUT: Verb.PUSH_IN,
    Verb.STACK: Verb.UNSTACK, Verb.UNSTACK: Verb.STACK,
    Verb.OPEN: Verb.CLOSE, Verb.CLOSE: Verb.OPEN,
    Verb.FOLD: Verb.UNFOLD, Verb.UNFOLD: Verb.FOLD,
}

# Verb pairs whose end-effector motion is interchangeable even though the
# semantics differ (a folding sweep is a closing sweep, a stacking transfer is
# a placing transfer).
CONGRUENT_VERBS: set[frozenset[Verb]] = {
    frozenset({Verb.FOLD, Verb.CLOSE}),
    frozenset({Verb.UNFOLD, Verb.OPEN}),
    frozenset({Verb.PLACE, Verb.STACK}),
    frozenset({Verb.PICK, Verb.UNSTACK}),
}

DEFAULT_VERB_AFFINITY = 0.2

_SHAPE_PAIRS: dict[frozenset[Shape], float] = {
    frozenset({Shape.FLAT, Shape.ARTICULATED}): 0.7,
    frozenset({Shape.CUBOID, Shape.CYLINDRICAL}): 0.6,
    frozenset({Shape.OVAL, Shape.CONICAL}): 0.6,
    frozenset({Shape.CUBOID, Shape.FLAT}): 0.5,
    frozenset({Shape.OVAL, Shape.CYLINDRICAL}): 0.5,
    frozenset({Shape.CONICAL, Shape.CYLINDRICAL}): 0.5,
}
DEFAULT_SHAPE_AFFINITY = 0.1


class LibraryError(Exception):
    """Malformed record or violated library invariant."""


@dataclass(frozen=True)
class ObjectDescriptor:
    name: str
    shape: Shape

    def to_dict(self) -> dict:
        return {"name": self.name, "shape": self.shape.value}

    @staticmethod
    def from_dict(d: dict) -> "ObjectDescriptor":
        return ObjectDescriptor(str(d["name"]), Shape(d["shape"]))


@dataclass(frozen=True)
class DemonstrationStep:
    cloud: PointCloud
    ee_pose: Pose
    gripper: int

    def __post_init__(self):
        if self.gripper not in (0, 1):
            raise LibraryError(f"gripper must be 0 or 1, got {self.gripper}")


@dataclass(frozen=True)
class Demonstration:
    id: str
    skill_verb: Verb
    target: ObjectDescriptor
    steps: tuple[DemonstrationStep, ...]
    object_ids: tuple[int, ...] = ()
    provenance: str = "seed"

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "object_ids", tuple(int(i) for i in self.object_ids))
        if len(self.steps) < 2:
            raise LibraryError(f"demonstration {self.id!r} needs at least 2 steps")
        if self.provenance not in ("seed", "harvested"):
            raise LibraryError(f"unknown provenance {self.provenance!r}")
        prev = None
        for i, step in enumerate(self.steps):
            if prev is not None:
                jump = float(np.linalg.norm(step.ee_pose.translation - prev))
                if jump > MAX_STEP_JUMP + 1e-12:
                    raise LibraryError(
                        f"demonstration {self.id!r} jumps {jump:.3f} m at step {i}")
            prev = step.ee_pose.translation

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "skill_verb": self.skill_verb.value,
            "target": self.target.to_dict(),
            "object_ids": list(self.object_ids),
            "steps": [
                {
                    "cloud": s.cloud.to_list(ndigits=CLOUD_DECIMALS),
                    "ee_pose": s.ee_pose.to_dict(),
                    "gripper": s.gripper,
                }
                for s in self.steps
            ],
            "provenance": self.provenance,
        }

    @staticmethod
    def from_record(rec: dict) -> "Demonstration":
        allowed = {"id", "skill_verb", "target", "object_ids", "steps", "provenance"}
        unknown = set(rec) - allowed
        if unknown:
            raise LibraryError(f"unknown fields {sorted(unknown)}")
        missing = allowed - set(rec)
        if missing:
            raise LibraryError(f"missing fields {sorted(missing)}")
        steps = []
        for s in rec["steps"]:
            extra = set(s) - {"cloud", "ee_pose", "gripper"}
            if extra:
                raise LibraryError(f"unknown step fields {sorted(extra)}")
            steps.append(DemonstrationStep(
                cloud=PointCloud.from_list(s["cloud"]),
                ee_pose=Pose.from_dict(s["ee_pose"]),
                gripper=int(s["gripper"]),
            ))
        return Demonstration(
            id=str(rec["id"]),
            skill_verb=Verb(rec["skill_verb"]),
            target=ObjectDescriptor.from_dict(rec["target"]),
            steps=tuple(steps),
            object_ids=tuple(rec["object_ids"]),
            provenance=str(rec["provenance"]),
        )


def downsample_cloud(cloud: PointCloud, max_points: int = MAX_STORED_POINTS) -> PointCloud:
    """Deterministic stride subsample keeping at most max_points."""
    n = len(cloud)
    if n <= max_points:
        return cloud
    idx = np.linspace(0, n - 1, max_points).round().astype(int)
    return PointCloud(cloud.positions[idx], cloud.labels[idx])


def verb_affinity(a: Verb, b: Verb) -> float:
    if a == b:
        return 1.0
    if INVERSE_VERB[a] == b:
        return 0.0
    if frozenset({a, b}) in CONGRUENT_VERBS:
        return 0.7
    return DEFAULT_VERB_AFFINITY


def shape_affinity(a: Shape, b: Shape) -> float:
    if a == b:
        return 1.0
    return _SHAPE_PAIRS.get(frozenset({a, b}), DEFAULT_SHAPE_AFFINITY)


def score_similarity(query: tuple[Verb, ObjectDescriptor], demo: Demonstration,
                     action_weight: float = ACTION_WEIGHT,
                     geometry_weight: float = GEOMETRY_WEIGHT) -> float:
    """Weighted verb/geometry affinity in [0, 1]."""
    verb, descriptor = query
    action_sim = verb_affinity(verb, demo.skill_verb)
    geom_sim = shape_affinity(descriptor.shape, demo.target.shape)
    if descriptor.name == demo.target.name:
        geom_sim = min(1.0, geom_sim + NAME_BONUS)
    return action_weight * action_sim + geometry_weight * geom_sim


@dataclass
class AffordanceLibrary:
    demos: dict[str, Demonstration] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.demos)

    def __contains__(self, demo_id: str) -> bool:
        return demo_id in self.demos

    def get(self, demo_id: str) -> Demonstration:
        try:
            return self.demos[demo_id]
        except KeyError:
            raise LibraryError(f"unknown demonstration id {demo_id!r}") from None

    def append(self, demo: Demonstration) -> None:
        if demo.id in self.demos:
            raise LibraryError(f"duplicate demonstration id {demo.id!r}")
        self.demos[demo.id] = demo

    def retrieve_ranked(self, query: tuple[Verb, ObjectDescriptor], r: int = 3,
                        action_weight: float = ACTION_WEIGHT,
                        geometry_weight: float = GEOMETRY_WEIGHT) -> list[Demonstration]:
        """Top-r demos by descending score; ties broken by lexicographic id."""
        if r < 1:
            raise ValueError("r must be >= 1")
        scored = sorted(
            self.demos.values(),
            key=lambda d: (-score_similarity(query, d, action_weight, geometry_weight),
                           d.id),
        )
        return scored[:r]


def append_demonstration(lib: AffordanceLibrary, demo: Demonstration) -> AffordanceLibrary:
    lib.append(demo)
    return lib


def save_library(lib: AffordanceLibrary, path) -> None:
    """One JSON record per line, insertion order preserved."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for demo in lib.demos.values():
            f.write(json.dumps(demo.to_record(), separators=(",", ":")))
            f.write("\n")


def load_library(path) -> AffordanceLibrary:
    path = Path(path)
    lib = AffordanceLibrary()
    if path.is_dir():
        files = sorted(path.glob("*.jsonl"))
    else:
        files = [path]
    for file in files:
        if not file.exists():
            raise LibraryError(f"library file {file} does not exist")
        with file.open("r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    demo = Demonstration.from_record(rec)
                except (json.JSONDecodeError, KeyError, ValueError, LibraryError) as e:
                    raise LibraryError(
                        f"{file.name}, record {lineno}: {e}") from e
                if demo.id in lib.demos:
                    raise LibraryError(
                        f"{file.name}, record {lineno}: duplicate id {demo.id!r}")
                lib.append(demo)
    return lib
