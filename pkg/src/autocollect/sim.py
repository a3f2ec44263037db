"""Deterministic kinematic tabletop world.

State transitions are pure: every operation maps an input world to a fresh
output world. The contact model is intentionally minimal -- grasp/release
with settling, side-contact pushing, and a hinged-lid arc for articulated
objects -- just enough for the ground-truth predicates and LIFO resets to be
meaningful. No dynamics.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .geometry import PointCloud, Pose
from .library import ObjectDescriptor, Shape
from .scenes import SceneTemplate, TemplateRegistry

# workspace and table geometry, meters
WORKSPACE_XY = 0.60
WORKSPACE_Z = (0.0, 0.60)
TABLE_BOUND = 0.55

GRASP_TOL = 0.02           # gripper close must be this near a grasp point
PUSH_MARGIN = 0.02         # side-contact band around an object
MIN_PUSH_MOTION = 0.005    # smaller horizontal moves never count as pushes
LID_TOL = 0.06             # end-effector distance to the lid handle
LID_RADIAL_TOL = 0.03      # allowed deviation from the handle arc radius
SETTLE_TOL = 0.012         # max gap for a surface to catch a released object
CONTAINER_WALL = 0.01      # wall/floor thickness of container objects
Z_CONSISTENCY = 1e-6

OPEN_ANGLE = np.deg2rad(60.0)
CLOSED_ANGLE = np.deg2rad(10.0)

POINTS_PER_OBJECT = 256
TABLE_POINTS = 256

EE_REST = Pose.from_translation((0.0, -0.35, 0.30))

PREDICATE_KINDS = ("on", "in", "held", "open", "closed", "stacked_on", "in_region")


class SimError(Exception):
    """Violated simulator contract (unknown id, workspace breach, spawn failure)."""


@dataclass(frozen=True)
class SimObject:
    id: int
    descriptor: ObjectDescriptor
    pose: Pose
    half_extents: tuple[float, float, float]
    held: bool = False
    lid_angle: float | None = None
    support_id: int = 0
    tags: frozenset = frozenset()

    @property
    def name(self) -> str:
        return self.descriptor.name

    @property
    def top_z(self) -> float:
        return float(self.pose.translation[2] + self.half_extents[2])

    @property
    def bottom_z(self) -> float:
        return float(self.pose.translation[2] - self.half_extents[2])

    @property
    def is_container(self) -> bool:
        return "container" in self.tags

    @property
    def is_heavy(self) -> bool:
        return "heavy" in self.tags

    @property
    def is_articulated(self) -> bool:
        return self.lid_angle is not None

    @property
    def is_distractor(self) -> bool:
        return "distractor" in self.tags

    def grasp_point(self) -> np.ndarray:
        """Top-center of the body in world coordinates."""
        return self.pose.apply(np.array([0.0, 0.0, self.half_extents[2]]))

    def to_local(self, p: np.ndarray) -> np.ndarray:
        return self.pose.invert().apply(p)

    def footprint_contains(self, p_world: np.ndarray) -> bool:
        local = self.to_local(np.array([p_world[0], p_world[1],
                                        self.pose.translation[2]]))
        return (abs(local[0]) <= self.half_extents[0]
                and abs(local[1]) <= self.half_extents[1])

    def interior_floor_z(self) -> float:
        return self.bottom_z + CONTAINER_WALL

    def interior_contains_xy(self, p_world: np.ndarray) -> bool:
        if not self.is_container:
            return False
        local = self.to_local(np.array([p_world[0], p_world[1],
                                        self.pose.translation[2]]))
        return (abs(local[0]) <= self.half_extents[0] - CONTAINER_WALL
                and abs(local[1]) <= self.half_extents[1] - CONTAINER_WALL)

    def interior_contains(self, p_world: np.ndarray) -> bool:
        return (self.interior_contains_xy(p_world)
                and self.interior_floor_z() - 1e-9 <= p_world[2] <= self.top_z + 1e-9)

    def expanded_contains(self, p_world: np.ndarray, margin: float) -> bool:
        local = self.to_local(np.asarray(p_world, dtype=float))
        h = self.half_extents
        return (abs(local[0]) <= h[0] + margin
                and abs(local[1]) <= h[1] + margin
                and abs(local[2]) <= h[2] + margin)

    # lid model: flap of length 2*hy hinged along the -y top edge; angle 0 is
    # flat on the body (closed), pi/2 fully raised (open)
    def lid_length(self) -> float:
        return 2.0 * self.half_extents[1]

    def lid_hinge_local(self) -> np.ndarray:
        return np.array([0.0, -self.half_extents[1], self.half_extents[2]])

    def lid_handle_world(self) -> np.ndarray:
        if not self.is_articulated:
            raise SimError(f"object {self.name!r} has no lid")
        theta = self.lid_angle
        length = self.lid_length()
        local = self.lid_hinge_local() + np.array(
            [0.0, length * np.cos(theta), length * np.sin(theta)])
        return self.pose.apply(local)

    def lid_angle_of_point(self, p_world: np.ndarray) -> tuple[float, float]:
        """(implied lid angle clamped to [0, pi/2], radial arc deviation)."""
        local = self.to_local(np.asarray(p_world, dtype=float))
        rel = local - self.lid_hinge_local()
        radius = float(np.hypot(rel[1], rel[2]))
        theta = float(np.clip(np.arctan2(rel[2], rel[1]), 0.0, np.pi / 2))
        return theta, abs(radius - self.lid_length())


@dataclass(frozen=True)
class Region:
    name: str
    center: tuple[float, float]
    half: tuple[float, float]

    def contains(self, p) -> bool:
        return (abs(p[0] - self.center[0]) <= self.half[0]
                and abs(p[1] - self.center[1]) <= self.half[1])


@dataclass(frozen=True)
class WorldState:
    template: str
    objects: dict[int, SimObject]
    ee_pose: Pose
    gripper: int
    regions: dict[str, Region]
    rng_seed: int
    held_object: int | None = None
    held_offset: Pose | None = None

    def object(self, obj_id: int) -> SimObject:
        try:
            return self.objects[obj_id]
        except KeyError:
            raise SimError(f"unknown object id {obj_id}") from None

    def find(self, name: str) -> SimObject:
        for obj in self.objects.values():
            if obj.name == name:
                return obj
        raise SimError(f"no object named {name!r}")

    def region(self, name: str) -> Region:
        try:
            return self.regions[name]
        except KeyError:
            raise SimError(f"unknown region {name!r}") from None


@dataclass(frozen=True)
class SceneEntry:
    name: str
    shape: Shape
    position: tuple[float, float, float]
    tags: tuple[str, ...]


@dataclass(frozen=True)
class SceneDescription:
    entries: tuple[SceneEntry, ...]
    regions: tuple[str, ...]
    world: WorldState | None = field(default=None, compare=False, repr=False)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "objects": [
                {"name": e.name, "shape": e.shape.value,
                 "position": [float(v) for v in e.position],
                 "tags": list(e.tags)}
                for e in self.entries
            ],
            "regions": list(self.regions),
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneDescription":
        entries = tuple(
            SceneEntry(o["name"], Shape(o["shape"]),
                       tuple(float(v) for v in o["position"]),
                       tuple(o.get("tags", ())))
            for o in d.get("objects", ()))
        return SceneDescription(entries, tuple(d.get("regions", ())))


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _pattern_key(obj: SimObject) -> str:
    h = obj.half_extents
    return f"{obj.name}|{obj.descriptor.shape.value}|{h[0]:.5f},{h[1]:.5f},{h[2]:.5f}"


@lru_cache(maxsize=256)
def _surface_pattern(key: str, hx: float, hy: float, hz: float, n: int) -> np.ndarray:
    """Fixed local-frame surface samples for one object geometry.

    The pattern depends only on the object's identity key, so the same object
    observed in different worlds yields exactly corresponding points.
    """
    rng = np.random.default_rng(_stable_seed("surface", key, n))
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-1.0, 1.0, size=n)
    v = rng.uniform(-1.0, 1.0, size=n)
    pts = np.empty((n, 3))
    for i, (f, a, b) in enumerate(zip(faces, u, v)):
        if f == 0:
            pts[i] = (hx, a * hy, b * hz)
        elif f == 1:
            pts[i] = (-hx, a * hy, b * hz)
        elif f == 2:
            pts[i] = (a * hx, hy, b * hz)
        elif f == 3:
            pts[i] = (a * hx, -hy, b * hz)
        elif f == 4:
            pts[i] = (a * hx, b * hy, hz)
        else:
            pts[i] = (a * hx, b * hy, -hz)
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=8)
def _table_pattern(n: int) -> np.ndarray:
    rng = np.random.default_rng(_stable_seed("table-plane", n))
    pts = np.column_stack([
        rng.uniform(-TABLE_BOUND, TABLE_BOUND, size=n),
        rng.uniform(-TABLE_BOUND, TABLE_BOUND, size=n),
        np.zeros(n),
    ])
    pts.setflags(write=False)
    return pts


def _xy_overlap(a: SimObject, b: SimObject) -> bool:
    pa, pb = a.pose.translation, b.pose.translation
    return (abs(pa[0] - pb[0]) < a.half_extents[0] + b.half_extents[0]
            and abs(pa[1] - pb[1]) < a.half_extents[1] + b.half_extents[1])


def spawn_scene(template, seed: int, registry: TemplateRegistry | None = None,
                jitter_scale: float = 1.0) -> WorldState:
    """Instantiate a template with per-object seeded jitter.

    Each object draws from its own (seed, name)-keyed stream, so adding or
    removing other objects never perturbs its placement. Overlapping draws are
    rejection-sampled up to 100 times.
    """
    if isinstance(template, SceneTemplate):
        tpl = template
    else:
        tpl = (registry or TemplateRegistry()).get(str(template))

    objects: dict[int, SimObject] = {}
    for idx, spec in enumerate(tpl.objects, start=1):
        rng = np.random.default_rng(_stable_seed("spawn", seed, spec.name))
        placed = None
        for _ in range(100):
            offset = rng.uniform(-1.0, 1.0, size=2) * spec.jitter * jitter_scale
            xy = np.asarray(spec.spawn_xy) + offset
            candidate = SimObject(
                id=idx,
                descriptor=ObjectDescriptor(spec.name, spec.shape),
                pose=Pose.from_translation((xy[0], xy[1], spec.half_extents[2])),
                half_extents=spec.half_extents,
                lid_angle=spec.lid_angle,
                support_id=0,
                tags=spec.tags,
            )
            if not any(_xy_overlap(candidate, other) for other in objects.values()):
                placed = candidate
                break
        if placed is None:
            raise SimError(
                f"could not place {spec.name!r} in {tpl.name!r} without overlap "
                f"after 100 attempts")
        objects[idx] = placed

    regions = {r.name: Region(r.name, r.center, r.half) for r in tpl.regions}
    return WorldState(template=tpl.name, objects=objects, ee_pose=EE_REST,
                      gripper=0, regions=regions, rng_seed=seed)


def _settle(obj: SimObject, others: dict[int, SimObject]) -> SimObject:
    """Drop the object onto the topmost support surface under its center."""
    center = obj.pose.translation
    bottom = obj.bottom_z
    best_surface = 0.0
    best_id = 0
    for other in others.values():
        if other.id == obj.id or other.held:
            continue
        if other.interior_contains_xy(center):
            surface = other.interior_floor_z()
        elif other.footprint_contains(center):
            surface = other.top_z
        else:
            continue
        if surface <= bottom + SETTLE_TOL and surface > best_surface:
            best_surface = surface
            best_id = other.id
    new_t = np.array([center[0], center[1], best_surface + obj.half_extents[2]])
    return replace(obj, pose=Pose(new_t, obj.pose.rotation),
                   held=False, support_id=best_id)


def _lateral_escape(obj: SimObject, p_world: np.ndarray, d_xy: np.ndarray) -> float:
    """Push distance so p_world ends on the expanded boundary behind the object."""
    local_p = obj.to_local(np.asarray(p_world, dtype=float))
    # rotate the push direction into the object frame (z-rotations only in
    # practice; general poses handled through the full inverse rotation)
    d_world = np.array([d_xy[0], d_xy[1], 0.0])
    d_local = obj.pose.invert()._scipy().apply(d_world)
    best = np.inf
    for axis in (0, 1):
        if abs(d_local[axis]) < 1e-9:
            continue
        h = obj.half_extents[axis] + PUSH_MARGIN
        s = (local_p[axis] + np.sign(d_local[axis]) * h) / d_local[axis]
        if s > 0:
            best = min(best, s)
    return 0.0 if not np.isfinite(best) else float(best)


def apply_waypoint(world: WorldState, target_ee: Pose, gripper: int) -> WorldState:
    """Move the end effector to a waypoint and apply contact rules.

    Order: held object tracks, lid arcs engage, side contacts push, then
    gripper transitions attach or release.
    """
    t = target_ee.translation
    if (abs(t[0]) > WORKSPACE_XY or abs(t[1]) > WORKSPACE_XY
            or not (WORKSPACE_Z[0] - 1e-9 <= t[2] <= WORKSPACE_Z[1])):
        raise SimError(f"waypoint {t.tolist()} outside workspace")
    if gripper not in (0, 1):
        raise SimError("gripper command must be 0 or 1")

    objects = dict(world.objects)
    prev_ee = world.ee_pose
    held_id = world.held_object
    held_offset = world.held_offset

    if held_id is not None:
        obj = objects[held_id]
        objects[held_id] = replace(obj, pose=target_ee.compose(held_offset))

    # hinged-lid tracking takes precedence over pushing for the same object
    lid_engaged = set()
    for obj_id, obj in sorted(objects.items()):
        if not obj.is_articulated or obj.held:
            continue
        handle = obj.lid_handle_world()
        if np.linalg.norm(t - handle) > LID_TOL:
            continue
        theta, radial_dev = obj.lid_angle_of_point(t)
        if radial_dev > LID_RADIAL_TOL:
            continue
        objects[obj_id] = replace(obj, lid_angle=theta)
        lid_engaged.add(obj_id)

    d = t - prev_ee.translation
    d_xy = d[:2]
    norm_xy = float(np.linalg.norm(d_xy))
    # side contact needs horizontally dominant motion of real extent;
    # descents (even noisy ones) land on objects instead of shoving them
    if norm_xy >= max(abs(float(d[2])), MIN_PUSH_MOTION):
        d_hat = d_xy / norm_xy
        for obj_id, obj in sorted(objects.items()):
            if obj.held or obj.is_heavy or obj_id in lid_engaged:
                continue
            if not obj.expanded_contains(t, PUSH_MARGIN):
                continue
            s = _lateral_escape(obj, t, d_hat)
            if s <= 0:
                continue
            shift = np.array([d_hat[0] * s, d_hat[1] * s, 0.0])
            moved = replace(obj, pose=Pose(obj.pose.translation + shift,
                                           obj.pose.rotation))
            objects[obj_id] = _settle(moved, objects)

    new_held = held_id
    new_offset = held_offset
    if world.gripper == 0 and gripper == 1:
        best_id, best_dist = None, np.inf
        for obj_id, obj in sorted(objects.items()):
            if obj.held:
                continue
            dist = float(np.linalg.norm(t - obj.grasp_point()))
            if dist < best_dist:
                best_id, best_dist = obj_id, dist
        if best_id is not None and best_dist <= GRASP_TOL:
            obj = objects[best_id]
            objects[best_id] = replace(obj, held=True, support_id=-1)
            new_held = best_id
            new_offset = target_ee.invert().compose(obj.pose)
    elif world.gripper == 1 and gripper == 0:
        if held_id is not None:
            objects[held_id] = _settle(objects[held_id], objects)
        new_held = None
        new_offset = None

    return replace(world, objects=objects, ee_pose=target_ee, gripper=gripper,
                   held_object=new_held, held_offset=new_offset)


def render_point_cloud(world: WorldState, mask=None,
                       points_per_object: int = POINTS_PER_OBJECT,
                       table_points: int = TABLE_POINTS) -> PointCloud:
    """Fixed-budget surface samples; with a mask, only masked objects plus table."""
    if mask is not None:
        mask = set(int(m) for m in mask)
        unknown = mask - set(world.objects)
        if unknown:
            raise SimError(f"mask references unknown ids {sorted(unknown)}")

    chunks = []
    labels = []
    if table_points > 0:
        chunks.append(_table_pattern(table_points))
        labels.append(np.zeros(table_points, dtype=np.int64))
    for obj_id, obj in sorted(world.objects.items()):
        if mask is not None and obj_id not in mask:
            continue
        pattern = _surface_pattern(_pattern_key(obj), *obj.half_extents,
                                   points_per_object)
        chunks.append(obj.pose.apply(pattern))
        labels.append(np.full(points_per_object, obj_id, dtype=np.int64))
    if not chunks:
        return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
    return PointCloud(np.vstack(chunks), np.concatenate(labels))


def describe_scene(world: WorldState) -> SceneDescription:
    """Structured, deterministic listing of objects, poses, and state tags."""
    entries = []
    for obj_id, obj in sorted(world.objects.items()):
        tags = []
        if obj.held:
            tags.append("held")
        else:
            support = world.objects.get(obj.support_id)
            if support is None:
                tags.append("on:table")
            elif support.is_container:
                tags.append(f"in:{support.name}")
            else:
                tags.append(f"on:{support.name}")
        if obj.is_articulated:
            if obj.lid_angle > OPEN_ANGLE:
                tags.append("open")
            elif obj.lid_angle < CLOSED_ANGLE:
                tags.append("closed")
        for region in sorted(world.regions):
            if world.regions[region].contains(obj.pose.translation[:2]):
                tags.append(f"region:{region}")
        entries.append(SceneEntry(
            name=obj.name,
            shape=obj.descriptor.shape,
            position=tuple(float(v) for v in obj.pose.translation),
            tags=tuple(tags),
        ))
    return SceneDescription(tuple(entries), tuple(sorted(world.regions)),
                            world=world)


def ground_truth(world: WorldState, predicate) -> bool:
    """Evaluate (kind, subject, object/region) against the world."""
    if len(predicate) == 2:
        kind, subject_id = predicate
        obj_ref = None
    else:
        kind, subject_id, obj_ref = predicate
    if kind not in PREDICATE_KINDS:
        raise SimError(f"unknown predicate kind {kind!r}")
    subject = world.object(int(subject_id))

    if kind == "held":
        return bool(world.held_object == subject.id)

    if kind == "open":
        return bool(subject.is_articulated and subject.lid_angle > OPEN_ANGLE)
    if kind == "closed":
        return bool(subject.is_articulated and subject.lid_angle < CLOSED_ANGLE)

    if kind == "in_region":
        region = world.region(str(obj_ref))
        return bool(region.contains(subject.pose.translation[:2]))

    if kind == "in":
        other = world.object(int(obj_ref))
        return bool(not subject.held
                    and other.interior_contains(subject.pose.translation))

    # on / stacked_on
    if int(obj_ref) == 0:
        on = bool((not subject.held) and abs(subject.bottom_z) <= 1e-3)
        if kind == "on":
            return on
        raise SimError("stacked_on requires an object, not the table")
    other = world.object(int(obj_ref))
    on = bool(not subject.held
              and abs(subject.bottom_z - other.top_z) <= 1e-3
              and other.footprint_contains(subject.pose.translation))
    if kind == "on":
        return on
    local = other.to_local(subject.pose.translation)
    offset = float(np.hypot(local[0], local[1]))
    threshold = min(subject.half_extents[0], subject.half_extents[1],
                    other.half_extents[0], other.half_extents[1])
    return bool(on and offset < threshold)


def all_predicates(world: WorldState) -> dict[tuple, bool]:
    """Every instantiable predicate; the reset-fidelity comparison basis."""
    out: dict[tuple, bool] = {}
    ids = sorted(world.objects)
    for a in ids:
        out[("held", a, None)] = ground_truth(world, ("held", a, None))
        if world.objects[a].is_articulated:
            out[("open", a, None)] = ground_truth(world, ("open", a, None))
            out[("closed", a, None)] = ground_truth(world, ("closed", a, None))
        out[("on", a, 0)] = ground_truth(world, ("on", a, 0))
        for b in ids:
            if a == b:
                continue
            out[("on", a, b)] = ground_truth(world, ("on", a, b))
            out[("stacked_on", a, b)] = ground_truth(world, ("stacked_on", a, b))
            if world.objects[b].is_container:
                out[("in", a, b)] = ground_truth(world, ("in", a, b))
        for region in sorted(world.regions):
            out[("in_region", a, region)] = ground_truth(
                world, ("in_region", a, region))
    return out


def inject_perturbation(world: WorldState, p_perturb: float, sigma_t: float,
                        rng: np.random.Generator) -> WorldState:
    """With probability p_perturb, displace one non-held object and re-settle."""
    if not 0.0 <= p_perturb <= 1.0:
        raise SimError("p_perturb must be in [0, 1]")
    if rng.uniform() >= p_perturb:
        return world
    candidates = [obj_id for obj_id, obj in sorted(world.objects.items())
                  if not obj.held]
    if not candidates:
        return world
    target = candidates[int(rng.integers(len(candidates)))]
    noise = rng.normal(0.0, sigma_t, size=2)
    obj = world.objects[target]
    h = obj.half_extents
    new_xy = np.clip(obj.pose.translation[:2] + noise,
                     [-TABLE_BOUND + h[0], -TABLE_BOUND + h[1]],
                     [TABLE_BOUND - h[0], TABLE_BOUND - h[1]])
    moved = replace(obj, pose=Pose(
        np.array([new_xy[0], new_xy[1], obj.pose.translation[2]]),
        obj.pose.rotation))
    objects = dict(world.objects)
    objects[target] = _settle(moved, objects)
    return replace(world, objects=objects)


def check_support_consistency(world: WorldState) -> None:
    """Every non-held object must rest exactly on its support surface."""
    for obj in world.objects.values():
        if obj.held:
            if obj.support_id != -1:
                raise SimError(f"held {obj.name!r} has support {obj.support_id}")
            continue
        support = world.objects.get(obj.support_id)
        if support is None:
            surface = 0.0
        elif support.is_container and support.interior_contains_xy(
                obj.pose.translation):
            surface = support.interior_floor_z()
        else:
            surface = support.top_z
        if abs(obj.bottom_z - surface) > Z_CONSISTENCY:
            raise SimError(
                f"{obj.name!r} floats {obj.bottom_z - surface:+.2e} m above "
                f"support {obj.support_id}")


def world_to_dict(world: WorldState) -> dict:
    return {
        "template": world.template,
        "rng_seed": world.rng_seed,
        "ee_pose": world.ee_pose.to_dict(),
        "gripper": world.gripper,
        "held_object": world.held_object,
        "held_offset": world.held_offset.to_dict() if world.held_offset else None,
        "objects": [
            {
                "id": obj.id,
                "name": obj.name,
                "shape": obj.descriptor.shape.value,
                "pose": obj.pose.to_dict(),
                "half_extents": list(obj.half_extents),
                "held": obj.held,
                "lid_angle": obj.lid_angle,
                "support_id": obj.support_id,
                "tags": sorted(obj.tags),
            }
            for _, obj in sorted(world.objects.items())
        ],
        "regions": [
            {"name": r.name, "center": list(r.center), "half": list(r.half)}
            for _, r in sorted(world.regions.items())
        ],
    }


def world_from_dict(d: dict) -> WorldState:
    objects = {}
    for o in d["objects"]:
        objects[int(o["id"])] = SimObject(
            id=int(o["id"]),
            descriptor=ObjectDescriptor(o["name"], Shape(o["shape"])),
            pose=Pose.from_dict(o["pose"]),
            half_extents=tuple(float(v) for v in o["half_extents"]),
            held=bool(o["held"]),
            lid_angle=None if o["lid_angle"] is None else float(o["lid_angle"]),
            support_id=int(o["support_id"]),
            tags=frozenset(o.get("tags", ())),
        )
    regions = {
        r["name"]: Region(r["name"], tuple(r["center"]), tuple(r["half"]))
        for r in d.get("regions", ())
    }
    return WorldState(
        template=str(d["template"]),
        objects=objects,
        ee_pose=Pose.from_dict(d["ee_pose"]),
        gripper=int(d["gripper"]),
        regions=regions,
        rng_seed=int(d["rng_seed"]),
        held_object=None if d["held_object"] is None else int(d["held_object"]),
        held_offset=None if d["held_offset"] is None
        else Pose.from_dict(d["held_offset"]),
    )
