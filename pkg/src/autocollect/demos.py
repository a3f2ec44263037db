"""Scripted seed demonstrations.

Parameterized waypoint scripts over the simulator's grasp points play the
role of human-recorded skill demonstrations: transfers (grasp, carry,
release), planar pushes, and hinged-lid arcs. Every script keeps its motion
legs axis-decomposed (hover directly above contact points, vertical descents)
and ends contact skills with a close/open tamp, so the waypoints that matter
survive horizon resampling as gripper anchors.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .geometry import Pose
from .library import (
    AffordanceLibrary,
    Demonstration,
    DemonstrationStep,
    Verb,
    save_library,
)
from .scenes import TemplateRegistry
from .sim import (
    PUSH_MARGIN,
    SimObject,
    WorldState,
    apply_waypoint,
    render_point_cloud,
    spawn_scene,
)

DENSE_STEP = 0.04     # waypoint spacing, comfortably under the 0.10 demo bound
CARRY_Z = 0.25
LID_HOVER_Z = 0.30
APPROACH_GAP = 0.03   # standoff from an object side before a push
RELEASE_GAP = 0.005   # drop height above the destination surface
ARC_STEP = np.deg2rad(5.0)
LID_OPEN_TARGET = np.deg2rad(75.0)
RETREAT_LATERAL = 0.08

SEEDED_VERBS = (Verb.PICK, Verb.PLACE, Verb.PUSH_IN, Verb.PUSH_OUT,
                Verb.STACK, Verb.UNSTACK, Verb.OPEN, Verb.CLOSE)


def _wp(x, y, z, g) -> tuple[Pose, int]:
    return Pose.from_translation((float(x), float(y), float(z))), int(g)


def _densify(waypoints: list[tuple[Pose, int]]) -> list[tuple[Pose, int]]:
    """Subdivide translations longer than DENSE_STEP; bits follow the segment start."""
    out = [waypoints[0]]
    for pose, g in waypoints[1:]:
        prev_pose, prev_g = out[-1]
        delta = pose.translation - prev_pose.translation
        dist = float(np.linalg.norm(delta))
        n = max(1, int(np.ceil(dist / DENSE_STEP)))
        for i in range(1, n):
            t = prev_pose.translation + delta * (i / n)
            out.append((Pose(t, pose.rotation), prev_g if g == prev_g else prev_g))
        out.append((pose, g))
    return out


def transfer_waypoints(subject: SimObject, dest_xy, dest_surface_z: float):
    """Grasp the subject, carry it, release it over the destination."""
    gp = subject.grasp_point()
    release_z = dest_surface_z + 2 * subject.half_extents[2] + RELEASE_GAP
    raw = [
        _wp(gp[0], gp[1], CARRY_Z, 0),
        _wp(gp[0], gp[1], gp[2], 0),
        _wp(gp[0], gp[1], gp[2], 1),
        _wp(gp[0], gp[1], CARRY_Z, 1),
        _wp(dest_xy[0], dest_xy[1], CARRY_Z, 1),
        _wp(dest_xy[0], dest_xy[1], release_z, 1),
        _wp(dest_xy[0], dest_xy[1], release_z, 0),
        _wp(dest_xy[0], dest_xy[1], CARRY_Z, 0),
    ]
    return _densify(raw)


def push_waypoints(subject: SimObject, to_xy):
    """Sweep through the subject's side so its center lands on to_xy."""
    c = subject.pose.translation
    to_xy = np.asarray(to_xy, dtype=float)
    direction = to_xy - c[:2]
    dist = float(np.linalg.norm(direction))
    if dist < 1e-9:
        raise ValueError("push destination coincides with the object")
    d = direction / dist
    support = (subject.half_extents[0] * abs(d[0])
               + subject.half_extents[1] * abs(d[1]))
    start = c[:2] - d * (support + APPROACH_GAP)
    end = to_xy - d * (support + PUSH_MARGIN)
    z = float(c[2])
    raw = [
        _wp(start[0], start[1], CARRY_Z, 0),
        _wp(start[0], start[1], z, 0),
        _wp(end[0], end[1], z, 0),
        _wp(end[0], end[1], z, 1),   # terminal tamp anchors the sweep end
        _wp(end[0], end[1], z, 0),
        _wp(end[0], end[1], CARRY_Z, 0),
    ]
    return _densify(raw)


def lid_waypoints(subject: SimObject, theta_to: float):
    """Descend onto the lid handle and sweep it along its arc to theta_to."""
    theta_from = float(subject.lid_angle)
    length = subject.lid_length()
    hinge = subject.lid_hinge_local()

    def handle_at(theta):
        local = hinge + np.array([0.0, length * np.cos(theta),
                                  length * np.sin(theta)])
        return subject.pose.apply(local)

    h0 = handle_at(theta_from)
    raw = [_wp(h0[0], h0[1], LID_HOVER_Z, 0), _wp(h0[0], h0[1], h0[2], 0)]
    step = ARC_STEP if theta_to > theta_from else -ARC_STEP
    thetas = list(np.arange(theta_from + step, theta_to, step)) + [theta_to]
    for theta in thetas:
        h = handle_at(theta)
        raw.append(_wp(h[0], h[1], h[2], 0))
    h_end = handle_at(theta_to)
    raw.append(_wp(h_end[0], h_end[1], h_end[2], 1))  # terminal tamp
    raw.append(_wp(h_end[0], h_end[1], h_end[2], 0))
    # retreat radially away from the hinge: angle-neutral at any lid angle
    hinge_world = subject.pose.apply(hinge)
    radial = (h_end - hinge_world) / np.linalg.norm(h_end - hinge_world)
    out = h_end + radial * RETREAT_LATERAL
    raw.append(_wp(out[0], out[1], out[2], 0))
    raw.append(_wp(out[0], out[1], LID_HOVER_Z, 0))
    return _densify(raw)


# --- staging: put a spawned world into the skill's natural pre-state -------

def stage_into_container(world: WorldState, name: str,
                         container: str) -> WorldState:
    obj = world.find(name)
    cont = world.find(container)
    z = cont.interior_floor_z() + obj.half_extents[2]
    t = np.array([cont.pose.translation[0], cont.pose.translation[1], z])
    objects = dict(world.objects)
    objects[obj.id] = replace(obj, pose=Pose(t, obj.pose.rotation),
                              support_id=cont.id)
    return replace(world, objects=objects)


def stage_on_top(world: WorldState, name: str, base: str) -> WorldState:
    obj = world.find(name)
    base_obj = world.find(base)
    t = np.array([base_obj.pose.translation[0], base_obj.pose.translation[1],
                  base_obj.top_z + obj.half_extents[2]])
    objects = dict(world.objects)
    objects[obj.id] = replace(obj, pose=Pose(t, obj.pose.rotation),
                              support_id=base_obj.id)
    return replace(world, objects=objects)


def stage_at(world: WorldState, name: str, xy) -> WorldState:
    obj = world.find(name)
    t = np.array([xy[0], xy[1], obj.half_extents[2]])
    objects = dict(world.objects)
    objects[obj.id] = replace(obj, pose=Pose(t, obj.pose.rotation), support_id=0)
    return replace(world, objects=objects)


def stage_lid(world: WorldState, name: str, theta: float) -> WorldState:
    obj = world.find(name)
    objects = dict(world.objects)
    objects[obj.id] = replace(obj, lid_angle=float(theta))
    return replace(world, objects=objects)


@dataclass(frozen=True)
class DemoScript:
    verb: Verb
    variant: str
    template: str
    target: str
    build: Callable[[WorldState], list]
    stage: Callable[[WorldState], WorldState] | None = None
    partners: tuple[str, ...] = ()   # destination objects included in the cloud


def _region_center(world: WorldState, name: str):
    return world.region(name).center


def _transfer_to_region(target: str, region: str):
    def build(world: WorldState):
        return transfer_waypoints(world.find(target),
                                  _region_center(world, region), 0.0)
    return build


def _transfer_into(target: str, container: str):
    def build(world: WorldState):
        cont = world.find(container)
        return transfer_waypoints(world.find(target),
                                  cont.pose.translation[:2],
                                  cont.interior_floor_z())
    return build


def _transfer_onto(target: str, base: str):
    def build(world: WorldState):
        base_obj = world.find(base)
        return transfer_waypoints(world.find(target),
                                  base_obj.pose.translation[:2], base_obj.top_z)
    return build


def _push_to_region(target: str, region: str):
    def build(world: WorldState):
        return push_waypoints(world.find(target), _region_center(world, region))
    return build


def _lid_to(target: str, theta: float):
    def build(world: WorldState):
        return lid_waypoints(world.find(target), theta)
    return build


SCRIPTS: dict[Verb, tuple[DemoScript, ...]] = {
    Verb.PICK: (
        DemoScript(Verb.PICK, "grip-ball", "grasp_ball", "grip ball",
                   _transfer_to_region("grip ball", "ball_target")),
        DemoScript(Verb.PICK, "cup", "large_container_cup", "cup",
                   _transfer_to_region("cup", "cup_home"),
                   stage=lambda w: stage_into_container(w, "cup", "tray")),
        DemoScript(Verb.PICK, "block", "large_container_block", "green block",
                   _transfer_to_region("green block", "block_home"),
                   stage=lambda w: stage_into_container(w, "green block", "tray")),
        DemoScript(Verb.PICK, "laptop", "large_container_laptop", "laptop",
                   _transfer_to_region("laptop", "laptop_home"),
                   stage=lambda w: stage_into_container(w, "laptop", "tray")),
    ),
    Verb.PLACE: (
        DemoScript(Verb.PLACE, "cup", "large_container_cup", "cup",
                   _transfer_into("cup", "tray"), partners=("tray",)),
        DemoScript(Verb.PLACE, "block", "large_container_block", "green block",
                   _transfer_into("green block", "tray"), partners=("tray",)),
        DemoScript(Verb.PLACE, "laptop", "large_container_laptop", "laptop",
                   _transfer_into("laptop", "tray"), partners=("tray",)),
        DemoScript(Verb.PLACE, "grip-ball", "grasp_ball", "grip ball",
                   _transfer_to_region("grip ball", "ball_home"),
                   stage=lambda w: stage_at(
                       w, "grip ball", w.region("ball_target").center)),
    ),
    Verb.PUSH_IN: (
        DemoScript(Verb.PUSH_IN, "block", "push_block", "yellow block",
                   _push_to_region("yellow block", "white_area")),
    ),
    Verb.PUSH_OUT: (
        DemoScript(Verb.PUSH_OUT, "block", "push_block", "yellow block",
                   _push_to_region("yellow block", "start_zone"),
                   stage=lambda w: stage_at(
                       w, "yellow block", w.region("white_area").center)),
    ),
    Verb.STACK: (
        DemoScript(Verb.STACK, "red-block", "stack_block", "red block",
                   _transfer_onto("red block", "yellow block"),
                   partners=("yellow block",)),
    ),
    Verb.UNSTACK: (
        DemoScript(Verb.UNSTACK, "red-block", "stack_block", "red block",
                   _transfer_to_region("red block", "red_home"),
                   stage=lambda w: stage_on_top(w, "red block", "yellow block")),
    ),
    Verb.OPEN: (
        DemoScript(Verb.OPEN, "box", "open_box", "box",
                   _lid_to("box", LID_OPEN_TARGET)),
    ),
    Verb.CLOSE: (
        DemoScript(Verb.CLOSE, "box", "close_box", "box", _lid_to("box", 0.0)),
    ),
}


def record_script(world: WorldState, script: DemoScript,
                  demo_id: str) -> tuple[Demonstration, WorldState]:
    """Execute a script in the world, observing a masked cloud at every step."""
    target = world.find(script.target)
    mask = {target.id} | {world.find(p).id for p in script.partners}
    waypoints = script.build(world)
    steps = []
    for pose, gripper in waypoints:
        world = apply_waypoint(world, pose, gripper)
        cloud = render_point_cloud(world, mask=mask, table_points=0)
        steps.append(DemonstrationStep(cloud, pose, gripper))
    demo = Demonstration(
        id=demo_id,
        skill_verb=script.verb,
        target=target.descriptor,
        steps=tuple(steps),
        object_ids=tuple(sorted(mask)),
        provenance="seed",
    )
    return demo, world


def record_seed_demos(per_skill: int | None = None, base_seed: int = 0,
                      registry: TemplateRegistry | None = None,
                      out_path=None) -> AffordanceLibrary:
    """Record scripted demonstrations for every seedable skill verb.

    With per_skill=None each verb gets its natural variant count, padded with
    jitter-respawned takes to at least 2 and capped at 5. Take 0 of each
    variant runs on the canonical (unjittered) scene and wins retrieval ties
    by id, so later jittered takes only add library diversity.
    """
    if per_skill is not None and per_skill < 1:
        raise ValueError("per_skill must be >= 1")
    registry = registry or TemplateRegistry()
    lib = AffordanceLibrary()
    for verb in SEEDED_VERBS:
        variants = SCRIPTS[verb]
        count = per_skill if per_skill is not None else min(5, max(2, len(variants)))
        for k in range(count):
            script = variants[k % len(variants)]
            take = k // len(variants)
            world = spawn_scene(script.template, seed=base_seed + take,
                                registry=registry,
                                jitter_scale=0.0 if take == 0 else 1.0)
            if script.stage is not None:
                world = script.stage(world)
            demo_id = f"seed-{verb.value}-{script.variant}-{k:03d}"
            demo, _ = record_script(world, script, demo_id)
            lib.append(demo)
    if out_path is not None:
        save_library(lib, out_path)
    return lib
