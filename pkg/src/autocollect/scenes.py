"""Scene template registry for the tabletop simulator.

Templates mirror the benchmark task families: large-container transfers,
block pushing and stacking, articulated open/close, a towel-fold stand-in,
long-horizon composites, and distractor variants of the push and pick scenes.

Layout constants are shared across templates on purpose: skills demonstrated
on one template must stay geometrically valid when replayed inside a
composite (the white area of the push templates is the stacking base
position, container homes match across container templates).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .library import Shape

# table-frame layout anchors, meters
START_ZONE_CENTER = (-0.18, 0.12)
WHITE_AREA_CENTER = (0.06, 0.12)
RED_HOME_CENTER = (0.06, -0.15)
TRAY_CENTER = (0.10, 0.0)
CUP_HOME_CENTER = (-0.20, 0.0)
BLOCK_HOME_CENTER = (-0.20, 0.0)
LAPTOP_HOME_CENTER = (-0.20, 0.12)
LEMON_HOME_CENTER = (-0.15, -0.10)
LEMON_TARGET_CENTER = (0.15, -0.10)
BOX_CENTER = (0.0, 0.10)

REGION_HALF = (0.10, 0.10)
HOME_HALF = (0.08, 0.08)

BLOCK_HALF = (0.04, 0.04, 0.04)
CUP_HALF = (0.03, 0.03, 0.04)
TRAY_HALF = (0.12, 0.12, 0.05)
BOX_HALF = (0.08, 0.06, 0.05)
LAPTOP_HALF = (0.07, 0.05, 0.01)
BALL_HALF = (0.025, 0.025, 0.025)
STRAWBERRY_HALF = (0.02, 0.02, 0.025)
RUBIK_HALF = (0.025, 0.025, 0.025)

DEFAULT_JITTER = 0.012
LID_OPEN_INIT = 75.0 * 3.141592653589793 / 180.0


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    shape: Shape
    half_extents: tuple[float, float, float]
    spawn_xy: tuple[float, float]
    jitter: float = 0.0
    tags: frozenset = frozenset()
    lid_angle: float | None = None

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "shape": self.shape.value,
            "half_extents": list(self.half_extents),
            "spawn_xy": list(self.spawn_xy),
            "jitter": self.jitter,
            "tags": sorted(self.tags),
        }
        if self.lid_angle is not None:
            d["lid_angle"] = self.lid_angle
        return d

    @staticmethod
    def from_dict(d: dict) -> "ObjectSpec":
        return ObjectSpec(
            name=str(d["name"]),
            shape=Shape(d["shape"]),
            half_extents=tuple(float(v) for v in d["half_extents"]),
            spawn_xy=tuple(float(v) for v in d["spawn_xy"]),
            jitter=float(d.get("jitter", 0.0)),
            tags=frozenset(d.get("tags", ())),
            lid_angle=float(d["lid_angle"]) if "lid_angle" in d else None,
        )


@dataclass(frozen=True)
class RegionSpec:
    name: str
    center: tuple[float, float]
    half: tuple[float, float]

    def to_dict(self) -> dict:
        return {"name": self.name, "center": list(self.center), "half": list(self.half)}

    @staticmethod
    def from_dict(d: dict) -> "RegionSpec":
        return RegionSpec(str(d["name"]),
                          tuple(float(v) for v in d["center"]),
                          tuple(float(v) for v in d["half"]))


@dataclass(frozen=True)
class SceneTemplate:
    name: str
    objects: tuple[ObjectSpec, ...]
    regions: tuple[RegionSpec, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "objects": [o.to_dict() for o in self.objects],
            "regions": [r.to_dict() for r in self.regions],
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneTemplate":
        return SceneTemplate(
            name=str(d["name"]),
            objects=tuple(ObjectSpec.from_dict(o) for o in d["objects"]),
            regions=tuple(RegionSpec.from_dict(r) for r in d.get("regions", ())),
        )


def _block(name: str, xy, jitter=DEFAULT_JITTER) -> ObjectSpec:
    return ObjectSpec(name, Shape.CUBOID, BLOCK_HALF, xy, jitter)


def _tray() -> ObjectSpec:
    return ObjectSpec("tray", Shape.CUBOID, TRAY_HALF, TRAY_CENTER,
                      jitter=0.0, tags=frozenset({"container", "heavy"}))


def _distractors(positions) -> tuple[ObjectSpec, ...]:
    straw_xy, rubik_xy = positions
    return (
        ObjectSpec("strawberry", Shape.CONICAL, STRAWBERRY_HALF, straw_xy,
                   tags=frozenset({"distractor"})),
        ObjectSpec("rubik's cube", Shape.CUBOID, RUBIK_HALF, rubik_xy,
                   tags=frozenset({"distractor"})),
    )


_PUSH_REGIONS = (
    RegionSpec("start_zone", START_ZONE_CENTER, REGION_HALF),
    RegionSpec("white_area", WHITE_AREA_CENTER, REGION_HALF),
)


def builtin_templates() -> dict[str, SceneTemplate]:
    templates = [
        SceneTemplate(
            "push_block",
            objects=(_block("yellow block", START_ZONE_CENTER),),
            regions=_PUSH_REGIONS,
        ),
        SceneTemplate(
            "push_block_distractors",
            objects=(_block("yellow block", START_ZONE_CENTER),)
            + _distractors(((-0.10, -0.08), (0.10, -0.06))),
            regions=_PUSH_REGIONS,
        ),
        SceneTemplate(
            "large_container_cup",
            objects=(
                ObjectSpec("cup", Shape.CYLINDRICAL, CUP_HALF, CUP_HOME_CENTER,
                           jitter=DEFAULT_JITTER),
                _tray(),
            ),
            regions=(RegionSpec("cup_home", CUP_HOME_CENTER, HOME_HALF),),
        ),
        SceneTemplate(
            "large_container_block",
            objects=(
                _block("green block", BLOCK_HOME_CENTER),
                _tray(),
            ),
            regions=(RegionSpec("block_home", BLOCK_HOME_CENTER, HOME_HALF),),
        ),
        SceneTemplate(
            "large_container_laptop",
            objects=(
                ObjectSpec("laptop", Shape.ARTICULATED, LAPTOP_HALF,
                           LAPTOP_HOME_CENTER, jitter=DEFAULT_JITTER,
                           tags=frozenset({"articulated"}), lid_angle=0.0),
                _tray(),
            ),
            regions=(RegionSpec("laptop_home", LAPTOP_HOME_CENTER, HOME_HALF),),
        ),
        SceneTemplate(
            "pick_lemon",
            objects=(
                ObjectSpec("lemon", Shape.OVAL, BALL_HALF, LEMON_HOME_CENTER,
                           jitter=DEFAULT_JITTER),
            ),
            regions=(
                RegionSpec("lemon_home", LEMON_HOME_CENTER, HOME_HALF),
                RegionSpec("lemon_target", LEMON_TARGET_CENTER, HOME_HALF),
            ),
        ),
        SceneTemplate(
            "pick_distractors",
            objects=(
                ObjectSpec("lemon", Shape.OVAL, BALL_HALF, LEMON_HOME_CENTER,
                           jitter=DEFAULT_JITTER),
            ) + _distractors(((0.02, 0.10), (-0.02, 0.16))),
            regions=(
                RegionSpec("lemon_home", LEMON_HOME_CENTER, HOME_HALF),
                RegionSpec("lemon_target", LEMON_TARGET_CENTER, HOME_HALF),
            ),
        ),
        SceneTemplate(
            "grasp_ball",
            objects=(
                ObjectSpec("grip ball", Shape.OVAL, BALL_HALF, LEMON_HOME_CENTER,
                           jitter=DEFAULT_JITTER),
            ),
            regions=(
                RegionSpec("ball_home", LEMON_HOME_CENTER, HOME_HALF),
                RegionSpec("ball_target", LEMON_TARGET_CENTER, HOME_HALF),
            ),
        ),
        SceneTemplate(
            "stack_block",
            objects=(
                _block("yellow block", WHITE_AREA_CENTER),
                _block("red block", RED_HOME_CENTER),
            ),
            regions=(RegionSpec("red_home", RED_HOME_CENTER, REGION_HALF),),
        ),
        SceneTemplate(
            "push_stack",
            objects=(
                _block("yellow block", START_ZONE_CENTER),
                _block("red block", RED_HOME_CENTER),
            ),
            regions=_PUSH_REGIONS
            + (RegionSpec("red_home", RED_HOME_CENTER, REGION_HALF),),
        ),
        SceneTemplate(
            "push_stack_distractors",
            objects=(
                _block("yellow block", START_ZONE_CENTER),
                _block("red block", RED_HOME_CENTER),
            ) + _distractors(((-0.10, -0.08), (0.20, -0.02))),
            regions=_PUSH_REGIONS
            + (RegionSpec("red_home", RED_HOME_CENTER, REGION_HALF),),
        ),
        SceneTemplate(
            "close_box",
            objects=(
                ObjectSpec("box", Shape.ARTICULATED, BOX_HALF, BOX_CENTER,
                           jitter=DEFAULT_JITTER,
                           tags=frozenset({"articulated"}),
                           lid_angle=LID_OPEN_INIT),
            ),
        ),
        SceneTemplate(
            "open_box",
            objects=(
                ObjectSpec("box", Shape.ARTICULATED, BOX_HALF, BOX_CENTER,
                           jitter=DEFAULT_JITTER,
                           tags=frozenset({"articulated"}), lid_angle=0.0),
            ),
        ),
        SceneTemplate(
            "close_open_box",
            objects=(
                ObjectSpec("box", Shape.ARTICULATED, BOX_HALF, BOX_CENTER,
                           jitter=DEFAULT_JITTER,
                           tags=frozenset({"articulated"}),
                           lid_angle=LID_OPEN_INIT),
            ),
        ),
        SceneTemplate(
            "fold_towel",
            objects=(
                ObjectSpec("towel", Shape.FLAT, BOX_HALF, BOX_CENTER,
                           jitter=DEFAULT_JITTER,
                           tags=frozenset({"articulated"}),
                           lid_angle=LID_OPEN_INIT),
            ),
        ),
        SceneTemplate(
            "laptop_cup_tray",
            objects=(
                ObjectSpec("laptop", Shape.ARTICULATED, LAPTOP_HALF,
                           LAPTOP_HOME_CENTER, jitter=DEFAULT_JITTER,
                           tags=frozenset({"articulated"}), lid_angle=0.0),
                ObjectSpec("cup", Shape.CYLINDRICAL, CUP_HALF, CUP_HOME_CENTER,
                           jitter=DEFAULT_JITTER),
                _tray(),
            ),
            regions=(
                RegionSpec("laptop_home", LAPTOP_HOME_CENTER, HOME_HALF),
                RegionSpec("cup_home", CUP_HOME_CENTER, HOME_HALF),
            ),
        ),
    ]
    return {t.name: t for t in templates}


@dataclass
class TemplateRegistry:
    templates: dict[str, SceneTemplate] = field(default_factory=builtin_templates)

    def get(self, name: str) -> SceneTemplate:
        try:
            return self.templates[name]
        except KeyError:
            raise KeyError(f"unknown scene template {name!r}") from None

    def register(self, template: SceneTemplate) -> None:
        self.templates[template.name] = template

    def names(self) -> list[str]:
        return sorted(self.templates)


def save_templates(registry: TemplateRegistry, path) -> None:
    payload = {"templates": [registry.templates[n].to_dict()
                             for n in sorted(registry.templates)]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_templates(path) -> TemplateRegistry:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    reg = TemplateRegistry(templates={})
    for entry in payload["templates"]:
        reg.register(SceneTemplate.from_dict(entry))
    return reg
