"""Hierarchical task planning over a pluggable reasoner backend.

Covers semantic grounding (with hard-constraint enforcement), forward
planning across the three scene regimes, simultaneous reverse planning under
the last-in-first-out undo constraint, and plan validation. The oracle
backend replaces a vision-language reasoner with a deterministic rule table
keyed by scene template.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .library import (
    INVERSE_VERB,
    AffordanceLibrary,
    ObjectDescriptor,
    Shape,
    Verb,
    score_similarity,
)
from .sim import SceneDescription, WorldState

DEFAULT_RETRIEVAL = 3


class PlannerError(Exception):
    pass


class GroundingError(PlannerError):
    """Backend named an object that is not visible in the observation."""


class PlanningFailure(PlannerError):
    """No structurally valid plan after the allowed retries."""


class PlanMode(str, Enum):
    ATOMIC_SIMPLE = "atomic_simple"
    ATOMIC_CLUTTERED = "atomic_cluttered"
    LONG_HORIZON = "long_horizon"


@dataclass(frozen=True)
class GroundedScene:
    """Descriptors paired with simulator object ids; the planning hard constraint."""

    items: tuple[tuple[ObjectDescriptor, int], ...]

    def names(self) -> list[str]:
        return [d.name for d, _ in self.items]

    def lookup(self, name: str) -> tuple[ObjectDescriptor, int]:
        for descriptor, obj_id in self.items:
            if descriptor.name == name:
                return descriptor, obj_id
        raise GroundingError(f"object {name!r} is not grounded in the scene")


@dataclass(frozen=True)
class ActionRef:
    id: int
    name: str


@dataclass(frozen=True)
class PlanAction:
    """Atomic action triple: verb, subject, optional destination."""

    verb: Verb
    subject: ActionRef
    dest_object: ActionRef | None = None
    dest_region: str | None = None

    def dest_name(self) -> str | None:
        if self.dest_object is not None:
            return self.dest_object.name
        return self.dest_region

    def to_dict(self) -> dict:
        d = {"verb": self.verb.value, "subject": self.subject.name}
        if self.dest_object is not None:
            d["dest_object"] = self.dest_object.name
        if self.dest_region is not None:
            d["dest_region"] = self.dest_region
        return d


@dataclass(frozen=True)
class Subtask:
    action: PlanAction
    demo_id: str
    description: str
    mask: frozenset[int]

    def __post_init__(self):
        if not self.mask:
            raise PlannerError("subtask mask may not be empty")
        if self.action.subject.id not in self.mask:
            raise PlannerError("subtask subject must be inside its mask")


@dataclass(frozen=True)
class TaskPlan:
    forward: tuple[Subtask, ...]
    reverse: tuple[Subtask, ...]
    scene: GroundedScene
    mode: PlanMode

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "forward": [
                {**s.action.to_dict(), "demo_id": s.demo_id,
                 "description": s.description, "mask": sorted(s.mask)}
                for s in self.forward
            ],
            "reverse": [
                {**s.action.to_dict(), "demo_id": s.demo_id,
                 "description": s.description, "mask": sorted(s.mask)}
                for s in self.reverse
            ],
        }


def inverse_skill(verb: Verb) -> Verb:
    return INVERSE_VERB[verb]


def _subject_key(action: PlanAction) -> str:
    return action.subject.name


def validate_lifo(plan) -> list[tuple[int, str]]:
    """Check that reverse step j undoes forward step N-j+1. Empty == valid.

    Accepts anything exposing .forward/.reverse sequences of Subtask or
    PlanAction entries.
    """
    def action_of(entry) -> PlanAction:
        return entry.action if isinstance(entry, Subtask) else entry

    forward = [action_of(e) for e in plan.forward]
    reverse = [action_of(e) for e in plan.reverse]
    violations: list[tuple[int, str]] = []
    n = len(forward)
    if n != len(reverse):
        violations.append(
            (0, f"forward has {n} subtasks but reverse has {len(reverse)}"))
        return violations
    if n == 0:
        violations.append((0, "plan is empty"))
        return violations
    for j in range(1, n + 1):
        fwd = forward[n - j]          # forward step i = N - j + 1, 1-based
        rev = reverse[j - 1]
        expected = inverse_skill(fwd.verb)
        reasons = []
        if rev.verb != expected:
            reasons.append(
                f"verb {rev.verb.value!r} does not undo forward step "
                f"{n - j + 1} ({fwd.verb.value!r}; expected {expected.value!r})")
        if _subject_key(rev) != _subject_key(fwd):
            reasons.append(
                f"acts on {_subject_key(rev)!r} but forward step {n - j + 1} "
                f"acted on {_subject_key(fwd)!r}")
        if reasons:
            violations.append((j, "; ".join(reasons)))
    return violations


def ground_objects(backend, obs: SceneDescription) -> GroundedScene:
    """Ground the backend's item list against the observation, enforcing the
    visibility hard constraint."""
    raw_items = backend.ground(obs)
    visible = {e.name: e for e in obs.entries}
    items = []
    seen = set()
    for entry in raw_items:
        name = str(entry["name"])
        if name not in visible:
            raise GroundingError(
                f"backend grounded {name!r}, which is not in the observation")
        if name in seen:
            raise GroundingError(f"backend grounded {name!r} twice")
        seen.add(name)
        shape = Shape(entry["shape"])
        if obs.world is not None:
            obj_id = obs.world.find(name).id
        else:
            obj_id = obs.names().index(name) + 1
        items.append((ObjectDescriptor(name, shape), obj_id))
    return GroundedScene(tuple(items))


def _resolve_action(raw: dict, scene: GroundedScene) -> PlanAction:
    verb = Verb(raw["verb"])
    descriptor, obj_id = scene.lookup(str(raw["subject"]))
    dest_object = None
    dest_region = None
    if raw.get("dest_object"):
        d_desc, d_id = scene.lookup(str(raw["dest_object"]))
        dest_object = ActionRef(d_id, d_desc.name)
    if raw.get("dest_region"):
        dest_region = str(raw["dest_region"])
    return PlanAction(verb, ActionRef(obj_id, descriptor.name),
                      dest_object, dest_region)


def _build_subtask(raw: dict, scene: GroundedScene, lib: AffordanceLibrary,
                   backend, r: int) -> Subtask:
    action = _resolve_action(raw, scene)
    descriptor, _ = scene.lookup(action.subject.name)
    query = (action.verb, descriptor)
    candidates = lib.retrieve_ranked(query, r=r)
    if not candidates:
        raise PlanningFailure("retrieval returned no demonstrations")
    ordering = backend.rank(query, candidates)
    by_id = {d.id: d for d in candidates}
    ranked = [by_id[i] for i in ordering if i in by_id] or candidates
    demo = ranked[0]
    mask = {action.subject.id}
    if action.dest_object is not None:
        mask.add(action.dest_object.id)
    return Subtask(action=action, demo_id=demo.id,
                   description=str(raw.get("description", "")) or
                   f"{action.verb.value} the {action.subject.name}",
                   mask=frozenset(mask))


def plan_task(backend, obs: SceneDescription, scene: GroundedScene,
              lib: AffordanceLibrary, mode: PlanMode | None = None,
              r: int = DEFAULT_RETRIEVAL, retries: int = 1) -> TaskPlan:
    """Ask the backend for a forward/reverse plan and harden it into a TaskPlan.

    A structurally invalid response (bad schema, ungrounded object, broken
    undo ordering, failed retrieval) costs one re-query; a second failure
    raises PlanningFailure and leaves the orchestrator in its planning state.
    """
    if not scene.items:
        raise PlanningFailure("cannot plan over an empty grounded scene")
    if len(lib) == 0:
        raise PlanningFailure("cannot plan with an empty demonstration library")

    last_error: Exception | None = None
    for _ in range(retries + 1):
        try:
            raw = backend.plan(obs, scene, library_summary(lib))
            plan_mode = PlanMode(raw.get("mode", mode.value if mode else
                                         PlanMode.ATOMIC_SIMPLE.value))
            forward = tuple(_build_subtask(s, scene, lib, backend, r)
                            for s in raw["forward"])
            reverse = tuple(_build_subtask(s, scene, lib, backend, r)
                            for s in raw["reverse"])
            if not forward:
                raise PlanningFailure("forward plan is empty")
            plan = TaskPlan(forward, reverse, scene, plan_mode)
            violations = validate_lifo(plan)
            if violations:
                raise PlanningFailure(
                    f"undo-order violations: {violations}")
            return plan
        except (KeyError, TypeError, ValueError, PlannerError) as e:
            last_error = e
    raise PlanningFailure(f"no valid plan after retry: {last_error}")


def library_summary(lib: AffordanceLibrary) -> list[dict]:
    return [
        {"id": d.id, "verb": d.skill_verb.value, "target": d.target.to_dict()}
        for d in lib.demos.values()
    ]


# --- oracle backend -------------------------------------------------------

@dataclass(frozen=True)
class _Rule:
    mode: PlanMode
    mask: tuple[str, ...]
    forward: tuple[dict, ...]
    reverse: tuple[dict, ...]


def _act(verb: str, subject: str, description: str, dest_object: str | None = None,
         dest_region: str | None = None) -> dict:
    d = {"verb": verb, "subject": subject, "description": description}
    if dest_object:
        d["dest_object"] = dest_object
    if dest_region:
        d["dest_region"] = dest_region
    return d


def _container_rule(subject: str, home_region: str, cluttered=False) -> _Rule:
    return _Rule(
        mode=PlanMode.ATOMIC_CLUTTERED if cluttered else PlanMode.ATOMIC_SIMPLE,
        mask=(subject, "tray"),
        forward=(_act("place", subject, f"put the {subject} into the tray",
                      dest_object="tray"),),
        reverse=(_act("pick", subject,
                      f"take the {subject} out of the tray and put it back",
                      dest_region=home_region),),
    )


_PUSH_FWD = _act("push_in", "yellow block",
                 "push the yellow block into the white area",
                 dest_region="white_area")
_PUSH_REV = _act("push_out", "yellow block",
                 "push the yellow block out of the white area",
                 dest_region="start_zone")
_STACK_FWD = _act("stack", "red block", "stack the red block on the yellow block",
                  dest_object="yellow block")
_STACK_REV = _act("unstack", "red block", "put the red block on the table",
                  dest_region="red_home")

_RULES: dict[str, _Rule] = {
    "push_block": _Rule(PlanMode.ATOMIC_SIMPLE, ("yellow block",),
                        (_PUSH_FWD,), (_PUSH_REV,)),
    "push_block_distractors": _Rule(PlanMode.ATOMIC_CLUTTERED, ("yellow block",),
                                    (_PUSH_FWD,), (_PUSH_REV,)),
    "large_container_cup": _container_rule("cup", "cup_home"),
    "large_container_block": _container_rule("green block", "block_home"),
    "large_container_laptop": _container_rule("laptop", "laptop_home"),
    "pick_lemon": _Rule(
        PlanMode.ATOMIC_SIMPLE, ("lemon",),
        (_act("pick", "lemon", "pick up the lemon and move it to the target area",
              dest_region="lemon_target"),),
        (_act("place", "lemon", "place the lemon back at its home area",
              dest_region="lemon_home"),),
    ),
    "pick_distractors": _Rule(
        PlanMode.ATOMIC_CLUTTERED, ("lemon",),
        (_act("pick", "lemon", "pick up the lemon and move it to the target area",
              dest_region="lemon_target"),),
        (_act("place", "lemon", "place the lemon back at its home area",
              dest_region="lemon_home"),),
    ),
    "grasp_ball": _Rule(
        PlanMode.ATOMIC_SIMPLE, ("grip ball",),
        (_act("pick", "grip ball", "pick up the grip ball and move it to the target",
              dest_region="ball_target"),),
        (_act("place", "grip ball", "place the grip ball back at its home",
              dest_region="ball_home"),),
    ),
    "stack_block": _Rule(PlanMode.ATOMIC_SIMPLE, ("red block", "yellow block"),
                         (_STACK_FWD,), (_STACK_REV,)),
    "close_box": _Rule(PlanMode.ATOMIC_SIMPLE, ("box",),
                       (_act("close", "box", "close the box"),),
                       (_act("open", "box", "open the box"),)),
    "open_box": _Rule(PlanMode.ATOMIC_SIMPLE, ("box",),
                      (_act("open", "box", "open the box"),),
                      (_act("close", "box", "close the box"),)),
    "fold_towel": _Rule(PlanMode.ATOMIC_SIMPLE, ("towel",),
                        (_act("fold", "towel", "fold the towel"),),
                        (_act("unfold", "towel", "unfold the towel"),)),
    "push_stack": _Rule(PlanMode.LONG_HORIZON, ("yellow block", "red block"),
                        (_PUSH_FWD, _STACK_FWD), (_STACK_REV, _PUSH_REV)),
    "push_stack_distractors": _Rule(PlanMode.LONG_HORIZON,
                                    ("yellow block", "red block"),
                                    (_PUSH_FWD, _STACK_FWD),
                                    (_STACK_REV, _PUSH_REV)),
    "close_open_box": _Rule(
        PlanMode.LONG_HORIZON, ("box",),
        (_act("close", "box", "close the box"),
         _act("open", "box", "open the box")),
        (_act("close", "box", "close the box again"),
         _act("open", "box", "open the box back up")),
    ),
    "laptop_cup_tray": _Rule(
        PlanMode.LONG_HORIZON, ("laptop", "cup", "tray"),
        (_act("place", "laptop", "put the laptop into the tray",
              dest_object="tray"),
         _act("place", "cup", "put the cup into the tray", dest_object="tray")),
        (_act("pick", "cup", "take the cup out of the tray and put it back",
              dest_region="cup_home"),
         _act("pick", "laptop", "take the laptop out of the tray and put it back",
              dest_region="laptop_home")),
    ),
}


@dataclass
class OracleReasoner:
    """Deterministic stand-in for a vision-language reasoner.

    Grounding reads the structured observation verbatim; planning looks up a
    rule for the scene's template; ranking reuses the library similarity
    score, so retrieval order is untouched.
    """

    world: WorldState
    seed: int = 0
    plan_calls: int = field(default=0, init=False)

    def ground(self, obs: SceneDescription) -> list[dict]:
        return [{"name": e.name, "shape": e.shape.value} for e in obs.entries]

    def plan(self, obs: SceneDescription, scene: GroundedScene,
             lib_summary) -> dict:
        self.plan_calls += 1
        rule = _RULES.get(self.world.template)
        if rule is None:
            raise PlanningFailure(
                f"no planning rule for scene template {self.world.template!r}")
        return {
            "mode": rule.mode.value,
            "mask": list(rule.mask),
            "forward": [dict(a) for a in rule.forward],
            "reverse": [dict(a) for a in rule.reverse],
        }

    def rank(self, query, candidates) -> list[str]:
        return [d.id for d in sorted(
            candidates, key=lambda d: (-score_similarity(query, d), d.id))]


def oracle_backend(world: WorldState, seed: int = 0) -> OracleReasoner:
    return OracleReasoner(world=world, seed=seed)
