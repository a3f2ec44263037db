"""Finite-state orchestration of the collection loop.

Physical execution states (task planning, forward execution, reverse
execution) are strictly separated from the storage actions triggered on
transitions: a full success loops B -> C -> B and stores both trajectories,
a failed reset routes B -> C -> A keeping only the forward trajectory, and a
failed forward execution discards the episode outright. The success loop
reuses the same plan without re-querying the planner, up to a repetition cap.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .config import CampaignConfig
from .dataset import DatasetWriter, SubtaskTrace
from .demos import DENSE_STEP
from .evaluator import EvaluatorBackends, evaluate, oracle_evaluator
from .geometry import Pose
from .library import (
    AffordanceLibrary,
    Demonstration,
    DemonstrationStep,
    load_library,
)
from .planner import (
    PlanningFailure,
    Subtask,
    TaskPlan,
    ground_objects,
    oracle_backend,
    plan_task,
)
from .policy import Observation, generate_actions, reference_factory
from .scenes import TemplateRegistry, load_templates
from .sim import (
    WorldState,
    apply_waypoint,
    describe_scene,
    inject_perturbation,
    render_point_cloud,
    spawn_scene,
    world_to_dict,
)


class FsmProtocolError(Exception):
    """Illegal (state, event) pair: a programming bug, not a runtime condition."""


class CampaignError(Exception):
    pass


class FsmState(Enum):
    A_TASK_PLANNING = "A"
    B_FORWARD_EXECUTION = "B"
    C_REVERSE_EXECUTION = "C"


class StorageAction(Enum):
    NONE = "none"
    DISCARD = "discard"
    DUAL = "dual"
    SINGLE = "single"


@dataclass(frozen=True)
class PlanReady:
    pass


@dataclass(frozen=True)
class PlanFailed:
    pass


@dataclass(frozen=True)
class ForwardResult:
    success: bool


@dataclass(frozen=True)
class ReverseResult:
    success: bool


@dataclass(frozen=True)
class RepetitionCapReached:
    pass


FsmEvent = PlanReady | PlanFailed | ForwardResult | ReverseResult | RepetitionCapReached


def step_fsm(state: FsmState, event: FsmEvent) -> tuple[FsmState, StorageAction]:
    """The full transition table; anything missing is a protocol error."""
    if state is FsmState.A_TASK_PLANNING:
        if isinstance(event, PlanReady):
            return FsmState.B_FORWARD_EXECUTION, StorageAction.NONE
        if isinstance(event, PlanFailed):
            return FsmState.A_TASK_PLANNING, StorageAction.NONE
    elif state is FsmState.B_FORWARD_EXECUTION:
        if isinstance(event, ForwardResult):
            if event.success:
                return FsmState.C_REVERSE_EXECUTION, StorageAction.NONE
            return FsmState.A_TASK_PLANNING, StorageAction.DISCARD
        if isinstance(event, RepetitionCapReached):
            return FsmState.A_TASK_PLANNING, StorageAction.NONE
    elif state is FsmState.C_REVERSE_EXECUTION:
        if isinstance(event, ReverseResult):
            if event.success:
                return FsmState.B_FORWARD_EXECUTION, StorageAction.DUAL
            return FsmState.A_TASK_PLANNING, StorageAction.SINGLE
    raise FsmProtocolError(
        f"illegal event {type(event).__name__} in state {state.name}")


# --- execution ---------------------------------------------------------------

@dataclass
class Runtime:
    """Bound modules and knobs one campaign worker executes with."""

    library: AffordanceLibrary
    schedule: object
    evaluator: EvaluatorBackends
    masking: bool = True
    horizon: int = 8
    copy_gripper: bool = False
    collect_harvest_clouds: bool = False

    @staticmethod
    def from_config(cfg: CampaignConfig, library: AffordanceLibrary) -> "Runtime":
        return Runtime(
            library=library,
            schedule=cfg.schedule.build(),
            evaluator=oracle_evaluator(),
            masking=cfg.masking,
            horizon=cfg.horizon,
            copy_gripper=cfg.copy_gripper,
            collect_harvest_clouds=cfg.harvest_to_library,
        )


@dataclass
class ExecutedSubtask:
    subtask: Subtask
    waypoints: list[tuple[Pose, int]]
    success: bool
    flagged: bool
    query: str | None
    assessment: str | None
    harvest_steps: list[DemonstrationStep] = field(default_factory=list)

    def to_trace(self) -> SubtaskTrace:
        return SubtaskTrace(
            action=self.subtask.action.to_dict(),
            demo_id=self.subtask.demo_id,
            description=self.subtask.description,
            mask=tuple(sorted(self.subtask.mask)),
            waypoints=tuple(self.waypoints),
            success=self.success,
            flagged=self.flagged,
            query=self.query,
            assessment=self.assessment,
        )


@dataclass
class EpisodeRecord:
    template: str
    plan: TaskPlan
    initial_world: dict
    forward: list[ExecutedSubtask]
    reverse: list[ExecutedSubtask]
    forward_success: bool
    reverse_success: bool | None
    storage: StorageAction
    next_state: FsmState
    episode_seed: int
    spawn_seed: int
    wall_time: float

    def entered_reverse(self) -> bool:
        return self.reverse_success is not None


def _interpolate(start: Pose, end: Pose, start_gripper: int,
                 end_gripper: int) -> list[tuple[Pose, int]]:
    """Dense waypoints from start (exclusive) to end; the commanded gripper
    bit applies only at the final waypoint."""
    delta = end.translation - start.translation
    dist = float(np.linalg.norm(delta))
    n = max(1, int(np.ceil(dist / DENSE_STEP)))
    out = []
    for i in range(1, n + 1):
        t = start.translation + delta * (i / n)
        pose = Pose(t, end.rotation) if i == n else Pose(t, start.rotation)
        out.append((pose, end_gripper if i == n else start_gripper))
    return out


def execute_subtask(world: WorldState, subtask: Subtask, runtime: Runtime,
                    rng: np.random.Generator) -> tuple[WorldState, ExecutedSubtask]:
    """Generate actions for one subtask and drive them through the simulator."""
    demo = runtime.library.get(subtask.demo_id)
    mask = set(subtask.mask) if runtime.masking else None
    cloud = render_point_cloud(world, mask=mask)
    obs = Observation(cloud, world.ee_pose, world.gripper)
    executed = ExecutedSubtask(subtask=subtask, waypoints=[], success=False,
                               flagged=False, query=None, assessment=None)
    actions, _ = generate_actions(
        demo, obs, runtime.schedule,
        reference_factory(target_label=subtask.action.subject.id),
        rng, horizon=runtime.horizon, copy_gripper=runtime.copy_gripper)

    def observe_harvest(w: WorldState, pose: Pose, gripper: int):
        if runtime.collect_harvest_clouds:
            harvest_cloud = render_point_cloud(w, mask=set(subtask.mask),
                                               table_points=0)
            executed.harvest_steps.append(
                DemonstrationStep(harvest_cloud, pose, gripper))

    for pose, bit in zip(actions.poses, actions.gripper_bits()):
        for sub_pose, sub_bit in _interpolate(world.ee_pose, pose,
                                              world.gripper, int(bit)):
            world = apply_waypoint(world, sub_pose, sub_bit)
            executed.waypoints.append((sub_pose, sub_bit))
            observe_harvest(world, sub_pose, sub_bit)
    return world, executed


def _run_phase(world: WorldState, subtasks, runtime: Runtime,
               rng: np.random.Generator, perturb) -> tuple[WorldState, list, bool]:
    """Execute subtasks in order with early abort; returns (world, executed, ok)."""
    executed = []
    for subtask in subtasks:
        try:
            world, record = execute_subtask(world, subtask, runtime, rng)
        except Exception:
            record = ExecutedSubtask(subtask=subtask, waypoints=[],
                                     success=False, flagged=True,
                                     query=None, assessment=None)
            executed.append(record)
            return world, executed, False
        if perturb is not None and perturb.p > 0:
            world = inject_perturbation(world, perturb.p, perturb.sigma, rng)
        signal = evaluate(runtime.evaluator, subtask.description,
                          subtask.action, describe_scene(world))
        record.success = signal.value
        record.flagged = signal.flagged
        if signal.stage_log.query is not None:
            record.query = signal.stage_log.query.text
        if signal.stage_log.assessment is not None:
            record.assessment = signal.stage_log.assessment.text
        executed.append(record)
        if not signal.value:
            return world, executed, False
    return world, executed, True


def run_episode(world: WorldState, plan: TaskPlan, runtime: Runtime,
                rng: np.random.Generator, perturb_forward=None,
                perturb_reverse=None, episode_seed: int = 0,
                spawn_seed: int = 0) -> tuple[EpisodeRecord, WorldState]:
    """One forward(+reverse) pass starting in forward-execution state.

    The FSM is driven by the evaluator verdicts; module errors become failure
    events rather than campaign aborts. On a successful reset the same plan
    can be reused by the caller; on a failed reset the altered world is
    returned as-is.
    """
    started = time.monotonic()
    initial_world = world_to_dict(world)
    state = FsmState.B_FORWARD_EXECUTION

    world, forward_exec, forward_ok = _run_phase(
        world, plan.forward, runtime, rng, perturb_forward)
    state, storage = step_fsm(state, ForwardResult(forward_ok))

    reverse_exec: list[ExecutedSubtask] = []
    reverse_ok: bool | None = None
    if state is FsmState.C_REVERSE_EXECUTION:
        world, reverse_exec, reverse_ok = _run_phase(
            world, plan.reverse, runtime, rng, perturb_reverse)
        state, storage = step_fsm(state, ReverseResult(reverse_ok))

    record = EpisodeRecord(
        template=world.template,
        plan=plan,
        initial_world=initial_world,
        forward=forward_exec,
        reverse=reverse_exec,
        forward_success=forward_ok,
        reverse_success=reverse_ok,
        storage=storage,
        next_state=state,
        episode_seed=episode_seed,
        spawn_seed=spawn_seed,
        wall_time=time.monotonic() - started,
    )
    return record, world


# --- campaign ----------------------------------------------------------------

@dataclass
class TaskStats:
    episodes: int = 0
    forward_successes: int = 0
    reverse_entries: int = 0
    dual: int = 0
    single: int = 0
    discarded: int = 0

    @property
    def p_forward(self) -> float:
        return self.forward_successes / self.episodes if self.episodes else 0.0

    @property
    def p_reverse(self) -> float:
        return self.dual / self.reverse_entries if self.reverse_entries else 0.0

    @property
    def p_total(self) -> float:
        return self.dual / self.episodes if self.episodes else 0.0


@dataclass
class CampaignStats:
    per_task: dict[str, TaskStats] = field(default_factory=dict)
    plans_requested: int = 0
    planning_failures: int = 0
    success_loops: int = 0      # B -> C -> B
    recovery_loops: int = 0     # B -> C -> A
    forward_aborts: int = 0     # B -> A
    master_seed: int = 0

    def task(self, name: str) -> TaskStats:
        return self.per_task.setdefault(name, TaskStats())

    @property
    def episodes(self) -> int:
        return sum(t.episodes for t in self.per_task.values())

    @property
    def dual(self) -> int:
        return sum(t.dual for t in self.per_task.values())

    @property
    def single(self) -> int:
        return sum(t.single for t in self.per_task.values())

    @property
    def discarded(self) -> int:
        return sum(t.discarded for t in self.per_task.values())

    def reconciles(self) -> bool:
        return self.dual + self.single + self.discarded == self.episodes

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "episodes": self.episodes,
            "dual": self.dual,
            "single": self.single,
            "discarded": self.discarded,
            "plans_requested": self.plans_requested,
            "planning_failures": self.planning_failures,
            "success_loops": self.success_loops,
            "recovery_loops": self.recovery_loops,
            "forward_aborts": self.forward_aborts,
            "per_task": {
                name: {
                    "episodes": t.episodes,
                    "forward_successes": t.forward_successes,
                    "reverse_entries": t.reverse_entries,
                    "dual": t.dual,
                    "single": t.single,
                    "discarded": t.discarded,
                    "p_forward": round(t.p_forward, 6),
                    "p_reverse": round(t.p_reverse, 6),
                    "p_total": round(t.p_total, 6),
                }
                for name, t in sorted(self.per_task.items())
            },
        }

    def to_table(self) -> str:
        header = (f"{'Task':34s} {'Episodes':>8s} {'p_fwd':>7s} {'p_rev':>7s} "
                  f"{'p_total':>8s} {'dual':>6s} {'single':>7s} {'discard':>8s}")
        lines = [header, "-" * len(header)]
        for name, t in sorted(self.per_task.items()):
            lines.append(
                f"{name:34s} {t.episodes:8d} {t.p_forward:7.2f} "
                f"{t.p_reverse:7.2f} {t.p_total:8.2f} {t.dual:6d} "
                f"{t.single:7d} {t.discarded:8d}")
        lines.append("-" * len(header))
        lines.append(
            f"{'all tasks':34s} {self.episodes:8d} {'':7s} {'':7s} {'':8s} "
            f"{self.dual:6d} {self.single:7d} {self.discarded:8d}")
        return "\n".join(lines)


def compute_stats(records: list[EpisodeRecord],
                  master_seed: int = 0) -> CampaignStats:
    """Aggregate episode records; counts must reconcile by construction."""
    if not records:
        raise CampaignError("no episode records to aggregate")
    stats = CampaignStats(master_seed=master_seed)
    for record in records:
        t = stats.task(record.template)
        t.episodes += 1
        if record.forward_success:
            t.forward_successes += 1
        if record.entered_reverse():
            t.reverse_entries += 1
        if record.storage is StorageAction.DUAL:
            t.dual += 1
            stats.success_loops += 1
        elif record.storage is StorageAction.SINGLE:
            t.single += 1
            stats.recovery_loops += 1
        else:
            t.discarded += 1
            stats.forward_aborts += 1
    return stats


def _seed_for(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _append_library_file(path, demo: Demonstration) -> None:
    import json as _json

    with Path(path).open("a", encoding="utf-8") as f:
        f.write(_json.dumps(demo.to_record(), separators=(",", ":")))
        f.write("\n")


def _harvest(record: EpisodeRecord, episode_id: int, runtime: Runtime,
             cfg: CampaignConfig, scene_lookup) -> None:
    """Feed a dual episode's trajectories back into the library."""
    phases = [("fwd", record.forward)]
    if cfg.harvest_reverse:
        phases.append(("rev", record.reverse))
    for tag, executed in phases:
        for idx, ex in enumerate(executed):
            if not ex.harvest_steps or len(ex.harvest_steps) < 2:
                continue
            verb = ex.subtask.action.verb
            demo = Demonstration(
                id=f"harvest-{episode_id:06d}-{tag}-{idx}",
                skill_verb=verb,
                target=scene_lookup(ex.subtask.action.subject.name),
                steps=tuple(ex.harvest_steps),
                object_ids=tuple(sorted(ex.subtask.mask)),
                provenance="harvested",
            )
            runtime.library.append(demo)
            _append_library_file(cfg.library_path, demo)


def make_reasoner(cfg: CampaignConfig, world: WorldState, seed: int):
    if cfg.backend.kind == "oracle":
        return oracle_backend(world, seed)
    from .wire import ExternalReasoner, HttpWireClient

    client = HttpWireClient(cfg.backend.endpoint, cfg.backend.timeout_s,
                            cfg.backend.retries)
    return ExternalReasoner(client)


def make_evaluator(cfg: CampaignConfig) -> EvaluatorBackends:
    if cfg.evaluator_backend.kind == "oracle":
        return oracle_evaluator()
    from .wire import (ExternalAssessor, ExternalParser, ExternalTranslator,
                       HttpWireClient)

    client = HttpWireClient(cfg.evaluator_backend.endpoint,
                            cfg.evaluator_backend.timeout_s,
                            cfg.evaluator_backend.retries)
    return EvaluatorBackends(translator=ExternalTranslator(client),
                             assessor=ExternalAssessor(client),
                             parser=ExternalParser(client))


def run_campaign(cfg: CampaignConfig,
                 registry: TemplateRegistry | None = None,
                 keep_records: bool = False):
    """Execute the configured episode budget across scene templates.

    Returns (CampaignStats, records) where records is populated only when
    keep_records is set (campaigns can be large; at-rest data lives in the
    dataset file).
    """
    if registry is None:
        registry = (load_templates(cfg.templates_path) if cfg.templates_path
                    else TemplateRegistry())
    library = load_library(cfg.library_path)
    if len(library) == 0:
        raise CampaignError(f"library {cfg.library_path} is empty")
    library_hash = _file_hash(cfg.library_path)
    writer = DatasetWriter(cfg.dataset_path)
    runtime = Runtime.from_config(cfg, library)
    runtime.evaluator = make_evaluator(cfg)

    stats = CampaignStats(master_seed=cfg.master_seed)
    records: list[EpisodeRecord] = []

    for task_cfg in cfg.tasks:
        template = task_cfg.template
        task_stats = stats.task(template)
        episode_index = 0
        plan_cycle = 0
        state = FsmState.A_TASK_PLANNING
        world: WorldState | None = None
        plan: TaskPlan | None = None
        scene = None
        episodes_on_plan = 0
        consecutive_plan_failures = 0
        spawn_seed = 0

        while episode_index < task_cfg.episodes:
            if state is FsmState.A_TASK_PLANNING:
                if world is None or cfg.fresh_scene_each_plan:
                    spawn_seed = _seed_for("spawn", cfg.master_seed, template,
                                           plan_cycle)
                    world = spawn_scene(template, spawn_seed, registry=registry)
                plan_cycle += 1
                backend = make_reasoner(cfg, world, spawn_seed)
                stats.plans_requested += 1
                try:
                    obs = describe_scene(world)
                    scene = ground_objects(backend, obs)
                    plan = plan_task(backend, obs, scene, library,
                                     r=cfg.retrieval_r)
                except PlanningFailure as e:
                    stats.planning_failures += 1
                    consecutive_plan_failures += 1
                    state, _ = step_fsm(state, PlanFailed())
                    if consecutive_plan_failures >= 3:
                        raise CampaignError(
                            f"planning failed 3 times in a row on "
                            f"{template!r}: {e}") from e
                    continue
                consecutive_plan_failures = 0
                episodes_on_plan = 0
                state, _ = step_fsm(state, PlanReady())

            episode_seed = _seed_for("episode", cfg.master_seed, template,
                                     episode_index)
            rng = np.random.default_rng(episode_seed)
            record, world = run_episode(
                world, plan, runtime, rng,
                perturb_forward=cfg.perturb_forward,
                perturb_reverse=cfg.perturb_reverse,
                episode_seed=episode_seed, spawn_seed=spawn_seed)
            episode_index += 1
            episodes_on_plan += 1

            task_stats.episodes += 1
            if record.forward_success:
                task_stats.forward_successes += 1
            if record.entered_reverse():
                task_stats.reverse_entries += 1

            meta = {
                "task": template,
                "plan": plan.to_dict(),
                "initial_world": record.initial_world,
                "seeds": {"episode": record.episode_seed,
                          "spawn": record.spawn_seed},
                "library_hash": library_hash,
            }
            if record.storage is StorageAction.DUAL:
                task_stats.dual += 1
                stats.success_loops += 1
                episode_id = writer.store_dual(
                    [e.to_trace() for e in record.forward],
                    [e.to_trace() for e in record.reverse], meta)
                if cfg.harvest_to_library:
                    _harvest(record, episode_id, runtime, cfg,
                             lambda name: world.find(name).descriptor)
            elif record.storage is StorageAction.SINGLE:
                task_stats.single += 1
                stats.recovery_loops += 1
                writer.store_single([e.to_trace() for e in record.forward], meta)
            else:
                task_stats.discarded += 1
                stats.forward_aborts += 1

            if keep_records:
                records.append(record)

            state = record.next_state
            if state is FsmState.B_FORWARD_EXECUTION:
                if episodes_on_plan >= cfg.repetition_cap:
                    state, _ = step_fsm(state, RepetitionCapReached())
                    plan = None
                    if cfg.fresh_scene_each_plan:
                        world = None
            else:
                plan = None
                if cfg.fresh_scene_each_plan:
                    world = None

    if cfg.report_path:
        Path(cfg.report_path).write_text(stats.to_table() + "\n",
                                         encoding="utf-8")
    if cfg.summary_path:
        import json as _json

        Path(cfg.summary_path).write_text(
            _json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    return stats, records
