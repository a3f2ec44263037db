"""Acceptance criteria, one test per criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the PASS lines.
"""
import hashlib
import itertools
import json
import time

import numpy as np
import pytest

from autocollect.config import CampaignConfig, PerturbationConfig, TaskConfig
from autocollect.dataset import read_episodes, replay
from autocollect.demos import record_seed_demos, stage_into_container, stage_on_top
from autocollect.evaluator import (
    EvaluatorBackends,
    OracleAssessor,
    OracleParser,
    OracleTranslator,
    evaluate,
)
from autocollect.fsm import (
    ForwardResult,
    FsmProtocolError,
    FsmState,
    PlanFailed,
    PlanReady,
    RepetitionCapReached,
    ReverseResult,
    StorageAction,
    run_campaign,
    step_fsm,
)
from autocollect.geometry import Pose, pose_distance
from autocollect.library import Verb, load_library, save_library
from autocollect.planner import ActionRef, PlanAction, validate_lifo
from autocollect.policy import (
    DiffusionSchedule,
    Observation,
    default_schedule,
    generate_actions,
    reference_factory,
    warp_reference,
)
from autocollect.sim import (
    apply_waypoint,
    ground_truth,
    render_point_cloud,
    spawn_scene,
)

A = FsmState.A_TASK_PLANNING
B = FsmState.B_FORWARD_EXECUTION
C = FsmState.C_REVERSE_EXECUTION


@pytest.fixture(scope="module")
def lib():
    return record_seed_demos()


@pytest.fixture(scope="module")
def lib_file(tmp_path_factory, lib):
    path = tmp_path_factory.mktemp("acceptance") / "library.jsonl"
    save_library(lib, path)
    return path


def _pass(n: int, message: str) -> None:
    print(f"ACCEPTANCE {n}: PASS - {message}")


def _campaign(tmp_path, lib_file, name, tasks, **kwargs) -> CampaignConfig:
    return CampaignConfig(
        library_path=str(lib_file),
        dataset_path=str(tmp_path / f"{name}.jsonl"),
        tasks=tasks,
        **kwargs,
    )


def test_criterion_1_fsm_conformance():
    started = time.monotonic()
    expected = {
        (A, PlanReady()): (B, StorageAction.NONE),
        (A, PlanFailed()): (A, StorageAction.NONE),
        (B, ForwardResult(True)): (C, StorageAction.NONE),
        (B, ForwardResult(False)): (A, StorageAction.DISCARD),
        (B, RepetitionCapReached()): (A, StorageAction.NONE),
        (C, ReverseResult(True)): (B, StorageAction.DUAL),
        (C, ReverseResult(False)): (A, StorageAction.SINGLE),
    }
    events = [PlanReady(), PlanFailed(), ForwardResult(True),
              ForwardResult(False), ReverseResult(True), ReverseResult(False),
              RepetitionCapReached()]
    checked = 0
    for state in (A, B, C):
        for event in events:
            if (state, event) in expected:
                assert step_fsm(state, event) == expected[(state, event)]
            else:
                with pytest.raises(FsmProtocolError):
                    step_fsm(state, event)
            checked += 1
    elapsed = time.monotonic() - started
    assert checked == 21
    assert elapsed < 1.0
    _pass(1, f"all 21 (state, event) pairs conform in {elapsed:.3f}s")


def _distinct_plan(n: int):
    """Valid N-step plan with distinct (verb, subject) per step."""
    steps = [
        (Verb.PUSH_IN, "yellow block", {"dest_region": "white_area"}),
        (Verb.STACK, "red block", {}),
        (Verb.CLOSE, "box", {}),
        (Verb.PLACE, "cup", {"dest_region": "tray_spot"}),
    ][:n]
    forward = tuple(
        PlanAction(verb, ActionRef(i + 1, name), **extra)
        for i, (verb, name, extra) in enumerate(steps))
    from autocollect.planner import inverse_skill

    reverse = tuple(
        PlanAction(inverse_skill(a.verb), a.subject) for a in reversed(forward))

    class P:
        pass

    plan = P()
    plan.forward = forward
    plan.reverse = reverse
    return plan


def test_criterion_2_lifo_validator():
    started = time.monotonic()

    # the benchmark push-then-stack pair validates clean
    yellow, red = ActionRef(1, "yellow block"), ActionRef(2, "red block")

    class PushStack:
        forward = (PlanAction(Verb.PUSH_IN, yellow, dest_region="white_area"),
                   PlanAction(Verb.STACK, red, dest_object=yellow))
        reverse = (PlanAction(Verb.UNSTACK, red, dest_region="red_home"),
                   PlanAction(Verb.PUSH_OUT, yellow, dest_region="start_zone"))

    assert validate_lifo(PushStack) == []

    mutations = 0
    for n in range(1, 5):
        base = _distinct_plan(n)
        assert validate_lifo(base) == []
        for perm in itertools.permutations(range(n)):
            if perm == tuple(range(n)):
                continue
            mutated = _distinct_plan(n)
            mutated.reverse = tuple(base.reverse[i] for i in perm)
            violations = validate_lifo(mutated)
            assert violations, f"N={n} permutation {perm} slipped through"
            mutations += 1
        # single swaps explicitly (subset of the permutations above)
        for i, j in itertools.combinations(range(n), 2):
            mutated = _distinct_plan(n)
            rev = list(base.reverse)
            rev[i], rev[j] = rev[j], rev[i]
            mutated.reverse = tuple(rev)
            assert validate_lifo(mutated)
            mutations += 1
    elapsed = time.monotonic() - started
    assert elapsed < 5.0
    _pass(2, f"{mutations} mutations all rejected in {elapsed:.2f}s")


def test_criterion_3_denoiser_convergence(lib):
    cases = [
        ("push_block", "yellow block", "seed-push_in-block-000"),
        ("pick_lemon", "lemon", "seed-pick-grip-ball-000"),
        ("grasp_ball", "grip ball", "seed-pick-grip-ball-000"),
        ("close_box", "box", "seed-close-box-000"),
        ("open_box", "box", "seed-open-box-000"),
    ]
    schedule = default_schedule(steps=16, gamma=0.5, sigma0=0.0)
    checked = 0
    for template, subject, demo_id in cases:
        demo = lib.get(demo_id)
        for seed in range(20):
            world = spawn_scene(template, seed=seed)
            target = world.find(subject)
            cloud = render_point_cloud(world, mask={target.id})
            obs = Observation(cloud, world.ee_pose, world.gripper)
            a_star = warp_reference(demo, obs, horizon=8)
            actions, _ = generate_actions(
                demo, obs, schedule, reference_factory(target.id),
                np.random.default_rng(seed), horizon=8)
            for got, want in zip(actions.poses, a_star.poses):
                dt, dr = pose_distance(got, want)
                assert dt <= 1e-3 and dr <= 1e-3
            checked += 1
    assert checked == 100

    # analytic one-step case is exact
    one = DiffusionSchedule(alphas=np.ones(1), gammas=np.ones(1),
                            sigmas=np.zeros(1))
    demo = lib.get("seed-push_in-block-000")
    for seed in range(10):
        world = spawn_scene("push_block", seed=seed)
        target = world.find("yellow block")
        obs = Observation(render_point_cloud(world, mask={target.id}),
                          world.ee_pose, world.gripper)
        a_star = warp_reference(demo, obs, horizon=8)
        actions, _ = generate_actions(demo, obs, one, reference_factory(target.id),
                                      np.random.default_rng(seed), horizon=8)
        assert np.max(np.abs(actions.encode() - a_star.encode())) <= 1e-12
    _pass(3, "100 scenes converge within 1e-3; one-step jump exact to 1e-12")


def test_criterion_4_masking_property(tmp_path, lib, lib_file):
    started = time.monotonic()

    # bit-identical actions: masked distractor scene vs distractor-free scene
    demo = lib.get("seed-push_in-block-000")
    schedule = default_schedule()
    for seed in range(10):
        clean = spawn_scene("push_block", seed=seed)
        clutter = spawn_scene("push_block_distractors", seed=seed)
        target = clean.find("yellow block").id
        obs_clean = Observation(render_point_cloud(clean, mask={target}),
                                clean.ee_pose, clean.gripper)
        obs_masked = Observation(render_point_cloud(clutter, mask={target}),
                                 clutter.ee_pose, clutter.gripper)
        a_clean, _ = generate_actions(demo, obs_clean, schedule,
                                      reference_factory(target),
                                      np.random.default_rng(seed), horizon=8)
        a_masked, _ = generate_actions(demo, obs_masked, schedule,
                                       reference_factory(target),
                                       np.random.default_rng(seed), horizon=8)
        assert np.array_equal(a_clean.encode(), a_masked.encode())

    # campaign direction: masked succeeds, unmasked collapses
    tasks = [TaskConfig("push_block_distractors", 100),
             TaskConfig("pick_distractors", 100)]
    masked_cfg = _campaign(tmp_path, lib_file, "masked", tasks, master_seed=21)
    unmasked_cfg = _campaign(tmp_path, lib_file, "unmasked", tasks,
                             master_seed=21, masking=False)
    masked_stats, _ = run_campaign(masked_cfg)
    unmasked_stats, _ = run_campaign(unmasked_cfg)
    for task in ("push_block_distractors", "pick_distractors"):
        assert masked_stats.per_task[task].p_forward == 1.0, task
        assert unmasked_stats.per_task[task].p_forward < 0.5, task
    elapsed = time.monotonic() - started
    assert elapsed < 120.0
    _pass(4, "masked actions bit-identical; unmasked success "
             f"{unmasked_stats.per_task['push_block_distractors'].p_forward:.2f}"
             f"/{unmasked_stats.per_task['pick_distractors'].p_forward:.2f}, "
             f"masked 1.00/1.00 in {elapsed:.1f}s")


def test_criterion_5_compounding_reset_failure(tmp_path, lib_file):
    started = time.monotonic()
    cfg = _campaign(
        tmp_path, lib_file, "compounding",
        [TaskConfig("push_block", 1000)],
        perturb_forward=PerturbationConfig(p=0.25, sigma=0.3),
        perturb_reverse=PerturbationConfig(p=0.35, sigma=0.3),
        master_seed=2024,
    )
    stats, _ = run_campaign(cfg)
    t = stats.per_task["push_block"]
    assert t.episodes >= 1000
    assert 0.75 <= t.p_forward <= 0.85, t.p_forward
    assert 0.65 <= t.p_reverse <= 0.75, t.p_reverse
    assert abs(t.p_total - t.p_forward * t.p_reverse) <= 0.05
    elapsed = time.monotonic() - started
    assert elapsed < 300.0
    _pass(5, f"p_fwd={t.p_forward:.3f}, p_rev={t.p_reverse:.3f}, "
             f"p_total={t.p_total:.3f} vs product "
             f"{t.p_forward * t.p_reverse:.3f} in {elapsed:.1f}s")


def test_criterion_6_reset_fidelity(tmp_path, lib, lib_file):
    tasks = [
        TaskConfig("push_block", 20),
        TaskConfig("large_container_cup", 15),
        TaskConfig("stack_block", 15),
        TaskConfig("close_box", 10),
        TaskConfig("open_box", 10),
        TaskConfig("fold_towel", 10),
        TaskConfig("laptop_cup_tray", 10),
        TaskConfig("push_stack", 10),
    ]
    cfg = _campaign(tmp_path, lib_file, "fidelity", tasks, master_seed=31)
    stats, _ = run_campaign(cfg)
    assert stats.episodes == 100
    duals = read_episodes(cfg.dataset_path, kind="dual").episodes
    assert len(duals) == 100, "unperturbed campaign should be all dual"
    restored = 0
    for episode in duals:
        report = replay(episode, library=lib)
        assert report.agreement, (episode.episode_id, report.per_subtask)
        assert report.reset_restored, (episode.episode_id,
                                       report.predicate_diffs)
        restored += 1
    assert restored == len(duals)
    _pass(6, f"{restored}/{len(duals)} dual episodes restore every predicate")


def _kind_cases(lib):
    """(description, action, true-world, false-world) per predicate kind."""
    def grasped_world():
        world = spawn_scene("push_block", seed=0, jitter_scale=0.0)
        block = world.find("yellow block")
        gp = block.grasp_point()
        world = apply_waypoint(world, Pose.from_translation(
            (gp[0], gp[1], 0.3)), 0)
        world = apply_waypoint(world, Pose.from_translation(gp), 0)
        return apply_waypoint(world, Pose.from_translation(gp), 1)

    fresh_push = spawn_scene("push_block", seed=0, jitter_scale=0.0)
    block_ref = ActionRef(fresh_push.find("yellow block").id, "yellow block")

    stacked = stage_on_top(spawn_scene("stack_block", seed=0, jitter_scale=0.0),
                           "red block", "yellow block")
    fresh_stack = spawn_scene("stack_block", seed=0, jitter_scale=0.0)
    red = ActionRef(fresh_stack.find("red block").id, "red block")
    yellow = ActionRef(fresh_stack.find("yellow block").id, "yellow block")

    cup_in = stage_into_container(
        spawn_scene("large_container_cup", seed=0, jitter_scale=0.0),
        "cup", "tray")
    cup_out = spawn_scene("large_container_cup", seed=0, jitter_scale=0.0)
    cup = ActionRef(cup_out.find("cup").id, "cup")
    tray = ActionRef(cup_out.find("tray").id, "tray")

    box_open = spawn_scene("close_box", seed=0, jitter_scale=0.0)
    box_closed = spawn_scene("open_box", seed=0, jitter_scale=0.0)
    box = ActionRef(box_open.find("box").id, "box")

    return {
        "held": ("pick up the yellow block",
                 PlanAction(Verb.PICK, block_ref),
                 grasped_world(), fresh_push),
        "on": ("put the red block onto the yellow block",
               PlanAction(Verb.PLACE, red, dest_object=yellow),
               stacked, fresh_stack),
        "stacked_on": ("stack the red block on the yellow block",
                       PlanAction(Verb.STACK, red, dest_object=yellow),
                       stacked, fresh_stack),
        "in": ("put the cup into the tray",
               PlanAction(Verb.PLACE, cup, dest_object=tray),
               cup_in, cup_out),
        "in_region": ("push the yellow block into the start zone",
                      PlanAction(Verb.PUSH_IN, block_ref,
                                 dest_region="start_zone"),
                      fresh_push, None),  # false world filled in by the test
        "open": ("open the box", PlanAction(Verb.OPEN, box),
                 box_open, box_closed),
        "closed": ("close the box", PlanAction(Verb.CLOSE, box),
                   box_closed, box_open),
    }


def test_criterion_7_evaluator_oracle_chain_soundness(lib):
    from autocollect.demos import stage_at
    from autocollect.sim import describe_scene

    cases = _kind_cases(lib)
    # in_region false world: block moved outside the start zone
    fresh = spawn_scene("push_block", seed=0, jitter_scale=0.0)
    cases["in_region"] = (
        cases["in_region"][0], cases["in_region"][1], fresh,
        stage_at(fresh, "yellow block", (0.3, -0.3)))

    checked = 0
    for kind, (description, action, world_true, world_false) in cases.items():
        for world, expected in ((world_true, True), (world_false, False)):
            hint_query = OracleTranslator().translate(description, action)
            assert hint_query.predicate_hint is not None
            assert hint_query.predicate_hint[0] == kind
            truth = ground_truth(world, hint_query.predicate_hint)
            assert truth is expected, (kind, expected)
            for flourish in range(100):
                backends = EvaluatorBackends(
                    translator=OracleTranslator(),
                    assessor=OracleAssessor(flourish=flourish),
                    parser=OracleParser(),
                )
                signal = evaluate(backends, description, action,
                                  describe_scene(world))
                assert signal.value is expected, (kind, expected, flourish)
                assert not signal.flagged
                checked += 1
    assert checked == len(cases) * 2 * 100

    # no error path returns true
    class GibberishAssessor:
        def assess(self, scene, query):
            from autocollect.evaluator import Assessment

            return Assessment("The scene is cluttered.", "test")

    class ExplodingAssessor:
        def assess(self, scene, query):
            raise RuntimeError("sensor offline")

    world = spawn_scene("push_block", seed=0)
    action = PlanAction(Verb.PUSH_IN,
                        ActionRef(world.find("yellow block").id, "yellow block"),
                        dest_region="white_area")
    for assessor in (GibberishAssessor(), ExplodingAssessor()):
        backends = EvaluatorBackends(translator=OracleTranslator(),
                                     assessor=assessor, parser=OracleParser())
        signal = evaluate(backends, "push the yellow block", action,
                          describe_scene(world))
        assert signal.value is False
        assert signal.flagged
    bad_action = PlanAction(Verb.PUSH_IN, ActionRef(99, "ghost"),
                            dest_region="white_area")
    signal = evaluate(EvaluatorBackends(OracleTranslator(), OracleAssessor(),
                                        OracleParser()),
                      "push the ghost", bad_action, describe_scene(world))
    assert signal.value is False and signal.flagged
    _pass(7, f"{checked} kind x truth x flourish checks agree; "
             f"error paths all decode false")


def test_criterion_8_data_integrity(tmp_path, lib, lib_file):
    cfg = _campaign(
        tmp_path, lib_file, "integrity",
        [TaskConfig("push_block", 400), TaskConfig("large_container_cup", 50),
         TaskConfig("close_box", 50)],
        perturb_forward=PerturbationConfig(p=0.25, sigma=0.3),
        perturb_reverse=PerturbationConfig(p=0.35, sigma=0.3),
        master_seed=77,
    )
    stats, _ = run_campaign(cfg)
    assert stats.episodes == 500
    assert stats.dual + stats.single + stats.discarded == 500
    stored = read_episodes(cfg.dataset_path)
    assert not stored.corrupt
    assert len(stored.episodes) == stats.dual + stats.single

    # dataset round-trips byte-exactly
    rewritten = "".join(
        json.dumps(e.to_dict(), separators=(",", ":")) + "\n"
        for e in stored.episodes)
    original = (tmp_path / "integrity.jsonl").read_text()
    assert rewritten == original

    # library round-trips byte-exactly
    lib_again = load_library(lib_file)
    twice = tmp_path / "lib2.jsonl"
    save_library(lib_again, twice)
    assert twice.read_bytes() == lib_file.read_bytes()

    # truncated final record is isolated without losing prior records
    damaged = tmp_path / "damaged.jsonl"
    lines = original.splitlines(keepends=True)
    damaged.write_text("".join(lines[:-1]) + lines[-1][: len(lines[-1]) // 3])
    result = read_episodes(damaged)
    assert len(result.episodes) == len(stored.episodes) - 1
    assert len(result.corrupt) == 1
    assert result.corrupt[0][0] == len(lines)
    _pass(8, f"500 episodes reconcile (dual {stats.dual} + single "
             f"{stats.single} + discarded {stats.discarded}); byte-exact "
             f"round trips; corrupt tail isolated")


def test_criterion_9_determinism(tmp_path, lib_file):
    tasks = [TaskConfig("push_block", 30), TaskConfig("stack_block", 15),
             TaskConfig("close_box", 15)]
    digests = []
    summaries = []
    for run in ("one", "two"):
        cfg = _campaign(
            tmp_path, lib_file, f"det-{run}", tasks,
            perturb_forward=PerturbationConfig(p=0.3, sigma=0.3),
            perturb_reverse=PerturbationConfig(p=0.3, sigma=0.3),
            master_seed=123,
            summary_path=str(tmp_path / f"det-{run}-summary.json"),
        )
        stats, _ = run_campaign(cfg)
        digests.append(hashlib.sha256(
            (tmp_path / f"det-{run}.jsonl").read_bytes()).hexdigest())
        summaries.append((tmp_path / f"det-{run}-summary.json").read_text())
    assert digests[0] == digests[1]
    assert summaries[0] == summaries[1]
    _pass(9, f"identical stats and dataset hash {digests[0][:12]}... "
             f"across repeated runs")
