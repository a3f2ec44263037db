import json

import pytest

from autocollect.config import CampaignConfig, PerturbationConfig, TaskConfig
from autocollect.dataset import (
    DatasetError,
    DatasetWriter,
    StoredEpisode,
    SubtaskTrace,
    read_episodes,
    replay,
)
from autocollect.demos import record_seed_demos
from autocollect.fsm import run_campaign
from autocollect.geometry import Pose
from autocollect.library import save_library
from autocollect.sim import spawn_scene, world_to_dict


@pytest.fixture(scope="module")
def lib():
    return record_seed_demos()


@pytest.fixture(scope="module")
def campaign(tmp_path_factory, lib):
    """A small mixed campaign: successes, reset failures, and aborts."""
    tmp = tmp_path_factory.mktemp("campaign")
    lib_path = tmp / "library.jsonl"
    save_library(lib, lib_path)
    cfg = CampaignConfig(
        library_path=str(lib_path),
        dataset_path=str(tmp / "episodes.jsonl"),
        tasks=[TaskConfig("push_block", 12), TaskConfig("close_box", 4)],
        perturb_forward=PerturbationConfig(p=0.25, sigma=0.3),
        perturb_reverse=PerturbationConfig(p=0.35, sigma=0.3),
        master_seed=11,
    )
    stats, _ = run_campaign(cfg)
    return cfg, stats


def dummy_trace(x=0.0, success=True):
    return SubtaskTrace(
        action={"verb": "push_in", "subject": "yellow block",
                "dest_region": "white_area"},
        demo_id="seed-push_in-block-000",
        description="push the yellow block into the white area",
        mask=(1,),
        waypoints=((Pose.from_translation((x, 0.0, 0.2)), 0),
                   (Pose.from_translation((x + 0.05, 0.0, 0.2)), 0)),
        success=success,
        flagged=False,
        query="Is the yellow block inside the white area region?",
        assessment="Yes, it is.",
    )


def dummy_meta(task="push_block"):
    world = spawn_scene(task, seed=0)
    return {
        "task": task,
        "plan": {"mode": "atomic_simple", "forward": [], "reverse": []},
        "initial_world": world_to_dict(world),
        "seeds": {"episode": 1, "spawn": 0},
        "library_hash": "abc123",
    }


def test_store_dual_and_single_round_trip(tmp_path):
    writer = DatasetWriter(tmp_path / "d.jsonl")
    id1 = writer.store_dual([dummy_trace()], [dummy_trace(0.1)], dummy_meta())
    id2 = writer.store_single([dummy_trace()], dummy_meta())
    assert (id1, id2) == (1, 2)
    result = read_episodes(tmp_path / "d.jsonl")
    assert [e.episode_id for e in result.episodes] == [1, 2]
    assert result.episodes[0].kind == "dual"
    assert result.episodes[1].kind == "single"
    assert result.episodes[1].reverse is None
    assert not result.corrupt
    # byte-exact field round trip
    first = result.episodes[0]
    assert StoredEpisode.from_dict(first.to_dict()) == first


def test_single_storage_rejects_reverse_payload(tmp_path):
    writer = DatasetWriter(tmp_path / "d.jsonl")
    with pytest.raises(DatasetError):
        writer.store_single([dummy_trace()], {**dummy_meta(), "reverse": []})
    with pytest.raises(DatasetError):
        writer.store_dual([dummy_trace()], [], dummy_meta())
    with pytest.raises(DatasetError):
        writer.store_single([], dummy_meta())


def test_ids_monotonic_across_writers(tmp_path):
    path = tmp_path / "d.jsonl"
    writer = DatasetWriter(path)
    for _ in range(5):
        writer.store_single([dummy_trace()], dummy_meta())
    # a fresh writer continues the sequence
    writer2 = DatasetWriter(path)
    last = writer2.store_single([dummy_trace()], dummy_meta())
    assert last == 6
    ids = [e.episode_id for e in read_episodes(path).episodes]
    assert ids == sorted(ids) == list(range(1, 7))


def test_truncated_tail_is_isolated(tmp_path):
    path = tmp_path / "d.jsonl"
    writer = DatasetWriter(path)
    for _ in range(3):
        writer.store_single([dummy_trace()], dummy_meta())
    raw = path.read_text()
    lines = raw.splitlines(keepends=True)
    path.write_text("".join(lines[:-1]) + lines[-1][: len(lines[-1]) // 2])
    result = read_episodes(path)
    assert len(result.episodes) == 2
    assert len(result.corrupt) == 1
    assert result.corrupt[0][0] == 3  # line offset reported


def test_read_filters(tmp_path):
    writer = DatasetWriter(tmp_path / "d.jsonl")
    writer.store_dual([dummy_trace()], [dummy_trace()], dummy_meta())
    writer.store_single([dummy_trace()], dummy_meta())
    writer.store_single([dummy_trace()], dummy_meta("close_box"))
    result = read_episodes(tmp_path / "d.jsonl", kind="dual")
    assert [e.episode_id for e in result.episodes] == [1]
    result = read_episodes(tmp_path / "d.jsonl", task="close_box")
    assert [e.episode_id for e in result.episodes] == [3]
    result = read_episodes(tmp_path / "d.jsonl", id_range=(2, 3))
    assert [e.episode_id for e in result.episodes] == [2, 3]


def test_campaign_episodes_replay_with_agreement(campaign, lib):
    cfg, stats = campaign
    result = read_episodes(cfg.dataset_path)
    assert not result.corrupt
    assert result.episodes, "campaign stored nothing"
    for episode in result.episodes[:6]:
        report = replay(episode, library=lib)
        assert report.agreement, report.per_subtask
        assert report.initial_pose_delta == 0.0


def test_dual_episodes_restore_predicates(campaign, lib):
    cfg, stats = campaign
    duals = read_episodes(cfg.dataset_path, kind="dual").episodes
    assert duals
    for episode in duals[:5]:
        report = replay(episode)
        assert report.reset_restored, report.predicate_diffs


def test_replay_with_wrong_seed_reports_mismatch(campaign):
    cfg, _ = campaign
    episode = read_episodes(cfg.dataset_path, kind="dual").episodes[0]
    report = replay(episode, respawn_seed=987654321)
    assert report.initial_pose_delta > 0.0


def test_replay_checks_library_refs(campaign, lib):
    cfg, _ = campaign
    episode = read_episodes(cfg.dataset_path).episodes[0]
    from autocollect.library import AffordanceLibrary

    with pytest.raises(DatasetError, match="missing from the library"):
        replay(episode, library=AffordanceLibrary())


def test_campaign_dataset_reconciles(campaign):
    cfg, stats = campaign
    episodes = read_episodes(cfg.dataset_path).episodes
    stored = len(episodes)
    assert stats.dual + stats.single == stored
    assert stats.dual + stats.single + stats.discarded == stats.episodes
    # stored records never contain a reverse payload unless dual
    for e in episodes:
        assert (e.kind == "dual") == (e.reverse is not None)


def test_schema_version_enforced(tmp_path):
    path = tmp_path / "d.jsonl"
    writer = DatasetWriter(path)
    writer.store_single([dummy_trace()], dummy_meta())
    record = json.loads(path.read_text())
    record["schema_version"] = 99
    path.write_text(json.dumps(record) + "\n")
    result = read_episodes(path)
    assert not result.episodes
    assert len(result.corrupt) == 1
