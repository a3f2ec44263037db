import json

import pytest

from autocollect.cli import main
from autocollect.dataset import read_episodes


@pytest.fixture(scope="module")
def seed_library_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("lib") / "seed.jsonl"
    assert main(["record-seed-demos", "--out", str(path), "--per-skill", "2"]) == 0
    return path


def write_config(tmp_path, library_path, **extra) -> str:
    cfg = {
        "library_path": str(library_path),
        "dataset_path": str(tmp_path / "episodes.jsonl"),
        "tasks": [{"template": "push_block", "episodes": 3}],
        "master_seed": 5,
    }
    cfg.update(extra)
    path = tmp_path / "campaign.json"
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def test_record_seed_demos_cli(tmp_path):
    out = tmp_path / "demos.jsonl"
    assert main(["record-seed-demos", "--out", str(out), "--per-skill", "2"]) == 0
    from autocollect.library import load_library

    lib = load_library(out)
    assert len(lib) == 16  # 8 verbs x 2


def test_collect_smoke(tmp_path, seed_library_path, capsys):
    config = write_config(tmp_path, seed_library_path)
    assert main(["collect", "--config", config]) == 0
    out = capsys.readouterr().out
    assert "push_block" in out
    episodes = read_episodes(tmp_path / "episodes.jsonl").episodes
    assert len(episodes) == 3


def test_collect_dry_run_executes_nothing(tmp_path, seed_library_path, capsys):
    config = write_config(tmp_path, seed_library_path)
    assert main(["collect", "--config", config, "--dry-run"]) == 0
    out = capsys.readouterr().out
    assert "dry run complete" in out
    assert "push_in" in out  # plan printed
    assert not (tmp_path / "episodes.jsonl").exists()


def test_collect_bad_config_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    assert main(["collect", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "line 1" in err


def test_collect_bad_endpoint_exit_two(tmp_path, seed_library_path, capsys):
    config = write_config(
        tmp_path, seed_library_path,
        backend={"kind": "external", "endpoint": "http://127.0.0.1:9/",
                 "timeout_s": 0.2, "retries": 0})
    assert main(["collect", "--config", config]) == 2
    assert "campaign failed" in capsys.readouterr().err


def test_collect_env_override_episodes(tmp_path, seed_library_path,
                                       monkeypatch):
    config = write_config(tmp_path, seed_library_path)
    monkeypatch.setenv("AUTOCOLLECT_EPISODES", "1")
    assert main(["collect", "--config", config]) == 0
    episodes = read_episodes(tmp_path / "episodes.jsonl").episodes
    assert len(episodes) == 1


def test_validate_plan_valid_and_mutated(tmp_path, capsys):
    plan = {
        "forward": [
            {"verb": "push_in", "subject": "yellow block",
             "dest_region": "white_area"},
            {"verb": "stack", "subject": "red block",
             "dest_object": "yellow block"},
        ],
        "reverse": [
            {"verb": "unstack", "subject": "red block",
             "dest_region": "red_home"},
            {"verb": "push_out", "subject": "yellow block",
             "dest_region": "start_zone"},
        ],
    }
    good = tmp_path / "good.json"
    good.write_text(json.dumps(plan))
    assert main(["validate-plan", str(good)]) == 0
    assert "valid" in capsys.readouterr().out

    swapped = dict(plan)
    swapped["reverse"] = list(reversed(plan["reverse"]))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(swapped))
    assert main(["validate-plan", str(bad)]) == 1
    out = capsys.readouterr().out
    assert out.count("violation") == 2

    short = dict(plan)
    short["reverse"] = plan["reverse"][:1]
    shorter = tmp_path / "short.json"
    shorter.write_text(json.dumps(short))
    assert main(["validate-plan", str(shorter)]) == 1

    garbled = tmp_path / "garbled.json"
    garbled.write_text("{]")
    assert main(["validate-plan", str(garbled)]) == 1


def test_replay_cli(tmp_path, seed_library_path, capsys):
    config = write_config(tmp_path, seed_library_path)
    assert main(["collect", "--config", config]) == 0
    capsys.readouterr()
    assert main(["replay", "--dataset", str(tmp_path / "episodes.jsonl"),
                 "--library", str(seed_library_path)]) == 0
    out = capsys.readouterr().out
    assert "agreement=True" in out

    assert main(["replay", "--dataset", str(tmp_path / "episodes.jsonl"),
                 "--episode", "999"]) == 1


def test_stats_cli(tmp_path, seed_library_path, capsys):
    config = write_config(tmp_path, seed_library_path)
    assert main(["collect", "--config", config]) == 0
    capsys.readouterr()
    assert main(["stats", "--dataset", str(tmp_path / "episodes.jsonl")]) == 0
    out = capsys.readouterr().out
    assert "push_block" in out
    assert "total episodes stored: 3" in out
