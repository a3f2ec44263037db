import json

import pytest

from autocollect.config import (
    BackendConfig,
    ConfigError,
    PerturbationConfig,
    TaskConfig,
    apply_env_overrides,
    config_from_dict,
    load_config,
)


def minimal() -> dict:
    return {
        "library_path": "lib.jsonl",
        "dataset_path": "data.jsonl",
        "tasks": [{"template": "push_block", "episodes": 5}],
    }


def test_minimal_config_defaults():
    cfg = config_from_dict(minimal())
    assert cfg.backend.kind == "oracle"
    assert cfg.repetition_cap == 5
    assert cfg.retrieval_r == 3
    assert cfg.masking is True
    assert cfg.schedule.steps == 16
    assert cfg.perturb_forward.p == 0.0


def test_full_config_round_trip(tmp_path):
    data = minimal()
    data.update({
        "backend": {"kind": "external", "endpoint": "http://x/", "retries": 2},
        "perturb_forward": {"p": 0.25, "sigma": 0.3},
        "schedule": {"steps": 8, "gamma": 0.7},
        "master_seed": 42,
        "harvest_to_library": True,
    })
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    cfg = load_config(path)
    assert cfg.backend.endpoint == "http://x/"
    assert cfg.schedule.build().steps == 8
    assert cfg.perturb_forward.sigma == 0.3
    assert cfg.master_seed == 42


def test_unknown_keys_rejected():
    data = minimal()
    data["surprise"] = 1
    with pytest.raises(ConfigError, match="surprise"):
        config_from_dict(data)
    data = minimal()
    data["schedule"] = {"stepz": 4}
    with pytest.raises(ConfigError, match="stepz"):
        config_from_dict(data)


def test_json_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "library_path": "x",\n  broken\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(path)


def test_validation_errors():
    with pytest.raises(ConfigError):
        config_from_dict({**minimal(), "tasks": []})
    with pytest.raises(ConfigError):
        config_from_dict({**minimal(), "repetition_cap": 0})
    with pytest.raises(ConfigError):
        PerturbationConfig(p=1.5)
    with pytest.raises(ConfigError):
        BackendConfig(kind="external")  # endpoint required
    with pytest.raises(ConfigError):
        TaskConfig("x", 0)


def test_env_overrides():
    cfg = config_from_dict(minimal())
    env = {
        "AUTOCOLLECT_SEED": "99",
        "AUTOCOLLECT_WORKERS": "4",
        "AUTOCOLLECT_EPISODES": "2",
        "AUTOCOLLECT_BACKEND": "external",
        "AUTOCOLLECT_ENDPOINT": "http://e/",
    }
    cfg = apply_env_overrides(cfg, env)
    assert cfg.master_seed == 99
    assert cfg.workers == 4
    assert cfg.tasks[0].episodes == 2
    assert cfg.backend.kind == "external"
    assert cfg.backend.endpoint == "http://e/"


def test_env_overrides_ignore_absent():
    cfg = config_from_dict(minimal())
    before = cfg.master_seed
    apply_env_overrides(cfg, {})
    assert cfg.master_seed == before
