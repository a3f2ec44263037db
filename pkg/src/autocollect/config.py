"""Campaign configuration: file schema, defaults, environment overrides."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .policy import DiffusionSchedule, default_schedule

ENV_PREFIX = "AUTOCOLLECT_"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class PerturbationConfig:
    p: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"perturbation p must be in [0, 1], got {self.p}")
        if self.sigma < 0.0:
            raise ConfigError("perturbation sigma must be non-negative")


@dataclass(frozen=True)
class ScheduleConfig:
    steps: int = 16
    alpha: float = 1.0
    gamma: float = 0.5
    sigma0: float = 0.01

    def build(self) -> DiffusionSchedule:
        return default_schedule(self.steps, self.alpha, self.gamma, self.sigma0)


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "oracle"
    endpoint: str | None = None
    timeout_s: float = 10.0
    retries: int = 1

    def __post_init__(self):
        if self.kind not in ("oracle", "external"):
            raise ConfigError(f"backend kind must be oracle|external, got {self.kind!r}")
        if self.kind == "external" and not self.endpoint:
            raise ConfigError("external backend requires an endpoint")


@dataclass(frozen=True)
class TaskConfig:
    template: str
    episodes: int

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError(f"task {self.template!r} needs episodes >= 1")


@dataclass
class CampaignConfig:
    library_path: str
    dataset_path: str
    tasks: list[TaskConfig]
    backend: BackendConfig = field(default_factory=BackendConfig)
    evaluator_backend: BackendConfig = field(default_factory=BackendConfig)
    perturb_forward: PerturbationConfig = field(default_factory=PerturbationConfig)
    perturb_reverse: PerturbationConfig = field(default_factory=PerturbationConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    repetition_cap: int = 5
    retrieval_r: int = 3
    masking: bool = True
    horizon: int = 8
    copy_gripper: bool = False
    master_seed: int = 0
    harvest_to_library: bool = False
    harvest_reverse: bool = False
    fresh_scene_each_plan: bool = True
    store_full_frames: bool = False
    workers: int = 1
    templates_path: str | None = None
    report_path: str | None = None
    summary_path: str | None = None

    def __post_init__(self):
        if not self.tasks:
            raise ConfigError("campaign needs at least one task")
        if self.repetition_cap < 1:
            raise ConfigError("repetition_cap must be >= 1")
        if self.retrieval_r < 1:
            raise ConfigError("retrieval_r must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


_NESTED = {
    "backend": BackendConfig,
    "evaluator_backend": BackendConfig,
    "perturb_forward": PerturbationConfig,
    "perturb_reverse": PerturbationConfig,
    "schedule": ScheduleConfig,
}


def _build(cls, data: dict, path: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"{path}: {e}") from e


def config_from_dict(data: dict) -> CampaignConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object")
    data = dict(data)
    for key, cls in _NESTED.items():
        if key in data:
            if not isinstance(data[key], dict):
                raise ConfigError(f"{key}: expected an object")
            data[key] = _build(cls, data[key], key)
    if "tasks" in data:
        if not isinstance(data["tasks"], list):
            raise ConfigError("tasks: expected a list")
        data["tasks"] = [_build(TaskConfig, t, f"tasks[{i}]")
                         for i, t in enumerate(data["tasks"])]
    return _build(CampaignConfig, data, "campaign")


def load_config(path) -> CampaignConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    return config_from_dict(data)


def apply_env_overrides(config: CampaignConfig,
                        env: dict | None = None) -> CampaignConfig:
    """Environment variables mirror the CLI flags with a fixed prefix."""
    env = os.environ if env is None else env

    def get(name):
        return env.get(ENV_PREFIX + name)

    if get("SEED") is not None:
        config.master_seed = int(get("SEED"))
    if get("WORKERS") is not None:
        config.workers = int(get("WORKERS"))
    if get("EPISODES") is not None:
        per = int(get("EPISODES"))
        config.tasks = [TaskConfig(t.template, per) for t in config.tasks]
    backend_kind = get("BACKEND")
    endpoint = get("ENDPOINT")
    if backend_kind is not None or endpoint is not None:
        config.backend = BackendConfig(
            kind=backend_kind or config.backend.kind,
            endpoint=endpoint or config.backend.endpoint,
            timeout_s=config.backend.timeout_s,
            retries=config.backend.retries,
        )
    return config
