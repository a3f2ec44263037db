"""Wire adapter for external reasoner/evaluator backends.

One request/response schema serves both the planner (ground/plan/rank) and
the evaluator (translate/assess/parse): requests carry {op, prompt,
observation, candidates[]} and responses carry exactly one of {items[],
plan{forward[], reverse[]}, ranking[], text, value}. Two transports are
provided: single-shot HTTP POST and a line-delimited JSON stream.
"""
from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources

from .evaluator import Assessment, VqaQuery
from .sim import SceneDescription

RESPONSE_KEYS = ("items", "plan", "ranking", "text", "value")


class WireError(Exception):
    """Transport failure or malformed wire payload."""


def load_prompt(name: str) -> str:
    return resources.files("autocollect.prompts").joinpath(name).read_text(
        encoding="utf-8")


def encode_line(payload: dict) -> str:
    return json.dumps(payload, separators=(",", ":")) + "\n"


def decode_line(line: str) -> dict:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as e:
        raise WireError(f"malformed wire line: {e}") from e
    if not isinstance(payload, dict):
        raise WireError("wire payload must be a JSON object")
    return payload


def validate_response(payload: dict) -> dict:
    present = [k for k in RESPONSE_KEYS if k in payload]
    if len(present) != 1:
        raise WireError(
            f"response must carry exactly one of {RESPONSE_KEYS}, got {present}")
    return payload


@dataclass
class HttpWireClient:
    """Single-request HTTP POST transport with bounded retries."""

    endpoint: str
    timeout_s: float = 10.0
    retries: int = 1

    def call(self, request: dict) -> dict:
        body = encode_line(request).encode("utf-8")
        last: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                req = urllib.request.Request(
                    self.endpoint, data=body,
                    headers={"Content-Type": "application/json"})
                with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                    return validate_response(
                        decode_line(resp.read().decode("utf-8")))
            except (urllib.error.URLError, OSError, WireError) as e:
                last = e
        raise WireError(f"wire call to {self.endpoint} failed: {last}") from last


@dataclass
class StreamWireClient:
    """Line-delimited JSON over caller-supplied send/receive callables."""

    send_line: object
    recv_line: object

    def call(self, request: dict) -> dict:
        self.send_line(encode_line(request))
        line = self.recv_line()
        if not line:
            raise WireError("stream closed before response")
        return validate_response(decode_line(line))


@dataclass
class ExternalReasoner:
    """Planner backend speaking the wire protocol."""

    client: object
    ground_prompt: str = field(default_factory=lambda: load_prompt("grounding.txt"))
    plan_prompt: str = field(
        default_factory=lambda: load_prompt("task_planning.txt"))

    def ground(self, obs: SceneDescription) -> list[dict]:
        resp = self.client.call({
            "op": "ground",
            "prompt": self.ground_prompt,
            "observation": obs.to_dict(),
            "candidates": [],
        })
        items = resp.get("items")
        if not isinstance(items, list):
            raise WireError("ground response must carry items[]")
        return items

    def plan(self, obs: SceneDescription, scene, lib_summary) -> dict:
        resp = self.client.call({
            "op": "plan",
            "prompt": self.plan_prompt,
            "observation": obs.to_dict(),
            "candidates": list(lib_summary),
        })
        plan = resp.get("plan")
        if not isinstance(plan, dict):
            raise WireError("plan response must carry plan{}")
        return plan

    def rank(self, query, candidates) -> list[str]:
        verb, descriptor = query
        resp = self.client.call({
            "op": "rank",
            "prompt": "",
            "observation": {"verb": verb.value, "target": descriptor.to_dict()},
            "candidates": [d.id for d in candidates],
        })
        ranking = resp.get("ranking")
        if not isinstance(ranking, list):
            raise WireError("rank response must carry ranking[]")
        return [str(r) for r in ranking]


@dataclass
class ExternalTranslator:
    client: object
    prompt: str = field(default_factory=lambda: load_prompt("vqa_fewshot.txt"))

    def translate(self, description: str, action) -> VqaQuery:
        resp = self.client.call({
            "op": "translate",
            "prompt": self.prompt,
            "observation": {"description": description,
                            "action": action.to_dict()},
            "candidates": [],
        })
        text = resp.get("text")
        if not isinstance(text, str):
            raise WireError("translate response must carry text")
        return VqaQuery(text)


@dataclass
class ExternalAssessor:
    client: object

    def assess(self, scene: SceneDescription, query: VqaQuery) -> Assessment:
        resp = self.client.call({
            "op": "assess",
            "prompt": query.text,
            "observation": scene.to_dict(),
            "candidates": [],
        })
        text = resp.get("text")
        if not isinstance(text, str):
            raise WireError("assess response must carry text")
        return Assessment(text=text, backend_id="external")


@dataclass
class ExternalParser:
    client: object

    def parse(self, description: str, query: VqaQuery,
              assessment: Assessment) -> bool:
        resp = self.client.call({
            "op": "parse",
            "prompt": "",
            "observation": {"description": description, "query": query.text,
                            "assessment": assessment.text},
            "candidates": [],
        })
        value = resp.get("value")
        if not isinstance(value, bool):
            raise WireError("parse response must carry a boolean value")
        return value
