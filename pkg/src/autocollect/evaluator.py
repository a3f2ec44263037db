"""Three-stage success evaluation: task-to-query translation, visual
assessment, robust boolean decoding.

Each stage holds a pluggable backend. The oracle chain is closed-loop: the
translator attaches a predicate hint, the assessor answers it from the
world behind the observation (wrapped in deliberately chatty prose to
exercise the decoder), and the parser reduces the prose to a strict boolean.
Every error path decodes to False -- a dropped episode is cheap, a poisoned
dataset is not.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .planner import PlanAction
from .sim import SceneDescription, ground_truth


class EvaluatorError(Exception):
    pass


class DecodeAmbiguityError(EvaluatorError):
    """No decisive token, or contradictory ones."""


@dataclass(frozen=True)
class VqaQuery:
    text: str
    predicate_hint: tuple | None = None
    polarity: bool = True  # True: a "yes" answer means the goal state holds

    def __post_init__(self):
        if not self.text.endswith("?"):
            raise EvaluatorError("queries must be interrogative")


@dataclass(frozen=True)
class Assessment:
    text: str
    backend_id: str


@dataclass(frozen=True)
class StageLog:
    description: str
    query: VqaQuery | None
    assessment: Assessment | None


@dataclass(frozen=True)
class SuccessSignal:
    value: bool
    stage_log: StageLog
    flagged: bool = False


@dataclass(frozen=True)
class EvaluatorBackends:
    translator: object
    assessor: object
    parser: object


# --- stage 1: task -> query -------------------------------------------------

_MOVE_PATTERN = re.compile(
    r"move the (?P<obj>.+?) from the (?P<src>.+?) to the (?P<dst>.+)$")


class OracleTranslator:
    """Verb-templated imperative-to-interrogative rewriting with hints."""

    def translate(self, description: str, action: PlanAction) -> VqaQuery:
        m = _MOVE_PATTERN.match(description.strip().rstrip("."))
        if m:
            return VqaQuery(
                f"Is the {m.group('obj')} on the {m.group('src')} or "
                f"the {m.group('dst')}?")
        verb = action.verb.value
        subject = action.subject.name
        sid = action.subject.id
        if verb in ("place",) and action.dest_object is not None:
            # "onto" phrases target the support surface, "into" the interior
            if " onto " in description:
                return VqaQuery(
                    f"Is the {subject} on the {action.dest_object.name}?",
                    predicate_hint=("on", sid, action.dest_object.id))
            return VqaQuery(
                f"Is the {subject} in the {action.dest_object.name}?",
                predicate_hint=("in", sid, action.dest_object.id))
        if verb in ("stack",):
            if action.dest_object is None:
                raise EvaluatorError("stack action needs a destination object")
            return VqaQuery(
                f"Is the {subject} on the {action.dest_object.name}?",
                predicate_hint=("stacked_on", sid, action.dest_object.id))
        if verb == "pick" and action.dest_region is None:
            return VqaQuery(f"Is the {subject} held in the gripper?",
                            predicate_hint=("held", sid, None))
        if verb in ("pick", "place", "unstack", "push_in", "push_out"):
            region = action.dest_region
            if region is None:
                raise EvaluatorError(f"{verb} action needs a destination region")
            pretty = region.replace("_", " ")
            return VqaQuery(
                f"Is the {subject} inside the {pretty} region?",
                predicate_hint=("in_region", sid, region))
        if verb in ("close", "fold"):
            return VqaQuery(f"Is the {subject} closed?",
                            predicate_hint=("closed", sid, None))
        if verb in ("open", "unfold"):
            return VqaQuery(f"Is the {subject} open?",
                            predicate_hint=("open", sid, None))
        raise EvaluatorError(f"no query template for verb {verb!r}")


def translate_task_to_query(translator, description: str,
                            action: PlanAction) -> VqaQuery:
    return translator.translate(description, action)


# --- stage 2: visual assessment ----------------------------------------------

_PREFIXES = (
    "", "Well, ", "Looking closely, ", "After a careful look, ",
    "Hmm. ", "Checking the workspace: ", "From this viewpoint, ",
    "Let me describe what I observe. ", "Right. ", "Upon inspection, ",
)
_SUFFIXES = (
    "", " The rest of the scene is unchanged.", " Everything else looks tidy.",
    " The gripper has moved clear of the table.",
    " Lighting conditions are fine.", " The table surface is uncluttered.",
    " All other objects remain where they were.",
    " I am fairly confident about this.", " The view is unobstructed.",
    " The scene otherwise matches my expectations.",
)
FLOURISH_COUNT = len(_PREFIXES) * len(_SUFFIXES)


def _state_phrase(hint: tuple, world) -> tuple[str, str]:
    """(affirmative clause, negative clause) for a predicate hint."""
    kind, subject_id, obj_ref = hint
    subject = world.object(subject_id).name
    if kind == "in":
        where = f"inside the {world.object(obj_ref).name}"
        return (f"the {subject} is {where}",
                f"the {subject} is not {where}")
    if kind == "stacked_on":
        base = world.object(obj_ref).name
        return (f"the {subject} is stacked on the {base}",
                f"the {subject} is not on the {base}")
    if kind == "on":
        base = "table" if obj_ref == 0 else world.object(obj_ref).name
        return (f"the {subject} is on the {base}",
                f"the {subject} is not on the {base}")
    if kind == "in_region":
        pretty = str(obj_ref).replace("_", " ")
        return (f"the {subject} is inside the {pretty} area",
                f"the {subject} is not inside the {pretty} area")
    if kind == "held":
        return (f"the {subject} is held in the gripper",
                f"the {subject} is not held by the gripper")
    if kind == "closed":
        return (f"the {subject} is closed",
                f"the {subject} remains open on the table")
    if kind == "open":
        return (f"the {subject} is open",
                f"the {subject} remains closed on the table")
    raise EvaluatorError(f"no phrasing for predicate kind {kind!r}")


@dataclass
class OracleAssessor:
    """Answers the query's predicate hint from the world behind the scene.

    flourish picks the verbose filler permutation; None derives it from the
    query so campaign prose varies deterministically.
    """

    flourish: int | None = None

    def assess(self, scene: SceneDescription, query: VqaQuery) -> Assessment:
        if query.predicate_hint is None:
            raise EvaluatorError("oracle assessor requires a predicate hint")
        if scene.world is None:
            raise EvaluatorError("scene description carries no world handle")
        truth = ground_truth(scene.world, query.predicate_hint)
        if self.flourish is None:
            digest = hashlib.sha256(
                f"{query.text}|{truth}".encode()).digest()
            index = int.from_bytes(digest[:4], "big") % FLOURISH_COUNT
        else:
            index = self.flourish % FLOURISH_COUNT
        prefix = _PREFIXES[index // len(_SUFFIXES)]
        suffix = _SUFFIXES[index % len(_SUFFIXES)]
        positive, negative = _state_phrase(query.predicate_hint, scene.world)
        if truth:
            body = f"Yes, I can see that {positive}."
        else:
            body = f"No, {negative}."
        return Assessment(text=prefix + body + suffix, backend_id="oracle")


def assess(assessor, scene: SceneDescription, query: VqaQuery) -> Assessment:
    return assessor.assess(scene, query)


# --- stage 3: boolean decoding ----------------------------------------------

_YES_TOKENS = {"yes", "indeed", "affirmative", "correct"}
_NO_TOKENS = {"no", "negative", "incorrect"}
_NEGATORS = {"not", "never", "cannot", "nothing", "isn't", "doesn't",
             "don't", "hasn't", "wasn't", "aren't"}


class OracleParser:
    """Normalized token scan with negation handling."""

    def parse(self, description: str, query: VqaQuery, assessment: Assessment) -> bool:
        text = assessment.text.lower()
        tokens = re.findall(r"[a-z']+", text)
        has_yes = any(t in _YES_TOKENS for t in tokens)
        has_no = any(t in _NO_TOKENS for t in tokens)
        negators = sum(1 for t in tokens if t in _NEGATORS)

        if has_yes and has_no:
            raise DecodeAmbiguityError(
                f"contradictory cues in assessment: {assessment.text!r}")
        if has_yes:
            if negators:
                raise DecodeAmbiguityError(
                    f"affirmation with negation: {assessment.text!r}")
            answer = True
        elif has_no:
            answer = False
        elif negators:
            answer = False
        else:
            raise DecodeAmbiguityError(
                f"no decisive token in assessment: {assessment.text!r}")
        return answer if query.polarity else not answer


def decode_boolean(parser, description: str, query: VqaQuery,
                   assessment: Assessment) -> SuccessSignal:
    value = parser.parse(description, query, assessment)
    return SuccessSignal(value=value,
                         stage_log=StageLog(description, query, assessment))


def evaluate(backends: EvaluatorBackends, description: str, action: PlanAction,
             scene: SceneDescription) -> SuccessSignal:
    """Run the three stages; any stage failure yields a flagged False."""
    query = None
    assessment = None
    try:
        query = translate_task_to_query(backends.translator, description, action)
        assessment = assess(backends.assessor, scene, query)
        return decode_boolean(backends.parser, description, query, assessment)
    except Exception:
        return SuccessSignal(
            value=False,
            stage_log=StageLog(description, query, assessment),
            flagged=True,
        )


def oracle_evaluator(flourish: int | None = None) -> EvaluatorBackends:
    return EvaluatorBackends(translator=OracleTranslator(),
                             assessor=OracleAssessor(flourish=flourish),
                             parser=OracleParser())
