"""Training-data synthesis: Basic3D perception/computation QA, relation QA,
and chain-of-thought traces carrying explicit 3D values.

All generation is a pure function of (scene, facts, seed, config). Option
order is a seeded permutation per record; every numeric value in a trace is
quantized to the 2-decimal rendering before being stored, so traces are
internally consistent at tolerance 0.01 by construction.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from . import geometry
from .geometry import UnitVec3, Vec3, fmt_scalar, fmt_vec, quantize
from .relations import RelationConfig, RelationFact, recompute_fact
from .scenes import CAMERA_ID, ObjectAnnotation, SceneAnnotation

VARIANTS = ("basic3d", "sr_qa", "sr_cot")

# Default corpus-size caps for generation runs; the published training mix
# used 12k/1.2k/24k. Caps only: small scene sets yield fewer records.
DEFAULT_CORPUS_SIZES = {"basic3d": 12_000, "sr_qa": 1_200, "sr_cot": 24_000}
CATEGORIES = (
    "height", "location", "orientation", "multi_object",
    "perception_location", "perception_orientation",
    "computation_distance", "computation_angle",
)
LABELS = ("A", "B", "C", "D")

KIND_CATEGORY = {
    "taller": "height",
    "higher": "height",
    "closer_to_camera": "location",
    "left_of": "location",
    "above": "location",
    "facing_toward": "orientation",
    "facing_same_direction": "orientation",
    "closer_to_anchor": "multi_object",
}


def _cap(s: str) -> str:
    return s[0].upper() + s[1:] if s else s


def _decap(s: str) -> str:
    return s[0].lower() + s[1:] if s else s


class QAGenerationError(ValueError):
    """A record cannot be generated or upgraded from the given inputs."""


@dataclass(frozen=True)
class QARecord:
    record_id: str
    scene_id: str
    category: str
    question_text: str
    options: tuple[tuple[str, str], ...]  # ordered (label, text)
    answer: str
    variant: str
    provenance: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise QAGenerationError(f"unknown category {self.category!r}")
        if self.variant not in VARIANTS:
            raise QAGenerationError(f"unknown variant {self.variant!r}")
        labels = [label for label, _ in self.options]
        if not 2 <= len(labels) <= 4 or labels != list(LABELS[: len(labels)]):
            raise QAGenerationError(f"options must be labeled A.. in order, got {labels}")
        texts = [text for _, text in self.options]
        if len(set(texts)) != len(texts):
            raise QAGenerationError("option texts must be pairwise distinct")
        if self.answer not in labels:
            raise QAGenerationError(f"answer {self.answer!r} not among options")

    def option_text(self, label: str) -> str:
        for lbl, text in self.options:
            if lbl == label:
                return text
        raise KeyError(label)


@dataclass(frozen=True)
class TraceStep:
    step_kind: str  # perception_location | perception_orientation | computation | reasoning
    subject_ids: tuple[str, ...]
    text: str
    vec_value: Vec3 | None = None
    scalar_value: float | None = None
    unit: str | None = None
    claim_kind: str | None = None
    inputs: tuple = ()


@dataclass(frozen=True)
class CoTTrace:
    steps: tuple[TraceStep, ...]
    final_answer: str


def _load_templates() -> dict:
    with resources.files("spatialforge.data").joinpath("templates.json").open() as fh:
        return json.load(fh)


_TEMPLATES = _load_templates()


def _record_rng(seed: int, key: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def object_name(obj: ObjectAnnotation) -> str:
    return f"the {obj.category} '{obj.object_id}'"


def _labelled(texts: Sequence[str]) -> tuple[tuple[str, str], ...]:
    return tuple((LABELS[i], text) for i, text in enumerate(texts))


def _shuffled_options(texts: list[str], correct_index: int, rng: random.Random):
    order = list(range(len(texts)))
    rng.shuffle(order)
    shuffled = [texts[i] for i in order]
    answer = LABELS[order.index(correct_index)]
    return _labelled(shuffled), answer


def _pick(templates: Sequence[str], rng: random.Random) -> str:
    return templates[rng.randrange(len(templates))]


def _distinct_scalar_options(
    value: float, unit: str, rng: random.Random, spread: float
) -> tuple[list[str], int]:
    """The true value plus three perturbed distractors, distinct after rendering."""
    texts = [fmt_scalar(value, unit)]
    while len(texts) < 4:
        delta = rng.uniform(0.3, 1.0) * spread * rng.choice((-1.0, 1.0))
        candidate = value + delta
        if candidate < 0:
            candidate = abs(candidate)
        if unit == "degrees" and candidate > 180.0:
            candidate = 360.0 - candidate
        text = fmt_scalar(candidate, unit)
        if text not in texts:
            texts.append(text)
    return texts, 0


def _distinct_vec_options(
    value: Vec3, rng: random.Random, spread: float
) -> tuple[list[str], int]:
    texts = [fmt_vec(value)]
    while len(texts) < 4:
        candidate = Vec3(
            value.x + rng.uniform(0.3, 1.0) * spread * rng.choice((-1.0, 1.0)),
            value.y + rng.uniform(0.3, 1.0) * spread * rng.choice((-1.0, 1.0)),
            value.z + rng.uniform(0.3, 1.0) * spread * rng.choice((-1.0, 1.0)),
        )
        text = fmt_vec(candidate)
        if text not in texts:
            texts.append(text)
    return texts, 0


def _distinct_direction_options(
    value: UnitVec3, rng: random.Random
) -> tuple[list[str], int]:
    import math

    texts = [fmt_vec(value)]
    while len(texts) < 4:
        yaw = math.radians(rng.uniform(25.0, 335.0))
        c, s = math.cos(yaw), math.sin(yaw)
        candidate = Vec3(c * value.x - s * value.y, s * value.x + c * value.y, value.z)
        text = fmt_vec(candidate)
        if text not in texts:
            texts.append(text)
    return texts, 0


def gen_basic3d(scene: SceneAnnotation, seed: int) -> list[QARecord]:
    """Perception questions (echo an object's annotated 3D values) and
    computation questions (distance/angle over vectors given in the prompt)."""
    records: list[QARecord] = []
    bank = _TEMPLATES["basic3d"]
    ordered = sorted(scene.objects, key=lambda o: o.object_id)
    for obj in ordered:
        rid = f"{scene.scene_id}:basic3d:perception_location:{obj.object_id}"
        rng = _record_rng(seed, rid)
        texts, correct = _distinct_vec_options(obj.location, rng, spread=1.5)
        options, answer = _shuffled_options(texts, correct, rng)
        records.append(QARecord(
            record_id=rid, scene_id=scene.scene_id, category="perception_location",
            question_text=_pick(bank["perception_location"], rng).format(subject=object_name(obj)),
            options=options, answer=answer, variant="basic3d",
            provenance=(obj.object_id,),
        ))

        rid = f"{scene.scene_id}:basic3d:perception_orientation:{obj.object_id}"
        rng = _record_rng(seed, rid)
        texts, correct = _distinct_direction_options(obj.orientation, rng)
        options, answer = _shuffled_options(texts, correct, rng)
        records.append(QARecord(
            record_id=rid, scene_id=scene.scene_id, category="perception_orientation",
            question_text=_pick(bank["perception_orientation"], rng).format(subject=object_name(obj)),
            options=options, answer=answer, variant="basic3d",
            provenance=(obj.object_id,),
        ))

    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            pa = Vec3(quantize(a.location.x), quantize(a.location.y), quantize(a.location.z))
            pb = Vec3(quantize(b.location.x), quantize(b.location.y), quantize(b.location.z))
            rid = f"{scene.scene_id}:basic3d:computation_distance:{a.object_id}:{b.object_id}"
            rng = _record_rng(seed, rid)
            value = geometry.distance(pa, pb)
            texts, correct = _distinct_scalar_options(value, "m", rng, spread=2.0)
            options, answer = _shuffled_options(texts, correct, rng)
            records.append(QARecord(
                record_id=rid, scene_id=scene.scene_id, category="computation_distance",
                question_text=_pick(bank["computation_distance"], rng).format(
                    p=fmt_vec(pa), q=fmt_vec(pb)),
                options=options, answer=answer, variant="basic3d",
                provenance=(a.object_id, b.object_id),
            ))

            da = UnitVec3(*a.orientation.as_tuple())
            db = UnitVec3(*b.orientation.as_tuple())
            rid = f"{scene.scene_id}:basic3d:computation_angle:{a.object_id}:{b.object_id}"
            rng = _record_rng(seed, rid)
            daq = Vec3(quantize(da.x), quantize(da.y), quantize(da.z))
            dbq = Vec3(quantize(db.x), quantize(db.y), quantize(db.z))
            if daq.norm() < 1e-6 or dbq.norm() < 1e-6:
                continue
            value = geometry.angular_difference(UnitVec3.from_vec(daq), UnitVec3.from_vec(dbq))
            texts, correct = _distinct_scalar_options(value, "degrees", rng, spread=40.0)
            options, answer = _shuffled_options(texts, correct, rng)
            records.append(QARecord(
                record_id=rid, scene_id=scene.scene_id, category="computation_angle",
                question_text=_pick(bank["computation_angle"], rng).format(
                    p=fmt_vec(daq), q=fmt_vec(dbq)),
                options=options, answer=answer, variant="basic3d",
                provenance=(a.object_id, b.object_id),
            ))
    return records


# Canonical option texts per relation kind. The answer is re-derivable by
# recomputing the fact and applying this same mapping.
def _srqa_options(
    fact: RelationFact, scene: SceneAnnotation, include_cannot_tell: bool
) -> tuple[list[str], int, str]:
    """Returns (option texts, index of correct option, template key)."""
    holds = fact.verdict == "holds"
    subject = object_name(scene.get_object(fact.subject_id))
    if fact.object_id != CAMERA_ID:
        obj = object_name(scene.get_object(fact.object_id))
    else:
        obj = "the camera"

    if fact.kind in ("taller", "closer_to_camera"):
        texts = [_cap(subject), _cap(obj)]
        correct = 0 if holds else 1
        key = fact.kind
    elif fact.kind == "higher" and fact.object_id == CAMERA_ID:
        texts = ["Yes", "No"]
        correct = 0 if holds else 1
        key = "higher_camera"
    elif fact.kind == "left_of":
        texts = ["To the left", "To the right"]
        correct = 0 if holds else 1
        key = "left_of"
    elif fact.kind == "above":
        texts = ["Above", "Below"]
        correct = 0 if holds else 1
        key = "above"
    elif fact.kind == "facing_toward":
        texts = ["Facing toward it", "Facing away from it"]
        correct = 0 if holds else 1
        key = "facing_toward_camera" if fact.object_id == CAMERA_ID else "facing_toward_object"
    elif fact.kind == "facing_same_direction":
        texts = ["The same direction", "Opposite directions"]
        correct = 0 if holds else 1
        key = "facing_same_direction"
    elif fact.kind == "closer_to_anchor":
        anchor = object_name(scene.get_object(fact.anchor_id))
        texts = [
            _cap(subject),
            _cap(obj),
            f"Both are at about the same distance from {anchor}",
            f"Neither {subject} nor {obj}",
        ]
        correct = 0 if holds else 1
        key = "closer_to_anchor"
    else:
        raise QAGenerationError(f"no question template for fact kind {fact.kind!r}")
    if include_cannot_tell and len(texts) < 4:
        texts.append("Cannot tell from the image")
    return texts, correct, key


def gen_srqa(
    scene: SceneAnnotation,
    facts: Sequence[RelationFact],
    seed: int,
    include_cannot_tell: bool = False,
) -> list[QARecord]:
    """One multiple-choice record per unambiguous fact; ambiguous facts are
    never used. Option order is a seeded permutation and the answer tracks it."""
    records: list[QARecord] = []
    bank = _TEMPLATES["srqa"]
    for fact in facts:
        if fact.verdict == "ambiguous":
            continue
        rid = f"{scene.scene_id}:sr_qa:{fact.fact_id}"
        rng = _record_rng(seed, rid)
        texts, correct, key = _srqa_options(fact, scene, include_cannot_tell)
        template = _pick(bank[key], rng)
        subject = object_name(scene.get_object(fact.subject_id))
        obj = ("the camera" if fact.object_id == CAMERA_ID
               else object_name(scene.get_object(fact.object_id)))
        anchor = (object_name(scene.get_object(fact.anchor_id))
                  if fact.anchor_id else "")
        question = template.format(subject=subject, object=obj, anchor=anchor)
        options, answer = _shuffled_options(texts, correct, rng)
        records.append(QARecord(
            record_id=rid, scene_id=scene.scene_id,
            category=KIND_CATEGORY[fact.kind],
            question_text=question, options=options, answer=answer,
            variant="sr_qa", provenance=(fact.fact_id,),
        ))
    return records


# --- chain-of-thought construction ---------------------------------------------

def _qvec(v: Vec3 | UnitVec3) -> Vec3:
    return Vec3(quantize(v.x), quantize(v.y), quantize(v.z))


def _camera_step(frame) -> TraceStep:
    pos = _qvec(frame.camera_position)
    return TraceStep(
        step_kind="perception_location", subject_ids=(CAMERA_ID,),
        text=f"The camera is located at {fmt_vec(pos)}.",
        vec_value=pos,
    )


def _location_step(obj: ObjectAnnotation) -> TraceStep:
    loc = _qvec(obj.location)
    return TraceStep(
        step_kind="perception_location", subject_ids=(obj.object_id,),
        text=f"The {obj.category} '{obj.object_id}' is located at {fmt_vec(loc)}.",
        vec_value=loc,
    )


def _orientation_step(obj: ObjectAnnotation) -> TraceStep:
    d = _qvec(obj.orientation)
    return TraceStep(
        step_kind="perception_orientation", subject_ids=(obj.object_id,),
        text=f"The {obj.category} '{obj.object_id}' is facing direction {fmt_vec(d)}.",
        vec_value=d,
    )


def _distance_step(a: Vec3, b: Vec3) -> TraceStep:
    value = quantize(geometry.distance(a, b))
    return TraceStep(
        step_kind="computation", subject_ids=(),
        text=f"The distance between {fmt_vec(a)} and {fmt_vec(b)} is {fmt_scalar(value, 'm')}.",
        scalar_value=value, unit="m", claim_kind="distance", inputs=(a, b),
    )


def _camera_distance_step(cam: Vec3, p: Vec3) -> TraceStep:
    value = quantize(geometry.distance(cam, p))
    return TraceStep(
        step_kind="computation", subject_ids=(),
        text=(f"The distance from the camera at {fmt_vec(cam)} to {fmt_vec(p)} "
              f"is {fmt_scalar(value, 'm')}."),
        scalar_value=value, unit="m", claim_kind="camera_distance", inputs=(cam, p),
    )


def _angle_step(a: Vec3, b: Vec3) -> TraceStep:
    value = quantize(geometry.angular_difference(UnitVec3.from_vec(a), UnitVec3.from_vec(b)))
    return TraceStep(
        step_kind="computation", subject_ids=(),
        text=f"The angle between {fmt_vec(a)} and {fmt_vec(b)} is {fmt_scalar(value, 'degrees')}.",
        scalar_value=value, unit="degrees", claim_kind="angle", inputs=(a, b),
    )


def _height_diff_step(h1: float, h2: float) -> TraceStep:
    h1, h2 = quantize(h1), quantize(h2)
    value = quantize(h1 - h2)
    return TraceStep(
        step_kind="computation", subject_ids=(),
        text=(f"The height difference between {fmt_scalar(h1, 'm')} and "
              f"{fmt_scalar(h2, 'm')} is {fmt_scalar(value, 'm')}."),
        scalar_value=value, unit="m", claim_kind="height_difference", inputs=(h1, h2),
    )


def _bearing_step(p: Vec3, cam: Vec3, fwd: Vec3) -> TraceStep:
    from .geometry import CalibratedFrame

    qframe = CalibratedFrame(
        camera_position=cam, forward=UnitVec3.from_vec(Vec3(fwd.x, fwd.y, 0.0))
    )
    value = quantize(geometry.horizontal_bearing(qframe, p))
    return TraceStep(
        step_kind="computation", subject_ids=(),
        text=(f"The bearing of {fmt_vec(p)} from the camera at {fmt_vec(cam)} "
              f"facing {fmt_vec(fwd)} is {fmt_scalar(value, 'degrees')}."),
        scalar_value=value, unit="degrees", claim_kind="bearing", inputs=(p, cam, fwd),
    )


def _direction_step(a: Vec3, b: Vec3) -> TraceStep:
    d = _qvec(UnitVec3.from_vec(b - a))
    return TraceStep(
        step_kind="computation", subject_ids=(),
        text=f"The direction from {fmt_vec(a)} to {fmt_vec(b)} is {fmt_vec(d)}.",
        vec_value=d, claim_kind="direction", inputs=(a, b),
    )


def _reasoning_step(sentence: str, answer: str) -> TraceStep:
    return TraceStep(
        step_kind="reasoning", subject_ids=(),
        text=f"{sentence} The answer is {answer}.",
    )


def gen_srcot(record: QARecord, scene: SceneAnnotation,
              cfg: RelationConfig | None = None) -> CoTTrace:
    """Upgrade a relation QA record to an explicit chain-of-thought trace.

    Steps: perception of the referenced 3D values, computation of the exact
    metrics, then a reasoning step whose conclusion is the record's answer.
    """
    if record.variant not in ("sr_qa", "sr_cot"):
        raise QAGenerationError(f"variant {record.variant!r} is not upgradeable")
    if not record.provenance:
        raise QAGenerationError("record carries no provenance fact")
    cfg = cfg or RelationConfig()
    fact_id = record.provenance[0]
    try:
        fact = recompute_fact(fact_id, scene.objects, scene.frame, cfg)
    except KeyError as exc:
        raise QAGenerationError(f"scene {scene.scene_id!r} missing object {exc}") from exc
    holds = fact.verdict == "holds"
    answer_text = record.option_text(record.answer)
    steps: list[TraceStep] = []
    subject = scene.get_object(fact.subject_id)
    sub_name = f"the {subject.category} '{subject.object_id}'"

    if fact.kind in ("taller", "higher") and fact.object_id != CAMERA_ID:
        other = scene.get_object(fact.object_id)
        steps.append(_location_step(subject))
        steps.append(_location_step(other))
        diff = _height_diff_step(subject.location.z, other.location.z)
        steps.append(diff)
        word = "greater than" if holds else "less than"
        sentence = (f"Since {fmt_scalar(quantize(subject.location.z), 'm')} is {word} "
                    f"{fmt_scalar(quantize(other.location.z), 'm')}, "
                    f"{_decap(answer_text)} is taller.")
    elif fact.kind == "higher" and fact.object_id == CAMERA_ID:
        steps.append(_camera_step(scene.frame))
        steps.append(_location_step(subject))
        diff = _height_diff_step(subject.location.z, scene.frame.camera_position.z)
        steps.append(diff)
        word = "greater than" if holds else "not greater than"
        sentence = (f"Since {fmt_scalar(quantize(subject.location.z), 'm')} is {word} "
                    f"the camera height {fmt_scalar(quantize(scene.frame.camera_position.z), 'm')}, "
                    f"{sub_name} is {'above' if holds else 'not above'} the camera level.")
    elif fact.kind == "closer_to_camera":
        other = scene.get_object(fact.object_id)
        cam = _qvec(scene.frame.camera_position)
        steps.append(_camera_step(scene.frame))
        steps.append(_location_step(subject))
        steps.append(_location_step(other))
        d1 = _camera_distance_step(cam, _qvec(subject.location))
        d2 = _camera_distance_step(cam, _qvec(other.location))
        steps.extend([d1, d2])
        word = "less than" if holds else "greater than"
        sentence = (f"Since {fmt_scalar(d1.scalar_value, 'm')} is {word} "
                    f"{fmt_scalar(d2.scalar_value, 'm')}, {_decap(answer_text)} is closer to the camera.")
    elif fact.kind == "left_of":
        other = scene.get_object(fact.object_id)
        cam = _qvec(scene.frame.camera_position)
        fwd = _qvec(scene.frame.forward)
        steps.append(_camera_step(scene.frame))
        steps.append(_location_step(subject))
        steps.append(_location_step(other))
        b1 = _bearing_step(_qvec(subject.location), cam, fwd)
        b2 = _bearing_step(_qvec(other.location), cam, fwd)
        steps.extend([b1, b2])
        word = "less than" if holds else "greater than"
        side = "to the left of" if holds else "to the right of"
        sentence = (f"Since the bearing {fmt_scalar(b1.scalar_value, 'degrees')} is {word} "
                    f"{fmt_scalar(b2.scalar_value, 'degrees')}, {sub_name} is {side} "
                    f"the {other.category} '{other.object_id}'.")
    elif fact.kind == "above":
        other = scene.get_object(fact.object_id)
        steps.append(_location_step(subject))
        steps.append(_location_step(other))
        diff = _height_diff_step(subject.location.z, other.location.z)
        steps.append(diff)
        word = "positive" if holds else "negative"
        side = "above" if holds else "below"
        sentence = (f"Since the height difference {fmt_scalar(diff.scalar_value, 'm')} is {word}, "
                    f"{sub_name} is {side} the {other.category} '{other.object_id}'.")
    elif fact.kind == "facing_toward":
        steps.append(_location_step(subject))
        steps.append(_orientation_step(subject))
        if fact.object_id == CAMERA_ID:
            steps.append(_camera_step(scene.frame))
            target_pos = _qvec(scene.frame.camera_position)
            target_name = "the camera"
        else:
            other = scene.get_object(fact.object_id)
            steps.append(_location_step(other))
            target_pos = _qvec(other.location)
            target_name = f"the {other.category} '{other.object_id}'"
        direction = _direction_step(_qvec(subject.location), target_pos)
        steps.append(direction)
        angle = _angle_step(_qvec(subject.orientation), direction.vec_value)
        steps.append(angle)
        word = "less than" if holds else "greater than"
        facing = "toward" if holds else "away from"
        sentence = (f"Since the angle {fmt_scalar(angle.scalar_value, 'degrees')} is {word} "
                    f"90.00 degrees, {sub_name} is facing {facing} {target_name}.")
    elif fact.kind == "facing_same_direction":
        other = scene.get_object(fact.object_id)
        steps.append(_orientation_step(subject))
        steps.append(_orientation_step(other))
        angle = _angle_step(_qvec(subject.orientation), _qvec(other.orientation))
        steps.append(angle)
        word = "less than" if holds else "greater than"
        how = "broadly the same direction" if holds else "opposite directions"
        sentence = (f"Since the angle {fmt_scalar(angle.scalar_value, 'degrees')} is {word} "
                    f"90.00 degrees, they face {how}.")
    elif fact.kind == "closer_to_anchor":
        anchor = scene.get_object(fact.anchor_id)
        other = scene.get_object(fact.object_id)
        steps.append(_location_step(anchor))
        steps.append(_location_step(subject))
        steps.append(_location_step(other))
        d1 = _distance_step(_qvec(anchor.location), _qvec(subject.location))
        d2 = _distance_step(_qvec(anchor.location), _qvec(other.location))
        steps.extend([d1, d2])
        word = "less than" if holds else "greater than"
        sentence = (f"Since {fmt_scalar(d1.scalar_value, 'm')} is {word} "
                    f"{fmt_scalar(d2.scalar_value, 'm')}, {_decap(answer_text)} is closer to "
                    f"the {anchor.category} '{anchor.object_id}'.")
    else:
        raise QAGenerationError(f"cannot build a trace for fact kind {fact.kind!r}")

    steps.append(_reasoning_step(sentence, record.answer))
    return CoTTrace(steps=tuple(steps), final_answer=record.answer)


def upgrade_to_cot(record: QARecord, scene: SceneAnnotation,
                   cfg: RelationConfig | None = None) -> tuple[QARecord, CoTTrace]:
    trace = gen_srcot(record, scene, cfg)
    return replace(record, variant="sr_cot"), trace


# --- canonical rendering --------------------------------------------------------

THINK_OPEN, THINK_CLOSE = "<think>", "</think>"
ANSWER_OPEN, ANSWER_CLOSE = "<answer>", "</answer>"


def render_record(record: QARecord, trace: CoTTrace | None = None) -> str:
    """Deterministic text form: question, lettered options, and optionally the
    trace inside a think block plus the answer inside an answer block."""
    lines = [f"Question: {record.question_text}"]
    for label, text in record.options:
        lines.append(f"{label}. {text}")
    if trace is not None:
        lines.append(THINK_OPEN)
        for step in trace.steps:
            lines.append(step.text)
        lines.append(THINK_CLOSE)
        lines.append(ANSWER_OPEN)
        lines.append(trace.final_answer)
        lines.append(ANSWER_CLOSE)
    return "\n".join(lines)


def render_completion(trace: CoTTrace) -> str:
    """Just the think + answer blocks, the shape a policy completion takes."""
    lines = [THINK_OPEN]
    for step in trace.steps:
        lines.append(step.text)
    lines.append(THINK_CLOSE)
    lines.append(ANSWER_OPEN)
    lines.append(trace.final_answer)
    lines.append(ANSWER_CLOSE)
    return "\n".join(lines)


# --- record files ----------------------------------------------------------------

def record_to_json(record: QARecord, trace_text: str | None = None) -> dict:
    raw = {
        "record_id": record.record_id,
        "scene_id": record.scene_id,
        "category": record.category,
        "question_text": record.question_text,
        "options": {label: text for label, text in record.options},
        "answer": record.answer,
        "variant": record.variant,
        "provenance": list(record.provenance),
    }
    if trace_text is not None:
        raw["trace_text"] = trace_text
    return raw


def record_from_json(raw: dict) -> tuple[QARecord, str | None]:
    options = tuple(sorted(raw["options"].items()))
    record = QARecord(
        record_id=raw["record_id"],
        scene_id=raw["scene_id"],
        category=raw["category"],
        question_text=raw["question_text"],
        options=options,
        answer=raw["answer"],
        variant=raw["variant"],
        provenance=tuple(raw.get("provenance", ())),
    )
    return record, raw.get("trace_text")


def save_records(
    items: Iterable[tuple[QARecord, str | None]], path: str | Path
) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record, trace_text in items:
            fh.write(json.dumps(record_to_json(record, trace_text)) + "\n")
            count += 1
    return count


def load_records(path: str | Path) -> list[tuple[QARecord, str | None]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(record_from_json(json.loads(line)))
    return out
