"""Parsing and verification of reasoning traces with explicit 3D values.

The parser is total: arbitrary text yields a ParsedTrace, never an exception.
Recognized step lines follow the canonical grammar emitted by qa.render_record;
anything else stays as plain thinking text. Consistency checking recomputes
every computation claim from its own claimed inputs, and failure attribution
splits wrong answers into perception, computation, and reasoning errors.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import geometry
from .geometry import CalibratedFrame, UnitVec3, Vec3
from .qa import ANSWER_CLOSE, ANSWER_OPEN, THINK_CLOSE, THINK_OPEN, CoTTrace, QARecord, TraceStep
from .scenes import CAMERA_ID, SceneAnnotation

_NUM = r"-?\d+(?:\.\d+)?"
_VEC = rf"\[\s*({_NUM})\s*,\s*({_NUM})\s*,\s*({_NUM})\s*\]"

_THINK_RE = re.compile(re.escape(THINK_OPEN) + r"\n?(.*?)\n?" + re.escape(THINK_CLOSE), re.DOTALL)
_ANSWER_RE = re.compile(re.escape(ANSWER_OPEN) + r"(.*?)" + re.escape(ANSWER_CLOSE), re.DOTALL)
_LABEL_RE = re.compile(r"(?<![A-Za-z0-9])([A-D])(?=[\s\.\,\)\:\;\!\?]|$)")

_CAMERA_LOC_RE = re.compile(rf"^The camera is located at {_VEC}\.$")
_LOC_RE = re.compile(rf"^The (.+?) '([^']+)' is located at {_VEC}\.$")
_ORIENT_RE = re.compile(rf"^The (.+?) '([^']+)' is facing direction {_VEC}\.$")
_DISTANCE_RE = re.compile(rf"^The distance between {_VEC} and {_VEC} is ({_NUM}) m\.$")
_CAMERA_DIST_RE = re.compile(rf"^The distance from the camera at {_VEC} to {_VEC} is ({_NUM}) m\.$")
_ANGLE_RE = re.compile(rf"^The angle between {_VEC} and {_VEC} is ({_NUM}) degrees\.$")
_HEIGHT_RE = re.compile(
    rf"^The height difference between ({_NUM}) m and ({_NUM}) m is ({_NUM}) m\.$"
)
_BEARING_RE = re.compile(
    rf"^The bearing of {_VEC} from the camera at {_VEC} facing {_VEC} is ({_NUM}) degrees\.$"
)
_DIRECTION_RE = re.compile(rf"^The direction from {_VEC} to {_VEC} is {_VEC}\.$")
_REASONING_RE = re.compile(r"\bthe answer is ([A-D])\b", re.IGNORECASE)


@dataclass(frozen=True)
class ParsedTrace:
    thinking_text: str
    steps: tuple[TraceStep, ...]
    answer: str | None
    parse_warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class Violation:
    step_index: int
    claimed: float
    recomputed: float
    abs_error: float


@dataclass(frozen=True)
class ConsistencyReport:
    checked_claims: int
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


OUTCOMES = ("correct", "perception_error", "computation_error", "reasoning_error", "format_error")


@dataclass(frozen=True)
class AttributionThresholds:
    orientation_deg: float = 30.0
    location_m: float = 0.5
    consistency_tol: float = 0.01


@dataclass(frozen=True)
class FailureAttribution:
    question_id: str
    outcome: str
    orientation_error_deg: float | None = None
    location_error_m: float | None = None
    angle_error_deg: float | None = None
    distance_error_m: float | None = None
    depth_error_m: float | None = None

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")


def _vec(groups: Sequence[str], start: int) -> Vec3:
    return Vec3(float(groups[start]), float(groups[start + 1]), float(groups[start + 2]))


def _parse_step_line(line: str) -> TraceStep | None:
    m = _CAMERA_LOC_RE.match(line)
    if m:
        return TraceStep(
            step_kind="perception_location", subject_ids=(CAMERA_ID,),
            text=line, vec_value=_vec(m.groups(), 0),
        )
    m = _LOC_RE.match(line)
    if m:
        return TraceStep(
            step_kind="perception_location", subject_ids=(m.group(2),),
            text=line, vec_value=_vec(m.groups(), 2),
        )
    m = _ORIENT_RE.match(line)
    if m:
        return TraceStep(
            step_kind="perception_orientation", subject_ids=(m.group(2),),
            text=line, vec_value=_vec(m.groups(), 2),
        )
    m = _DISTANCE_RE.match(line)
    if m:
        g = m.groups()
        return TraceStep(
            step_kind="computation", subject_ids=(), text=line,
            scalar_value=float(g[6]), unit="m", claim_kind="distance",
            inputs=(_vec(g, 0), _vec(g, 3)),
        )
    m = _CAMERA_DIST_RE.match(line)
    if m:
        g = m.groups()
        return TraceStep(
            step_kind="computation", subject_ids=(), text=line,
            scalar_value=float(g[6]), unit="m", claim_kind="camera_distance",
            inputs=(_vec(g, 0), _vec(g, 3)),
        )
    m = _ANGLE_RE.match(line)
    if m:
        g = m.groups()
        return TraceStep(
            step_kind="computation", subject_ids=(), text=line,
            scalar_value=float(g[6]), unit="degrees", claim_kind="angle",
            inputs=(_vec(g, 0), _vec(g, 3)),
        )
    m = _HEIGHT_RE.match(line)
    if m:
        g = m.groups()
        return TraceStep(
            step_kind="computation", subject_ids=(), text=line,
            scalar_value=float(g[2]), unit="m", claim_kind="height_difference",
            inputs=(float(g[0]), float(g[1])),
        )
    m = _BEARING_RE.match(line)
    if m:
        g = m.groups()
        return TraceStep(
            step_kind="computation", subject_ids=(), text=line,
            scalar_value=float(g[9]), unit="degrees", claim_kind="bearing",
            inputs=(_vec(g, 0), _vec(g, 3), _vec(g, 6)),
        )
    m = _DIRECTION_RE.match(line)
    if m:
        g = m.groups()
        return TraceStep(
            step_kind="computation", subject_ids=(), text=line,
            vec_value=_vec(g, 6), claim_kind="direction",
            inputs=(_vec(g, 0), _vec(g, 3)),
        )
    m = _REASONING_RE.search(line)
    if m:
        return TraceStep(step_kind="reasoning", subject_ids=(), text=line)
    return None


def parse_trace(text: str) -> ParsedTrace:
    """Total parser: recognize think/answer blocks and typed step lines.

    Malformed structure produces warnings, never failures; unrecognized lines
    remain part of the thinking text without becoming steps.
    """
    warnings: list[str] = []
    thinking = ""
    m = _THINK_RE.search(text)
    if m:
        thinking = m.group(1)
        if text.count(THINK_OPEN) > 1:
            warnings.append("multiple think blocks; using the first")
    elif THINK_OPEN in text:
        thinking = text.split(THINK_OPEN, 1)[1]
        close = thinking.find(ANSWER_OPEN)
        if close != -1:
            thinking = thinking[:close]
        thinking = thinking.strip("\n")
        warnings.append("think block not closed; content truncated at end of text")
    elif THINK_CLOSE in text:
        warnings.append("stray think close tag without an opening tag")

    steps = []
    for line in thinking.splitlines():
        step = _parse_step_line(line.strip())
        if step is not None:
            steps.append(step)

    answer = extract_answer(text)
    if _ANSWER_RE.search(text) and len(_ANSWER_RE.findall(text)) > 1:
        warnings.append("multiple answer blocks; using the last")
    return ParsedTrace(
        thinking_text=thinking, steps=tuple(steps), answer=answer,
        parse_warnings=tuple(warnings),
    )


def extract_answer(text: str, options: Mapping[str, str] | None = None) -> str | None:
    """Choice-label extraction with fixed priority.

    1. Content of the (last) answer block.
    2. The last standalone option letter followed by a delimiter.
    3. Exact match of the whole text against an option's text, when given.
    """
    blocks = _ANSWER_RE.findall(text)
    if blocks:
        m = _LABEL_RE.search(blocks[-1])
        if m:
            return m.group(1)
    matches = _LABEL_RE.findall(text)
    if matches:
        return matches[-1]
    if options:
        stripped = text.strip().lower()
        for label, option_text in options.items():
            if stripped == option_text.strip().lower():
                return label
    return None


def _circular_error(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def _recompute_claim(step: TraceStep) -> float | None:
    """Recompute a computation claim's value from its claimed inputs.

    Returns None when the inputs are degenerate (caller records a violation).
    """
    kind = step.claim_kind
    try:
        if kind in ("distance", "camera_distance"):
            a, b = step.inputs
            return geometry.distance(a, b)
        if kind == "angle":
            a, b = step.inputs
            return geometry.angular_difference(UnitVec3.from_vec(a), UnitVec3.from_vec(b))
        if kind == "height_difference":
            h1, h2 = step.inputs
            return h1 - h2
        if kind == "bearing":
            p, cam, fwd = step.inputs
            frame = CalibratedFrame(
                camera_position=cam,
                forward=UnitVec3.from_vec(Vec3(fwd.x, fwd.y, 0.0)),
            )
            return geometry.horizontal_bearing(frame, p)
    except geometry.GeometryError:
        return None
    return None


def check_consistency(trace: ParsedTrace | CoTTrace, tol: float = 0.01) -> ConsistencyReport:
    """Verify each computation claim against a recomputation from its inputs.

    Scalar claims compare absolutely (bearings circularly); direction claims
    compare by max component error. A claim that cannot be recomputed counts
    as a violation.
    """
    violations: list[Violation] = []
    checked = 0
    for index, step in enumerate(trace.steps):
        if step.step_kind != "computation":
            continue
        checked += 1
        if step.claim_kind == "direction":
            a, b = step.inputs
            try:
                d = UnitVec3.from_vec(b - a)
            except geometry.GeometryError:
                violations.append(Violation(index, 0.0, math.nan, math.inf))
                continue
            err = max(
                abs(step.vec_value.x - d.x),
                abs(step.vec_value.y - d.y),
                abs(step.vec_value.z - d.z),
            )
            if err > tol:
                violations.append(Violation(index, step.vec_value.x, d.x, err))
            continue
        recomputed = _recompute_claim(step)
        if recomputed is None:
            violations.append(Violation(index, step.scalar_value or 0.0, math.nan, math.inf))
            continue
        if step.claim_kind == "bearing":
            err = _circular_error(step.scalar_value, recomputed)
        else:
            err = abs(step.scalar_value - recomputed)
        if err > tol:
            violations.append(Violation(index, step.scalar_value, recomputed, err))
    return ConsistencyReport(checked_claims=checked, violations=tuple(violations))


def _computation_errors(trace: ParsedTrace | CoTTrace) -> dict[str, list[float]]:
    """Per-claim-type consistency errors: the 3D-reasoning half of the metrics."""
    errors: dict[str, list[float]] = {"angle": [], "distance": [], "depth": []}
    for step in trace.steps:
        if step.step_kind != "computation" or step.claim_kind == "direction":
            continue
        recomputed = _recompute_claim(step)
        if recomputed is None:
            continue
        if step.claim_kind == "bearing":
            errors["angle"].append(_circular_error(step.scalar_value, recomputed))
        elif step.claim_kind == "angle":
            errors["angle"].append(abs(step.scalar_value - recomputed))
        elif step.claim_kind == "camera_distance":
            errors["depth"].append(abs(step.scalar_value - recomputed))
        elif step.claim_kind in ("distance", "height_difference"):
            errors["distance"].append(abs(step.scalar_value - recomputed))
    return errors


def attribute_failure(
    trace: ParsedTrace | CoTTrace,
    scene: SceneAnnotation,
    record: QARecord,
    thresholds: AttributionThresholds = AttributionThresholds(),
) -> FailureAttribution:
    """Classify one answered question: format, perception, computation,
    reasoning error, or correct, in that precedence order.

    Perception errors compare claimed locations/orientations against the
    scene's ground truth; computation errors come from check_consistency;
    reasoning errors are clean traces with a wrong final answer.
    """
    answer = trace.answer if isinstance(trace, ParsedTrace) else trace.final_answer

    orientation_errors: list[float] = []
    location_errors: list[float] = []
    for step in trace.steps:
        if step.step_kind == "perception_location" and step.subject_ids:
            subject = step.subject_ids[0]
            if subject == CAMERA_ID:
                truth = scene.frame.camera_position
            else:
                try:
                    truth = scene.get_object(subject).location
                except KeyError:
                    continue
            location_errors.append(geometry.distance(step.vec_value, truth))
        elif step.step_kind == "perception_orientation" and step.subject_ids:
            try:
                truth_dir = scene.get_object(step.subject_ids[0]).orientation
            except KeyError:
                continue
            try:
                claimed = UnitVec3.from_vec(step.vec_value)
            except geometry.GeometryError:
                orientation_errors.append(180.0)
                continue
            orientation_errors.append(geometry.angular_difference(claimed, truth_dir))

    comp = _computation_errors(trace)
    consistency = check_consistency(trace, tol=thresholds.consistency_tol)

    measured = dict(
        orientation_error_deg=max(orientation_errors) if orientation_errors else None,
        location_error_m=max(location_errors) if location_errors else None,
        angle_error_deg=max(comp["angle"]) if comp["angle"] else None,
        distance_error_m=max(comp["distance"]) if comp["distance"] else None,
        depth_error_m=max(comp["depth"]) if comp["depth"] else None,
    )

    if answer is None:
        outcome = "format_error"
    elif (
        (measured["orientation_error_deg"] is not None
         and measured["orientation_error_deg"] > thresholds.orientation_deg)
        or (measured["location_error_m"] is not None
            and measured["location_error_m"] > thresholds.location_m)
    ):
        outcome = "perception_error"
    elif not consistency.ok:
        outcome = "computation_error"
    elif answer != record.answer:
        outcome = "reasoning_error"
    else:
        outcome = "correct"
    return FailureAttribution(question_id=record.record_id, outcome=outcome, **measured)


@dataclass(frozen=True)
class FailureMetrics:
    """Aggregate failure table: accuracy at the angular threshold for
    orientation/angle claims, mean absolute error for the metric claims."""

    total: int
    outcome_counts: dict[str, int] = field(default_factory=dict)
    orientation_accuracy: float | None = None
    location_mean_error_m: float | None = None
    angle_accuracy: float | None = None
    distance_mean_error_m: float | None = None
    depth_mean_error_m: float | None = None


def failure_metrics(
    attributions: Sequence[FailureAttribution],
    angular_threshold_deg: float = 30.0,
) -> FailureMetrics:
    if not attributions:
        raise ValueError("failure_metrics requires at least one attribution")
    counts = {outcome: 0 for outcome in OUTCOMES}
    for attribution in attributions:
        counts[attribution.outcome] += 1

    def accuracy(values: list[float]) -> float | None:
        if not values:
            return None
        return sum(1 for v in values if v <= angular_threshold_deg) / len(values)

    def mean(values: list[float]) -> float | None:
        if not values:
            return None
        return sum(values) / len(values)

    orientation = [a.orientation_error_deg for a in attributions if a.orientation_error_deg is not None]
    location = [a.location_error_m for a in attributions if a.location_error_m is not None]
    angle = [a.angle_error_deg for a in attributions if a.angle_error_deg is not None]
    dist = [a.distance_error_m for a in attributions if a.distance_error_m is not None]
    depth = [a.depth_error_m for a in attributions if a.depth_error_m is not None]
    return FailureMetrics(
        total=len(attributions),
        outcome_counts=counts,
        orientation_accuracy=accuracy(orientation),
        location_mean_error_m=mean(location),
        angle_accuracy=accuracy(angle),
        distance_mean_error_m=mean(dist),
        depth_mean_error_m=mean(depth),
    )


def metrics_table(metrics: FailureMetrics) -> str:
    """Delimited summary table; location/distance/depth are meters (assumed unit)."""
    lines = ["metric\tvalue"]
    lines.append(f"questions\t{metrics.total}")
    for outcome in OUTCOMES:
        lines.append(f"count_{outcome}\t{metrics.outcome_counts.get(outcome, 0)}")

    def fmt(v: float | None, as_pct: bool = False) -> str:
        if v is None:
            return "n/a"
        return f"{100.0 * v:.1f}" if as_pct else f"{v:.4f}"

    lines.append(f"orientation_accuracy_pct\t{fmt(metrics.orientation_accuracy, True)}")
    lines.append(f"location_mean_error_m\t{fmt(metrics.location_mean_error_m)}")
    lines.append(f"angle_accuracy_pct\t{fmt(metrics.angle_accuracy, True)}")
    lines.append(f"distance_mean_error_m\t{fmt(metrics.distance_mean_error_m)}")
    lines.append(f"depth_mean_error_m\t{fmt(metrics.depth_mean_error_m)}")
    return "\n".join(lines) + "\n"
