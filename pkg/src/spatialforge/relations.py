"""Rule-based derivation of spatial relation facts with ambiguity margins.

Every comparison measures a gap (meters or degrees) and classifies it against
a margin: |gap| below the margin is "ambiguous", otherwise the sign decides
between "holds" and "holds_inverse". Boundary cases therefore never silently
become training labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import geometry
from .geometry import CalibratedFrame, UnitVec3, Vec3
from .scenes import CAMERA_ID, ObjectAnnotation, SceneAnnotation

HOLDS = "holds"
HOLDS_INVERSE = "holds_inverse"
AMBIGUOUS = "ambiguous"
VERDICTS = (HOLDS, HOLDS_INVERSE, AMBIGUOUS)

# Two-object kinds compare subject against object; "higher" is the
# camera-relative elevation comparison, "taller" the object-vs-object one.
PAIR_KINDS = ("taller", "higher", "closer_to_camera", "left_of", "right_of", "above", "below")
FACING_KINDS = ("facing_toward", "facing_away", "facing_same_direction")
TRIPLE_KINDS = ("closer_to_anchor",)
ALL_KINDS = PAIR_KINDS + FACING_KINDS + TRIPLE_KINDS


class RelationError(ValueError):
    """Degenerate geometry or invalid arguments for a relation rule."""


@dataclass(frozen=True)
class RelationConfig:
    distance_margin_rel: float = 0.15
    height_margin_abs: float = 0.3
    angle_margin_deg: float = 10.0
    # above/below additionally requires ground-plane proximity.
    overlap_radius_m: float = 1.0

    def __post_init__(self) -> None:
        for name in (
            "distance_margin_rel",
            "height_margin_abs",
            "angle_margin_deg",
            "overlap_radius_m",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_json(self) -> dict:
        return {
            "distance_margin_rel": self.distance_margin_rel,
            "height_margin_abs": self.height_margin_abs,
            "angle_margin_deg": self.angle_margin_deg,
            "overlap_radius_m": self.overlap_radius_m,
        }


@dataclass(frozen=True)
class RelationFact:
    """A measured relation: gap, the margin it was judged against, and verdict.

    ``margin_value`` is the signed measured gap; ``threshold`` the effective
    margin in the same unit, so ambiguity is re-checkable as
    |margin_value| < threshold.
    """

    kind: str
    subject_id: str
    object_id: str
    anchor_id: str | None
    verdict: str
    margin_value: float
    threshold: float

    def __post_init__(self) -> None:
        if self.kind not in ALL_KINDS:
            raise RelationError(f"unknown relation kind {self.kind!r}")
        if self.verdict not in VERDICTS:
            raise RelationError(f"unknown verdict {self.verdict!r}")
        if self.kind in TRIPLE_KINDS and not self.anchor_id:
            raise RelationError(f"{self.kind} requires an anchor_id")

    @property
    def fact_id(self) -> str:
        return f"{self.kind}:{self.subject_id}:{self.object_id}:{self.anchor_id or '-'}"


@dataclass(frozen=True)
class SkippedFact:
    kind: str
    subject_id: str
    object_id: str
    anchor_id: str | None
    reason: str


@dataclass(frozen=True)
class DerivationResult:
    facts: tuple[RelationFact, ...]
    skipped: tuple[SkippedFact, ...]


def _classify(gap: float, threshold: float) -> str:
    if gap > threshold:
        return HOLDS
    if gap < -threshold:
        return HOLDS_INVERSE
    return AMBIGUOUS


def compare_height(
    a: ObjectAnnotation, b: ObjectAnnotation, cfg: RelationConfig, kind: str = "taller"
) -> RelationFact:
    """Is a above b in elevation? Gap is the z difference in meters."""
    if kind not in ("taller", "higher"):
        raise RelationError(f"compare_height kind must be taller/higher, got {kind!r}")
    gap = a.location.z - b.location.z
    return RelationFact(
        kind=kind,
        subject_id=a.object_id,
        object_id=b.object_id,
        anchor_id=None,
        verdict=_classify(gap, cfg.height_margin_abs),
        margin_value=gap,
        threshold=cfg.height_margin_abs,
    )


def height_vs_camera(
    a: ObjectAnnotation, frame: CalibratedFrame, cfg: RelationConfig
) -> RelationFact:
    """Is the object above the camera's own height? Camera-relative 'higher'."""
    gap = a.location.z - frame.camera_position.z
    return RelationFact(
        kind="higher",
        subject_id=a.object_id,
        object_id=CAMERA_ID,
        anchor_id=None,
        verdict=_classify(gap, cfg.height_margin_abs),
        margin_value=gap,
        threshold=cfg.height_margin_abs,
    )


def compare_camera_distance(
    a: ObjectAnnotation, b: ObjectAnnotation, frame: CalibratedFrame, cfg: RelationConfig
) -> RelationFact:
    """Is a closer to the camera than b? Relative margin on the distance gap."""
    da = geometry.camera_distance(a.location, frame)
    db = geometry.camera_distance(b.location, frame)
    if min(da, db) <= 0.0:
        raise RelationError("object coincides with the camera position")
    gap = db - da
    threshold = cfg.distance_margin_rel * min(da, db)
    return RelationFact(
        kind="closer_to_camera",
        subject_id=a.object_id,
        object_id=b.object_id,
        anchor_id=None,
        verdict=_classify(gap, threshold),
        margin_value=gap,
        threshold=threshold,
    )


def viewer_left_right(
    a: ObjectAnnotation, b: ObjectAnnotation, frame: CalibratedFrame, cfg: RelationConfig
) -> RelationFact:
    """Is a to the viewer's left of b? Gap is bearing(b) - bearing(a) in degrees."""
    bearing_a = geometry.horizontal_bearing(frame, a.location)
    bearing_b = geometry.horizontal_bearing(frame, b.location)
    gap = bearing_b - bearing_a
    return RelationFact(
        kind="left_of",
        subject_id=a.object_id,
        object_id=b.object_id,
        anchor_id=None,
        verdict=_classify(gap, cfg.angle_margin_deg),
        margin_value=gap,
        threshold=cfg.angle_margin_deg,
    )


def above_below(
    a: ObjectAnnotation, b: ObjectAnnotation, cfg: RelationConfig
) -> RelationFact:
    """Is a above b? Requires ground-plane proximity; ambiguous otherwise."""
    dx = a.location.x - b.location.x
    dy = a.location.y - b.location.y
    horizontal = (dx * dx + dy * dy) ** 0.5
    gap = a.location.z - b.location.z
    if horizontal > cfg.overlap_radius_m:
        verdict = AMBIGUOUS
    else:
        verdict = _classify(gap, cfg.height_margin_abs)
    return RelationFact(
        kind="above",
        subject_id=a.object_id,
        object_id=b.object_id,
        anchor_id=None,
        verdict=verdict,
        margin_value=gap,
        threshold=cfg.height_margin_abs,
    )


def _facing_angle(a: ObjectAnnotation, target_pos: Vec3) -> float:
    to_target = target_pos - a.location
    if to_target.norm() < 1e-12:
        raise RelationError(f"facing target coincides with object {a.object_id!r}")
    return geometry.angular_difference(a.orientation, UnitVec3.from_vec(to_target))


def orientation_facing(
    a: ObjectAnnotation,
    target: ObjectAnnotation | CalibratedFrame,
    cfg: RelationConfig,
) -> RelationFact:
    """Is a facing toward the target (camera or another object)?

    The gap is 90 minus the angle between a's orientation and the ray to the
    target, so "holds" means facing toward, "holds_inverse" facing away, and
    the +/- angle_margin band around 90 degrees is ambiguous.
    """
    if isinstance(target, CalibratedFrame):
        target_id = CAMERA_ID
        target_pos = target.camera_position
    else:
        target_id = target.object_id
        target_pos = target.location
    angle = _facing_angle(a, target_pos)
    gap = 90.0 - angle
    return RelationFact(
        kind="facing_toward",
        subject_id=a.object_id,
        object_id=target_id,
        anchor_id=None,
        verdict=_classify(gap, cfg.angle_margin_deg),
        margin_value=gap,
        threshold=cfg.angle_margin_deg,
    )


def facing_same_direction(
    a: ObjectAnnotation, b: ObjectAnnotation, cfg: RelationConfig
) -> RelationFact:
    """Are a and b oriented more alike than opposed? Same 90-degree dead band
    as facing_toward: gap is 90 minus the angle between the orientations."""
    angle = geometry.angular_difference(a.orientation, b.orientation)
    gap = 90.0 - angle
    return RelationFact(
        kind="facing_same_direction",
        subject_id=a.object_id,
        object_id=b.object_id,
        anchor_id=None,
        verdict=_classify(gap, cfg.angle_margin_deg),
        margin_value=gap,
        threshold=cfg.angle_margin_deg,
    )


def multi_object_closer_to(
    anchor: ObjectAnnotation,
    a: ObjectAnnotation,
    b: ObjectAnnotation,
    cfg: RelationConfig,
) -> RelationFact:
    """Is a closer to the anchor than b? Relative margin, like camera distance."""
    ids = {anchor.object_id, a.object_id, b.object_id}
    if len(ids) != 3:
        raise RelationError("anchor and candidates must be three distinct objects")
    da = geometry.distance(anchor.location, a.location)
    db = geometry.distance(anchor.location, b.location)
    if min(da, db) <= 0.0:
        raise RelationError("candidate coincides with the anchor")
    gap = db - da
    threshold = cfg.distance_margin_rel * min(da, db)
    return RelationFact(
        kind="closer_to_anchor",
        subject_id=a.object_id,
        object_id=b.object_id,
        anchor_id=anchor.object_id,
        verdict=_classify(gap, threshold),
        margin_value=gap,
        threshold=threshold,
    )


def _sort_key(fact: RelationFact) -> tuple:
    return (fact.kind, fact.subject_id, fact.object_id, fact.anchor_id or "")


def derive_facts(
    objects: Sequence[ObjectAnnotation],
    frame: CalibratedFrame,
    cfg: RelationConfig,
) -> DerivationResult:
    """Enumerate every applicable fact for the object set under the frame.

    Pairwise comparative facts use the lexicographically smaller id as
    subject; facing-toward between objects is emitted for both directions
    (they are distinct measurements). Degenerate cases become skip records
    instead of raising. Output is sorted by (kind, subject, object, anchor).
    """
    facts: list[RelationFact] = []
    skipped: list[SkippedFact] = []

    def attempt(kind: str, subject: str, obj: str, anchor: str | None, fn) -> None:
        try:
            facts.append(fn())
        except RelationError as exc:
            skipped.append(SkippedFact(kind, subject, obj, anchor, str(exc)))
        except geometry.GeometryError as exc:
            skipped.append(SkippedFact(kind, subject, obj, anchor, str(exc)))

    ordered = sorted(objects, key=lambda o: o.object_id)
    for obj in ordered:
        attempt(
            "facing_toward", obj.object_id, CAMERA_ID, None,
            lambda o=obj: orientation_facing(o, frame, cfg),
        )
        attempt(
            "higher", obj.object_id, CAMERA_ID, None,
            lambda o=obj: height_vs_camera(o, frame, cfg),
        )
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            attempt("taller", a.object_id, b.object_id, None,
                    lambda a=a, b=b: compare_height(a, b, cfg))
            attempt("closer_to_camera", a.object_id, b.object_id, None,
                    lambda a=a, b=b: compare_camera_distance(a, b, frame, cfg))
            attempt("left_of", a.object_id, b.object_id, None,
                    lambda a=a, b=b: viewer_left_right(a, b, frame, cfg))
            attempt("above", a.object_id, b.object_id, None,
                    lambda a=a, b=b: above_below(a, b, cfg))
            attempt("facing_same_direction", a.object_id, b.object_id, None,
                    lambda a=a, b=b: facing_same_direction(a, b, cfg))
            attempt("facing_toward", a.object_id, b.object_id, None,
                    lambda a=a, b=b: orientation_facing(a, b, cfg))
            attempt("facing_toward", b.object_id, a.object_id, None,
                    lambda a=a, b=b: orientation_facing(b, a, cfg))
    for anchor in ordered:
        rest = [o for o in ordered if o.object_id != anchor.object_id]
        for i, a in enumerate(rest):
            for b in rest[i + 1:]:
                attempt(
                    "closer_to_anchor", a.object_id, b.object_id, anchor.object_id,
                    lambda anchor=anchor, a=a, b=b: multi_object_closer_to(anchor, a, b, cfg),
                )
    facts.sort(key=_sort_key)
    skipped.sort(key=lambda s: (s.kind, s.subject_id, s.object_id, s.anchor_id or ""))
    return DerivationResult(facts=tuple(facts), skipped=tuple(skipped))


def derive_all(scene: SceneAnnotation, cfg: RelationConfig) -> DerivationResult:
    """derive_facts over a scene's objects under its calibrated frame."""
    return derive_facts(scene.objects, scene.frame, cfg)


def recompute_fact(
    fact_id: str,
    objects: Sequence[ObjectAnnotation],
    frame: CalibratedFrame,
    cfg: RelationConfig,
) -> RelationFact:
    """Re-derive a single fact from its id against the given objects."""
    kind, subject_id, object_id, anchor_id = fact_id.split(":")
    by_id = {o.object_id: o for o in objects}
    if kind == "taller":
        return compare_height(by_id[subject_id], by_id[object_id], cfg)
    if kind == "higher":
        if object_id == CAMERA_ID:
            return height_vs_camera(by_id[subject_id], frame, cfg)
        return compare_height(by_id[subject_id], by_id[object_id], cfg, kind="higher")
    if kind == "closer_to_camera":
        return compare_camera_distance(by_id[subject_id], by_id[object_id], frame, cfg)
    if kind == "left_of":
        return viewer_left_right(by_id[subject_id], by_id[object_id], frame, cfg)
    if kind == "above":
        return above_below(by_id[subject_id], by_id[object_id], cfg)
    if kind == "facing_toward":
        target = frame if object_id == CAMERA_ID else by_id[object_id]
        return orientation_facing(by_id[subject_id], target, cfg)
    if kind == "facing_same_direction":
        return facing_same_direction(by_id[subject_id], by_id[object_id], cfg)
    if kind == "closer_to_anchor":
        return multi_object_closer_to(by_id[anchor_id], by_id[subject_id], by_id[object_id], cfg)
    raise RelationError(f"cannot recompute fact of kind {kind!r}")


def save_facts(
    facts: Iterable[RelationFact], cfg: RelationConfig, path: str | Path
) -> int:
    """Write a facts file: a config-echo header line, then one fact per line."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"config": cfg.to_json()}) + "\n")
        for fact in facts:
            fh.write(json.dumps({
                "kind": fact.kind,
                "subject_id": fact.subject_id,
                "object_id": fact.object_id,
                "anchor_id": fact.anchor_id,
                "verdict": fact.verdict,
                "margin_value": fact.margin_value,
                "threshold": fact.threshold,
            }) + "\n")
            count += 1
    return count


def load_facts(path: str | Path) -> tuple[tuple[RelationFact, ...], RelationConfig]:
    pairs, cfg = load_fact_table(path)
    return tuple(fact for _, fact in pairs), cfg


def save_fact_table(
    pairs: Iterable[tuple[str, RelationFact]], cfg: RelationConfig, path: str | Path
) -> int:
    """Multi-scene facts file: every row carries its scene_id."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"config": cfg.to_json()}) + "\n")
        for scene_id, fact in pairs:
            fh.write(json.dumps({
                "scene_id": scene_id,
                "kind": fact.kind,
                "subject_id": fact.subject_id,
                "object_id": fact.object_id,
                "anchor_id": fact.anchor_id,
                "verdict": fact.verdict,
                "margin_value": fact.margin_value,
                "threshold": fact.threshold,
            }) + "\n")
            count += 1
    return count


def load_fact_table(
    path: str | Path,
) -> tuple[tuple[tuple[str, RelationFact], ...], RelationConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        cfg = RelationConfig(**header["config"])
        pairs = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            fact = RelationFact(
                kind=raw["kind"],
                subject_id=raw["subject_id"],
                object_id=raw["object_id"],
                anchor_id=raw.get("anchor_id"),
                verdict=raw["verdict"],
                margin_value=float(raw["margin_value"]),
                threshold=float(raw["threshold"]),
            )
            pairs.append((raw.get("scene_id", ""), fact))
    return tuple(pairs), cfg
