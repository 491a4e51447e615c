"""Scene annotation data model: persistence, validation, filtering, mixing.

Scene files are line-delimited JSON, one scene per line, diffable and
append-friendly. Object locations and orientations are stored in the
calibrated frame; the frame itself is re-derived from the extrinsics on load
rather than stored.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

from .geometry import (
    CalibratedFrame,
    CameraExtrinsics,
    UnitVec3,
    Vec3,
    derive_frame,
)

VERDICTS = ("unverified", "accepted", "rejected")
SOURCES = ("human_verified", "unverified")

# Reserved subject/object id for camera-relative relation facts.
CAMERA_ID = "@camera"

MIN_OBJECT_Z = -0.5


class SceneValidationError(ValueError):
    """A scene or object violates a model invariant."""

    def __init__(self, message: str, scene_id: str | None = None, field_name: str | None = None):
        self.scene_id = scene_id
        self.field_name = field_name
        prefix = ""
        if scene_id is not None:
            prefix += f"scene {scene_id!r}: "
        if field_name is not None:
            prefix += f"field {field_name}: "
        super().__init__(prefix + message)


class SceneFormatError(ValueError):
    """A scene file line could not be parsed."""

    def __init__(self, message: str, line_number: int):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


@dataclass(frozen=True)
class ObjectAnnotation:
    object_id: str
    category: str
    bbox2d: tuple[float, float, float, float]
    location: Vec3
    orientation: UnitVec3
    verified: str = "unverified"

    def __post_init__(self) -> None:
        if not self.object_id or self.object_id.startswith("@"):
            raise SceneValidationError(
                "object_id must be non-empty and must not start with '@' (reserved)",
                field_name="object_id",
            )
        x_min, y_min, x_max, y_max = self.bbox2d
        if not (x_min < x_max and y_min < y_max):
            raise SceneValidationError(
                f"bbox2d must satisfy x_min < x_max and y_min < y_max, got {self.bbox2d}",
                field_name="bbox2d",
            )
        if self.location.z < MIN_OBJECT_Z:
            raise SceneValidationError(
                f"location.z {self.location.z} below {MIN_OBJECT_Z}",
                field_name="location",
            )
        if self.verified not in VERDICTS:
            raise SceneValidationError(
                f"verified must be one of {VERDICTS}, got {self.verified!r}",
                field_name="verified",
            )


@dataclass(frozen=True)
class SceneAnnotation:
    scene_id: str
    image_path: str
    image_size: tuple[int, int]
    extrinsics: CameraExtrinsics
    objects: tuple[ObjectAnnotation, ...]
    source: str = "unverified"
    frame: CalibratedFrame = field(init=False)

    def __post_init__(self) -> None:
        if not self.scene_id:
            raise SceneValidationError("scene_id must be non-empty", field_name="scene_id")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise SceneValidationError(
                f"image_size must be positive, got {self.image_size}",
                scene_id=self.scene_id,
                field_name="image_size",
            )
        if self.source not in SOURCES:
            raise SceneValidationError(
                f"source must be one of {SOURCES}, got {self.source!r}",
                scene_id=self.scene_id,
                field_name="source",
            )
        seen: set[str] = set()
        for obj in self.objects:
            if obj.object_id in seen:
                raise SceneValidationError(
                    f"duplicate object_id {obj.object_id!r}",
                    scene_id=self.scene_id,
                    field_name="objects",
                )
            seen.add(obj.object_id)
        object.__setattr__(self, "frame", derive_frame(self.extrinsics))

    def get_object(self, object_id: str) -> ObjectAnnotation:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise KeyError(f"scene {self.scene_id!r} has no object {object_id!r}")

    def with_objects(self, objects: Iterable[ObjectAnnotation]) -> "SceneAnnotation":
        return replace(self, objects=tuple(objects))


@dataclass(frozen=True)
class SceneSet:
    scenes: tuple[SceneAnnotation, ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for scene in self.scenes:
            if scene.scene_id in seen:
                raise SceneValidationError("duplicate scene_id", scene_id=scene.scene_id)
            seen.add(scene.scene_id)

    def __len__(self) -> int:
        return len(self.scenes)

    def __iter__(self) -> Iterator[SceneAnnotation]:
        return iter(self.scenes)

    def get(self, scene_id: str) -> SceneAnnotation:
        for scene in self.scenes:
            if scene.scene_id == scene_id:
                return scene
        raise KeyError(f"no scene {scene_id!r}")


@dataclass(frozen=True)
class FilterConfig:
    """Knobs for the dataset cleaning pass.

    ``max_objects`` operationalizes the clutter rule; ``boundary_policy``
    controls whether scenes containing margin-ambiguous relations are
    discarded ("discard") or kept for downstream handling ("keep").
    """

    max_objects: int = 10
    excluded_categories: frozenset[str] = frozenset()
    boundary_policy: str = "keep"
    # Per-relation ambiguity margins; None means relation-engine defaults.
    distance_margin_rel: float = 0.15
    height_margin_abs: float = 0.3
    angle_margin_deg: float = 10.0

    def __post_init__(self) -> None:
        if self.max_objects < 1:
            raise SceneValidationError("max_objects must be >= 1", field_name="max_objects")
        if self.boundary_policy not in ("discard", "keep"):
            raise SceneValidationError(
                f"boundary_policy must be 'discard' or 'keep', got {self.boundary_policy!r}",
                field_name="boundary_policy",
            )
        for name in ("distance_margin_rel", "height_margin_abs", "angle_margin_deg"):
            if getattr(self, name) <= 0:
                raise SceneValidationError(f"{name} must be positive", field_name=name)

    @classmethod
    def from_json(cls, path: str | Path) -> "FilterConfig":
        raw = json.loads(Path(path).read_text())
        if "excluded_categories" in raw:
            raw["excluded_categories"] = frozenset(raw["excluded_categories"])
        return cls(**raw)


@dataclass(frozen=True)
class FilterReport:
    scenes_in: int
    scenes_out: int
    clutter_scenes_removed: int
    category_objects_removed: int
    boundary_scenes_removed: int


def _object_to_json(obj: ObjectAnnotation) -> dict:
    return {
        "object_id": obj.object_id,
        "category": obj.category,
        "bbox2d": list(obj.bbox2d),
        "location": list(obj.location.as_tuple()),
        "orientation": list(obj.orientation.as_tuple()),
        "verified": obj.verified,
    }


def _object_from_json(raw: dict) -> ObjectAnnotation:
    return ObjectAnnotation(
        object_id=raw["object_id"],
        category=raw["category"],
        bbox2d=tuple(float(v) for v in raw["bbox2d"]),
        location=Vec3(*(float(v) for v in raw["location"])),
        orientation=UnitVec3(*(float(v) for v in raw["orientation"])),
        verified=raw.get("verified", "unverified"),
    )


def scene_to_json(scene: SceneAnnotation) -> dict:
    rot = scene.extrinsics.rotation
    return {
        "scene_id": scene.scene_id,
        "image_path": scene.image_path,
        "image_size": list(scene.image_size),
        "extrinsics": {
            "rotation": [rot[i][j] for i in range(3) for j in range(3)],
            "position": list(scene.extrinsics.position.as_tuple()),
        },
        "source": scene.source,
        "objects": [_object_to_json(o) for o in scene.objects],
    }


def scene_from_json(raw: dict) -> SceneAnnotation:
    ext = raw["extrinsics"]
    flat = [float(v) for v in ext["rotation"]]
    if len(flat) != 9:
        raise SceneValidationError(
            "extrinsics.rotation must have 9 numbers (row-major)",
            scene_id=raw.get("scene_id"),
            field_name="extrinsics",
        )
    rotation = (tuple(flat[0:3]), tuple(flat[3:6]), tuple(flat[6:9]))
    extr = CameraExtrinsics(
        rotation=rotation,
        position=Vec3(*(float(v) for v in ext["position"])),
    )
    return SceneAnnotation(
        scene_id=raw["scene_id"],
        image_path=raw["image_path"],
        image_size=tuple(int(v) for v in raw["image_size"]),
        extrinsics=extr,
        objects=tuple(_object_from_json(o) for o in raw["objects"]),
        source=raw.get("source", "unverified"),
    )


def load_scenes(path: str | Path) -> SceneSet:
    """Load a line-delimited scene file, validating every invariant.

    Raises SceneFormatError with the offending line number for parse errors,
    SceneValidationError naming the scene and field for invariant violations.
    """
    scenes: list[SceneAnnotation] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SceneFormatError(str(exc), line_number) from exc
            try:
                scenes.append(scene_from_json(raw))
            except SceneValidationError as exc:
                if exc.scene_id is None and "scene_id" in raw:
                    raise SceneValidationError(
                        str(exc), scene_id=raw["scene_id"], field_name=exc.field_name
                    ) from exc
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise SceneFormatError(f"malformed scene record: {exc}", line_number) from exc
    return SceneSet(scenes=tuple(scenes))


def save_scenes(scene_set: SceneSet, path: str | Path) -> int:
    """Write one scene per line; returns the record count.

    load_scenes(save_scenes(s)) reproduces s exactly (floats round-trip via
    repr-precision JSON).
    """
    with open(path, "w", encoding="utf-8") as fh:
        for scene in scene_set:
            fh.write(json.dumps(scene_to_json(scene), separators=(", ", ": ")))
            fh.write("\n")
    return len(scene_set)


def filter_scenes(scene_set: SceneSet, cfg: FilterConfig) -> tuple[SceneSet, FilterReport]:
    """Apply the cleaning rules: category exclusion, clutter cap, boundary policy.

    Rules run in that order; the output is always a subset of the input and
    the pass is idempotent for a fixed config.
    """
    # Imported here: relations imports this module for its types.
    from .relations import RelationConfig, derive_facts

    clutter_removed = 0
    category_removed = 0
    boundary_removed = 0
    kept: list[SceneAnnotation] = []
    rel_cfg = RelationConfig(
        distance_margin_rel=cfg.distance_margin_rel,
        height_margin_abs=cfg.height_margin_abs,
        angle_margin_deg=cfg.angle_margin_deg,
    )
    for scene in scene_set:
        objects = [o for o in scene.objects if o.category not in cfg.excluded_categories]
        category_removed += len(scene.objects) - len(objects)
        if len(objects) > cfg.max_objects:
            clutter_removed += 1
            continue
        candidate = scene.with_objects(objects) if len(objects) != len(scene.objects) else scene
        if cfg.boundary_policy == "discard":
            result = derive_facts(candidate.objects, candidate.frame, rel_cfg)
            if any(f.verdict == "ambiguous" for f in result.facts):
                boundary_removed += 1
                continue
        kept.append(candidate)
    report = FilterReport(
        scenes_in=len(scene_set),
        scenes_out=len(kept),
        clutter_scenes_removed=clutter_removed,
        category_objects_removed=category_removed,
        boundary_scenes_removed=boundary_removed,
    )
    return SceneSet(scenes=tuple(kept)), report


def mix_datasets(
    verified: SceneSet,
    unverified: SceneSet,
    unverified_fraction: float,
    seed: int,
) -> SceneSet:
    """All verified scenes plus a seeded uniform sample of the unverified ones.

    The sample size is round(fraction * len(unverified)); sampled scenes keep
    their file order. Deterministic per seed.
    """
    if not 0.0 <= unverified_fraction <= 1.0:
        raise ValueError(f"unverified_fraction must be in [0, 1], got {unverified_fraction}")
    n = round(unverified_fraction * len(unverified))
    rng = random.Random(seed)
    indices = sorted(rng.sample(range(len(unverified)), n))
    picked = tuple(unverified.scenes[i] for i in indices)
    return SceneSet(scenes=tuple(verified.scenes) + picked)


def record_verdict(
    scene_set: SceneSet, scene_id: str, object_id: str, verdict: str
) -> SceneSet:
    """Return a new set with the object's verified flag updated, nothing else."""
    if verdict not in VERDICTS:
        raise SceneValidationError(f"unknown verdict {verdict!r}", field_name="verified")
    scene = scene_set.get(scene_id)
    scene.get_object(object_id)  # KeyError if absent
    new_objects = tuple(
        replace(o, verified=verdict) if o.object_id == object_id else o
        for o in scene.objects
    )
    new_scene = scene.with_objects(new_objects)
    return SceneSet(
        scenes=tuple(new_scene if s.scene_id == scene_id else s for s in scene_set.scenes)
    )
