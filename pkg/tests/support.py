"""Shared test helpers: independent numpy oracles and random scene generators.

The oracles deliberately avoid the package's own geometry code paths: they
work on raw numpy arrays with matrix algebra, so agreement is meaningful.
"""

from __future__ import annotations

import math
import random

import numpy as np

from spatialforge.geometry import CameraExtrinsics, UnitVec3, Vec3
from spatialforge.scenes import ObjectAnnotation, SceneAnnotation

UP = np.array([0.0, 0.0, 1.0])


# --- independent oracles -----------------------------------------------------

def oracle_calibrate_point(R: np.ndarray, C: np.ndarray, p_cam: np.ndarray) -> np.ndarray:
    p_w = R @ p_cam + C
    fw = R @ np.array([0.0, 0.0, 1.0])
    g = np.array([fw[0], fw[1], 0.0])
    g = g / np.linalg.norm(g)
    x_axis = np.cross(g, UP)
    origin = np.array([C[0], C[1], 0.0])
    d = p_w - origin
    return np.array([d @ x_axis, d @ g, d @ UP])


def oracle_calibrate_direction(R: np.ndarray, d_cam: np.ndarray) -> np.ndarray:
    d_w = R @ d_cam
    fw = R @ np.array([0.0, 0.0, 1.0])
    g = np.array([fw[0], fw[1], 0.0])
    g = g / np.linalg.norm(g)
    x_axis = np.cross(g, UP)
    out = np.array([d_w @ x_axis, d_w @ g, d_w @ UP])
    return out / np.linalg.norm(out)


def oracle_distance(p: np.ndarray, q: np.ndarray) -> float:
    return float(math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q))))


def oracle_angle_deg(d1: np.ndarray, d2: np.ndarray) -> float:
    c = float(np.clip(np.dot(d1, d2) / (np.linalg.norm(d1) * np.linalg.norm(d2)), -1.0, 1.0))
    return math.degrees(math.acos(c))


def oracle_bearing_deg(cam_xy: np.ndarray, fwd_xy: np.ndarray, p_xy: np.ndarray) -> float:
    v = p_xy - cam_xy
    f = fwd_xy / np.linalg.norm(fwd_xy)
    right = np.array([f[1], -f[0]])
    b = math.degrees(math.atan2(float(v @ right), float(v @ f)))
    if b <= -180.0:
        b = 180.0
    return b


# --- generators ---------------------------------------------------------------

def random_rotation(rng: random.Random, max_tilt_deg: float = 60.0) -> np.ndarray:
    """A proper rotation whose optical axis stays clear of vertical."""
    while True:
        m = np.array([[rng.gauss(0, 1) for _ in range(3)] for _ in range(3)])
        q, r = np.linalg.qr(m)
        q = q @ np.diag(np.sign(np.diag(r)))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        optical = q @ np.array([0.0, 0.0, 1.0])
        if np.hypot(optical[0], optical[1]) >= math.sin(math.radians(90.0 - max_tilt_deg)):
            return q


def extrinsics_from_np(R: np.ndarray, C: np.ndarray) -> CameraExtrinsics:
    return CameraExtrinsics(
        rotation=tuple(tuple(float(v) for v in row) for row in R),
        position=Vec3(float(C[0]), float(C[1]), float(C[2])),
    )


def random_unit(rng: random.Random) -> UnitVec3:
    while True:
        v = np.array([rng.gauss(0, 1) for _ in range(3)])
        n = np.linalg.norm(v)
        if n > 1e-6:
            v = v / n
            return UnitVec3(float(v[0]), float(v[1]), float(v[2]))


def random_ground_unit(rng: random.Random) -> UnitVec3:
    a = rng.uniform(-math.pi, math.pi)
    return UnitVec3(math.cos(a), math.sin(a), 0.0)


def random_object(rng: random.Random, object_id: str, img_w: int = 640, img_h: int = 480) -> ObjectAnnotation:
    x0 = rng.uniform(0, img_w - 20)
    y0 = rng.uniform(0, img_h - 20)
    categories = ("chair", "table", "lamp", "mug", "plant", "monitor", "box", "shelf")
    return ObjectAnnotation(
        object_id=object_id,
        category=rng.choice(categories),
        bbox2d=(x0, y0, x0 + rng.uniform(10, img_w - x0 - 1), y0 + rng.uniform(10, img_h - y0 - 1)),
        # In front of the canonical camera, comfortably away from it.
        location=Vec3(rng.uniform(-3.0, 3.0), rng.uniform(0.8, 8.0), rng.uniform(0.0, 2.5)),
        orientation=random_unit(rng),
    )


def random_scene(rng: random.Random, scene_id: str, n_objects: int | None = None) -> SceneAnnotation:
    if n_objects is None:
        n_objects = rng.randint(1, 6)
    R = random_rotation(rng, max_tilt_deg=45.0)
    C = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.8, 2.2)])
    objects = tuple(random_object(rng, f"obj{i}") for i in range(n_objects))
    return SceneAnnotation(
        scene_id=scene_id,
        image_path=f"images/{scene_id}.jpg",
        image_size=(640, 480),
        extrinsics=extrinsics_from_np(R, C),
        objects=objects,
        source="unverified",
    )


def random_scene_set(rng: random.Random, n_scenes: int, prefix: str = "scene"):
    from spatialforge.scenes import SceneSet

    return SceneSet(scenes=tuple(
        random_scene(rng, f"{prefix}{i:04d}") for i in range(n_scenes)
    ))


def make_toy_bank(n: int = 64, seed: int = 300):
    """4-option multi-object records harvested from random scenes."""
    from spatialforge.qa import gen_srqa
    from spatialforge.relations import RelationConfig, derive_all

    rng = random.Random(seed)
    bank = []
    i = 0
    while len(bank) < n:
        scene = random_scene(rng, f"bank{i}", 3)
        i += 1
        facts = [f for f in derive_all(scene, RelationConfig()).facts
                 if f.kind == "closer_to_anchor"]
        bank.extend(gen_srqa(scene, facts, seed=seed))
    return tuple(bank[:n])
