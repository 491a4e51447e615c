"""Rigid motions of calibrated scene data.

The calibrated frame pins z to gravity, so the symmetry group of a scene is
yaw rotations about the vertical axis plus translations, applied jointly to
the camera frame and every object. Mirroring across the camera's forward-up
plane is the covariance transform for left/right relations.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Sequence

from .geometry import CalibratedFrame, UnitVec3, Vec3
from .scenes import ObjectAnnotation


def _yaw_vec(v: Vec3, cos_t: float, sin_t: float) -> Vec3:
    return Vec3(cos_t * v.x - sin_t * v.y, sin_t * v.x + cos_t * v.y, v.z)


def yaw_translate(
    objects: Sequence[ObjectAnnotation],
    frame: CalibratedFrame,
    yaw_deg: float,
    translation: Vec3,
) -> tuple[tuple[ObjectAnnotation, ...], CalibratedFrame]:
    """Rotate about the vertical axis, then translate, camera and objects jointly."""
    t = math.radians(yaw_deg)
    c, s = math.cos(t), math.sin(t)
    new_frame = CalibratedFrame(
        camera_position=_yaw_vec(frame.camera_position, c, s) + translation,
        forward=UnitVec3.from_vec(_yaw_vec(frame.forward.as_vec(), c, s)),
        convention=frame.convention,
    )
    new_objects = tuple(
        replace(
            obj,
            location=_yaw_vec(obj.location, c, s) + translation,
            orientation=UnitVec3.from_vec(_yaw_vec(obj.orientation.as_vec(), c, s)),
        )
        for obj in objects
    )
    return new_objects, new_frame


def mirror(
    objects: Sequence[ObjectAnnotation],
    frame: CalibratedFrame,
) -> tuple[tuple[ObjectAnnotation, ...], CalibratedFrame]:
    """Reflect the scene across the camera's forward-up plane.

    The frame maps onto itself; object positions and orientations flip their
    component along the camera's right axis.
    """
    r = frame.right()
    n = Vec3(r.x, r.y, 0.0)
    cam = frame.camera_position

    def reflect_point(p: Vec3) -> Vec3:
        d = p - cam
        k = 2.0 * d.dot(n)
        return p - n.scaled(k)

    def reflect_dir(d: UnitVec3) -> UnitVec3:
        v = d.as_vec()
        k = 2.0 * v.dot(n)
        return UnitVec3.from_vec(v - n.scaled(k))

    new_objects = tuple(
        replace(obj, location=reflect_point(obj.location), orientation=reflect_dir(obj.orientation))
        for obj in objects
    )
    return new_objects, frame
