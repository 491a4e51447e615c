"""Calibrated-camera 3D space and the primitive computations built on it.

Coordinate conventions
----------------------
Camera frame (inputs):  x right, y down, z forward (optical axis).
World frame:            z up, ground plane at z = 0.
Calibrated frame:       x right, y forward, z up. "Forward" is the camera
                        viewing direction projected onto the ground plane at
                        calibration time. The origin sits on the ground
                        directly below the camera, so the camera itself is at
                        (0, 0, h) with h the camera height in meters.

Distances are meters, angles degrees. Values embedded in reasoning text are
rendered with two decimals via :func:`fmt_scalar` / :func:`fmt_vec`.

Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

CONVENTION = "x-right/y-forward/z-up"

_ORTHO_TOL = 1e-9
_UNIT_TOL = 1e-9
_DEGENERATE_TOL = 1e-12


class GeometryError(ValueError):
    """Base class for geometry input errors."""


class InvalidExtrinsicsError(GeometryError):
    """Rotation is not a proper orthonormal matrix, or the frame is degenerate."""


class InvalidDirectionError(GeometryError):
    """Direction input is zero-norm or non-finite."""


class DegenerateBearingError(GeometryError):
    """Bearing target projects onto the camera's vertical axis."""


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise GeometryError(f"{name} has non-finite component {v!r}")


@dataclass(frozen=True)
class Vec3:
    """A 3D point or displacement. Meters for positions, unitless for directions."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        _require_finite("Vec3", self.x, self.y, self.z)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class UnitVec3:
    """A unit-norm direction. Norm must be 1 within 1e-9; use from_vec to normalize."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        _require_finite("UnitVec3", self.x, self.y, self.z)
        n = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if abs(n - 1.0) > _UNIT_TOL:
            raise InvalidDirectionError(f"direction norm {n!r} is not 1 within {_UNIT_TOL}")

    @classmethod
    def from_vec(cls, v: Vec3) -> "UnitVec3":
        n = v.norm()
        if n < _DEGENERATE_TOL:
            raise InvalidDirectionError("cannot normalize a zero-norm vector")
        return cls(v.x / n, v.y / n, v.z / n)

    def negated(self) -> "UnitVec3":
        return UnitVec3(-self.x, -self.y, -self.z)

    def dot(self, other: "UnitVec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def as_vec(self) -> Vec3:
        return Vec3(self.x, self.y, self.z)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


Matrix3 = tuple[
    tuple[float, float, float],
    tuple[float, float, float],
    tuple[float, float, float],
]


def _mat_col(m: Matrix3, j: int) -> Vec3:
    return Vec3(m[0][j], m[1][j], m[2][j])


def _mat_vec(m: Matrix3, v: Vec3) -> Vec3:
    return Vec3(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )


def _det3(m: Matrix3) -> float:
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


@dataclass(frozen=True)
class CameraExtrinsics:
    """Camera-to-world rigid pose: orthonormal rotation (det +1) plus world position."""

    rotation: Matrix3
    position: Vec3

    def __post_init__(self) -> None:
        m = self.rotation
        if len(m) != 3 or any(len(row) != 3 for row in m):
            raise InvalidExtrinsicsError("rotation must be a 3x3 matrix")
        for row in m:
            _require_finite("rotation", *row)
        cols = [_mat_col(m, j) for j in range(3)]
        for i in range(3):
            for j in range(i, 3):
                want = 1.0 if i == j else 0.0
                got = cols[i].dot(cols[j])
                if abs(got - want) > _ORTHO_TOL:
                    raise InvalidExtrinsicsError(
                        f"rotation columns {i},{j} not orthonormal (dot={got!r})"
                    )
        d = _det3(m)
        if abs(d - 1.0) > _ORTHO_TOL:
            raise InvalidExtrinsicsError(f"rotation determinant {d!r} is not +1")

    def rotate(self, v: Vec3) -> Vec3:
        return _mat_vec(self.rotation, v)

    def to_world(self, p: Vec3) -> Vec3:
        return self.rotate(p) + self.position


@dataclass(frozen=True)
class CalibratedFrame:
    """Camera pose expressed inside the calibrated space itself.

    ``camera_position`` carries (x, y, camera height on z); ``forward`` is the
    ground-projected viewing direction and must have a zero z-component.
    """

    camera_position: Vec3
    forward: UnitVec3
    convention: str = CONVENTION

    def __post_init__(self) -> None:
        if abs(self.forward.z) > _UNIT_TOL:
            raise InvalidExtrinsicsError("frame forward must lie in the ground plane")

    def right(self) -> UnitVec3:
        # forward rotated -90 deg about z: (fy, -fx, 0)
        return UnitVec3(self.forward.y, -self.forward.x, 0.0)


# Images of the camera basis in world coordinates for a level camera looking
# along world +y: x stays right, y (down) maps to -z, z (forward) maps to +y.
_LEVEL_COLUMNS = (Vec3(1.0, 0.0, 0.0), Vec3(0.0, 0.0, -1.0), Vec3(0.0, 1.0, 0.0))


def make_extrinsics(
    height: float,
    yaw_deg: float = 0.0,
    pitch_deg: float = 0.0,
    x: float = 0.0,
    y: float = 0.0,
) -> CameraExtrinsics:
    """Extrinsics for a camera at (x, y, height), yawed about world z and
    pitched about its own x-axis (positive pitch looks down)."""
    a = math.radians(pitch_deg)
    ca, sa = math.cos(a), math.sin(a)
    # R = R_level @ Rx(-a): pitching down tips the optical axis below horizontal.
    rx = ((1.0, 0.0, 0.0), (0.0, ca, sa), (0.0, -sa, ca))
    cols = []
    for j in range(3):
        col_cam = Vec3(rx[0][j], rx[1][j], rx[2][j])
        cols.append(
            _LEVEL_COLUMNS[0].scaled(col_cam.x)
            + _LEVEL_COLUMNS[1].scaled(col_cam.y)
            + _LEVEL_COLUMNS[2].scaled(col_cam.z)
        )
    b = math.radians(yaw_deg)
    cb, sb = math.cos(b), math.sin(b)
    yawed = [Vec3(cb * c.x - sb * c.y, sb * c.x + cb * c.y, c.z) for c in cols]
    rotation = tuple(tuple(getattr(c, ax) for c in yawed) for ax in ("x", "y", "z"))
    return CameraExtrinsics(rotation=rotation, position=Vec3(x, y, height))


def _calibrated_axes(extr: CameraExtrinsics) -> tuple[Vec3, Vec3, Vec3]:
    fwd_world = extr.rotate(Vec3(0.0, 0.0, 1.0))
    gx, gy = fwd_world.x, fwd_world.y
    gn = math.hypot(gx, gy)
    if gn < 1e-9:
        raise InvalidExtrinsicsError(
            "camera looks straight along the vertical axis; ground forward undefined"
        )
    y_axis = Vec3(gx / gn, gy / gn, 0.0)
    z_axis = Vec3(0.0, 0.0, 1.0)
    x_axis = y_axis.cross(z_axis)
    return x_axis, y_axis, z_axis


def derive_frame(extr: CameraExtrinsics) -> CalibratedFrame:
    """The canonical calibrated frame of a camera: at (0, 0, h), facing +y."""
    return CalibratedFrame(
        camera_position=Vec3(0.0, 0.0, extr.position.z),
        forward=UnitVec3(0.0, 1.0, 0.0),
    )


def calibrate_point(p: Vec3, extr: CameraExtrinsics) -> Vec3:
    """Rigidly map a camera-frame point into the calibrated frame.

    Ground-plane points land on z = 0 and the camera optical center lands on
    (0, 0, h).
    """
    x_axis, y_axis, z_axis = _calibrated_axes(extr)
    p_world = extr.to_world(p)
    origin = Vec3(extr.position.x, extr.position.y, 0.0)
    d = p_world - origin
    return Vec3(d.dot(x_axis), d.dot(y_axis), d.dot(z_axis))


def calibrate_direction(d: UnitVec3, extr: CameraExtrinsics) -> UnitVec3:
    """Rotate a camera-frame direction into the calibrated frame (no translation)."""
    x_axis, y_axis, z_axis = _calibrated_axes(extr)
    d_world = extr.rotate(d.as_vec())
    out = Vec3(d_world.dot(x_axis), d_world.dot(y_axis), d_world.dot(z_axis))
    return UnitVec3.from_vec(out)


def distance(p: Vec3, q: Vec3) -> float:
    """Euclidean distance in meters."""
    return (p - q).norm()


def angular_difference(d1: UnitVec3, d2: UnitVec3) -> float:
    """Unsigned angle between two directions, degrees in [0, 180].

    The dot product is clamped to [-1, 1] to guard the arccos boundary.
    """
    c = max(-1.0, min(1.0, d1.dot(d2)))
    return math.degrees(math.acos(c))


def height_of(p: Vec3) -> float:
    """Height above the ground plane; in the calibrated frame this is just z."""
    return p.z


def camera_distance(p: Vec3, frame: CalibratedFrame) -> float:
    """Full Euclidean distance from the camera position to p."""
    return distance(p, frame.camera_position)


def horizontal_bearing(frame: CalibratedFrame, p: Vec3) -> float:
    """Signed ground-plane angle from the camera's forward direction to p.

    Positive means to the viewer's right. Range (-180, 180].
    """
    vx = p.x - frame.camera_position.x
    vy = p.y - frame.camera_position.y
    if math.hypot(vx, vy) < _DEGENERATE_TOL:
        raise DegenerateBearingError("point lies on the camera's vertical axis")
    f = frame.forward
    r = frame.right()
    bearing = math.degrees(math.atan2(vx * r.x + vy * r.y, vx * f.x + vy * f.y))
    if bearing <= -180.0:
        bearing = 180.0
    return bearing


def fmt_scalar(value: float, unit: str) -> str:
    """Canonical 2-decimal rendering of a measured scalar, e.g. '5.00 m'."""
    return f"{quantize(value):.2f} {unit}"


def fmt_vec(v: Vec3 | UnitVec3) -> str:
    """Canonical 2-decimal rendering of a 3D value, e.g. '[0.00, 2.00, 1.50]'."""
    return f"[{quantize(v.x):.2f}, {quantize(v.y):.2f}, {quantize(v.z):.2f}]"


def quantize(value: float) -> float:
    """Round to the 2-decimal precision used in rendered traces (no -0.0)."""
    return round(value, 2) + 0.0
