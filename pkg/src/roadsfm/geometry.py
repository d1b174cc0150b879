"""Projective and rigid-body primitives.

Camera frame convention is x-right, y-down, z-forward.  A road plane is
stored as ``N^T P + h = 0`` with ``N`` pointing up (canonically
``(0, -1, 0)``) and ``h > 0`` the camera height above it.

A :class:`Pose` ``T`` maps points of the current frame ``t`` into the
previous frame: ``X_prev = R X_t + t``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_SMALL_ANGLE = 1e-6


class GeometryError(ValueError):
    """Raised for degenerate geometric configurations."""


class BehindCameraError(GeometryError):
    pass


class DegeneratePlaneError(GeometryError):
    pass


class NoIntersectionError(GeometryError):
    pass


class AtInfinityError(GeometryError):
    pass


def hat(v):
    """Skew-symmetric matrix such that ``hat(a) @ b == cross(a, b)``."""
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def rotation_from_angle_axis(v) -> np.ndarray:
    """Rodrigues formula. Zero vector maps to the identity."""
    v = np.asarray(v, dtype=float).reshape(3)
    theta = np.linalg.norm(v)
    W = hat(v)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + W + 0.5 * W @ W
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * W + b * W @ W


def angle_axis_from_rotation(R) -> np.ndarray:
    """Logarithm of a rotation matrix, with angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = math.atan2(0.5 * np.linalg.norm(w), cos_theta)
    if theta < _SMALL_ANGLE:
        return 0.5 * w
    if theta > np.pi / 2:
        # axis from the symmetric part, sign fixed by the skew part
        A = (0.5 * (R + R.T) - cos_theta * np.eye(3)) / (1.0 - cos_theta)
        k = int(np.argmax(np.diag(A)))
        axis = A[:, k] / np.sqrt(max(A[k, k], 1e-300))
        if axis @ w < 0:
            axis = -axis
        return theta * axis / np.linalg.norm(axis)
    return theta / (2.0 * np.sin(theta)) * w


def rotation_derivatives(v) -> np.ndarray:
    """Derivatives of the Rodrigues map, shape (3, 3, 3): ``dR[i] = dR/dv_i``."""
    v = np.asarray(v, dtype=float).reshape(3)
    theta2 = v @ v
    E = np.eye(3)
    if theta2 < _SMALL_ANGLE**2:
        # first-order expansion around the identity
        W = hat(v)
        return np.stack([hat(E[i]) + 0.5 * (hat(E[i]) @ W + W @ hat(E[i]))
                         for i in range(3)])
    R = rotation_from_angle_axis(v)
    W = hat(v)
    out = np.empty((3, 3, 3))
    for i in range(3):
        out[i] = (v[i] * W + hat(np.cross(v, (E - R) @ E[i]))) @ R / theta2
    return out


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])

    def downscaled(self) -> "CameraIntrinsics":
        """Intrinsics of a 2x2 box-downsampled image (pixel centres preserved)."""
        return CameraIntrinsics(self.fx / 2.0, self.fy / 2.0,
                                (self.cx + 0.5) / 2.0 - 0.5,
                                (self.cy + 0.5) / 2.0 - 0.5,
                                self.width // 2, self.height // 2)

    def pixel_grid(self) -> np.ndarray:
        """Homogeneous pixel coordinates, shape (height, width, 3)."""
        u, v = np.meshgrid(np.arange(self.width, dtype=float),
                           np.arange(self.height, dtype=float))
        return np.stack([u, v, np.ones_like(u)], axis=-1)

    def rays(self) -> np.ndarray:
        """z-normalised viewing rays ``K^-1 p`` for every pixel, (height, width, 3)."""
        g = self.pixel_grid()
        return np.stack([(g[..., 0] - self.cx) / self.fx,
                         (g[..., 1] - self.cy) / self.fy,
                         np.ones(g.shape[:2])], axis=-1)


@dataclass(frozen=True)
class Pose:
    """Rigid transform with angle-axis rotation (radians) and translation (meters)."""

    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3)
        theta = np.linalg.norm(r)
        if theta >= np.pi:
            # canonical representative with angle < pi
            r = angle_axis_from_rotation(rotation_from_angle_axis(r))
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, M) -> "Pose":
        M = np.asarray(M, dtype=float)
        return cls(angle_axis_from_rotation(M[:3, :3]), M[:3, 3].copy())

    @property
    def R(self) -> np.ndarray:
        return rotation_from_angle_axis(self.rotation)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.translation
        return M

    def inverse(self) -> "Pose":
        R = self.R
        return Pose(-self.rotation, -R.T @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        """``(a @ b)(X) == a(b(X))``."""
        R = self.R
        return Pose(angle_axis_from_rotation(R @ other.R),
                    R @ other.translation + self.translation)

    def apply(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        return P @ self.R.T + self.translation


@dataclass(frozen=True)
class GroundPlane:
    """Plane ``normal^T P + height = 0`` in a camera frame."""

    normal: np.ndarray
    height: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise DegeneratePlaneError("zero normal")
        if not self.height > 0:
            raise DegeneratePlaneError(f"plane height must be positive, got {self.height}")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "height", float(self.height))

    def transformed(self, pose: Pose) -> "GroundPlane":
        """The same plane expressed in the frame ``pose`` maps into."""
        n = pose.R @ self.normal
        return GroundPlane(n, self.height - n @ pose.translation)

    def as_vector(self) -> np.ndarray:
        return np.append(self.normal, self.height)


@dataclass(frozen=True)
class PlaneCorrection:
    """Residual pitch ``dr`` (about x), roll ``ds`` (about z), height offset ``dh``."""

    dr: float = 0.0
    ds: float = 0.0
    dh: float = 0.0

    def __post_init__(self):
        if abs(self.dr) >= np.pi / 2 or abs(self.ds) >= np.pi / 2:
            raise ValueError("correction angles must be smaller than pi/2")

    def rotation(self) -> np.ndarray:
        return rotation_x(self.dr) @ rotation_z(self.ds)


def apply_plane_correction(base: GroundPlane, c: PlaneCorrection) -> GroundPlane:
    h = base.height + c.dh
    if not h > 0:
        raise DegeneratePlaneError(f"corrected plane height {h} is not positive")
    n = c.rotation() @ base.normal
    return GroundPlane(n / np.linalg.norm(n), h)


def plane_correction_derivatives(base: GroundPlane, c: PlaneCorrection):
    """``dN/d(dr)`` and ``dN/d(ds)`` of the corrected normal."""
    dRx = np.array([[0.0, 0.0, 0.0],
                    [0.0, -np.sin(c.dr), -np.cos(c.dr)],
                    [0.0, np.cos(c.dr), -np.sin(c.dr)]])
    dRz = np.array([[-np.sin(c.ds), -np.cos(c.ds), 0.0],
                    [np.cos(c.ds), -np.sin(c.ds), 0.0],
                    [0.0, 0.0, 0.0]])
    n = base.normal
    return dRx @ rotation_z(c.ds) @ n, rotation_x(c.dr) @ dRz @ n


@dataclass(frozen=True)
class Homography:
    """3x3 projective map on homogeneous pixels; ``normalized`` marks H[2,2] == 1."""

    matrix: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float).reshape(3, 3))

    def normalize(self) -> "Homography":
        if abs(self.matrix[2, 2]) < 1e-9:
            raise GeometryError("cannot normalize homography with H[2,2] ~ 0")
        M = self.matrix / self.matrix[2, 2]
        if abs(np.linalg.det(M)) <= 1e-12:
            raise GeometryError("homography is singular")
        return Homography(M, True)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.matrix @ other.matrix)


def _as_matrix(H) -> np.ndarray:
    return H.matrix if isinstance(H, Homography) else np.asarray(H, dtype=float)


def compose_homography(K: CameraIntrinsics, pose: Pose, plane: GroundPlane) -> Homography:
    """Plane-induced map ``K (R - t N^T / h) K^-1`` from frame t to t-1 pixels."""
    if plane.height == 0:
        raise ZeroDivisionError("plane height is zero")
    M = pose.R - np.outer(pose.translation, plane.normal) / plane.height
    return Homography(K.K @ M @ K.K_inv)


@dataclass
class HomographyJacobians:
    """Derivatives of the inhomogeneous mapped pixel, leading dims follow the input."""

    rotation: np.ndarray     # (..., 2, 3)
    translation: np.ndarray  # (..., 2, 3)
    height: np.ndarray       # (..., 2, 1)
    normal: np.ndarray       # (..., 2, 3)


def _projection_jacobian(y: np.ndarray) -> np.ndarray:
    """d(y1/y3, y2/y3)/dy for y of shape (..., 3) -> (..., 2, 3)."""
    w = y[..., 2]
    J = np.zeros(y.shape[:-1] + (2, 3))
    J[..., 0, 0] = 1.0 / w
    J[..., 1, 1] = 1.0 / w
    J[..., 0, 2] = -y[..., 0] / w**2
    J[..., 1, 2] = -y[..., 1] / w**2
    return J


def homography_jacobians(K: CameraIntrinsics, pose: Pose, plane: GroundPlane,
                         x) -> HomographyJacobians:
    """Analytic partials of ``pi(H x)`` w.r.t. angle-axis, t, h and N.

    ``x`` is a homogeneous pixel (3,) or a stack (..., 3).  With
    ``r = K^-1 x`` and ``y = H x``::

        dy/dv_i = K dR/dv_i r
        dy/dt   = -(N.r / h) K
        dy/dh   = K t (N.r) / h^2
        dy/dN   = -K t r^T / h

    each then multiplied by the Jacobian of the projective division.
    """
    if plane.height == 0:
        raise ZeroDivisionError("plane height is zero")
    x = np.asarray(x, dtype=float)
    Km, Kinv = K.K, K.K_inv
    h, n, t = plane.height, plane.normal, pose.translation
    H = compose_homography(K, pose, plane).matrix
    y = x @ H.T
    if np.any(np.abs(y[..., 2]) < 1e-12):
        raise AtInfinityError("pixel maps to infinity")
    Jp = _projection_jacobian(y)                       # (..., 2, 3)
    r = x @ Kinv.T                                     # (..., 3)
    nr = r @ n                                         # (...)
    dR = rotation_derivatives(pose.rotation)           # (3, 3, 3)
    dy_dv = np.einsum("ab,ibc,...c->...ai", Km, dR, r)  # (..., 3, 3)
    dy_dt = -(nr / h)[..., None, None] * Km
    Kt = Km @ t
    dy_dh = (nr / h**2)[..., None, None] * Kt[:, None]
    dy_dn = -np.einsum("a,...b->...ab", Kt, r) / h
    return HomographyJacobians(Jp @ dy_dv, Jp @ dy_dt, Jp @ dy_dh, Jp @ dy_dn)


def project(K: CameraIntrinsics, P) -> np.ndarray:
    """Pixel of a camera-frame point (or stack of points)."""
    P = np.asarray(P, dtype=float)
    if np.any(P[..., 2] <= 0):
        raise BehindCameraError("point is behind the camera")
    return np.stack([K.fx * P[..., 0] / P[..., 2] + K.cx,
                     K.fy * P[..., 1] / P[..., 2] + K.cy], axis=-1)


def backproject(K: CameraIntrinsics, p, depth) -> np.ndarray:
    """Camera-frame point at z-depth ``depth`` along pixel ``p``."""
    p = np.asarray(p, dtype=float)
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0):
        raise BehindCameraError("depth must be positive")
    return np.stack([(p[..., 0] - K.cx) / K.fx * depth,
                     (p[..., 1] - K.cy) / K.fy * depth,
                     depth * np.ones_like(p[..., 0])], axis=-1)


def reproject_pixel(K: CameraIntrinsics, pose: Pose, depth, p):
    """Pixel in the previous frame seen at ``p`` with depth ``depth`` in frame t.

    Returns ``(pixel, valid)``; ``valid`` is False where the transformed
    point is not in front of the previous camera.
    """
    p = np.asarray(p, dtype=float)
    depth = np.asarray(depth, dtype=float)
    r = np.stack([(p[..., 0] - K.cx) / K.fx, (p[..., 1] - K.cy) / K.fy,
                  np.ones_like(p[..., 0])], axis=-1)
    X = (depth[..., None] * r) @ pose.R.T + pose.translation
    valid = (X[..., 2] > 1e-12) & (depth > 0)
    z = np.where(valid, X[..., 2], 1.0)
    q = np.stack([K.fx * X[..., 0] / z + K.cx, K.fy * X[..., 1] / z + K.cy], axis=-1)
    q = np.where(valid[..., None], q, np.nan)
    return q, valid


def apply_homography(H, p):
    """Map pixel(s) ``p`` (..., 2) through ``H``; returns ``(pixel, valid)``."""
    M = _as_matrix(H)
    p = np.asarray(p, dtype=float)
    y = p @ M[:, :2].T + M[:, 2]
    valid = np.abs(y[..., 2]) >= 1e-12
    w = np.where(valid, y[..., 2], 1.0)
    q = np.where(valid[..., None], y[..., :2] / w[..., None], np.nan)
    return q, valid


def ray_plane_depth(K: CameraIntrinsics, plane: GroundPlane, p):
    """z-depth where the ray through pixel ``p`` meets ``plane``.

    Scalar input raises on a parallel ray or a plane behind the camera;
    array input returns NaN at such pixels instead.
    """
    p = np.asarray(p, dtype=float)
    r = np.stack([(p[..., 0] - K.cx) / K.fx, (p[..., 1] - K.cy) / K.fy,
                  np.ones_like(p[..., 0])], axis=-1)
    denom = r @ plane.normal
    if p.ndim == 1:
        if abs(denom) < 1e-12:
            raise NoIntersectionError("ray is parallel to the plane")
        D = -plane.height / denom
        if D <= 0:
            raise NoIntersectionError("plane is behind the camera along this ray")
        return float(D)
    with np.errstate(divide="ignore", invalid="ignore"):
        D = -plane.height / denom
    return np.where((np.abs(denom) >= 1e-12) & (D > 0), D, np.nan)


def plane_residual(plane: GroundPlane, P):
    """Signed distance ``N^T P + h`` (meters)."""
    return np.asarray(P, dtype=float) @ plane.normal + plane.height


@dataclass(frozen=True)
class Calibration:
    intrinsics: CameraIntrinsics
    mounting_height: float
    canonical_normal: np.ndarray

    @property
    def base_plane(self) -> GroundPlane:
        return GroundPlane(self.canonical_normal, self.mounting_height)

    def to_dict(self) -> dict:
        k = self.intrinsics
        return {"schema_version": 1, "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                "width": k.width, "height": k.height,
                "mounting_height_m": self.mounting_height,
                "canonical_normal": [float(x) for x in self.canonical_normal]}

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        try:
            k = CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]),
                                 float(d["cy"]), int(d["width"]), int(d["height"]))
            h = float(d["mounting_height_m"])
            n = np.asarray(d.get("canonical_normal", [0.0, -1.0, 0.0]), dtype=float)
        except KeyError as e:
            raise ValueError(f"calibration is missing field {e}") from None
        if n.shape != (3,):
            raise ValueError("canonical_normal must have 3 entries")
        GroundPlane(n, h)
        return cls(k, h, n / np.linalg.norm(n))


def load_calibration(path) -> Calibration:
    return Calibration.from_dict(json.loads(Path(path).read_text()))
