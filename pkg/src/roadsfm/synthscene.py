"""Deterministic ray-cast scenes: a textured ground plane plus boxes.

World coordinates follow the camera convention (x right, y down, z
forward) with the ground plane ``N_w^T P + h = 0``.  Trajectories are
lists of world-to-camera poses.  Textures are evaluated at the 3-D hit
point, so every view of a surface point sees the same intensity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import (CameraIntrinsics, GroundPlane, Pose, angle_axis_from_rotation,
                       rotation_x, rotation_y)
from .imaging import DepthMap

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


LOD_PIXELS = 2.5


class SceneError(ValueError):
    pass


@dataclass
class TextureSpec:
    """Multi-octave value noise: wavelengths ``base_wavelength / 2**k`` (meters)."""

    seed: int = 0
    octaves: int = 5
    base_wavelength: float = 2.0
    contrast: float = 1.2
    mean: float = 0.5
    persistence: float = 0.9

    @classmethod
    def textureless(cls, mean: float = 0.5) -> "TextureSpec":
        return cls(contrast=0.0, mean=mean)


@dataclass
class Box:
    """Upright box resting on the ground, rotated by ``yaw`` about the world y axis."""

    center: tuple                 # (x, z) ground position, meters
    size: tuple                   # (sx, sy, sz) meters
    yaw: float = 0.0
    albedo: tuple = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8)  # -x, +x, -y, +y, -z, +z faces


@dataclass
class SceneSpec:
    intrinsics: CameraIntrinsics
    trajectory: list
    plane: GroundPlane = field(default_factory=lambda: GroundPlane([0.0, -1.0, 0.0], 1.65))
    texture: TextureSpec = field(default_factory=TextureSpec)
    boxes: list = field(default_factory=list)
    sky: float = 0.8
    canonical_normal: tuple = (0.0, -1.0, 0.0)
    supersample: int = 3   # s x s samples averaged per pixel for the image

    def __post_init__(self):
        if not self.trajectory:
            raise SceneError("trajectory is empty")
        if int(self.supersample) < 1:
            raise SceneError("supersample must be at least 1")
        for b in self.boxes:
            if min(b.size) <= 0:
                raise SceneError("box sizes must be positive")


@dataclass
class RenderedFrame:
    image: np.ndarray
    depth: DepthMap
    mask: np.ndarray
    pose: Pose
    plane: GroundPlane


def _hash(ix, iy, iz, seed):
    """Counter-based hash of integer lattice coordinates to [0, 1)."""
    salt = np.uint64((int(seed) * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF)
    h = (ix.astype(np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
         ^ iy.astype(np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
         ^ iz.astype(np.int64).astype(np.uint64) * np.uint64(0x165667B19E3779F9)
         ^ salt)
    h = (h ^ (h >> np.uint64(30))) * _M1
    h = (h ^ (h >> np.uint64(27))) * _M2
    h = h ^ (h >> np.uint64(31))
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def value_noise(P, seed: int) -> np.ndarray:
    """Smooth 3-D value noise in [0, 1] at points ``P`` (..., 3), unit lattice."""
    P = np.asarray(P, dtype=float)
    base = np.floor(P)
    f = _fade(P - base)
    i = base.astype(np.int64)
    out = 0.0
    for dx in (0, 1):
        wx = f[..., 0] if dx else 1 - f[..., 0]
        for dy in (0, 1):
            wy = f[..., 1] if dy else 1 - f[..., 1]
            for dz in (0, 1):
                wz = f[..., 2] if dz else 1 - f[..., 2]
                out = out + wx * wy * wz * _hash(i[..., 0] + dx, i[..., 1] + dy,
                                                 i[..., 2] + dz, seed)
    return out


def texture_intensity(spec: TextureSpec, P, seed_offset: int = 0, footprint=None) -> np.ndarray:
    """Intensity at world points ``P``.

    ``footprint`` (meters per pixel at each point) fades out octaves whose
    wavelength spans fewer than ``LOD_PIXELS`` pixels, a procedural
    mip-map that keeps point sampling from aliasing far surfaces.
    """
    P = np.asarray(P, dtype=float)
    total = np.zeros(P.shape[:-1])
    norm = 0.0
    for k in range(spec.octaves):
        wl = spec.base_wavelength / 2**k
        amp = spec.persistence**k
        if footprint is not None:
            ratio = wl / footprint
            amp = amp * _fade(np.clip((ratio - LOD_PIXELS) / LOD_PIXELS, 0.0, 1.0))
        # offset each octave so lattice points do not line up
        total += amp * (value_noise(P / wl + 17.31 * (k + 1), spec.seed * 7919 + seed_offset + k) - 0.5)
        norm += spec.persistence**k
    n = total / norm if norm else total
    return np.clip(spec.mean + 2.0 * spec.contrast * n, 0.0, 1.0)


def _box_frame(b: Box, plane_height: float):
    R = rotation_y(b.yaw)
    c = np.array([b.center[0], plane_height - b.size[1] / 2.0, b.center[1]])
    return R, c, np.asarray(b.size, dtype=float) / 2.0


def _ray_box(origin, dirs, b: Box, plane_height: float):
    """Entry distance along ``dirs`` and face index (inf where missed)."""
    R, c, half = _box_frame(b, plane_height)
    o = (origin - c) @ R
    d = dirs @ R
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    # parallel slabs: inside -> unbounded, outside -> empty
    par = d == 0
    inside = np.abs(o) <= half
    tmin = np.where(par, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(par, np.where(inside, np.inf, -np.inf), tmax)
    t_near = tmin.max(axis=-1)
    t_far = tmax.min(axis=-1)
    axis = tmin.argmax(axis=-1)
    hit = (t_near <= t_far) & (t_near > 1e-9)
    sign = np.take_along_axis(d, axis[..., None], -1)[..., 0] > 0
    face = 2 * axis + np.where(sign, 0, 1)  # entering through -axis face when d>0
    return np.where(hit, t_near, np.inf), face


def camera_center(pose: Pose) -> np.ndarray:
    return -pose.R.T @ pose.translation


def lod_footprint(spec: SceneSpec, P, grazing: bool) -> np.ndarray:
    """Approximate world size (m) of a pixel at ``P`` in the coarsest view that sees it.

    Taken over every trajectory camera whose image contains ``P`` (nearest
    camera as a fallback), so it depends only on the scene, every frame sees
    identical texture and no frame sees detail finer than it can resolve.
    Ground points are stretched by the grazing angle of that view.
    """
    K = spec.intrinsics
    f = 0.5 * (K.fx + K.fy)
    P = np.asarray(P)
    far = np.zeros(P.shape[:-1])
    near = np.full(P.shape[:-1], np.inf)
    for pose in spec.trajectory:
        c = camera_center(pose)
        d = np.sqrt(((P - c) ** 2).sum(-1))
        X = P @ pose.R.T + pose.translation
        z = X[..., 2]
        zs = np.where(z > 1e-3, z, 1.0)
        u = K.fx * X[..., 0] / zs + K.cx
        v = K.fy * X[..., 1] / zs + K.cy
        seen = (z > 1e-3) & (u > -2) & (u < K.width + 1) & (v > -2) & (v < K.height + 1)
        far = np.where(seen, np.maximum(far, d), far)
        near = np.minimum(near, d)
    rho = np.where(far > 0, far, near)
    if grazing:
        centers = np.stack([camera_center(p) for p in spec.trajectory])
        h0 = max(float(np.min(centers @ spec.plane.normal)) + spec.plane.height, 1e-3)
        return rho / f * np.sqrt(np.maximum(1.0, rho / h0))
    return 2.0 * rho / f


def cast_rays(spec: SceneSpec, pose: Pose, u, v):
    """Ray-cast arbitrary pixel coordinates of a camera at world-to-camera ``pose``.

    Returns ``(intensity, depth, is_ground)``; depth is the camera z of the
    first hit (NaN for sky).
    """
    K = spec.intrinsics
    C = camera_center(pose)
    n, h = spec.plane.normal, spec.plane.height
    if n @ C + h <= 0:
        raise SceneError("camera is on or below the ground plane")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    rc = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)
    dirs = rc @ pose.R  # rows: R^T r
    nd = dirs @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t_plane = -(n @ C + h) / nd
    t_plane = np.where((nd < 0) & (t_plane > 0), t_plane, np.inf)
    best = t_plane.copy()
    kind = np.where(np.isfinite(best), 0, -1)
    face_of = np.zeros(u.shape, dtype=int)
    for bi, b in enumerate(spec.boxes):
        tb, face = _ray_box(C, dirs, b, h)
        closer = tb < best
        best = np.where(closer, tb, best)
        kind = np.where(closer, bi + 1, kind)
        face_of = np.where(closer, face, face_of)
    P = C + np.where(np.isfinite(best), best, 0.0)[..., None] * dirs
    img = np.full(u.shape, float(spec.sky))
    ground = kind == 0
    if ground.any():
        fp = lod_footprint(spec, P[ground], grazing=True)
        img[ground] = texture_intensity(spec.texture, P[ground], footprint=fp)
    for bi, b in enumerate(spec.boxes):
        sel = kind == bi + 1
        if sel.any():
            alb = np.asarray(b.albedo, dtype=float)[face_of[sel]]
            fp = lod_footprint(spec, P[sel], grazing=False)
            tex = texture_intensity(spec.texture, P[sel], seed_offset=1000 * (bi + 1), footprint=fp)
            img[sel] = np.clip(alb * (1.0 + 0.8 * (tex - 0.5)), 0.0, 1.0)
    depth = np.where(np.isfinite(best), best, np.nan)
    return img, depth, ground


def render(spec: SceneSpec, index: int) -> RenderedFrame:
    """Render frame ``index``: area-sampled image, centre-sampled depth and road mask."""
    if not 0 <= index < len(spec.trajectory):
        raise IndexError(f"frame {index} outside trajectory of {len(spec.trajectory)}")
    K = spec.intrinsics
    pose = spec.trajectory[index]
    u, v = np.meshgrid(np.arange(K.width, dtype=float), np.arange(K.height, dtype=float))
    img, depth, ground = cast_rays(spec, pose, u, v)
    n = int(spec.supersample)
    if n > 1:
        offs = (np.arange(n) + 0.5) / n - 0.5
        acc = np.zeros_like(img)
        for dy in offs:
            for dx in offs:
                acc += cast_rays(spec, pose, u + dx, v + dy)[0]
        img = acc / (n * n)
    return RenderedFrame(img, DepthMap(np.nan_to_num(depth, nan=0.0), np.isfinite(depth)),
                         ground, pose, spec.plane.transformed(pose))


def relative_pose(spec: SceneSpec, t: int) -> Pose:
    """Ground-truth ``T_{t -> t-1}`` between consecutive frames."""
    return spec.trajectory[t - 1] @ spec.trajectory[t].inverse()


def make_trajectory(kind: str, length: float, count: int, speed: str = "constant", *,
                    radius: float = 50.0, amplitude: float = 0.5, period: float | None = None,
                    mount_pitch: float = 0.0) -> list:
    """Analytic vehicle paths as world-to-camera poses; frame 0 sits at the origin.

    ``straight`` drives along +z; ``arc`` turns towards +x with the given
    radius; ``sinusoid`` weaves in x with ``amplitude`` over ``period``
    meters of forward travel.  ``speed`` is ``constant`` or
    ``accelerating`` (quadratic arc length from rest).
    """
    if not length > 0 or count < 2:
        raise ValueError("need length > 0 and at least 2 frames")
    k = np.arange(count) / (count - 1)
    if speed == "constant":
        s = length * k
    elif speed == "accelerating":
        s = length * k**2
    else:
        raise ValueError(f"unknown speed profile {speed!r}")
    if kind == "straight":
        pos = np.stack([np.zeros_like(s), np.zeros_like(s), s], -1)
        yaw = np.zeros_like(s)
    elif kind == "arc":
        pos = np.stack([radius * (1 - np.cos(s / radius)), np.zeros_like(s),
                        radius * np.sin(s / radius)], -1)
        yaw = s / radius
    elif kind == "sinusoid":
        per = period if period else length
        w = 2 * np.pi / per
        pos = np.stack([amplitude * np.sin(w * s), np.zeros_like(s), s], -1)
        yaw = np.arctan(amplitude * w * np.cos(w * s))
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    return waypoint_trajectory(pos, yaw, mount_pitch)


def waypoint_trajectory(centers, yaws, mount_pitch: float = 0.0) -> list:
    """World-to-camera poses from camera centres and heading angles (radians, about +y)."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    yaws = np.asarray(yaws, dtype=float).reshape(-1)
    if len(centers) != len(yaws) or len(centers) == 0:
        raise ValueError("need one yaw per camera centre")
    mount = rotation_x(mount_pitch)
    poses = []
    for c, psi in zip(centers, yaws):
        R = (rotation_y(psi) @ mount).T
        poses.append(Pose(angle_axis_from_rotation(R), -R @ c))
    return poses


def ground_correspondences(spec: SceneSpec, t: int, stride: int = 4, seed: int = 0):
    """Exact on-road correspondences ``(p_t, p_{t-1})`` visible in both frames."""
    K = spec.intrinsics
    rng = np.random.Generator(np.random.Philox(seed + 104729 * t))
    u, v = np.meshgrid(np.arange(0, K.width, stride, dtype=float),
                       np.arange(0, K.height, stride, dtype=float))
    u = (u + rng.uniform(0, stride, u.shape)).ravel()
    v = (v + rng.uniform(0, stride, v.shape)).ravel()
    keep = (u <= K.width - 1) & (v <= K.height - 1)
    u, v = u[keep], v[keep]
    _, depth, ground = cast_rays(spec, spec.trajectory[t], u, v)
    u, v, depth = u[ground], v[ground], depth[ground]
    P = np.stack([(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth], -1)
    Q = relative_pose(spec, t).apply(P)
    front = Q[:, 2] > 1e-6
    zq = np.where(front, Q[:, 2], 1.0)
    up = K.fx * Q[:, 0] / zq + K.cx
    vp = K.fy * Q[:, 1] / zq + K.cy
    inb = front & (up >= 0) & (up <= K.width - 1) & (vp >= 0) & (vp <= K.height - 1)
    _, dprev, gprev = cast_rays(spec, spec.trajectory[t - 1], up[inb], vp[inb])
    vis = np.zeros_like(inb)
    vis[inb] = gprev & (np.abs(dprev - Q[inb, 2]) < 1e-6 * np.maximum(1.0, Q[inb, 2]))
    return np.stack([u[vis], v[vis]], -1), np.stack([up[vis], vp[vis]], -1)


# --- (de)serialisation ------------------------------------------------------

def pose_to_row(p: Pose) -> list:
    return [float(x) for x in p.matrix()[:3].ravel()]


def pose_from_row(row) -> Pose:
    M = np.eye(4)
    M[:3] = np.asarray(row, dtype=float).reshape(3, 4)
    return Pose.from_matrix(M)


def scene_to_dict(spec: SceneSpec) -> dict:
    k = spec.intrinsics
    return {
        "schema_version": 1,
        "camera": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                   "width": k.width, "height": k.height},
        "plane": {"normal": [float(x) for x in spec.plane.normal], "height": spec.plane.height},
        "texture": asdict(spec.texture),
        "boxes": [{"center": list(b.center), "size": list(b.size), "yaw": b.yaw,
                   "albedo": list(b.albedo)} for b in spec.boxes],
        "sky": spec.sky,
        "canonical_normal": list(spec.canonical_normal),
        "supersample": spec.supersample,
        "poses": [pose_to_row(p) for p in spec.trajectory],
    }


def scene_from_dict(d: dict) -> SceneSpec:
    """Build a scene from JSON.

    The camera path is either ``poses`` (3x4 world-to-camera rows) or a
    ``trajectory`` object: ``{"kind": "straight"|"arc"|"sinusoid", "length",
    "frames", ...}`` or ``{"kind": "waypoints", "centers", "yaw_deg"}``, both
    with an optional ``mount_pitch_deg``.
    """
    try:
        cam = d["camera"]
        K = CameraIntrinsics(float(cam["fx"]), float(cam["fy"]), float(cam["cx"]),
                             float(cam["cy"]), int(cam["width"]), int(cam["height"]))
        pl = d.get("plane", {"normal": [0.0, -1.0, 0.0], "height": 1.65})
        plane = GroundPlane(pl["normal"], pl["height"])
        if "poses" in d:
            traj = [pose_from_row(r) for r in d["poses"]]
        else:
            tr = dict(d["trajectory"])
            kind = tr.pop("kind")
            pitch = math.radians(float(tr.pop("mount_pitch_deg", 0.0)))
            if kind == "waypoints":
                traj = waypoint_trajectory(tr["centers"], np.radians(tr["yaw_deg"]), pitch)
            else:
                traj = make_trajectory(kind, float(tr.pop("length")), int(tr.pop("frames")),
                                       mount_pitch=pitch, **tr)
        texture = TextureSpec(**d.get("texture", {}))
        boxes = [Box(tuple(b["center"]), tuple(b["size"]), float(b.get("yaw", 0.0)),
                     tuple(b.get("albedo", Box.albedo))) for b in d.get("boxes", [])]
    except (KeyError, TypeError) as e:
        raise SceneError(f"invalid scene description: {e}") from None
    return SceneSpec(K, traj, plane, texture, boxes, float(d.get("sky", 0.8)),
                     tuple(d.get("canonical_normal", (0.0, -1.0, 0.0))),
                     int(d.get("supersample", 3)))
