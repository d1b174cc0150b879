"""Dataset discovery and file formats.

Layout of a dataset directory (as written by ``roadsfm synth``)::

    calib.json            intrinsics, mounting height, canonical normal
    frame_%04d.png        8-bit grayscale or RGB images (PGM/PPM also read)
    depth_%04d.png        16-bit depth, meters * 256, 0 = invalid
    mask_%04d.png         road mask, nonzero = road
    poses.txt             one world-to-camera 3x4 matrix per line, row-major
    plane.json            per-frame ground plane in camera coordinates
    corr_%04d.csv         on-road correspondences between frame i and i-1
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import Calibration, GroundPlane, Pose
from .imaging import DepthMap
from .metrics import Trajectory

SCHEMA_VERSION = 1
DEPTH_SCALE = 256.0
IMAGE_EXTS = (".png", ".pgm", ".ppm")


class DatasetError(ValueError):
    pass


# --- atomic writes ------------------------------------------------------------

def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    if isinstance(obj, dict) and "schema_version" not in obj:
        obj = {"schema_version": SCHEMA_VERSION, **obj}
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}: invalid JSON ({e})") from None
    v = d.get("schema_version", SCHEMA_VERSION) if isinstance(d, dict) else None
    if v != SCHEMA_VERSION:
        raise DatasetError(f"{path}: unsupported schema_version {v!r}")
    return d


def _png_bytes(img: Image.Image) -> bytes:
    import io as _io
    buf = _io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# --- images, masks, depth -----------------------------------------------------

def load_image(path) -> np.ndarray:
    """Float image in [0, 1]; (H, W) for gray, (H, W, 3) for colour."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            a = np.asarray(im, dtype=np.float64) / 65535.0
        elif im.mode in ("L", "P", "1"):
            a = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        else:
            a = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return a


def save_image(img, path):
    a = np.clip(np.rint(np.asarray(img, dtype=float) * 255.0), 0, 255).astype(np.uint8)
    atomic_write_bytes(path, _png_bytes(Image.fromarray(a)))


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 0


def save_mask(mask, path):
    a = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    atomic_write_bytes(path, _png_bytes(Image.fromarray(a)))


def load_depth_png(path) -> DepthMap:
    """16-bit single-channel PNG, depth = raw / 256 m, raw 0 = invalid."""
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I;16B", "I;16L", "I"):
            raise DatasetError(f"{path}: depth must be a 16-bit single-channel PNG, got mode {im.mode}")
        raw = np.asarray(im).astype(np.int64)
    if raw.ndim != 2:
        raise DatasetError(f"{path}: depth image must have one channel")
    if raw.max(initial=0) > 65535 or raw.min(initial=0) < 0:
        raise DatasetError(f"{path}: depth values exceed 16 bits")
    valid = raw > 0
    return DepthMap(np.where(valid, raw / DEPTH_SCALE, 0.0), valid)


def save_depth_png(depth: DepthMap, path):
    """Inverse of :func:`load_depth_png`; valid depths clamp to [1/256, 65535/256] m."""
    raw = np.rint(np.where(depth.valid, depth.values, 0.0) * DEPTH_SCALE)
    raw = np.where(depth.valid, np.clip(raw, 1, 65535), 0).astype(np.uint16)
    atomic_write_bytes(path, _png_bytes(Image.fromarray(raw)))


# --- poses --------------------------------------------------------------------

def nearest_rotation(M) -> np.ndarray:
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def parse_poses(text: str, source: str = "<poses>") -> Trajectory:
    poses = []
    fixed = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 12:
            raise DatasetError(f"{source}:{lineno}: expected 12 values, got {len(parts)}")
        try:
            vals = np.array([float(p) for p in parts])
        except ValueError:
            raise DatasetError(f"{source}:{lineno}: unparsable number") from None
        if not np.all(np.isfinite(vals)):
            raise DatasetError(f"{source}:{lineno}: non-finite value")
        M = vals.reshape(3, 4)
        R = M[:, :3]
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6 or np.linalg.det(R) <= 0:
            if np.linalg.det(R) <= 0:
                raise DatasetError(f"{source}:{lineno}: rotation block is not proper")
            R = nearest_rotation(R)
            fixed = True
        M4 = np.eye(4)
        M4[:3, :3] = R
        M4[:3, 3] = M[:, 3]
        poses.append(Pose.from_matrix(M4))
    if not poses:
        raise DatasetError(f"{source}: no poses")
    return Trajectory(poses, reorthonormalized=fixed)


def load_poses(path) -> Trajectory:
    """KITTI-style pose file; ``reorthonormalized`` flags repaired rotations."""
    return parse_poses(Path(path).read_text(), str(path))


def format_poses(traj) -> str:
    poses = traj.poses if isinstance(traj, Trajectory) else list(traj)
    lines = []
    for p in poses:
        lines.append(" ".join(repr(float(v)) for v in p.matrix()[:3].ravel()))
    return "\n".join(lines) + "\n"


def save_poses(traj, path):
    atomic_write_text(path, format_poses(traj))


# --- planes and calibration ---------------------------------------------------

def planes_to_dict(planes, frames=None) -> dict:
    frames = list(range(len(planes))) if frames is None else list(frames)
    return {"schema_version": SCHEMA_VERSION,
            "planes": [{"frame": int(f), "normal": [float(x) for x in p.normal],
                        "height": float(p.height)} for f, p in zip(frames, planes)]}


def load_planes(path) -> dict:
    d = read_json(path)
    try:
        return {int(e["frame"]): GroundPlane(e["normal"], e["height"]) for e in d["planes"]}
    except (KeyError, TypeError) as e:
        raise DatasetError(f"{path}: malformed plane file ({e})") from None


def load_plane(path, frame: int | None = None) -> GroundPlane:
    """A single plane: either ``{"normal","height"}`` or an entry of a per-frame file."""
    d = read_json(path)
    if "planes" in d:
        planes = load_planes(path)
        if frame is None:
            if len(planes) != 1:
                raise DatasetError(f"{path}: holds several planes; pass a frame index")
            return next(iter(planes.values()))
        if frame not in planes:
            raise DatasetError(f"{path}: no plane for frame {frame}")
        return planes[frame]
    try:
        return GroundPlane(d["normal"], d["height"])
    except KeyError as e:
        raise DatasetError(f"{path}: missing field {e}") from None


# --- datasets -----------------------------------------------------------------

_FRAME_RE = re.compile(r"^frame_(\d{4,})\.(png|pgm|ppm)$")


@dataclass
class DatasetHandle:
    root: Path
    frames: list
    calibration: Calibration
    image_files: dict
    has_depth: bool = False
    has_masks: bool = False
    has_poses: bool = False
    has_plane: bool = False
    has_correspondences: bool = False
    trajectory: Trajectory | None = field(default=None, repr=False)

    @property
    def intrinsics(self):
        return self.calibration.intrinsics

    def image(self, i: int) -> np.ndarray:
        return load_image(self.image_files[i])

    def depth(self, i: int) -> DepthMap:
        return load_depth_png(self.root / f"depth_{i:04d}.png")

    def mask(self, i: int) -> np.ndarray:
        return load_mask(self.root / f"mask_{i:04d}.png")

    def plane(self, i: int) -> GroundPlane:
        return load_plane(self.root / "plane.json", i)

    def correspondences_path(self, i: int) -> Path:
        return self.root / f"corr_{i:04d}.csv"


def load_dataset(root) -> DatasetHandle:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    calib_path = root / "calib.json"
    if not calib_path.exists():
        raise DatasetError(f"{root}: missing calibration file calib.json")
    try:
        calib = Calibration.from_dict(read_json(calib_path))
    except ValueError as e:
        raise DatasetError(f"{calib_path}: {e}") from None
    files = {}
    for p in sorted(root.iterdir()):
        m = _FRAME_RE.match(p.name)
        if m:
            i = int(m.group(1))
            if i in files:
                raise DatasetError(f"{root}: frame {i} stored twice")
            files[i] = p
    if not files:
        raise DatasetError(f"{root}: no frame_XXXX images found")
    frames = sorted(files)
    K = calib.intrinsics
    for i in frames:
        with Image.open(files[i]) as im:
            if im.size != (K.width, K.height):
                raise DatasetError(f"{files[i]}: size {im.size} differs from calibration "
                                   f"{(K.width, K.height)}")
    h = DatasetHandle(root, frames, calib, files)
    h.has_depth = all((root / f"depth_{i:04d}.png").exists() for i in frames)
    h.has_masks = all((root / f"mask_{i:04d}.png").exists() for i in frames)
    if (root / "poses.txt").exists():
        h.trajectory = load_poses(root / "poses.txt")
        if len(h.trajectory) != len(frames):
            raise DatasetError(f"{root}/poses.txt: {len(h.trajectory)} poses for {len(frames)} frames")
        h.has_poses = True
    if (root / "plane.json").exists():
        load_planes(root / "plane.json")
        h.has_plane = True
    h.has_correspondences = len(frames) > 1 and all(
        h.correspondences_path(i).exists() for i in frames[1:])
    return h
