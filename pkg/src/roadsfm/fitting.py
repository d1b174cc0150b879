"""Robust plane and homography fitting for building ground truth.

RANSAC draws its minimal samples from a Philox counter-based generator,
so a seed fully determines the hypothesis sequence.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, GroundPlane, Homography, apply_homography, backproject
from .imaging import DepthMap


class DegenerateInputError(ValueError):
    pass


class NoConsensusError(RuntimeError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray
    pixels: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud has non-finite coordinates")

    def __len__(self):
        return len(self.points)


@dataclass
class CorrespondenceSet:
    """Pixel pairs ``(p_t, p_prev)`` with ``p_prev ~ H p_t``."""

    p_t: np.ndarray
    p_prev: np.ndarray

    def __post_init__(self):
        self.p_t = np.asarray(self.p_t, dtype=float).reshape(-1, 2)
        self.p_prev = np.asarray(self.p_prev, dtype=float).reshape(-1, 2)
        if self.p_t.shape != self.p_prev.shape:
            raise ValueError("correspondence arrays differ in length")
        if not (np.all(np.isfinite(self.p_t)) and np.all(np.isfinite(self.p_prev))):
            raise ValueError("correspondences have non-finite coordinates")

    def __len__(self):
        return len(self.p_t)

    def subset(self, idx) -> "CorrespondenceSet":
        return CorrespondenceSet(self.p_t[idx], self.p_prev[idx])


@dataclass
class RansacConfig:
    inlier_threshold: float
    max_iterations: int = 2000
    confidence: float = 0.999
    rng_seed: int = 0

    def __post_init__(self):
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")


@dataclass
class FitReport:
    model: object
    inliers: np.ndarray
    inlier_ratio: float
    iterations: int
    warnings: list = field(default_factory=list)

    @property
    def inlier_count(self) -> int:
        return int(len(self.inliers))

    def to_dict(self) -> dict:
        if isinstance(self.model, GroundPlane):
            model = {"type": "plane", "normal": [float(x) for x in self.model.normal],
                     "height": self.model.height}
        else:
            model = {"type": "homography",
                     "matrix": [[float(x) for x in row] for row in self.model.matrix]}
        return {"schema_version": 1, "model": model, "inlier_count": self.inlier_count,
                "inlier_ratio": self.inlier_ratio, "iterations": self.iterations,
                "inliers": [int(i) for i in self.inliers], "warnings": list(self.warnings)}


MIN_INLIERS = 50
MIN_INLIER_RATIO = 0.6


def apply_gates(report: FitReport, min_inliers: int = MIN_INLIERS,
                min_ratio: float = MIN_INLIER_RATIO) -> FitReport:
    """Flag fits with too few inliers or too low an inlier ratio (warnings only)."""
    if report.inlier_count < min_inliers:
        report.warnings.append(f"only {report.inlier_count} inliers (< {min_inliers})")
    if report.inlier_ratio < min_ratio:
        report.warnings.append(f"inlier ratio {report.inlier_ratio:.3f} below {min_ratio}")
    return report


def _required_iterations(ratio: float, sample_size: int, confidence: float) -> float:
    good = ratio**sample_size
    if good <= 0:
        return math.inf
    if good >= 1:
        return 0
    return math.log(1 - confidence) / math.log(1 - good)


# --- planes -----------------------------------------------------------------

def depth_to_points(depth: DepthMap, K: CameraIntrinsics, mask=None) -> PointCloud:
    """Back-project every valid (and masked) pixel; may be empty."""
    if depth.shape != (K.height, K.width):
        raise ValueError("depth map does not match the intrinsics")
    sel = depth.valid.copy()
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != sel.shape:
            raise ValueError("mask does not match the depth map")
        sel &= mask
    v, u = np.nonzero(sel)
    if len(u) == 0:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 2)))
    pix = np.stack([u, v], -1).astype(float)
    return PointCloud(backproject(K, pix, depth.values[v, u]), pix)


def fit_plane_lsq(points) -> GroundPlane:
    """Total-least-squares plane through the centroid; normal oriented so h > 0."""
    P = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=float)
    if len(P) < 3:
        raise DegenerateInputError("need ≥ 3 points to fit a plane")
    c = P.mean(axis=0)
    _, s, Vt = np.linalg.svd(P - c, full_matrices=False)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateInputError("points are collinear or coincident")
    n = Vt[-1]
    h = -n @ c
    if h < 0:
        n, h = -n, -h
    if h == 0:
        raise DegenerateInputError("plane passes through the camera centre")
    return GroundPlane(n, h)


def _plane_from_sample(P3):
    n = np.cross(P3[:, 1] - P3[:, 0], P3[:, 2] - P3[:, 0])
    norm = np.linalg.norm(n, axis=-1)
    ok = norm > 1e-12
    n = n / np.where(ok, norm, 1.0)[:, None]
    d = -np.einsum("ij,ij->i", n, P3[:, 0])
    return n, d, ok


def ransac_plane(points, cfg: RansacConfig, batch: int = 64) -> FitReport:
    """3-point RANSAC on perpendicular distance with least-squares consensus refit."""
    P = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=float)
    n_pts = len(P)
    if n_pts < 3:
        raise DegenerateInputError("need ≥ 3 points")
    rng = np.random.Generator(np.random.Philox(cfg.rng_seed))
    best_count, best_inl = 0, None
    needed = cfg.max_iterations
    it = 0
    while it < min(needed, cfg.max_iterations):
        m = min(batch, cfg.max_iterations - it)
        idx = np.stack([rng.choice(n_pts, 3, replace=False) for _ in range(m)])
        n, d, ok = _plane_from_sample(P[idx])
        dist = np.abs(P @ n.T + d)                    # (n_pts, m)
        counts = np.where(ok, (dist < cfg.inlier_threshold).sum(0), -1)
        for j in range(m):
            it += 1
            if counts[j] > best_count:
                best_count = int(counts[j])
                best_inl = dist[:, j] < cfg.inlier_threshold
                needed = _required_iterations(best_count / n_pts, 3, cfg.confidence)
            if it >= needed:
                break
    if best_inl is None or best_count < 3:
        raise NoConsensusError("no plane hypothesis with at least 3 inliers")
    model = fit_plane_lsq(P[best_inl])
    # one re-selection pass on the refined model
    inl = np.abs(P @ model.normal + model.height) < cfg.inlier_threshold
    if inl.sum() >= 3:
        model = fit_plane_lsq(P[inl])
        best_inl = inl
    idx = np.flatnonzero(best_inl)
    return FitReport(model, idx, len(idx) / n_pts, it)


# --- homographies -----------------------------------------------------------

def _hartley(p):
    c = p.mean(axis=0)
    s = np.sqrt(2) / max(np.sqrt(((p - c) ** 2).sum(1)).mean(), 1e-300)
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
    return p * s - s * c, T


def _collinear3(p) -> bool:
    """True if any three of the (4, 2) points are collinear."""
    scale = max(np.ptp(p, axis=0).max(), 1e-300)
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a, b = p[j] - p[i], p[k] - p[i]
        if abs(a[0] * b[1] - a[1] * b[0]) < 1e-9 * scale**2:
            return True
    return False


def dlt_homography(c: CorrespondenceSet) -> Homography:
    """Hartley-normalised DLT mapping ``p_t`` to ``p_prev``, scaled so H[2,2] = 1."""
    n = len(c)
    if n < 4:
        raise DegenerateInputError(f"need ≥ 4 correspondences, got {n}")
    if n == 4 and (_collinear3(c.p_t) or _collinear3(c.p_prev)):
        raise DegenerateInputError("three of the four points are collinear")
    x, T1 = _hartley(c.p_t)
    y, T2 = _hartley(c.p_prev)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2] = x
    A[0::2, 2] = 1
    A[0::2, 6:8] = -y[:, :1] * x
    A[0::2, 8] = -y[:, 0]
    A[1::2, 3:5] = x
    A[1::2, 5] = 1
    A[1::2, 6:8] = -y[:, 1:] * x
    A[1::2, 8] = -y[:, 1]
    _, s, Vt = np.linalg.svd(A)
    if len(s) < 8 or s[7] <= 1e-10 * s[0]:
        raise DegenerateInputError("degenerate correspondence configuration (rank < 8)")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(T2) @ Hn @ T1
    if abs(H[2, 2]) < 1e-12:
        raise DegenerateInputError("homography has H[2,2] = 0")
    return Homography(H / H[2, 2], True)


def transfer_errors(H, c: CorrespondenceSet):
    """Forward ``|H p_t - p_prev|`` and backward ``|H^-1 p_prev - p_t|`` distances."""
    M = H.matrix if isinstance(H, Homography) else np.asarray(H, dtype=float)
    fwd, ok_f = apply_homography(M, c.p_t)
    e_f = np.where(ok_f, np.linalg.norm(fwd - c.p_prev, axis=1), np.inf)
    try:
        bwd, ok_b = apply_homography(np.linalg.inv(M), c.p_prev)
        e_b = np.where(ok_b, np.linalg.norm(bwd - c.p_t, axis=1), np.inf)
    except np.linalg.LinAlgError:
        e_b = np.full(len(c), np.inf)
    return e_f, e_b


def symmetric_transfer_error(H, c: CorrespondenceSet) -> np.ndarray:
    """RMS of the forward and backward transfer distances (pixels)."""
    e_f, e_b = transfer_errors(H, c)
    return np.sqrt(0.5 * (e_f**2 + e_b**2))


def ransac_homography(c: CorrespondenceSet, cfg: RansacConfig) -> FitReport:
    """4-point RANSAC on symmetric transfer error with DLT consensus refit."""
    n = len(c)
    if n < 4:
        raise DegenerateInputError(f"need ≥ 4 correspondences, got {n}")
    rng = np.random.Generator(np.random.Philox(cfg.rng_seed))
    best_count, best_inl = 0, None
    needed = cfg.max_iterations
    it = 0
    while it < min(needed, cfg.max_iterations):
        it += 1
        idx = rng.choice(n, 4, replace=False)
        sample = c.subset(idx)
        if _collinear3(sample.p_t) or _collinear3(sample.p_prev):
            continue
        try:
            H = dlt_homography(sample)
        except DegenerateInputError:
            continue
        err = symmetric_transfer_error(H, c)
        inl = err < cfg.inlier_threshold
        cnt = int(inl.sum())
        if cnt > best_count:
            best_count, best_inl = cnt, inl
            needed = _required_iterations(cnt / n, 4, cfg.confidence)
    if best_inl is None or best_count < 4:
        raise NoConsensusError("no homography hypothesis with at least 4 inliers")
    H = dlt_homography(c.subset(best_inl))
    # refit until the consensus set stops changing (bounded)
    for _ in range(5):
        inl = symmetric_transfer_error(H, c) < cfg.inlier_threshold
        if inl.sum() < 4 or np.array_equal(inl, best_inl):
            break
        best_inl = inl
        H = dlt_homography(c.subset(best_inl))
    idx = np.flatnonzero(best_inl)
    return FitReport(H, idx, len(idx) / n, it)


@dataclass
class ReprojectionStats:
    mean: float
    median: float
    max: float
    errors: np.ndarray


def reprojection_error(H, c: CorrespondenceSet) -> ReprojectionStats:
    """Per-pair ``|H p_t - p_prev|``; pairs mapped to infinity count as inf."""
    if len(c) < 1:
        raise ValueError("need at least one correspondence")
    M = H.matrix if isinstance(H, Homography) else np.asarray(H, dtype=float)
    q, ok = apply_homography(M, c.p_t)
    err = np.where(ok, np.linalg.norm(np.where(ok[:, None], q, 0.0) - c.p_prev, axis=1), np.inf)
    fin = err[np.isfinite(err)]
    if len(fin) == 0:
        return ReprojectionStats(math.inf, math.inf, math.inf, err)
    return ReprojectionStats(float(fin.mean()), float(np.median(fin)), float(fin.max()), err)


# --- correspondence files ---------------------------------------------------

CSV_HEADER = ["x_t", "y_t", "x_prev", "y_prev"]


def load_correspondences(path) -> CorrespondenceSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 values, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: unparsable number") from None
    a = np.array(rows, dtype=float).reshape(-1, 4)
    return CorrespondenceSet(a[:, :2], a[:, 2:])


def save_correspondences(c: CorrespondenceSet, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for a, b in zip(c.p_t, c.p_prev):
            w.writerow([repr(float(a[0])), repr(float(a[1])), repr(float(b[0])), repr(float(b[1]))])
