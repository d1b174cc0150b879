"""Evaluation metrics for odometry, depth, road homography and plane normal.

Trajectories hold world-to-camera poses (``X_cam = R X_world + t``);
odometry errors compare relative motions over path-length segments as in
the KITTI odometry benchmark.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fitting import CorrespondenceSet, reprojection_error
from .geometry import GroundPlane, Homography, Pose
from .imaging import DepthMap

DEFAULT_SEGMENTS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)


class MetricError(ValueError):
    pass


@dataclass
class Trajectory:
    poses: list
    frames: list | None = None
    reorthonormalized: bool = False

    def __post_init__(self):
        if not self.poses:
            raise MetricError("trajectory is empty")
        if self.frames is None:
            self.frames = list(range(len(self.poses)))
        if len(self.frames) != len(self.poses):
            raise MetricError("frame index list and pose list differ in length")

    def __len__(self):
        return len(self.poses)

    def canonical(self) -> "Trajectory":
        """Re-anchor so the first pose is the identity."""
        inv0 = self.poses[0].inverse()
        return Trajectory([p @ inv0 for p in self.poses], list(self.frames), self.reorthonormalized)

    def camera_to_world(self) -> np.ndarray:
        return np.stack([p.inverse().matrix() for p in self.poses])

    def centers(self) -> np.ndarray:
        return np.stack([-p.R.T @ p.translation for p in self.poses])


@dataclass
class MetricReport:
    name: str
    metrics: dict = field(default_factory=dict)      # name -> (value, unit)
    series: dict = field(default_factory=dict)       # name -> list of floats

    def __post_init__(self):
        for k, (v, _) in self.metrics.items():
            if not math.isfinite(v):
                raise MetricError(f"metric {k} is not finite")

    def __getitem__(self, key):
        return self.metrics[key][0]

    def to_dict(self) -> dict:
        return {"schema_version": 1, "name": self.name,
                "metrics": {k: {"value": float(v), "unit": u} for k, (v, u) in self.metrics.items()},
                "series": {k: [float(x) for x in s] for k, s in self.series.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(d["name"], {k: (float(m["value"]), m["unit"]) for k, m in d["metrics"].items()},
                   {k: list(s) for k, s in d.get("series", {}).items()})

    def to_csv(self) -> str:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value", "unit"])
        for k, (v, u) in self.metrics.items():
            w.writerow([k, repr(float(v)), u])
        return buf.getvalue()

    def series_csv(self) -> str:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.series)
        w.writerow(["index"] + names)
        n = max((len(s) for s in self.series.values()), default=0)
        for i in range(n):
            w.writerow([i] + [repr(float(self.series[k][i])) if i < len(self.series[k]) else ""
                              for k in names])
        return buf.getvalue()


# --- visual odometry ----------------------------------------------------------

def _path_lengths(c2w: np.ndarray) -> np.ndarray:
    steps = np.linalg.norm(np.diff(c2w[:, :3, 3], axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _angle(R) -> float:
    return math.acos(max(-1.0, min(1.0, (np.trace(R) - 1.0) / 2.0)))


def segment_errors(est: Trajectory, gt: Trajectory, lengths, tol: float = 1e-9):
    """Per-segment ``(first, length, t_err, r_err)``; errors per meter (m/m, rad/m)."""
    if len(est) != len(gt):
        raise MetricError(f"frame counts differ: {len(est)} vs {len(gt)}")
    E = est.camera_to_world()
    G = gt.camera_to_world()
    dist = _path_lengths(G)
    out = []
    for first in range(len(G)):
        for L in lengths:
            target = dist[first] + L
            ok = np.flatnonzero(dist >= target - tol * max(1.0, target))
            if len(ok) == 0:
                continue
            last = int(ok[0])
            dg = np.linalg.inv(G[first]) @ G[last]
            de = np.linalg.inv(E[first]) @ E[last]
            err = np.linalg.inv(dg) @ de
            out.append((first, float(L), float(np.linalg.norm(err[:3, 3])) / L,
                        _angle(err[:3, :3]) / L))
    return out


def vo_metrics(est: Trajectory, gt: Trajectory, lengths=DEFAULT_SEGMENTS) -> MetricReport:
    """Mean relative translation (%) and rotation (deg/100 m) error over all segments."""
    lengths = [float(L) for L in lengths]
    if not lengths or min(lengths) <= 0:
        raise MetricError("segment lengths must be positive")
    segs = segment_errors(est, gt, lengths)
    if not segs:
        total = _path_lengths(gt.camera_to_world())[-1]
        usable = [L for L in lengths if L <= total] or ["none"]
        raise MetricError(f"no segment fits a path of {total:.3f} m; usable lengths: {usable}; "
                          f"choose lengths <= {total:.3f} m")
    t = np.array([s[2] for s in segs])
    r = np.array([s[3] for s in segs])
    return MetricReport("vo", {
        "t_err": (float(t.mean() * 100.0), "%"),
        "r_err": (float(np.degrees(r.mean()) * 100.0), "deg/100m"),
        "segments": (float(len(segs)), "count"),
    }, {"t_err_per_segment": list(t * 100.0), "r_err_per_segment": list(np.degrees(r) * 100.0)})


# --- depth --------------------------------------------------------------------

@dataclass
class DepthEvalConfig:
    scaling: str = "median-gt"     # median-gt | camera-height | none
    min_depth: float = 0.1
    max_depth: float = 80.0
    mask: np.ndarray | None = None
    scale: float | None = None     # s = h_c / h_t for camera-height mode

    def __post_init__(self):
        if self.scaling not in ("median-gt", "camera-height", "none"):
            raise MetricError(f"unknown scaling mode {self.scaling!r}")
        if not 0 < self.min_depth < self.max_depth:
            raise MetricError("depth clamp needs 0 < min < max")
        if self.scaling == "camera-height" and not (self.scale and self.scale > 0):
            raise MetricError("camera-height scaling needs a positive scale s = h_c / h_t")


def depth_metrics(pred: DepthMap, gt: DepthMap, cfg: DepthEvalConfig | None = None) -> MetricReport:
    cfg = cfg or DepthEvalConfig()
    if pred.shape != gt.shape:
        raise MetricError("prediction and ground truth differ in size")
    g_all = gt.values
    sel = pred.valid & gt.valid & (g_all > cfg.min_depth) & (g_all < cfg.max_depth)
    if cfg.mask is not None:
        sel &= np.asarray(cfg.mask, dtype=bool)
    if not sel.any():
        raise MetricError("no jointly valid pixels to evaluate")
    p, g = pred.values[sel], g_all[sel]
    if cfg.scaling == "median-gt":
        p = p * (np.median(g) / np.median(p))
    elif cfg.scaling == "camera-height":
        p = p * cfg.scale
    p = np.clip(p, cfg.min_depth, cfg.max_depth)
    ratio = np.maximum(p / g, g / p)
    d = p - g
    m = {
        "abs_rel": (float(np.mean(np.abs(d) / g)), "1"),
        "sq_rel": (float(np.mean(d * d / g)), "m"),
        "rmse": (float(np.sqrt(np.mean(d * d))), "m"),
        "rmse_log": (float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))), "1"),
        "delta_1": (float(np.mean(ratio < 1.25)), "1"),
        "delta_2": (float(np.mean(ratio < 1.25**2)), "1"),
        "delta_3": (float(np.mean(ratio < 1.25**3)), "1"),
        "pixels": (float(sel.sum()), "count"),
    }
    return MetricReport("depth", m)


# --- plane and homography -----------------------------------------------------

def normal_angle_error(pred: GroundPlane, gt: GroundPlane) -> float:
    """Sign-insensitive angle between plane normals, degrees."""
    a = np.asarray(pred.normal if isinstance(pred, GroundPlane) else pred, dtype=float)
    b = np.asarray(gt.normal if isinstance(gt, GroundPlane) else gt, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    return math.degrees(math.atan2(np.linalg.norm(np.cross(a, b)), abs(float(a @ b))))


def homography_eval(est, corr: CorrespondenceSet) -> MetricReport:
    stats = reprojection_error(est, corr)
    e = stats.errors
    fin = e[np.isfinite(e)]
    if len(fin) == 0:
        raise MetricError("every correspondence maps to infinity")
    return MetricReport("homography", {
        "mean": (stats.mean, "px"),
        "median": (stats.median, "px"),
        "p90": (float(np.percentile(fin, 90)), "px"),
        "p95": (float(np.percentile(fin, 95)), "px"),
        "max": (stats.max, "px"),
        "pairs": (float(len(e)), "count"),
        "at_infinity": (float(len(e) - len(fin)), "count"),
    }, {"error": [float(x) for x in fin]})


# --- plots --------------------------------------------------------------------

def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "roadsfm"
    matplotlib.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(5, 4))
    return plt, fig, ax


def _save(plt, fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_trajectories(trajs: dict, path):
    """Top-down (x, z) overlay of camera centres."""
    plt, fig, ax = _figure()
    for name, tr in trajs.items():
        c = tr.centers()
        ax.plot(c[:, 0], c[:, 2], marker=".", label=name)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("z [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    _save(plt, fig, path)


def plot_series(series: dict, path, ylabel: str = "error"):
    plt, fig, ax = _figure()
    for name, s in series.items():
        ax.plot(np.arange(len(s)), s, marker=".", label=name)
    ax.set_xlabel("index")
    ax.set_ylabel(ylabel)
    if series:
        ax.legend()
    _save(plt, fig, path)


def plot_bars(values: dict, path, ylabel: str = "mean reprojection error [px]"):
    plt, fig, ax = _figure()
    names = list(values)
    ax.bar(np.arange(len(names)), [values[k] for k in names])
    ax.set_xticks(np.arange(len(names)))
    ax.set_xticklabels(names)
    ax.set_ylabel(ylabel)
    _save(plt, fig, path)
