"""Seeded synthetic data shared by the unit and acceptance tests."""

import numpy as np

from roadsfm.fitting import CorrespondenceSet
from roadsfm.geometry import GroundPlane


def plane_mixture(seed=7, n=1000, inlier_frac=0.7, sigma=0.01,
                  plane=GroundPlane([0.03, -1.0, 0.02], 1.65)):
    """Points near ``plane`` plus uniform outliers; returns (points, is_inlier)."""
    rng = np.random.default_rng(seed)
    n_in = int(round(n * inlier_frac))
    N = plane.normal
    a = np.cross(N, [1.0, 0, 0])
    a /= np.linalg.norm(a)
    b = np.cross(N, a)
    uv = rng.uniform(-8, 8, size=(n_in, 2)) + [0, 12]
    P = -plane.height * N + uv[:, :1] * a + uv[:, 1:] * b + sigma * rng.standard_normal((n_in, 1)) * N
    Q = rng.uniform([-8, -3, 2], [8, 3, 25], size=(n - n_in, 3))
    pts = np.vstack([P, Q])
    flag = np.r_[np.ones(n_in, bool), np.zeros(n - n_in, bool)]
    perm = rng.permutation(n)
    return pts[perm], flag[perm]


def random_homography(rng, width=128, height=96, shift=6.0):
    """H that moves the image corners by a few pixels."""
    src = np.array([[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]], float)
    dst = src + rng.uniform(-shift, shift, size=(4, 2))
    from roadsfm.fitting import dlt_homography
    return dlt_homography(CorrespondenceSet(src, dst)).matrix


def homography_mixture(H, seed=11, n=300, sigma=0.2, outlier_frac=0.2, width=128, height=96):
    rng = np.random.default_rng(seed)
    p = rng.uniform([0, 0], [width - 1, height - 1], size=(n, 2))
    y = np.c_[p, np.ones(n)] @ H.T
    q = y[:, :2] / y[:, 2:]
    q = q + sigma * rng.standard_normal(q.shape)
    n_out = int(round(n * outlier_frac))
    q[:n_out] = rng.uniform([0, 0], [width - 1, height - 1], size=(n_out, 2))
    return CorrespondenceSet(p, q)


def corner_transfer_error(H_est, H_true, width=128, height=96):
    c = np.array([[0, 0, 1], [width - 1, 0, 1], [width - 1, height - 1, 1], [0, height - 1, 1]], float)
    a = c @ np.asarray(H_est).T
    b = c @ np.asarray(H_true).T
    return float(np.linalg.norm(a[:, :2] / a[:, 2:] - b[:, :2] / b[:, 2:], axis=1).max())


def pair_scene(K, forward=0.3, yaw_deg=0.5, pitch_deg=-1.0, texture=None, boxes=True, near=True):
    """Two-frame scene: textured road, two boxes, forward motion with a small yaw."""
    from roadsfm.synthscene import Box, SceneSpec, TextureSpec, waypoint_trajectory
    traj = waypoint_trajectory([[0, 0, 0], [0, 0, forward]], np.radians([0.0, yaw_deg]),
                               np.radians(pitch_deg))
    bx = []
    if boxes:
        z0, z1 = (9.0, 13.0) if near else (18.0, 24.0)
        bx = [Box((-2.5, z0), (1.5, 1.4, 2.0), 0.3),
              Box((3.0, z1), (1.8, 1.8, 1.8), -0.2, (0.7, 0.6, 0.5, 0.4, 0.35, 0.55))]
    return SceneSpec(K, traj, texture=texture or TextureSpec(), boxes=bx)


def gt_state(spec, frames, cfg):
    """State vector reproducing the rendered pair as closely as the grid allows."""
    from roadsfm.estimation import StateVector, fit_grid_to_depth
    from roadsfm.synthscene import relative_pose
    n = frames[1].plane.normal
    dr = np.arctan2(-n[2], -n[1])
    dh = frames[1].plane.height - cfg.camera_height
    h_t = cfg.camera_height + dh
    # unscaled state: translation and depth divided by s = h_c / h_t
    s = cfg.camera_height / h_t
    rel = relative_pose(spec, 1)
    g = fit_grid_to_depth(frames[1].depth.scaled(1 / s), spec.intrinsics, cfg)
    return StateVector(rel.rotation, rel.translation / s, [dr, 0.0, dh], g)
