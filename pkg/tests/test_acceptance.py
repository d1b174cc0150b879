"""Acceptance criteria 1-10, each printing one PASS/FAIL line."""

import contextlib
import json
import math
import time

import numpy as np
import pytest

from roadsfm.cli import main as cli
from roadsfm.estimation import (EstimatorConfig, StateVector, estimate_pair, estimate_sequence,
                                rotation_angle, total_loss)
from roadsfm.fitting import RansacConfig, ransac_homography, ransac_plane
from roadsfm.geometry import (CameraIntrinsics, GroundPlane, Pose, compose_homography,
                              apply_homography, homography_jacobians, ray_plane_depth,
                              reproject_pixel, rotation_from_angle_axis)
from roadsfm.imaging import DepthMap, WarpResult, homography_loss, photometric_loss, smoothness_loss
from roadsfm.metrics import (DepthEvalConfig, Trajectory, depth_metrics, normal_angle_error,
                             vo_metrics)
from roadsfm.synthscene import (SceneSpec, TextureSpec, make_trajectory, relative_pose, render,
                                scene_from_dict, waypoint_trajectory)

import conftest
from oracles import (corner_transfer_error, gt_state, homography_mixture, pair_scene,
                     plane_mixture, random_homography)


@contextlib.contextmanager
def criterion(n, title, budget):
    """Time a criterion and record its verdict; values go into ``info``."""
    info = {}
    t0 = time.perf_counter()
    ok = False
    try:
        yield info
        ok = True
    finally:
        dt = time.perf_counter() - t0
        if dt > budget:
            ok = False
            info["runtime"] = f"{dt:.1f}s over the {budget}s budget"
        detail = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in info.items())
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {title} [{dt:.1f}s] {detail}"
        conftest.ACCEPTANCE_LINES.append(line)
        print(line)
    assert dt <= budget, f"runtime {dt:.1f}s exceeds {budget}s"


K128 = CameraIntrinsics(110.0, 110.0, 63.5, 47.5, 128, 96)
K64 = CameraIntrinsics(55.0, 55.0, 31.5, 23.5, 64, 48)


# --- 1 ------------------------------------------------------------------------

def test_criterion_1_homography_identity_and_coherency():
    with criterion(1, "homography identity and depth/homography coherency", 5) as info:
        rng = np.random.default_rng(2024)
        H = compose_homography(K128, Pose.identity(), GroundPlane([0.1, -1, 0.2], 1.3)).matrix
        info["identity_dev"] = float(np.abs(H - np.eye(3)).max())
        assert info["identity_dev"] <= 1e-12
        worst, n = 0.0, 0
        while n < 10_000:
            f = rng.uniform(60, 400)
            w, h = int(rng.integers(64, 641)), int(rng.integers(48, 481))
            K = CameraIntrinsics(f, f * rng.uniform(0.95, 1.05), w / 2 + rng.uniform(-5, 5),
                                 h / 2 + rng.uniform(-5, 5), w, h)
            plane = GroundPlane([rng.normal(0, 0.05), -1.0, rng.normal(0, 0.05)], rng.uniform(1.0, 2.5))
            pose = Pose(rng.normal(0, 0.03, 3), rng.normal(0, 0.5, 3))
            p = np.array([rng.uniform(0, w - 1), rng.uniform(h / 2 + 5, h - 1)])
            D = ray_plane_depth(K, plane, p[None])[0]
            if not np.isfinite(D):
                continue
            q1, ok = reproject_pixel(K, pose, np.array([D]), p[None])
            if not ok[0]:
                continue
            q2, ok2 = apply_homography(compose_homography(K, pose, plane), p)
            worst = max(worst, float(np.abs(q1[0] - q2).max()))
            n += 1
        info["states"] = n
        info["max_px_dev"] = worst
        assert worst < 1e-6


# --- 2 ------------------------------------------------------------------------

def _mapped(K, v, t, n, h, x):
    """Oracle pixel map in extended precision, so 1e-6 central steps stay clear of roundoff."""
    f = np.longdouble
    v, t, n, x = (np.asarray(a, dtype=f) for a in (v, t, n, x))
    h = f(h)
    th = np.sqrt(v @ v)
    k = v / th
    A = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]], dtype=f)
    R = np.eye(3, dtype=f) + np.sin(th) * A + (1 - np.cos(th)) * (A @ A)
    M = R - np.outer(t, n) / h
    y = np.asarray(K.K, dtype=f) @ M @ np.asarray(K.K_inv, dtype=f) @ x
    return y[:2] / y[2]


def _rel(a, b):
    scale = max(np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def _central(f, x0, e):
    return ((f(x0 + e) - f(x0 - e)) / (2 * np.linalg.norm(e))).astype(float)


def test_criterion_2_jacobian_suite():
    with criterion(2, "homography Jacobians and total-loss gradient vs finite differences", 60) as info:
        rng = np.random.default_rng(77)
        worst = 0.0
        eps = 1e-6
        for _ in range(1000):
            pose = Pose(rng.normal(0, 0.1, 3), rng.normal(0, 0.5, 3))
            plane = GroundPlane([rng.normal(0, 0.1), -1.0, rng.normal(0, 0.1)], rng.uniform(1.0, 2.5))
            x = np.array([rng.uniform(0, 127), rng.uniform(50, 95), 1.0])
            J = homography_jacobians(K128, pose, plane, x)
            v, t, n, h = pose.rotation, pose.translation, plane.normal, plane.height
            maps = {"rotation": (v, lambda q: _mapped(K128, q, t, n, h, x)),
                    "translation": (t, lambda q: _mapped(K128, v, q, n, h, x)),
                    "normal": (n, lambda q: _mapped(K128, v, t, q, h, x)),
                    "height": (np.array([h]), lambda q: _mapped(K128, v, t, n, q[0], x))}
            for k, (x0, f) in maps.items():
                ref = np.stack([_central(f, x0, np.eye(len(x0))[i] * eps) for i in range(len(x0))], -1)
                worst = max(worst, _rel(getattr(J, k), ref))
        info["jacobian_rel_err"] = worst
        assert worst < 1e-5

        spec = pair_scene(K64, texture=TextureSpec(octaves=2, base_wavelength=4.0))
        frames = [render(spec, 0), render(spec, 1)]
        cfg = EstimatorConfig(grid=(6, 8))
        x0 = gt_state(spec, frames, cfg).flat()
        x0 = x0 + np.r_[rng.normal(0, 2e-3, 9), rng.normal(0, 0.05, 48)]
        args = (frames[1].image, frames[0].image, (frames[1].mask, frames[0].mask), K64, cfg)
        g = total_loss(StateVector.from_flat(x0, cfg.grid), *args, grad=True)[2]
        fdg = np.zeros_like(x0)
        for i in range(len(x0)):
            xp, xm = x0.copy(), x0.copy()
            xp[i] += eps
            xm[i] -= eps
            fdg[i] = (total_loss(StateVector.from_flat(xp, cfg.grid), *args)[0]
                      - total_loss(StateVector.from_flat(xm, cfg.grid), *args)[0]) / (2 * eps)
        info["loss_grad_rel_err"] = _rel(g, fdg)
        assert info["loss_grad_rel_err"] < 1e-3


# --- 3 ------------------------------------------------------------------------

def test_criterion_3_loss_closed_forms():
    with criterion(3, "loss zero and closed-form checks", 5) as info:
        rng = np.random.default_rng(3)
        I = rng.uniform(0.1, 0.9, (48, 64))
        ones = np.ones(I.shape)
        full = WarpResult(I, ones.astype(bool), ones)
        info["E_p(I,I)"] = photometric_loss(I, full, 0.85)
        assert info["E_p(I,I)"] == 0
        a, b = np.full((48, 64), 0.2), np.full((48, 64), 0.5)
        const = photometric_loss(a, WarpResult(b, full.valid, ones), 0.85)
        info["E_p_const"] = const
        assert abs(const - 0.1768) < 1e-3
        D = DepthMap(rng.uniform(2, 40, I.shape))
        s0 = smoothness_loss(D, I)
        info["smooth_scale_dev"] = max(abs(smoothness_loss(D.scaled(k), I) - s0) for k in (0.01, 0.5, 7.0, 300.0))
        assert info["smooth_scale_dev"] <= 1e-12 * max(s0, 1.0)
        mask = np.zeros(I.shape, bool)
        mask[24:] = True
        info["E_h(I,I)"] = homography_loss(I, I, np.eye(3), mask, mask)
        assert info["E_h(I,I)"] == 0


# --- 4 ------------------------------------------------------------------------

def test_criterion_4_ransac_plane():
    with criterion(4, "RANSAC plane oracle", 10) as info:
        plane = GroundPlane([0.03, -1.0, 0.02], 1.65)
        pts, _ = plane_mixture(seed=7, n=1000, inlier_frac=0.7, sigma=0.01, plane=plane)
        reps = [ransac_plane(pts, RansacConfig(0.05, rng_seed=11)) for _ in range(3)]
        info["normal_err_deg"] = normal_angle_error(reps[0].model, plane)
        info["height_err_pct"] = abs(reps[0].model.height - plane.height) / plane.height * 100
        same = all(json.dumps(r.to_dict()) == json.dumps(reps[0].to_dict()) for r in reps)
        info["deterministic"] = same
        assert info["normal_err_deg"] < 0.2 and info["height_err_pct"] < 0.5 and same


# --- 5 ------------------------------------------------------------------------

def test_criterion_5_ransac_homography():
    with criterion(5, "RANSAC homography oracle", 10) as info:
        rng = np.random.default_rng(5)
        H = random_homography(rng)
        c = homography_mixture(H, seed=12, n=300, sigma=0.2, outlier_frac=0.2)
        rep = ransac_homography(c, RansacConfig(0.5, rng_seed=0))
        info["corner_err_px"] = corner_transfer_error(rep.model.matrix, H)
        info["inlier_ratio"] = rep.inlier_ratio
        assert info["corner_err_px"] < 0.5


# --- 6 ------------------------------------------------------------------------

def test_criterion_6_end_to_end_pair():
    with criterion(6, "end-to-end synthetic pair", 120) as info:
        spec = pair_scene(K128)
        f0, f1 = render(spec, 0), render(spec, 1)
        res = estimate_pair(f0.image, f1.image, (f1.mask, f0.mask), K128, EstimatorConfig(camera_height=1.65))
        T = relative_pose(spec, 1)
        info["rot_err_deg"] = math.degrees(rotation_angle(res.pose.R @ T.R.T))
        te, tg = res.pose.translation, T.translation
        info["dir_err_deg"] = math.degrees(math.acos(np.clip(te @ tg / np.linalg.norm(te) / np.linalg.norm(tg), -1, 1)))
        info["mag_ratio"] = float(np.linalg.norm(te) / np.linalg.norm(tg))
        info["normal_err_deg"] = normal_angle_error(res.plane, f1.plane)
        assert info["rot_err_deg"] < 0.1
        assert info["dir_err_deg"] < 2.0
        assert abs(info["mag_ratio"] - 1) < 0.02
        assert info["normal_err_deg"] < 0.5


# --- 7 ------------------------------------------------------------------------

def test_criterion_7_sequence_round_trip():
    from importlib import resources
    with criterion(7, "11-frame straight sequence metrics", 600) as info:
        with resources.files("roadsfm").joinpath("scenes/straight.json").open() as fh:
            spec = scene_from_dict(json.load(fh))
        frames = [render(spec, i) for i in range(len(spec.trajectory))]
        poses, results = estimate_sequence([f.image for f in frames], [f.mask for f in frames], K128,
                                           EstimatorConfig(camera_height=spec.plane.height))
        vo = vo_metrics(Trajectory(poses), Trajectory(list(spec.trajectory)), [5.0, 10.0])
        ab = [depth_metrics(r.relative_depth, frames[i].depth,
                            DepthEvalConfig("camera-height", mask=frames[i].mask, scale=r.scale))["abs_rel"]
              for i, r in enumerate(results, start=1)]
        info["t_err_pct"] = vo["t_err"]
        info["r_err_deg_per_100m"] = vo["r_err"]
        info["abs_rel"] = float(np.mean(ab))
        assert vo["t_err"] < 2.0, "t_err"
        assert vo["r_err"] < 0.5, "r_err"
        assert info["abs_rel"] < 0.08, "AbsRel"


# --- 8 ------------------------------------------------------------------------

def test_criterion_8_ablation_direction(tmp_path):
    with criterion(8, "homography loss lowers road reprojection error", 300) as info:
        ds = tmp_path / "ds"
        assert cli(["synth", "pair", "--out", str(ds)]) == 0
        means = {}
        for xi in ("0.1", "0"):
            est = tmp_path / f"est_{xi}"
            ev = tmp_path / f"eval_{xi}"
            assert cli(["estimate", str(ds), "--xi", xi, "--out", str(est)]) == 0
            assert cli(["eval", "homography", str(est), str(ds), "--out", str(ev)]) == 0
            means[xi] = json.loads((ev / "homography.json").read_text())["metrics"]["mean"]["value"]
        info["mean_px_xi0.1"] = means["0.1"]
        info["mean_px_xi0"] = means["0"]
        assert means["0.1"] < means["0"]


# --- 9 ------------------------------------------------------------------------

def test_criterion_9_metric_closed_forms():
    with criterion(9, "metric closed forms", 1) as info:
        n = 101
        gt = Trajectory(waypoint_trajectory([[0, 0, float(i)] for i in range(n)], np.zeros(n)))
        est = Trajectory(waypoint_trajectory([[0, 0, 1.05 * i] for i in range(n)], np.zeros(n)))
        info["t_err"] = vo_metrics(est, gt, [100.0])["t_err"]
        # 1.2 x 60 m stays inside the default 80 m clamp
        g = DepthMap(np.random.default_rng(9).uniform(1, 60, (48, 64)))
        info["abs_rel"] = depth_metrics(g.scaled(1.2), g, DepthEvalConfig("none"))["abs_rel"]
        a = math.radians(5)
        info["normal_deg"] = normal_angle_error([0, -1, 0], [math.sin(a), -math.cos(a), 0])
        assert abs(info["t_err"] - 5.0) <= 1e-9
        assert abs(info["abs_rel"] - 0.2) <= 1e-12
        assert abs(info["normal_deg"] - 5.0) <= 1e-9


# --- 10 -----------------------------------------------------------------------

TINY = {
    "camera": {"fx": 55.0, "fy": 55.0, "cx": 31.5, "cy": 23.5, "width": 64, "height": 48},
    "texture": {"seed": 3, "octaves": 4},
    "boxes": [{"center": [-1.5, 6.0], "size": [1.2, 1.2, 1.2], "yaw": 0.3}],
    "trajectory": {"kind": "straight", "length": 0.8, "frames": 3, "mount_pitch_deg": -1.0},
}


def _tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_criterion_10_determinism_and_persistence(tmp_path):
    from roadsfm import io as rio
    with criterion(10, "determinism and persistence", 120) as info:
        (tmp_path / "scene.json").write_text(json.dumps(TINY))
        (tmp_path / "fast.json").write_text(json.dumps({"estimator": {"iterations": [150, 100], "levels": 2}}))
        runs = []
        for k in range(2):
            r = tmp_path / f"r{k}"
            if k == 0:
                assert cli(["synth", str(tmp_path / "scene.json"), "--out", str(r / "ds")]) == 0
                assert cli(["estimate", str(r / "ds"), "--config", str(tmp_path / "fast.json"),
                            "--out", str(r / "est")]) == 0
                assert cli(["eval", "vo", str(r / "est"), str(r / "ds"), "--lengths", "0.4",
                            "--out", str(r / "ev")]) == 0
            else:
                # second run is driven only by the first run's run.json files
                src = tmp_path / "r0"
                assert cli(["synth", "--config", str(src / "ds" / "run.json"), "--out", str(r / "ds")]) == 0
                est_run = json.loads((src / "est" / "run.json").read_text())
                est_run["options"]["dataset"] = str(r / "ds")
                (tmp_path / "est_run.json").write_text(json.dumps(est_run))
                assert cli(["estimate", "--config", str(tmp_path / "est_run.json"), "--out", str(r / "est")]) == 0
                ev_run = json.loads((src / "ev" / "run.json").read_text())
                ev_run["options"].update(est=str(r / "est"), gt=str(r / "ds"))
                (tmp_path / "ev_run.json").write_text(json.dumps(ev_run))
                assert cli(["eval", "vo", "--config", str(tmp_path / "ev_run.json"), "--out", str(r / "ev")]) == 0
            runs.append(r)
        a, b = _tree(runs[0]), _tree(runs[1])
        # run.json of estimate/eval differ only in the input paths substituted above
        differ = sorted(k for k in a if a[k] != b.get(k) and not k.endswith("run.json"))
        info["files"] = len(a)
        info["differing"] = len(differ)
        assert a.keys() == b.keys() and not differ, differ

        rng = np.random.default_rng(10)
        depth = DepthMap(np.where(rng.uniform(size=(48, 64)) < 0.1, 0.0, rng.uniform(0.5, 250, (48, 64))))
        rio.save_depth_png(depth, tmp_path / "d.png")
        back = rio.load_depth_png(tmp_path / "d.png")
        info["depth_q_err"] = float(np.abs(back.values - depth.values)[depth.valid].max())
        assert np.array_equal(back.valid, depth.valid) and info["depth_q_err"] <= 0.5 / 256
        poses = [Pose(rng.normal(0, 0.4, 3), rng.normal(0, 3, 3)) for _ in range(6)]
        rio.save_poses(Trajectory(poses), tmp_path / "p.txt")
        pe = max(float(np.abs(p.matrix() - q.matrix()).max())
                 for p, q in zip(poses, rio.load_poses(tmp_path / "p.txt").poses))
        info["pose_err"] = pe
        assert pe <= 1e-12
        img = rng.uniform(size=(48, 64))
        rio.save_image(img, tmp_path / "i.png")
        assert np.abs(rio.load_image(tmp_path / "i.png") - img).max() <= 0.5 / 255 + 1e-12
        m = rng.uniform(size=(48, 64)) > 0.5
        rio.save_mask(m, tmp_path / "m.png")
        assert np.array_equal(rio.load_mask(tmp_path / "m.png"), m)
        planes = [GroundPlane(rng.normal(0, 0.05, 3) + [0, -1, 0], 1.6) for _ in range(3)]
        rio.write_json(tmp_path / "pl.json", rio.planes_to_dict(planes))
        got = rio.load_planes(tmp_path / "pl.json")
        assert all(np.allclose(got[i].normal, p.normal, atol=1e-15) and got[i].height == p.height
                   for i, p in enumerate(planes))
        s1 = scene_from_dict(json.loads((runs[0] / "ds" / "scene.json").read_text()))
        assert all(np.allclose(a_.matrix(), b_.matrix(), atol=1e-15)
                   for a_, b_ in zip(s1.trajectory, scene_from_dict(TINY).trajectory))
