import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roadsfm.fitting import CorrespondenceSet
from roadsfm.geometry import CameraIntrinsics, GroundPlane, Pose, compose_homography, rotation_y
from roadsfm.imaging import DepthMap
from roadsfm.metrics import (DepthEvalConfig, MetricError, MetricReport, Trajectory,
                             depth_metrics, homography_eval, normal_angle_error, plot_bars,
                             plot_series, plot_trajectories, vo_metrics)
from roadsfm.synthscene import make_trajectory, waypoint_trajectory


def straight(n=101, step=1.0, scale=1.0):
    return Trajectory(waypoint_trajectory([[0, 0, i * step * scale] for i in range(n)], np.zeros(n)))


def test_vo_identity():
    gt = straight()
    r = vo_metrics(gt, gt)
    assert r["t_err"] == 0 and r["r_err"] == 0


def test_vo_scaled_translation():
    r = vo_metrics(straight(scale=1.05), straight())
    assert abs(r["t_err"] - 5.0) < 1e-9
    assert r["r_err"] == 0


def test_vo_constant_yaw_drift():
    n = 101
    yaw = np.radians(np.arange(n) * 0.01)   # 1 degree over 100 m
    est = Trajectory(waypoint_trajectory([[0, 0, float(i)] for i in range(n)], yaw))
    r = vo_metrics(est, straight(), [100.0])
    assert r["r_err"] == pytest.approx(1.0, abs=1e-9)


def test_vo_errors():
    gt = straight(11)
    with pytest.raises(MetricError, match="usable lengths"):
        vo_metrics(gt, gt, [50.0])
    with pytest.raises(MetricError, match="frame counts"):
        vo_metrics(straight(10), gt, [5.0])
    with pytest.raises(MetricError):
        vo_metrics(gt, gt, [])


@given(st.floats(0.5, 2.0))
def test_vo_invariant_to_world_frame(a):
    gt = straight(21)
    est = Trajectory(make_trajectory("sinusoid", 20.0, 21, amplitude=0.3))
    base = vo_metrics(est, gt, [5.0, 10.0])
    g = Pose([0.0, a, 0.1], [a, -1.0, 3.0])
    moved = Trajectory([p @ g for p in est.poses])
    other = vo_metrics(moved, gt, [5.0, 10.0])
    assert other["t_err"] == pytest.approx(base["t_err"], rel=1e-9)
    assert other["r_err"] == pytest.approx(base["r_err"], rel=1e-7, abs=1e-9)


def _depth(rng, shape=(20, 30)):
    return DepthMap(rng.uniform(2, 60, size=shape))


def test_depth_identity_and_median(rng):
    gt = _depth(rng)
    r = depth_metrics(gt, gt)
    assert r["abs_rel"] == 0 and r["rmse"] == 0 and r["delta_1"] == 1.0
    r = depth_metrics(gt.scaled(2.0), gt)
    assert r["abs_rel"] == pytest.approx(0, abs=1e-15)


def test_depth_closed_form(rng):
    gt = DepthMap(rng.uniform(2, 50, size=(20, 30)))
    r = depth_metrics(gt.scaled(1.2), gt, DepthEvalConfig("none"))
    assert abs(r["abs_rel"] - 0.2) < 1e-12
    assert r["delta_1"] == 1.0
    r = depth_metrics(gt.scaled(1 / 1.3), gt, DepthEvalConfig("none"))
    assert r["delta_1"] == 0.0 and r["delta_2"] == 1.0


def test_depth_camera_height_mode(rng):
    gt = _depth(rng)
    r = depth_metrics(gt.scaled(0.5), gt, DepthEvalConfig("camera-height", scale=2.0))
    assert r["abs_rel"] == pytest.approx(0, abs=1e-14)
    with pytest.raises(MetricError):
        DepthEvalConfig("camera-height")


def test_depth_mask_and_errors(rng):
    gt = _depth(rng)
    m = np.zeros(gt.shape, bool)
    m[:5] = True
    assert depth_metrics(gt, gt, DepthEvalConfig(mask=m))["pixels"] == m.sum()
    with pytest.raises(MetricError):
        depth_metrics(gt, gt, DepthEvalConfig(mask=np.zeros(gt.shape, bool)))
    with pytest.raises(MetricError):
        depth_metrics(DepthMap(np.ones((2, 2))), gt)
    with pytest.raises(MetricError):
        DepthEvalConfig(min_depth=5, max_depth=1)


def test_normal_angle_examples():
    assert normal_angle_error(GroundPlane([0, -1, 0], 1), GroundPlane([0, -1, 0], 2)) == 0
    assert normal_angle_error([0, -1, 0], [0, 1, 0]) == 0
    a = math.radians(5)
    assert abs(normal_angle_error([0, -1, 0], [math.sin(a), -math.cos(a), 0]) - 5.0) < 1e-9


def test_homography_eval_examples(K128, rng):
    from roadsfm.fitting import dlt_homography
    from roadsfm.synthscene import SceneSpec, ground_correspondences, relative_pose, render
    spec = SceneSpec(K128, make_trajectory("straight", 0.5, 2))
    c = CorrespondenceSet(*ground_correspondences(spec, 1))
    H = compose_homography(K128, relative_pose(spec, 1), render(spec, 1).plane)
    good = homography_eval(H, c)["mean"]
    assert good < 0.1
    corners = np.array([[0, 0], [127, 0], [127, 95], [0, 95]], float)
    y = np.c_[corners, np.ones(4)] @ H.matrix.T
    moved = y[:, :2] / y[:, 2:] + [2.0, 0.0]
    Hd = dlt_homography(CorrespondenceSet(corners, moved))
    assert homography_eval(Hd, c)["mean"] > good
    p = rng.uniform(0, 100, (40, 2))
    assert homography_eval(np.eye(3), CorrespondenceSet(p, p))["mean"] == 0


def test_report_serialisation():
    r = MetricReport("x", {"a": (1.5, "m"), "b": (2.0, "1")}, {"s": [1.0, 2.0]})
    assert MetricReport.from_dict(r.to_dict()).to_dict() == r.to_dict()
    assert r.to_csv().splitlines()[1] == "a,1.5,m"
    assert r.series_csv().splitlines()[-1] == "1,2.0"
    with pytest.raises(MetricError):
        MetricReport("x", {"a": (math.nan, "m")})


def test_plots_are_deterministic(tmp_path):
    gt = straight(11)
    for i in range(2):
        plot_trajectories({"gt": gt}, tmp_path / f"t{i}.svg")
        plot_series({"e": [1.0, 2.0, 0.5]}, tmp_path / f"s{i}.svg")
        plot_bars({"a": 1.0, "b": 0.3}, tmp_path / f"b{i}.svg")
    for stem in "tsb":
        assert (tmp_path / f"{stem}0.svg").read_bytes() == (tmp_path / f"{stem}1.svg").read_bytes()


def test_trajectory_canonical():
    tr = Trajectory([Pose([0, 0.2, 0], [1, 2, 3]), Pose([0, 0.3, 0], [1, 2, 4])])
    c = tr.canonical()
    np.testing.assert_allclose(c.poses[0].matrix(), np.eye(4), atol=1e-12)
    with pytest.raises(MetricError):
        Trajectory([])
