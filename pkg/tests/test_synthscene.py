import json
from importlib import resources

import numpy as np
import pytest

from roadsfm.geometry import CameraIntrinsics, GroundPlane, Pose, plane_residual
from roadsfm.imaging import DepthMap, warp_by_depth
from roadsfm.synthscene import (Box, SceneError, SceneSpec, TextureSpec, ground_correspondences,
                                make_trajectory, relative_pose, render, scene_from_dict,
                                scene_to_dict, texture_intensity, waypoint_trajectory)


@pytest.fixture
def small_K():
    return CameraIntrinsics(55.0, 55.0, 31.5, 23.5, 64, 48)


def test_horizon_geometry(small_K):
    spec = SceneSpec(small_K, make_trajectory("straight", 1.0, 2), texture=TextureSpec.textureless(),
                     supersample=1)
    f = render(spec, 0)
    rows = np.arange(48)
    assert f.mask[rows > 23.5].all()
    assert not f.mask[rows < 23.5].any()
    assert not f.depth.valid[rows < 23.5].any()


def test_road_depth_on_plane(K128):
    spec = SceneSpec(K128, make_trajectory("arc", 4.0, 3, mount_pitch=np.radians(-1)),
                     boxes=[Box((0.5, 8.0), (1.0, 1.0, 1.0))])
    for i in range(3):
        f = render(spec, i)
        P = K128.rays()[f.mask] * f.depth.values[f.mask][:, None]
        np.testing.assert_allclose(plane_residual(f.plane, P), 0, atol=1e-9)


def test_render_self_consistency(K128):
    spec = SceneSpec(K128, make_trajectory("straight", 0.5, 2),
                     boxes=[Box((-1.5, 8.0), (1.2, 1.2, 1.2), 0.3)])
    f0, f1 = render(spec, 0), render(spec, 1)
    r = warp_by_depth(f0.image, K128, relative_pose(spec, 1), f1.depth)
    ok = r.weight >= 1
    assert ok.mean() > 0.4
    assert np.abs(r.image - f1.image)[ok].mean() < 0.02


def test_straight_spacing():
    traj = make_trajectory("straight", 10.0, 11)
    for i in range(1, 11):
        rel = traj[i - 1] @ traj[i].inverse()
        assert np.linalg.norm(rel.translation) == pytest.approx(1.0, abs=1e-12)


def test_trajectory_kinds_start_at_origin():
    for kind in ("straight", "arc", "sinusoid"):
        for speed in ("constant", "accelerating"):
            traj = make_trajectory(kind, 12.0, 5, speed)
            np.testing.assert_allclose(traj[0].translation, 0, atol=1e-12)
    with pytest.raises(ValueError):
        make_trajectory("loop", 1.0, 3)
    with pytest.raises(ValueError):
        make_trajectory("straight", 1.0, 1)


def test_arc_heading_follows_path():
    traj = make_trajectory("arc", 10.0, 6, radius=20.0)
    c = np.stack([-p.R.T @ p.translation for p in traj])
    fwd = np.stack([p.R.T @ [0, 0, 1] for p in traj])
    tangent = np.gradient(c, axis=0)
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    assert np.all(np.einsum("ij,ij->i", fwd, tangent)[1:-1] > 0.9999)


def test_waypoint_yaw():
    traj = waypoint_trajectory([[0, 0, 0], [0, 0, 1]], [0.0, np.radians(2.0)])
    rel = traj[0] @ traj[1].inverse()
    assert np.degrees(np.linalg.norm(rel.rotation)) == pytest.approx(2.0)


def test_camera_below_ground(K128):
    bad = Pose(np.zeros(3), [0, -2.0, 0])   # camera centre at y = +2 (below the road)
    with pytest.raises(SceneError):
        render(SceneSpec(K128, [bad]), 0)
    with pytest.raises(IndexError):
        render(SceneSpec(K128, make_trajectory("straight", 1.0, 2)), 5)


def test_texture_spans_and_determinism():
    P = np.random.default_rng(0).uniform(-20, 20, (500, 3))
    a = texture_intensity(TextureSpec(seed=3), P)
    assert a.std() > 0.1 and a.min() >= 0 and a.max() <= 1
    np.testing.assert_array_equal(a, texture_intensity(TextureSpec(seed=3), P))
    assert not np.array_equal(a, texture_intensity(TextureSpec(seed=4), P))
    np.testing.assert_allclose(texture_intensity(TextureSpec.textureless(0.4), P), 0.4)


def test_ground_correspondences_follow_homography(K128):
    from roadsfm.geometry import compose_homography
    from roadsfm.metrics import homography_eval
    from roadsfm.fitting import CorrespondenceSet
    spec = SceneSpec(K128, make_trajectory("straight", 1.0, 2), boxes=[Box((0, 6), (1, 1, 1))])
    p_t, p_prev = ground_correspondences(spec, 1)
    assert len(p_t) > 100
    f1 = render(spec, 1)
    H = compose_homography(K128, relative_pose(spec, 1), f1.plane)
    assert homography_eval(H, CorrespondenceSet(p_t, p_prev))["mean"] < 1e-9


def test_scene_dict_round_trip():
    with resources.files("roadsfm").joinpath("scenes/straight.json").open() as fh:
        spec = scene_from_dict(json.load(fh))
    assert len(spec.trajectory) == 11 and len(spec.boxes) == 2
    again = scene_from_dict(json.loads(json.dumps(scene_to_dict(spec))))
    for a, b in zip(spec.trajectory, again.trajectory):
        np.testing.assert_allclose(a.matrix(), b.matrix(), atol=1e-15)
    assert again.texture == spec.texture and again.boxes == spec.boxes
    with pytest.raises(SceneError):
        scene_from_dict({"trajectory": {"kind": "straight"}})
