# %% [markdown]
# # Joint estimation of ego-motion, road plane and depth
#
# ``estimate_pair`` minimises photometric, smoothness and road-homography
# losses over pose, a plane correction and a coarse inverse-depth grid.
# Metric scale comes from the calibrated camera height.

# %%
import math
import time

import numpy as np

from roadsfm.estimation import EstimatorConfig, estimate_pair, rotation_angle
from roadsfm.geometry import CameraIntrinsics
from roadsfm.metrics import DepthEvalConfig, depth_metrics, normal_angle_error
from roadsfm.synthscene import Box, SceneSpec, relative_pose, render, waypoint_trajectory

K = CameraIntrinsics(110.0, 110.0, 63.5, 47.5, 128, 96)
traj = waypoint_trajectory([[0, 0, 0], [0, 0, 0.3]], np.radians([0.0, 0.5]), np.radians(-1.0))
boxes = [Box((-2.5, 9.0), (1.5, 1.4, 2.0), 0.3),
         Box((3.0, 13.0), (1.8, 1.8, 1.8), -0.2, (0.7, 0.6, 0.5, 0.4, 0.35, 0.55))]
spec = SceneSpec(K, traj, boxes=boxes)
f0, f1 = render(spec, 0), render(spec, 1)

# %%
t0 = time.perf_counter()
res = estimate_pair(f0.image, f1.image, (f1.mask, f0.mask), K, EstimatorConfig())
print(f"{res.iterations} iterations in {time.perf_counter() - t0:.1f} s, converged={res.converged}")
print("final losses:", {k: round(v, 5) for k, v in res.loss.to_dict().items()})

# %%
T = relative_pose(spec, 1)
te, tg = res.pose.translation, T.translation
print(f"rotation error     {math.degrees(rotation_angle(res.pose.R @ T.R.T)):.3f} deg")
print(f"direction error    {math.degrees(math.acos(te @ tg / np.linalg.norm(te) / np.linalg.norm(tg))):.3f} deg")
print(f"translation ratio  {np.linalg.norm(te) / np.linalg.norm(tg):.4f}")
print(f"normal error       {normal_angle_error(res.plane, f1.plane):.3f} deg")
d = depth_metrics(res.relative_depth, f1.depth,
                  DepthEvalConfig("camera-height", mask=f1.mask, scale=res.scale))
print(f"road AbsRel        {d['abs_rel']:.3f}  (scale s = {res.scale:.3f})")
