# %% [markdown]
# # Synthetic frames, view synthesis and the three losses
#
# The renderer ray-casts a textured road with a few boxes and returns exact
# depth, road mask, pose and plane.  With the true depth and motion, frame
# ``t-1`` warped into frame ``t`` should match it closely.

# %%
from pathlib import Path

import numpy as np

from roadsfm.geometry import CameraIntrinsics, compose_homography
from roadsfm.imaging import (photometric_loss, smoothness_loss, homography_loss, warp_by_depth,
                             warp_by_homography)
from roadsfm.io import save_image
from roadsfm.synthscene import Box, SceneSpec, relative_pose, render, waypoint_trajectory

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

K = CameraIntrinsics(110.0, 110.0, 63.5, 47.5, 128, 96)
traj = waypoint_trajectory([[0, 0, 0], [0, 0, 0.5]], np.radians([0.0, 1.0]), np.radians(-1.0))
spec = SceneSpec(K, traj, boxes=[Box((-2.5, 9.0), (1.5, 1.4, 2.0), 0.3)])
f0, f1 = render(spec, 0), render(spec, 1)
T = relative_pose(spec, 1)
print("road pixels in frame 1:", int(f1.mask.sum()))

# %%
recon = warp_by_depth(f0.image, K, T, f1.depth)
print("photometric loss, true motion:", round(photometric_loss(f1.image, recon, 0.85), 4))
still = warp_by_depth(f0.image, K, T.inverse(), f1.depth)
print("photometric loss, reversed motion:", round(photometric_loss(f1.image, still, 0.85), 4))
print("smoothness of true depth:", round(smoothness_loss(f1.depth, f1.image), 4))

# %% [markdown]
# The road alone is related by a homography, so warping the whole frame by
# it aligns the road and misaligns the boxes.

# %%
H = compose_homography(K, T, f1.plane)
print("homography loss on the road:", round(homography_loss(f1.image, f0.image, H, f1.mask, f0.mask), 4))
road_view = warp_by_homography(f0.image, H)
save_image(f1.image, out / "frame1.png")
save_image(recon.image, out / "frame1_from_depth.png")
save_image(road_view.image, out / "frame1_from_homography.png")
print("images written to", out)
