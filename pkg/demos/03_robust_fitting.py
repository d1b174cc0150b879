# %% [markdown]
# # Ground truth by robust fitting
#
# Ground-truth planes come from RANSAC on back-projected road depth and
# ground-truth homographies from RANSAC + normalised DLT on road
# correspondences.  Fits with few inliers or a low inlier ratio are flagged
# so a non-planar road can be discarded.

# %%
import numpy as np

from roadsfm.fitting import (CorrespondenceSet, RansacConfig, apply_gates, depth_to_points,
                             ransac_homography, ransac_plane)
from roadsfm.geometry import CameraIntrinsics, compose_homography
from roadsfm.imaging import DepthMap
from roadsfm.metrics import homography_eval, normal_angle_error
from roadsfm.synthscene import (Box, SceneSpec, ground_correspondences, make_trajectory,
                                relative_pose, render)

K = CameraIntrinsics(110.0, 110.0, 63.5, 47.5, 128, 96)
spec = SceneSpec(K, make_trajectory("straight", 1.0, 2, mount_pitch=np.radians(-1.0)),
                 boxes=[Box((1.0, 7.0), (1.5, 1.5, 1.5))])
f = render(spec, 1)

# %% [markdown]
# Corrupt the depth with 1 cm noise and throw in every box pixel as an
# outlier by fitting on the whole frame rather than the road mask.

# %%
rng = np.random.default_rng(1)
noisy = DepthMap(f.depth.values * (1 + 0.002 * rng.standard_normal(f.depth.shape)), f.depth.valid)
cloud = depth_to_points(noisy, K)
rep = apply_gates(ransac_plane(cloud, RansacConfig(0.05, rng_seed=0)))
print(f"plane: {rep.inlier_count} inliers ({rep.inlier_ratio:.2f}), "
      f"normal error {normal_angle_error(rep.model, f.plane):.3f} deg, height {rep.model.height:.3f} m")
print("warnings:", rep.warnings or "none")

# %%
p_t, p_prev = ground_correspondences(spec, 1)
p_prev = p_prev + 0.2 * rng.standard_normal(p_prev.shape)
n_bad = len(p_t) // 5
p_prev[:n_bad] = rng.uniform([0, 0], [127, 95], (n_bad, 2))
corr = CorrespondenceSet(p_t, p_prev)
hrep = ransac_homography(corr, RansacConfig(0.5, rng_seed=0))
H_true = compose_homography(K, relative_pose(spec, 1), f.plane)
clean = corr.subset(np.arange(n_bad, len(corr)))
print(f"homography: {hrep.inlier_count}/{len(corr)} inliers after {hrep.iterations} iterations")
print("mean error on clean pairs [px]: fitted", round(homography_eval(hrep.model, clean)["mean"], 3),
      " true", round(homography_eval(H_true, clean)["mean"], 3))
