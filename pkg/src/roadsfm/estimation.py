"""Per-pair direct estimation of ego-motion, road plane and coarse depth.

The objective ``E = mu E_p + lam E_s + xi E_h`` is minimised directly over a
small state vector instead of being amortised by networks:

* pose: angle-axis rotation and translation of ``X_prev = R X_t + t``,
* plane correction ``(dr, ds, dh)`` applied to the calibrated plane,
* a coarse grid of log inverse depths, bilinearly upsampled.

Monocular scale is fixed inside every loss evaluation by rescaling depth
and translation with ``s = h_c / h_t``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .geometry import (CameraIntrinsics, GroundPlane, Homography, PlaneCorrection, Pose,
                       apply_plane_correction, compose_homography, homography_jacobians,
                       plane_correction_derivatives, rotation_derivatives,
                       rotation_from_angle_axis)
from .imaging import (DepthMap, ImagingError, border_weight, downsample, edge_weights,
                      photometric_terms, sample_zero_padded, smoothness_terms,
                      homography_terms, to_gray)

FAR_DEPTH = 50.0
MIN_MASK_FRACTION = 0.01


@dataclass
class EstimatorConfig:
    mu: float = 1.0
    lam: float = 0.001
    xi: float = 0.1
    alpha: float = 0.85
    levels: int = 3
    iterations: tuple = (1200, 800, 800)  # coarse to fine; last value repeats
    step_rotation: float = 2e-3
    step_translation: float = 1e-2
    step_plane: float = 2e-3
    step_height: float = 1e-2
    step_depth: float = 2e-2
    decay: float = 0.995
    beta1: float = 0.9
    beta2: float = 0.999
    tolerance: float = 1e-4               # relative decrease over ``patience`` steps
    patience: int = 60
    grid: tuple = (12, 16)                # rows, cols
    camera_height: float = 1.65
    canonical_normal: tuple = (0.0, -1.0, 0.0)
    height_penalty: float = 0.0           # weight of |h_t - h_c|, off by default
    jitter: float = 1e-3
    rng_seed: int = 0
    warm_start: bool = True
    depth_prior: str = "plane"            # grid multiplies a fixed per-pixel prior, or "none"

    def __post_init__(self):
        for name in ("mu", "lam", "xi", "height_penalty"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if int(self.levels) < 1:
            raise ValueError("levels must be at least 1")
        if not self.camera_height > 0:
            raise ValueError("camera_height must be positive")
        self.iterations = tuple(int(i) for i in np.atleast_1d(self.iterations))
        if not self.iterations or min(self.iterations) < 0:
            raise ValueError("iterations must be non-negative")
        self.grid = tuple(int(g) for g in self.grid)
        if len(self.grid) != 2 or min(self.grid) < 2:
            raise ValueError("depth grid needs at least 2x2 cells")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        self.canonical_normal = tuple(float(x) for x in self.canonical_normal)
        if self.depth_prior not in ("plane", "none"):
            raise ValueError("depth_prior must be 'plane' or 'none'")

    def iterations_at(self, level_index: int) -> int:
        return self.iterations[min(level_index, len(self.iterations) - 1)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["iterations"] = list(self.iterations)
        d["grid"] = list(self.grid)
        d["canonical_normal"] = list(self.canonical_normal)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown estimator options: {sorted(unknown)}")
        return cls(**d)

    @property
    def base_plane(self) -> GroundPlane:
        return GroundPlane(np.array(self.canonical_normal), self.camera_height)


# --- state --------------------------------------------------------------------

@dataclass
class StateVector:
    rotation: np.ndarray
    translation: np.ndarray
    correction: np.ndarray      # dr, ds, dh
    log_inv_depth: np.ndarray   # (rows, cols)

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)
        self.correction = np.asarray(self.correction, dtype=float).reshape(3)
        self.log_inv_depth = np.asarray(self.log_inv_depth, dtype=float)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.rotation, self.translation, self.correction,
                               self.log_inv_depth.ravel()])

    @classmethod
    def from_flat(cls, x, grid) -> "StateVector":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6], x[6:9], x[9:].reshape(grid))

    @property
    def plane_correction(self) -> PlaneCorrection:
        return PlaneCorrection(*self.correction)


def _interp_matrix(n_out: int, n_ctrl: int, factor: int, full: int) -> np.ndarray:
    """Linear interpolation from ``n_ctrl`` nodes spanning full-res pixels 0..full-1."""
    u = (np.arange(n_out) + 0.5) * factor - 0.5
    pos = u * (n_ctrl - 1) / (full - 1)
    j = np.clip(np.floor(pos).astype(int), 0, n_ctrl - 2)
    f = pos - j
    M = np.zeros((n_out, n_ctrl))
    M[np.arange(n_out), j] = 1 - f
    M[np.arange(n_out), j + 1] = f
    return M


def control_pixels(K: CameraIntrinsics, grid) -> np.ndarray:
    """Full-resolution pixel positions of the depth-grid nodes, (rows, cols, 2)."""
    gy, gx = grid
    u = np.linspace(0, K.width - 1, gx)
    v = np.linspace(0, K.height - 1, gy)
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu, vv], -1)


def _plane_inverse_depth(K: CameraIntrinsics, u, v, plane: GroundPlane) -> np.ndarray:
    """Inverse depth of the plane along pixel rays, floored at the far prior."""
    r = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones(np.shape(u))], -1)
    return np.maximum(-(r @ plane.normal) / plane.height, 1.0 / FAR_DEPTH)


def depth_prior(K: CameraIntrinsics, cfg: EstimatorConfig, shape=None, factor: int = 1) -> np.ndarray:
    """Fixed per-pixel inverse-depth prior multiplying the grid, at a pyramid level.

    Level pixel ``u_l`` sits at full-resolution ``(u_l + 0.5) * factor - 0.5``.
    """
    H, W = shape if shape is not None else (K.height, K.width)
    if cfg.depth_prior == "none":
        return np.ones((H, W))
    u, v = np.meshgrid((np.arange(W) + 0.5) * factor - 0.5, (np.arange(H) + 0.5) * factor - 0.5)
    return _plane_inverse_depth(K, u, v, cfg.base_plane)


def initial_state(K: CameraIntrinsics, cfg: EstimatorConfig) -> StateVector:
    """Identity pose, zero correction, plane-induced inverse depth (50 m far prior).

    With the per-pixel prior the grid starts at log 1 = 0; otherwise the
    grid nodes hold the prior themselves.  Both get seeded jitter.
    """
    rng = np.random.Generator(np.random.Philox(cfg.rng_seed))
    if cfg.depth_prior == "plane":
        g = np.zeros(cfg.grid)
    else:
        c = control_pixels(K, cfg.grid)
        g = np.log(_plane_inverse_depth(K, c[..., 0], c[..., 1], cfg.base_plane))
    g = g + cfg.jitter * rng.standard_normal(g.shape)
    return StateVector(np.zeros(3), np.zeros(3), np.zeros(3), g)


def scale_adjust(depth: DepthMap, pose: Pose, h_c: float, h_t: float):
    """Rescale depth and translation by ``s = h_c / h_t``."""
    if not h_t > 0:
        raise ValueError(f"estimated camera height must be positive, got {h_t}")
    if not h_c > 0:
        raise ValueError(f"calibrated camera height must be positive, got {h_c}")
    s = h_c / h_t
    return depth.scaled(s), Pose(pose.rotation, pose.translation * s)


# --- objective ----------------------------------------------------------------

@dataclass
class LossBreakdown:
    E: float
    E_p: float
    E_s: float
    E_h: float
    E_height: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class _Level:
    """Precomputed per-resolution data for evaluating the objective."""

    def __init__(self, I_t, I_prev, m_t, m_prev, K: CameraIntrinsics, cfg, factor, full_K):
        self.K, self.I_t, self.I_prev = K, I_t, I_prev
        H, W = I_t.shape
        self.Uy = _interp_matrix(H, cfg.grid[0], factor, full_K.height)
        self.Ux = _interp_matrix(W, cfg.grid[1], factor, full_K.width)
        self.prior = depth_prior(full_K, cfg, (H, W), factor)
        self.rays = K.rays()
        self.pix = K.pixel_grid()
        self.ex, self.ey = edge_weights(I_t)
        self.use_h = m_t is not None
        if self.use_h:
            self.m_t, self.m_prev = m_t, m_prev
            self.t_masked = I_t * m_t
            self.src_masked = I_prev * m_prev


def _decode(x, cfg: EstimatorConfig):
    st = StateVector.from_flat(x, cfg.grid)
    base = cfg.base_plane
    corr = st.plane_correction
    plane_t = apply_plane_correction(base, corr)
    s = cfg.camera_height / plane_t.height
    return st, corr, plane_t, s


def _evaluate(x, lv: _Level, cfg: EstimatorConfig, grad: bool):
    st, corr, plane_t, s = _decode(x, cfg)
    K = lv.K
    R = rotation_from_angle_axis(st.rotation)
    t_s = s * st.translation
    Z = np.exp(st.log_inv_depth)
    rho = lv.prior * (lv.Uy @ Z @ lv.Ux.T)                 # unscaled inverse depth
    D = s / rho
    n_grid = Z.size
    g = np.zeros(9 + n_grid) if grad else None
    H_, W_ = rho.shape

    # photometric term through depth reprojection
    E_p = 0.0
    if cfg.mu > 0:
        Rr = lv.rays @ R.T
        X = D[..., None] * Rr + t_s
        z = X[..., 2]
        front = z > 1e-9
        zc = np.where(front, z, 1.0)
        qx = K.fx * X[..., 0] / zc + K.cx
        qy = K.fy * X[..., 1] / zc + K.cy
        if grad:
            val, gx, gy = sample_zero_padded(lv.I_prev, qx, qy, grad=True)
            bw, bx, by = border_weight(qx, qy, W_, H_, grad=True)
        else:
            val = sample_zero_padded(lv.I_prev, qx, qy)
            bw = border_weight(qx, qy, W_, H_)
        w = np.where(front, bw, 0.0)
        if not w.sum() > 0:
            raise ImagingError("no pixel reprojects into the previous frame")
        out = photometric_terms(lv.I_t, np.where(w > 0, val, 0.0), w, cfg.alpha, grad=grad)
        if grad:
            E_p, d_img, d_w = out
            f = front.astype(float)
            dqx = d_img * gx * (w > 0) + d_w * bx * f
            dqy = d_img * gy * (w > 0) + d_w * by * f
            # dq/dX
            a = K.fx / zc
            b = K.fy / zc
            dX = np.stack([dqx * a, dqy * b,
                           -(dqx * a * X[..., 0] + dqy * b * X[..., 1]) / zc], -1) * f[..., None]
            dR = rotation_derivatives(st.rotation)      # (i, 3, 3)
            # dX/dv_i = D dR_i r
            M = np.einsum("hwa,hw,hwb->ab", dX, D, lv.rays)    # sum dX_a D r_b
            g_rot = np.einsum("iab,ab->i", dR, M)
            g_ts = dX.sum(axis=(0, 1))
            g_D = np.einsum("hwa,hwa->hw", dX, Rr)
            g[:3] += cfg.mu * g_rot
            g[3:6] += cfg.mu * s * g_ts
            g_s = g_ts @ st.translation + (g_D * D).sum() / s
            g_rho = -g_D * D / rho
            g_Z = lv.Uy.T @ (g_rho * lv.prior) @ lv.Ux
            g[9:] += cfg.mu * (g_Z * Z).ravel()
            g[8] += cfg.mu * g_s * (-s / plane_t.height)
        else:
            E_p = out

    # edge-aware smoothness on (mean-normalised, hence scale-free) inverse depth
    E_s = 0.0
    if cfg.lam > 0:
        out = smoothness_terms(rho, lv.ex, lv.ey, grad=grad)
        if grad:
            E_s, g_rho = out
            g[9:] += cfg.lam * ((lv.Uy.T @ (g_rho * lv.prior) @ lv.Ux) * Z).ravel()
        else:
            E_s = out

    # road homography term
    E_h = 0.0
    plane_c = GroundPlane(plane_t.normal, cfg.camera_height)
    pose_s = Pose(st.rotation, t_s)
    if cfg.xi > 0 and lv.use_h:
        Hm = compose_homography(K, pose_s, plane_c).matrix
        y = lv.pix @ Hm.T
        finite = np.abs(y[..., 2]) >= 1e-12
        wz = np.where(finite, y[..., 2], 1.0)
        q = y[..., :2] / wz[..., None]
        out = homography_terms(lv.t_masked, lv.src_masked, lv.m_t, lv.m_prev, q, finite, grad=grad)
        if grad:
            E_h, dq = out
            sel = finite & (np.abs(dq).sum(-1) > 0)
            J = homography_jacobians(K, pose_s, plane_c, lv.pix[sel])
            dqs = dq[sel]
            g_rot = np.einsum("na,nai->i", dqs, J.rotation)
            g_ts = np.einsum("na,nai->i", dqs, J.translation)
            g_n = np.einsum("na,nai->i", dqs, J.normal)
            dn_dr, dn_ds = plane_correction_derivatives(cfg.base_plane, corr)
            g[:3] += cfg.xi * g_rot
            g[3:6] += cfg.xi * s * g_ts
            g[6] += cfg.xi * g_n @ dn_dr
            g[7] += cfg.xi * g_n @ dn_ds
            # t_s / h_c = t / h_t: the height offset cancels exactly
            g[8] += cfg.xi * (g_ts @ st.translation) * (-s / plane_t.height)
        else:
            E_h = out

    E_height = 0.0
    if cfg.height_penalty > 0:
        dh = plane_t.height - cfg.camera_height
        E_height = abs(dh)
        if grad:
            g[8] += cfg.height_penalty * np.sign(dh)

    E = cfg.mu * E_p + cfg.lam * E_s + cfg.xi * E_h + cfg.height_penalty * E_height
    br = LossBreakdown(float(E), float(E_p), float(E_s), float(E_h), float(E_height))
    return (br, g) if grad else br


def _lowpass(img):
    """Separable [1 4 6 4 1] / 16 blur with edge replication."""
    k = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    P = np.pad(img, 2, mode="edge")
    H, W = img.shape
    rows = sum(k[i] * P[i:i + H, :] for i in range(5))
    return sum(k[j] * rows[:, j:j + W] for j in range(5))


def _reduce(img):
    return downsample(_lowpass(img))


def _prepare(I_t, I_prev, masks, K: CameraIntrinsics, cfg: EstimatorConfig, levels=None):
    I_t, I_prev = to_gray(I_t), to_gray(I_prev)
    if I_t.shape != I_prev.shape or I_t.shape != (K.height, K.width):
        raise ValueError("images do not match the intrinsics")
    use_h = masks is not None
    flags = []
    m_t = m_prev = None
    if use_h:
        m_t = np.asarray(masks[0], dtype=float)
        m_prev = np.asarray(masks[1], dtype=float)
        if m_t.shape != I_t.shape or m_prev.shape != I_t.shape:
            raise ValueError("masks do not match the images")
        frac = min((m_t > 0).mean(), (m_prev > 0).mean())
        if frac < MIN_MASK_FRACTION:
            use_h = False
            m_t = m_prev = None
            flags.append("homography_loss_disabled_small_mask")
    else:
        flags.append("homography_loss_disabled_no_mask")
    if use_h and cfg.xi == 0:
        use_h = False
        m_t = m_prev = None
        flags.append("homography_loss_disabled_xi_zero")
    n_levels = cfg.levels if levels is None else levels
    out = []
    Kl, a, b, ma, mb, factor = K, I_t, I_prev, m_t, m_prev, 1
    for i in range(n_levels):
        if i > 0:
            if min(Kl.width, Kl.height) < 8:
                break
            Kl = Kl.downscaled()
            a, b = _reduce(a), _reduce(b)
            if use_h:
                ma, mb = downsample(ma), downsample(mb)
            factor *= 2
        out.append(_Level(a, b, ma, mb, Kl, cfg, factor, K))
    return out[::-1], flags


def _as_state(state, K, cfg):
    if state is None:
        return initial_state(K, cfg)
    return state


def total_loss(state: StateVector, I_t, I_prev, masks, K: CameraIntrinsics,
               cfg: EstimatorConfig, grad: bool = False):
    """Full-resolution objective for ``state``; masks is ``(mask_t, mask_prev)`` or None.

    Returns ``(E, breakdown)`` and, with ``grad``, the gradient w.r.t.
    ``state.flat()`` as a third element.
    """
    if state.log_inv_depth.shape != tuple(cfg.grid):
        raise ValueError("state depth grid does not match the configuration")
    lv = _prepare(I_t, I_prev, masks, K, cfg, levels=1)[0][-1]
    if grad:
        br, g = _evaluate(state.flat(), lv, cfg, True)
        return br.E, br, g
    br = _evaluate(state.flat(), lv, cfg, False)
    return br.E, br


def decode_state(state: StateVector, K: CameraIntrinsics, cfg: EstimatorConfig):
    """Metric ``(pose, plane, depth)`` at full resolution after the scale rule."""
    plane_t = apply_plane_correction(cfg.base_plane, state.plane_correction)
    Uy = _interp_matrix(K.height, cfg.grid[0], 1, K.height)
    Ux = _interp_matrix(K.width, cfg.grid[1], 1, K.width)
    rho = depth_prior(K, cfg) * (Uy @ np.exp(state.log_inv_depth) @ Ux.T)
    depth, pose = scale_adjust(DepthMap(1.0 / rho), Pose(state.rotation, state.translation),
                               cfg.camera_height, plane_t.height)
    return pose, GroundPlane(plane_t.normal, cfg.camera_height), depth


def fit_grid_to_depth(depth: DepthMap, K: CameraIntrinsics, cfg: EstimatorConfig) -> np.ndarray:
    """Least-squares log-inverse-depth grid approximating a depth map (not optimised)."""
    Uy = _interp_matrix(K.height, cfg.grid[0], 1, K.height)
    Ux = _interp_matrix(K.width, cfg.grid[1], 1, K.width)
    rho = np.where(depth.valid, 1.0 / np.where(depth.valid, depth.values, 1.0), 1.0 / FAR_DEPTH)
    Z = np.linalg.pinv(Uy) @ (rho / depth_prior(K, cfg)) @ np.linalg.pinv(Ux).T
    return np.log(np.maximum(Z, 1e-4))


# --- optimiser ----------------------------------------------------------------

@dataclass
class EstimationResult:
    pose: Pose
    plane: GroundPlane
    depth: DepthMap
    homography: Homography
    loss: LossBreakdown
    iterations: int
    converged: bool
    flags: list = field(default_factory=list)
    state: StateVector | None = None
    trace: list = field(default_factory=list)
    scale: float = 1.0     # s = h_c / h_t applied to depth and translation

    @property
    def relative_depth(self) -> DepthMap:
        return self.depth.scaled(1.0 / self.scale)

    @property
    def homography_enabled(self) -> bool:
        return not any(f.startswith("homography_loss_disabled") for f in self.flags)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "pose": [float(v) for v in self.pose.matrix()[:3].ravel()],
            "plane": [float(v) for v in self.plane.as_vector()],
            "homography": [[float(v) for v in row] for row in self.homography.matrix],
            "loss": self.loss.to_dict(),
            "scale": float(self.scale),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "homography_loss_enabled": self.homography_enabled,
            "flags": list(self.flags),
        }


def _step_scales(cfg: EstimatorConfig) -> np.ndarray:
    n = cfg.grid[0] * cfg.grid[1]
    # dh rescales metric depth and translation together, so E_p is blind to it and
    # it carries the homography's scale information without fighting the depth grid
    return np.concatenate([np.full(3, cfg.step_rotation), np.full(3, cfg.step_translation),
                           [cfg.step_plane, cfg.step_plane, cfg.step_height],
                           np.full(n, cfg.step_depth)])


def _optimize_level(x, lv, cfg, n_iter, trace, level_index):
    """Adam-direction descent with backtracking; accepted losses never increase."""
    br, g = _evaluate(x, lv, cfg, True)
    E0 = br.E
    scales = _step_scales(cfg)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    lr = 1.0
    history = [E0]
    it = 0
    diverged = converged = False
    for it in range(1, n_iter + 1):
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mh = m / (1 - cfg.beta1**it)
        vh = v / (1 - cfg.beta2**it)
        d = mh / (np.sqrt(vh) + 1e-12)
        accepted = False
        for _ in range(6):
            cand = x - lr * scales * d
            try:
                br_c, g_c = _evaluate(cand, lv, cfg, True)
            except (ImagingError, ValueError):
                br_c = None
            if br_c is not None and np.isfinite(br_c.E) and br_c.E <= br.E:
                accepted = True
                break
            lr *= 0.5
        if accepted:
            x, br, g = cand, br_c, g_c
            lr = min(lr * 1.2, 1.0)
        else:
            m[:] = 0.0
        lr *= cfg.decay
        history.append(br.E)
        trace.append((level_index, it, br.E, br.E_p, br.E_s, br.E_h))
        if not np.isfinite(br.E) or br.E > 10 * E0:
            diverged = True
            break
        if it >= cfg.patience:
            old = history[-1 - cfg.patience]
            if old - br.E <= cfg.tolerance * max(old, 1e-12):
                converged = True
                break
    return x, br, it, converged, diverged


def estimate_pair(I_prev, I_t, masks, K: CameraIntrinsics, cfg: EstimatorConfig | None = None,
                  init: StateVector | None = None) -> EstimationResult:
    """Coarse-to-fine minimisation of the total loss for one pair.

    ``masks`` is ``(mask_t, mask_prev)`` (road = nonzero) or None.
    """
    cfg = cfg or EstimatorConfig()
    levels, flags = _prepare(I_t, I_prev, masks, K, cfg)
    x = _as_state(init, K, cfg).flat()
    trace = []
    total_it = 0
    converged = True
    diverged = False
    for i, lv in enumerate(levels):
        x, br, it, conv, div = _optimize_level(x, lv, cfg, cfg.iterations_at(i), trace, i)
        total_it += it
        converged = conv
        diverged |= div
        if div:
            break
    if diverged:
        flags.append("diverged")
        converged = False
    st = StateVector.from_flat(x, cfg.grid)
    final = _evaluate(x, levels[-1], cfg, False)
    pose, plane, depth = decode_state(st, K, cfg)
    H = compose_homography(K, pose, plane)
    return EstimationResult(pose, plane, depth, H, final, total_it, converged,
                            flags, st, trace,
                            cfg.camera_height / apply_plane_correction(cfg.base_plane, st.plane_correction).height)


def estimate_sequence(frames, masks, K: CameraIntrinsics, cfg: EstimatorConfig | None = None):
    """Chain pairwise estimates into absolute world-to-camera poses.

    Returns ``(poses, results)``; ``poses[0]`` is the identity and
    ``poses[i] = inverse(rel_i) @ poses[i-1]`` with ``rel_i`` mapping frame
    ``i`` points into frame ``i-1``.
    """
    cfg = cfg or EstimatorConfig()
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    if masks is not None and len(masks) != len(frames):
        raise ValueError("need one mask per frame")
    poses = [Pose.identity()]
    results = []
    prev = None
    for i in range(1, len(frames)):
        pair_masks = None if masks is None else (masks[i], masks[i - 1])
        init = None
        if cfg.warm_start and prev is not None:
            base = initial_state(K, cfg)
            init = replace(base, rotation=prev.state.rotation, translation=prev.state.translation,
                           correction=prev.state.correction)
        res = estimate_pair(frames[i - 1], frames[i], pair_masks, K, cfg, init)
        results.append(res)
        poses.append(res.pose.inverse() @ poses[-1])
        prev = res
    return poses, results


def chain_relative(rel_poses) -> list:
    poses = [Pose.identity()]
    for r in rel_poses:
        poses.append(r.inverse() @ poses[-1])
    return poses


def rotation_angle(R) -> float:
    return math.acos(float(np.clip((np.trace(R) - 1) / 2, -1.0, 1.0)))
