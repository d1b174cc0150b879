"""Dense image operations: sampling, view synthesis, SSIM and the per-pixel losses.

Images are float arrays in [0, 1] of shape (H, W) or (H, W, C); road masks
are boolean (H, W) arrays.  Warps sample with a one-pixel zero border and
carry a per-pixel ``weight`` that ramps from 1 inside the image to 0 one
pixel outside it, so every loss is a continuous function of the warp
parameters.  ``valid`` is ``weight > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, Pose, _as_matrix

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


class ImagingError(ValueError):
    pass


@dataclass
class DepthMap:
    """Metric z-depth with a per-pixel validity flag."""

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.valid is None:
            self.valid = np.isfinite(self.values) & (self.values > 0)
        else:
            self.valid = np.asarray(self.valid, dtype=bool) & np.isfinite(self.values) & (self.values > 0)

    @property
    def shape(self):
        return self.values.shape

    def scaled(self, s: float) -> "DepthMap":
        return DepthMap(np.where(self.valid, self.values * s, 0.0), self.valid.copy())


@dataclass
class WarpResult:
    image: np.ndarray
    valid: np.ndarray
    weight: np.ndarray


def as_image(img) -> np.ndarray:
    a = np.asarray(img, dtype=float)
    if a.ndim not in (2, 3) or a.shape[0] == 0 or a.shape[1] == 0:
        raise ImagingError(f"expected an (H, W) or (H, W, C) image, got shape {a.shape}")
    if a.ndim == 3 and a.shape[2] not in (1, 3):
        raise ImagingError("images must have 1 or 3 channels")
    return a


def to_gray(img) -> np.ndarray:
    a = as_image(img)
    return a.mean(axis=2) if a.ndim == 3 else a


def _check_same_size(a, b, what="images"):
    if a.shape[:2] != b.shape[:2]:
        raise ImagingError(f"{what} differ in size: {a.shape[:2]} vs {b.shape[:2]}")


def downsample(img) -> np.ndarray:
    """2x2 box average; odd trailing rows/columns are dropped."""
    a = np.asarray(img, dtype=float)
    h, w = a.shape[0] // 2 * 2, a.shape[1] // 2 * 2
    a = a[:h, :w]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def bilinear_sample(img, x, y):
    """4-neighbour bilinear interpolation; valid iff every neighbour is in bounds."""
    img = as_image(img)
    H, W = img.shape[:2]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    valid = (x >= 0) & (x <= W - 1) & (y >= 0) & (y <= H - 1)
    xs = np.where(valid, x, 0.0)
    ys = np.where(valid, y, 0.0)
    x0 = np.minimum(np.floor(xs).astype(int), W - 2) if W > 1 else np.zeros_like(xs, dtype=int)
    y0 = np.minimum(np.floor(ys).astype(int), H - 2) if H > 1 else np.zeros_like(ys, dtype=int)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = xs - x0
    fy = ys - y0
    if img.ndim == 3:
        fx, fy = fx[..., None], fy[..., None]
    val = ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x1])
           + fy * ((1 - fx) * img[y1, x0] + fx * img[y1, x1]))
    mask = valid[..., None] if img.ndim == 3 else valid
    return np.where(mask, val, 0.0), valid


def sample_zero_padded(img, x, y, grad: bool = False):
    """Bilinear sampling with zeros outside the image (continuous in ``x, y``).

    NaN coordinates sample to 0.  With ``grad`` also returns the derivatives
    of the interpolant w.r.t. ``x`` and ``y``.
    """
    img = np.asarray(img, dtype=float)
    H, W = img.shape[:2]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = (x > -1) & (x < W) & (y > -1) & (y < H)
    xs = np.where(inside, x, -1.0)
    ys = np.where(inside, y, -1.0)
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (img.ndim - 2)
    P = np.pad(img, pad)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    fx = xs - x0
    fy = ys - y0
    # padded index = original + 1; x0 in [-1, W-1]
    a = P[y0 + 1, x0 + 1]
    b = P[y0 + 1, x0 + 2]
    c = P[y0 + 2, x0 + 1]
    d = P[y0 + 2, x0 + 2]
    if img.ndim == 3:
        fx, fy = fx[..., None], fy[..., None]
    val = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d)
    if not grad:
        return val
    gx = (1 - fy) * (b - a) + fy * (d - c)
    gy = (1 - fx) * (c - a) + fx * (d - b)
    m = inside[..., None] if img.ndim == 3 else inside
    return val, np.where(m, gx, 0.0), np.where(m, gy, 0.0)


def border_weight(x, y, width: int, height: int, grad: bool = False):
    """Product of unit ramps: 1 on [0, W-1] x [0, H-1], 0 outside (-1, W) x (-1, H)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x = np.where(np.isfinite(x), x, -2.0)
    y = np.where(np.isfinite(y), y, -2.0)
    terms = [x + 1, width - x, y + 1, height - y]
    r = [np.clip(u, 0.0, 1.0) for u in terms]
    w = r[0] * r[1] * r[2] * r[3]
    if not grad:
        return w
    dr = [((u > 0) & (u < 1)).astype(float) for u in terms]
    gx = (dr[0] * r[1] - r[0] * dr[1]) * r[2] * r[3]
    gy = (dr[2] * r[3] - r[2] * dr[3]) * r[0] * r[1]
    return w, gx, gy


def image_gradients(img):
    """Forward differences; the last column (x) and last row (y) are 0."""
    a = as_image(img)
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, :-1] = a[:, 1:] - a[:, :-1]
    gy[:-1] = a[1:] - a[:-1]
    return gx, gy


def _warp_from_coords(src, q, extra_valid=None) -> WarpResult:
    H, W = src.shape[:2]
    x, y = q[..., 0], q[..., 1]
    weight = border_weight(x, y, W, H)
    if extra_valid is not None:
        weight = np.where(extra_valid, weight, 0.0)
    image = sample_zero_padded(src, x, y)
    valid = weight > 0
    image = np.where(valid[..., None] if src.ndim == 3 else valid, image, 0.0)
    return WarpResult(image, valid, weight)


def reprojection_coords(K: CameraIntrinsics, pose: Pose, depth: np.ndarray):
    """Previous-frame pixel coordinates of every pixel of frame t.

    Returns ``(q, front, X)`` with ``q`` (H, W, 2), ``front`` the
    in-front-of-camera flag and ``X`` the transformed 3-D points.
    """
    rays = K.rays()
    X = (depth[..., None] * rays) @ pose.R.T + pose.translation
    front = X[..., 2] > 1e-9
    z = np.where(front, X[..., 2], 1.0)
    q = np.stack([K.fx * X[..., 0] / z + K.cx, K.fy * X[..., 1] / z + K.cy], axis=-1)
    return q, front, X


def warp_by_depth(src, K: CameraIntrinsics, pose: Pose, depth: DepthMap) -> WarpResult:
    """Reconstruct frame t by sampling ``src`` (frame t-1) at reprojected pixels."""
    src = as_image(src)
    if src.shape[:2] != (K.height, K.width) or depth.shape != (K.height, K.width):
        raise ImagingError("image, depth and intrinsics sizes do not match")
    d = np.where(depth.valid, depth.values, 1.0)
    q, front, _ = reprojection_coords(K, pose, d)
    return _warp_from_coords(src, q, front & depth.valid)


def homography_coords(H, width: int, height: int):
    M = _as_matrix(H)
    u, v = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    y = M[:, 0] * u[..., None] + M[:, 1] * v[..., None] + M[:, 2]
    finite = np.abs(y[..., 2]) >= 1e-12
    w = np.where(finite, y[..., 2], 1.0)
    q = y[..., :2] / w[..., None]
    return q, finite, y


def warp_by_homography(src, H) -> WarpResult:
    """Sample ``src`` at ``H p`` for every pixel ``p`` of the output."""
    src = as_image(src)
    M = _as_matrix(H)
    if not abs(np.linalg.det(M)) > 1e-12 * np.abs(M).max() ** 3:
        raise ImagingError("homography is singular")
    q, finite, _ = homography_coords(M, src.shape[1], src.shape[0])
    return _warp_from_coords(src, q, finite)


# --- SSIM -----------------------------------------------------------------

def _pool(a):
    """3x3 mean with reflection padding."""
    P = np.pad(a, 1, mode="reflect")
    H, W = a.shape
    out = np.zeros_like(a)
    for i in range(3):
        for j in range(3):
            out += P[i:i + H, j:j + W]
    return out / 9.0


def _pool_adjoint(g):
    H, W = g.shape
    G = np.zeros((H + 2, W + 2))
    for i in range(3):
        for j in range(3):
            G[i:i + H, j:j + W] += g
    G /= 9.0
    out = G[1:-1, 1:-1].copy()
    # fold reflected border back onto its source pixels
    out[1, :] += G[0, 1:-1]
    out[H - 2, :] += G[-1, 1:-1]
    out[:, 1] += G[1:-1, 0]
    out[:, W - 2] += G[1:-1, -1]
    out[1, 1] += G[0, 0]
    out[1, W - 2] += G[0, -1]
    out[H - 2, 1] += G[-1, 0]
    out[H - 2, W - 2] += G[-1, -1]
    return out


def _ssim_parts(a, b):
    mu_a, mu_b = _pool(a), _pool(b)
    var_a = _pool(a * a) - mu_a**2
    var_b = _pool(b * b) - mu_b**2
    cov = _pool(a * b) - mu_a * mu_b
    A1 = 2 * mu_a * mu_b + SSIM_C1
    A2 = 2 * cov + SSIM_C2
    B1 = mu_a**2 + mu_b**2 + SSIM_C1
    B2 = var_a + var_b + SSIM_C2
    return A1 * A2 / (B1 * B2), (mu_a, mu_b, A1, A2, B1, B2)


def ssim_map(a, b) -> np.ndarray:
    """Per-pixel SSIM over 3x3 windows (RGB inputs are averaged to gray first)."""
    a, b = as_image(a), as_image(b)
    _check_same_size(a, b)
    if min(a.shape[:2]) < 2:
        raise ImagingError("SSIM needs images of at least 2x2 pixels")
    return _ssim_parts(to_gray(a), to_gray(b))[0]


def _ssim_vjp(a, b, g):
    """Gradient of ``sum(g * ssim(a, b))`` w.r.t. ``b``."""
    S, (mu_a, mu_b, A1, A2, B1, B2) = _ssim_parts(a, b)
    d_mu = S * (2 * mu_a / A1 - 2 * mu_a / A2 - 2 * mu_b / B1 + 2 * mu_b / B2)
    d_bb = -S / B2
    d_ab = 2 * S / A2
    return _pool_adjoint(g * d_mu) + 2 * b * _pool_adjoint(g * d_bb) + a * _pool_adjoint(g * d_ab)


# --- losses ---------------------------------------------------------------

def photometric_terms(target, image, weight, alpha: float, grad: bool = False):
    """Weighted mean of ``alpha (1 - SSIM) / 2 + (1 - alpha) |target - image|``.

    SSIM windows see ``weight * image + (1 - weight) * target``, so pixels
    without a reconstruction neither penalise nor reward their neighbours.
    With ``grad`` (grayscale only) also returns d/d image and d/d weight.
    """
    wsum = weight.sum()
    if not wsum > 0:
        raise ImagingError("no valid pixels for the photometric loss")
    wb = np.clip(weight, 0.0, 1.0)
    wc = wb[..., None] if image.ndim == 3 else wb
    blend = wc * image + (1.0 - wc) * target
    S = ssim_map(target, blend)
    diff = image - target
    l1 = np.abs(diff).mean(axis=2) if diff.ndim == 3 else np.abs(diff)
    rho = alpha * (1.0 - S) / 2.0 + (1.0 - alpha) * l1
    E = float((weight * rho).sum() / wsum)
    if not grad:
        return E
    if target.ndim != 2:
        raise ImagingError("photometric gradients are implemented for grayscale images")
    c = weight / wsum
    d_blend = -0.5 * alpha * _ssim_vjp(target, blend, c)
    inner = (weight >= 0) & (weight <= 1)
    d_image = wb * d_blend + (1.0 - alpha) * c * np.sign(diff)
    d_weight = (rho - E) / wsum + np.where(inner, diff * d_blend, 0.0)
    return E, d_image, d_weight


def photometric_loss(target, recon: WarpResult, alpha: float) -> float:
    """SSIM + L1 photometric error averaged over the valid reconstructed pixels."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    target = as_image(target)
    _check_same_size(target, recon.image)
    weight = recon.weight if recon.weight is not None else recon.valid.astype(float)
    return photometric_terms(target, as_image(recon.image), weight, alpha)


def edge_weights(img):
    gx, gy = image_gradients(to_gray(img))
    return np.exp(-np.abs(gx)), np.exp(-np.abs(gy))


def smoothness_terms(field, ex, ey, valid=None, grad: bool = False):
    """Edge-aware smoothness of the mean-normalised ``field``.

    Averaged over pixels whose right and lower neighbours exist; with
    ``valid`` only pixels valid together with both neighbours count.
    """
    H, W = field.shape
    if valid is None:
        valid = np.ones((H, W), dtype=bool)
    if not valid.any():
        raise ImagingError("depth map has no valid pixels")
    m = field[valid].mean()
    d = np.where(valid, field / m, 0.0)
    sel = valid[:-1, :-1] & valid[:-1, 1:] & valid[1:, :-1]
    n = sel.sum()
    if n == 0:
        raise ImagingError("depth map has no valid neighbouring pixels")
    dx = d[:-1, 1:] - d[:-1, :-1]
    dy = d[1:, :-1] - d[:-1, :-1]
    wx = ex[:-1, :-1] * sel
    wy = ey[:-1, :-1] * sel
    E = float((np.abs(dx) * wx + np.abs(dy) * wy).sum() / n)
    if not grad:
        return E
    sx = np.sign(dx) * wx / n
    sy = np.sign(dy) * wy / n
    g = np.zeros((H, W))
    g[:-1, 1:] += sx
    g[:-1, :-1] -= sx + sy
    g[1:, :-1] += sy
    # through d = field / mean(field)
    nv = valid.sum()
    g_field = np.where(valid, g / m - (g * field).sum() / (m * m * nv), 0.0)
    return E, g_field


def smoothness_loss(depth: DepthMap, img, on: str = "inverse_depth") -> float:
    """Edge-aware smoothness on mean-normalised inverse depth (or depth)."""
    img = as_image(img)
    _check_same_size(img, depth.values, "depth and image")
    if on == "inverse_depth":
        field = np.where(depth.valid, 1.0 / np.where(depth.valid, depth.values, 1.0), 0.0)
    elif on == "depth":
        field = np.where(depth.valid, depth.values, 0.0)
    else:
        raise ValueError(f"unknown smoothness target {on!r}")
    ex, ey = edge_weights(img)
    return smoothness_terms(field, ex, ey, depth.valid)


def apply_mask(img, mask) -> np.ndarray:
    img = as_image(img)
    mask = np.asarray(mask)
    _check_same_size(img, mask, "image and mask")
    m = mask.astype(float)
    return img * (m[..., None] if img.ndim == 3 else m)


def homography_terms(target, masked_src, mask_t, mask_src, q, finite, grad=False):
    """Masked L1 between ``target`` road pixels and the road of ``src`` sampled at ``q``.

    The masked source is divided by the sampled mask so that pixels near a
    mask boundary only see road intensities; each pixel is weighted by the
    target mask, the sampled source mask and the border ramp.
    """
    H, W = mask_t.shape
    x, y = q[..., 0], q[..., 1]
    if grad:
        num, nx, ny = sample_zero_padded(masked_src, x, y, grad=True)
        den, dx_, dy_ = sample_zero_padded(mask_src, x, y, grad=True)
        bw, bx, by = border_weight(x, y, W, H, grad=True)
    else:
        num = sample_zero_padded(masked_src, x, y)
        den = sample_zero_padded(mask_src, x, y)
        bw = border_weight(x, y, W, H)
    ok = finite & (den > 1e-6)
    den_s = np.where(ok, den, 1.0)
    chan = num.ndim == 3
    recon = num / (den_s[..., None] if chan else den_s)
    w = np.where(ok, mask_t * den * bw, 0.0)
    wsum = w.sum()
    if not wsum > 0:
        raise ImagingError("road masks do not overlap under this homography")
    diff = recon - target
    l1 = np.abs(diff).mean(axis=2) if chan else np.abs(diff)
    E = float((w * l1).sum() / wsum)
    if not grad:
        return E
    if chan:
        raise ImagingError("homography-loss gradients are implemented for grayscale images")
    s = np.sign(diff) * w / wsum
    dl = (l1 - E) / wsum
    # d recon / dq = (grad num - recon * grad den) / den
    drx = (nx - recon * dx_) / den_s
    dry = (ny - recon * dy_) / den_s
    dwx = mask_t * (dx_ * bw + den * bx)
    dwy = mask_t * (dy_ * bw + den * by)
    gx = np.where(ok, s * drx + dl * dwx, 0.0)
    gy = np.where(ok, s * dry + dl * dwy, 0.0)
    return E, np.stack([gx, gy], axis=-1)


def homography_loss(I_t, I_prev, H, mask_t, mask_prev) -> float:
    """Mean L1 between the road of ``I_t`` and the homography-warped road of ``I_prev``."""
    I_t, I_prev = as_image(I_t), as_image(I_prev)
    _check_same_size(I_t, I_prev)
    _check_same_size(I_t, np.asarray(mask_t), "image and mask")
    _check_same_size(I_t, np.asarray(mask_prev), "image and mask")
    M = _as_matrix(H)
    if not abs(np.linalg.det(M)) > 1e-12 * np.abs(M).max() ** 3:
        raise ImagingError("homography is singular")
    mt = np.asarray(mask_t, dtype=float)
    mp = np.asarray(mask_prev, dtype=float)
    q, finite, _ = homography_coords(M, I_t.shape[1], I_t.shape[0])
    return homography_terms(apply_mask(I_t, mt), apply_mask(I_prev, mp), mt, mp, q, finite)
