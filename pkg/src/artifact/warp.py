"""Thin-plate-spline warping driven by keypoint correspondences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateConfigurationError, InsufficientCorrespondenceError, ParameterError
from .pose import CONFIDENT, TORSO_ARM_JOINTS, PoseKeypoints
from .raster import as_mask, as_rgb


def _tps_kernel(r2: np.ndarray) -> np.ndarray:
    # U(r) = r^2 log r^2 with U(0) = 0
    out = np.zeros_like(r2)
    nz = r2 > 0
    out[nz] = r2[nz] * np.log(r2[nz])
    return out


@dataclass(frozen=True)
class TpsTransform:
    control_points: np.ndarray  # (N, 2) source points
    affine: np.ndarray          # (3, 2): rows are [const, x, y] coefficients
    weights: np.ndarray         # (N, 2) radial weights
    lam: float

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        dx = pts[:, 0:1] - self.control_points[None, :, 0]
        dy = pts[:, 1:2] - self.control_points[None, :, 1]
        r2 = dx * dx + dy * dy
        u = _tps_kernel(r2)
        out = (
            self.affine[0][None, :]
            + pts[:, 0:1] * self.affine[1][None, :]
            + pts[:, 1:2] * self.affine[2][None, :]
            + u @ self.weights
        )
        return out


def solve_tps(src: np.ndarray, dst: np.ndarray, lam: float = 0.0) -> TpsTransform:
    """Solve the standard (N+3)x(N+3) TPS system; lam regularizes the kernel diagonal."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if lam < 0:
        raise ParameterError("lambda must be non-negative")
    n = len(src)
    if n != len(dst):
        raise ParameterError("src and dst must have equal length")
    if n < 3:
        raise DegenerateConfigurationError(f"need at least 3 control points, got {n}")
    # collinearity check: the [1 x y] matrix must have rank 3
    P = np.column_stack([np.ones(n), src])
    if np.linalg.matrix_rank(P, tol=1e-9 * max(1.0, np.abs(src).max())) < 3:
        raise DegenerateConfigurationError("control points are collinear")

    diff = src[:, None, :] - src[None, :, :]
    K = _tps_kernel(np.sum(diff * diff, axis=2)) + lam * np.eye(n)
    A = np.zeros((n + 3, n + 3))
    A[:n, :n] = K
    A[:n, n:] = P
    A[n:, :n] = P.T
    rhs = np.zeros((n + 3, 2))
    rhs[:n] = dst
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as e:
        raise DegenerateConfigurationError(f"singular TPS system: {e}") from e
    return TpsTransform(control_points=src.copy(), affine=sol[n:], weights=sol[:n], lam=lam)


def _sample_bilinear_rgb(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample an RGB image at float coordinates; out-of-bounds fades to black."""
    coords = np.stack([ys, xs])
    out = np.empty((*xs.shape, 3), dtype=np.float64)
    f = img.astype(np.float64)
    for c in range(3):
        out[..., c] = ndimage.map_coordinates(f[..., c], coords, order=1, mode="grid-constant", cval=0.0)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _sample_nearest_mask(mask: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = mask.shape
    xi = np.floor(xs + 0.5).astype(np.int64)
    yi = np.floor(ys + 0.5).astype(np.int64)
    valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    out = np.zeros(xs.shape, dtype=bool)
    out[valid] = mask[yi[valid], xi[valid]]
    return out


def apply_tps(
    src_points: np.ndarray,
    dst_points: np.ndarray,
    img: np.ndarray,
    out_w: int,
    out_h: int,
    lam: float = 0.0,
    is_mask: bool = False,
) -> np.ndarray:
    """Warp an image so src control points land on dst control points.

    Uses inverse mapping: a dst->src TPS is solved and evaluated per output
    pixel, then the input is sampled (bilinear for images, nearest for masks).
    """
    mx, my = tps_grid_map(src_points, dst_points, out_w, out_h, lam)
    if is_mask:
        return _sample_nearest_mask(as_mask(img), mx, my)
    return _sample_bilinear_rgb(as_rgb(img), mx, my)


def tps_grid_map(
    src_points: np.ndarray,
    dst_points: np.ndarray,
    out_w: int,
    out_h: int,
    lam: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel inverse map (source x, source y) for warping src onto dst.

    Results are memoized on (points, size, lam): detection and condition
    generation typically warp several images with the same correspondence set.
    """
    src_points = np.asarray(src_points, dtype=np.float64).reshape(-1, 2)
    dst_points = np.asarray(dst_points, dtype=np.float64).reshape(-1, 2)
    key = (src_points.tobytes(), dst_points.tobytes(), int(out_w), int(out_h), float(lam))
    cached = _GRID_CACHE.get(key)
    if cached is not None:
        return cached
    inverse = solve_tps(dst_points, src_points, lam)
    ys, xs = np.mgrid[0:out_h, 0:out_w]
    pts = np.column_stack([xs.ravel().astype(np.float64), ys.ravel().astype(np.float64)])
    mapped = inverse(pts)
    result = (mapped[:, 0].reshape(out_h, out_w), mapped[:, 1].reshape(out_h, out_w))
    if len(_GRID_CACHE) >= _GRID_CACHE_MAX:
        _GRID_CACHE.pop(next(iter(_GRID_CACHE)), None)
    _GRID_CACHE[key] = result
    return result


_GRID_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
_GRID_CACHE_MAX = 8


def pose_correspondences(
    src_pose: PoseKeypoints,
    dst_pose: PoseKeypoints,
    joint_names: list[str] = TORSO_ARM_JOINTS,
    min_confidence: float = CONFIDENT,
) -> tuple[np.ndarray, np.ndarray]:
    """Matched (src, dst) points for joints confident in both poses."""
    src_pts, dst_pts = [], []
    for name in joint_names:
        a = src_pose.confident(name, min_confidence)
        b = dst_pose.confident(name, min_confidence)
        if a is not None and b is not None:
            src_pts.append((a.x, a.y))
            dst_pts.append((b.x, b.y))
    return np.asarray(src_pts, dtype=np.float64), np.asarray(dst_pts, dtype=np.float64)


def default_lambda(src_points: np.ndarray, scale: float = 1e-3) -> float:
    """Regularization proportional to the squared mean pairwise distance."""
    pts = np.asarray(src_points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=2))
    iu = np.triu_indices(len(pts), k=1)
    mean = float(d[iu].mean())
    return scale * mean * mean


def cloth_alignment(
    cloth: np.ndarray,
    cloth_mask: np.ndarray,
    src_pose: PoseKeypoints,
    dst_pose: PoseKeypoints,
    lam: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Warp a cloth image (and its mask) from the source pose onto the target pose."""
    cloth = as_rgb(cloth)
    cloth_mask = as_mask(cloth_mask)
    src_pts, dst_pts = pose_correspondences(src_pose, dst_pose)
    if len(src_pts) < 3:
        raise InsufficientCorrespondenceError(
            f"cloth alignment needs >= 3 confident common joints, got {len(src_pts)}"
        )
    if lam is None:
        lam = default_lambda(src_pts)
    h, w = cloth.shape[:2]
    mx, my = tps_grid_map(src_pts, dst_pts, w, h, lam=lam)
    warped = _sample_bilinear_rgb(cloth, mx, my)
    warped_mask = _sample_nearest_mask(cloth_mask, mx, my)
    return warped, warped_mask
