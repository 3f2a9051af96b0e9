"""Self-contained image-processing primitives.

Border policy for every neighborhood operation is clamp-to-edge.
All functions are pure; none mutate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError, EmptyRegionError, ParameterError
from .raster import as_gray, as_mask, as_rgb, check_same_dims

# ---------------------------------------------------------------------------
# grayscale / blur / gradients


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Rec.601 luminance, normalized to [0, 1]."""
    img = as_rgb(img)
    f = img.astype(np.float64)
    return (0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]) / 255.0


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian convolution with clamp-to-edge borders."""
    img = as_gray(img)
    k = gaussian_kernel1d(sigma)
    r = (len(k) - 1) // 2
    padded = np.pad(img, ((r, r), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for i, w in enumerate(k):
        out += w * padded[i : i + img.shape[0], :]
    padded = np.pad(out, ((0, 0), (r, r)), mode="edge")
    out = np.zeros_like(img)
    for i, w in enumerate(k):
        out += w * padded[:, i : i + img.shape[1]]
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    orientation: np.ndarray  # radians, from arctan2(gy, gx)


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


def _correlate3(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    p = np.pad(img, 1, mode="edge")
    out = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            w = kernel[dy, dx]
            if w:
                out += w * p[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return out


def sobel_gradients(img: np.ndarray) -> GradientField:
    """3x3 Sobel gradients; orientation in radians."""
    img = as_gray(img)
    gx = _correlate3(img, _SOBEL_X)
    gy = _correlate3(img, _SOBEL_Y)
    mag = np.hypot(gx, gy)
    return GradientField(gx=gx, gy=gy, magnitude=mag, orientation=np.arctan2(gy, gx))


# ---------------------------------------------------------------------------
# Canny


def _sample_clamped(mag: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear sample of the magnitude field with clamp-to-edge."""
    h, w = mag.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = mag[y0, x0] * (1 - fx) + mag[y0, x1] * fx
    bot = mag[y1, x0] * (1 - fx) + mag[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def nms_neighbors(mag: np.ndarray, orientation: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interpolated magnitudes one step ahead/behind along the gradient."""
    h, w = mag.shape
    ys, xs = np.mgrid[0:h, 0:w]
    ux = np.cos(orientation)
    uy = np.sin(orientation)
    ahead = _sample_clamped(mag, xs + ux, ys + uy)
    behind = _sample_clamped(mag, xs - ux, ys - uy)
    return ahead, behind


def _nonmax_suppress(mag: np.ndarray, orientation: np.ndarray) -> np.ndarray:
    """Keep ridge pixels: maxima along the (interpolated) gradient direction.

    Neighbor magnitudes are sampled bilinearly one unit along the true
    gradient; ties across a two-pixel plateau break toward the positive
    direction so step edges stay one pixel thin. Interpolation (rather than
    4-bin quantized neighbors) keeps corner contours closed.
    """
    ahead, behind = nms_neighbors(mag, orientation)
    return (mag > ahead) & (mag >= behind)


def canny(img: np.ndarray, low: float, high: float, sigma: float) -> np.ndarray:
    """Classic Canny: blur, Sobel, non-max suppression, hysteresis.

    Thresholds apply to magnitudes normalized by the maximum Sobel response.
    Hysteresis uses 8-connectivity.
    """
    if not (0 <= low < high):
        raise ParameterError(f"need 0 <= low < high, got low={low} high={high}")
    img = as_gray(img)
    blurred = gaussian_blur(img, sigma)
    g = sobel_gradients(blurred)
    mag = g.magnitude
    peak = mag.max()
    if peak <= 0:
        return np.zeros(img.shape, dtype=bool)
    mag = mag / peak

    thin = _nonmax_suppress(mag, g.orientation)
    weak = thin & (mag >= low)
    strong = thin & (mag >= high)
    if not strong.any():
        return np.zeros(img.shape, dtype=bool)

    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep_ids = np.unique(labels[strong])
    lut = np.zeros(n + 1, dtype=bool)
    lut[keep_ids] = True
    return lut[labels]


# ---------------------------------------------------------------------------
# color quantization


class SplitMix64:
    """Tiny deterministic PRNG so palettes reproduce across platforms."""

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self._MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self._MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def next_float(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)

    def randint(self, n: int) -> int:
        return min(int(self.next_float() * n), n - 1)


@dataclass(frozen=True)
class Palette:
    entries: np.ndarray  # (k, 3) float64 RGB centroids
    weights: np.ndarray  # (k,) float64, sums to 1

    def __post_init__(self):
        k = len(self.entries)
        if not (1 <= k <= 64):
            raise ParameterError(f"palette size must be in [1, 64], got {k}")
        if abs(float(self.weights.sum()) - 1.0) > 1e-6:
            raise ParameterError("palette weights must sum to 1")


def _kmeanspp_init(points: np.ndarray, k: int, rng: SplitMix64) -> np.ndarray:
    centroids = np.empty((k, 3), dtype=np.float64)
    centroids[0] = points[rng.randint(len(points))]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = points[rng.randint(len(points))]
            continue
        target = rng.next_float() * total
        idx = int(np.searchsorted(np.cumsum(d2), target))
        idx = min(idx, len(points) - 1)
        centroids[i] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[i]) ** 2, axis=1))
    return centroids


def quantize_palette(
    img: np.ndarray,
    k: int,
    seed: int,
    region: np.ndarray | None = None,
    max_iter: int = 50,
    tol: float = 1e-3,
) -> tuple[Palette, np.ndarray]:
    """K-means color quantization in RGB space.

    Returns the palette and a label map (int32, -1 outside the region).
    When the image holds fewer distinct colors than k, those colors are
    returned exactly.
    """
    img = as_rgb(img)
    if not (1 <= k <= 64):
        raise ParameterError(f"k must be in [1, 64], got {k}")
    if region is not None:
        region = as_mask(region)
        check_same_dims(img, region, "image and region")
        if not region.any():
            raise EmptyRegionError("quantization region is empty")
        sel = region
    else:
        sel = np.ones(img.shape[:2], dtype=bool)

    points = img[sel].astype(np.float64)
    labels = np.full(img.shape[:2], -1, dtype=np.int32)

    distinct, inverse, counts = np.unique(
        points.reshape(-1, 3), axis=0, return_inverse=True, return_counts=True
    )
    if len(distinct) <= k:
        weights = counts / counts.sum()
        labels[sel] = inverse.astype(np.int32)
        return Palette(entries=distinct.astype(np.float64), weights=weights), labels

    rng = SplitMix64(seed)
    centroids = _kmeanspp_init(points, k, rng)
    assign = np.zeros(len(points), dtype=np.int32)
    for _ in range(max_iter):
        d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        assign = np.argmin(d2, axis=1).astype(np.int32)
        moved = 0.0
        for c in range(k):
            pts = points[assign == c]
            if len(pts) == 0:
                # reseed an empty cluster at the farthest point
                far = int(np.argmax(d2.min(axis=1)))
                new = points[far]
            else:
                new = pts.mean(axis=0)
            moved = max(moved, float(np.linalg.norm(new - centroids[c])))
            centroids[c] = new
        if moved < tol:
            break
    d2 = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    assign = np.argmin(d2, axis=1).astype(np.int32)
    counts = np.bincount(assign, minlength=k).astype(np.float64)
    weights = counts / counts.sum()
    labels[sel] = assign
    return Palette(entries=centroids, weights=weights), labels


# ---------------------------------------------------------------------------
# morphology / components


def _disc(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    return (x * x + y * y) <= r * r


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Dilate with a disc structuring element; radius 0 is identity.

    Implemented as a Euclidean distance threshold, which is equivalent to
    dilation by the disc {(x, y) : x^2 + y^2 <= r^2} but much faster than a
    dense structuring element for large radii.
    """
    mask = as_mask(mask)
    if radius < 0:
        raise ParameterError("radius must be >= 0")
    if radius == 0:
        return mask.copy()
    if not mask.any():
        return mask.copy()
    return ndimage.distance_transform_edt(~mask) <= radius


def erode(mask: np.ndarray, radius: int) -> np.ndarray:
    """Erode with a disc structuring element; clamp-to-edge at borders."""
    mask = as_mask(mask)
    if radius < 0:
        raise ParameterError("radius must be >= 0")
    if radius == 0:
        return mask.copy()
    if mask.all():
        return mask.copy()
    return ndimage.distance_transform_edt(mask) > radius


@dataclass(frozen=True)
class Component:
    mask: np.ndarray
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 (exclusive)
    area: int


def connected_components(mask: np.ndarray) -> list[Component]:
    """8-connected components, largest first; ties by top-left scan order."""
    mask = as_mask(mask)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return []
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=n + 1)
    ids, first = np.unique(flat, return_index=True)
    first_idx = dict(zip(ids.tolist(), first.tolist()))
    order = sorted(range(1, n + 1), key=lambda i: (-int(areas[i]), first_idx[i]))
    slices = ndimage.find_objects(labels)
    out = []
    for i in order:
        sy, sx = slices[i - 1]
        out.append(
            Component(
                mask=labels == i,
                bbox=(sx.start, sy.start, sx.stop, sy.stop),
                area=int(areas[i]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# chamfer distance transform / edge distance


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Two-pass chamfer distance (weights 1 / sqrt 2) to the set pixels.

    All-unset input yields +inf everywhere.
    """
    mask = as_mask(mask)
    h, w = mask.shape
    INF = np.inf
    d = np.where(mask, 0.0, INF)
    diag = math.sqrt(2.0)
    cols = np.arange(w, dtype=np.float64)

    def _row_scan(row: np.ndarray) -> np.ndarray:
        # horizontal propagation at unit cost: min over i<=j of row[i] + (j-i)
        left = np.minimum.accumulate(row - cols) + cols
        right = np.minimum.accumulate((row + cols)[::-1])[::-1] - cols
        return np.minimum(left, right)

    # forward pass
    for y in range(h):
        row = d[y]
        if y > 0:
            prev = d[y - 1]
            row = np.minimum(row, prev + 1.0)
            row[1:] = np.minimum(row[1:], prev[:-1] + diag)
            row[:-1] = np.minimum(row[:-1], prev[1:] + diag)
        d[y] = _row_scan(row)
    # backward pass
    for y in range(h - 2, -1, -1):
        row = d[y]
        nxt = d[y + 1]
        row = np.minimum(row, nxt + 1.0)
        row[1:] = np.minimum(row[1:], nxt[:-1] + diag)
        row[:-1] = np.minimum(row[:-1], nxt[1:] + diag)
        d[y] = _row_scan(row)
    return d


@dataclass(frozen=True)
class EdgeDistance:
    field: np.ndarray  # per-pixel distances at contributing edge pixels, 0 elsewhere
    score: float


def edge_distance(a: np.ndarray, b: np.ndarray, region: np.ndarray) -> EdgeDistance:
    """Symmetric chamfer distance between two edge maps inside a region."""
    a = as_mask(a)
    b = as_mask(b)
    region = as_mask(region)
    check_same_dims(a, b, "edge maps")
    check_same_dims(a, region, "edge map and region")

    ea = a & region
    eb = b & region
    field = np.zeros(a.shape, dtype=np.float64)
    if not ea.any() and not eb.any():
        return EdgeDistance(field=field, score=0.0)
    if not ea.any() or not eb.any():
        present = ea | eb
        ys, xs = np.nonzero(region if region.any() else present)
        bw = xs.max() - xs.min() + 1
        bh = ys.max() - ys.min() + 1
        cap = math.hypot(bw, bh)
        field[present] = cap
        return EdgeDistance(field=field, score=cap)

    da = distance_transform(ea)
    db = distance_transform(eb)
    field[ea] = db[ea]
    field[eb] = np.maximum(field[eb], da[eb])
    total = db[ea].sum() + da[eb].sum()
    count = int(ea.sum()) + int(eb.sum())
    return EdgeDistance(field=field, score=float(total / count))


# ---------------------------------------------------------------------------
# resize


def _bilinear_coords(dst: int, src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0.0, src - 1.0)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_bilinear(img: np.ndarray, w: int, h: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center sampling."""
    img = as_rgb(img)
    if w < 1 or h < 1:
        raise ParameterError("target dimensions must be >= 1")
    if (img.shape[1], img.shape[0]) == (w, h):
        return img.copy()
    x0, x1, fx = _bilinear_coords(w, img.shape[1])
    y0, y1, fy = _bilinear_coords(h, img.shape[0])
    f = img.astype(np.float64)
    top = f[y0][:, x0] * (1 - fx)[None, :, None] + f[y0][:, x1] * fx[None, :, None]
    bot = f[y1][:, x0] * (1 - fx)[None, :, None] + f[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def resize_nearest_mask(mask: np.ndarray, w: int, h: int) -> np.ndarray:
    """Nearest-neighbor mask resize (half-pixel-center convention)."""
    mask = as_mask(mask)
    if (mask.shape[1], mask.shape[0]) == (w, h):
        return mask.copy()
    xs = np.clip(((np.arange(w) + 0.5) * (mask.shape[1] / w)).astype(np.int64), 0, mask.shape[1] - 1)
    ys = np.clip(((np.arange(h) + 0.5) * (mask.shape[0] / h)).astype(np.int64), 0, mask.shape[0] - 1)
    return mask[ys][:, xs]
