"""Condition-image, prompt, and scale generation for the inpainting backend."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Callable, Protocol

import numpy as np

from . import vision, warp
from .config import PipelineConfig, ScaleRow
from .detector import ArtifactClass, ArtifactReport, DetectorInputs
from .errors import EmptyRegionError, NothingToRepairError, ParameterError, UnknownLabelError
from .parsing import LABEL_TO_REGION, REGION_PRIORITY, SEG_COLORS, BodyRegion
from .pose import CONFIDENT, PoseKeypoints
from .raster import (
    as_mask,
    as_rgb,
    load_mask,
    load_rgb,
    mask_to_rgb,
    save_mask,
    save_rgb,
)

# ---------------------------------------------------------------------------
# scale vector


@dataclass(frozen=True)
class ScaleVector:
    canny: float
    pose: float
    segmentation: float
    ip_adapter: float

    def __post_init__(self):
        for name in ("canny", "pose", "segmentation", "ip_adapter"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ParameterError(f"scale component {name} out of [0,1]: {v}")

    def as_dict(self) -> dict:
        return {
            "canny": self.canny,
            "pose": self.pose,
            "segmentation": self.segmentation,
            "ip_adapter": self.ip_adapter,
        }


class ScaleModel(Protocol):
    """Interface of the learned scale generator (training is out of scope)."""

    def predict(self, distorted: np.ndarray, mask: np.ndarray) -> ScaleVector: ...


def _row_to_vector(row: ScaleRow) -> ScaleVector:
    return ScaleVector(row.canny, row.pose, row.segmentation, row.ip_adapter)


def generate_scales(
    reports: list[ArtifactReport],
    config: PipelineConfig | None = None,
    model: ScaleModel | None = None,
    distorted: np.ndarray | None = None,
    mask: np.ndarray | None = None,
) -> ScaleVector:
    """Per-condition influence scales: learned model if given, else the rule table.

    Multiple artifact classes combine by component-wise maximum.
    """
    if not reports:
        raise NothingToRepairError("no artifact reports: nothing to repair")
    if model is not None and distorted is not None and mask is not None:
        return model.predict(distorted, mask)
    cfg = config or PipelineConfig()
    rows = {
        ArtifactClass.CLOTH_DESIGN: _row_to_vector(cfg.scales.cloth_design),
        ArtifactClass.DEFORMATION: _row_to_vector(cfg.scales.deformation),
        ArtifactClass.COLOR_TEXTURE: _row_to_vector(cfg.scales.color_texture),
    }
    picked = [rows[r.artifact_class] for r in reports]
    return ScaleVector(
        canny=max(v.canny for v in picked),
        pose=max(v.pose for v in picked),
        segmentation=max(v.segmentation for v in picked),
        ip_adapter=max(v.ip_adapter for v in picked),
    )


# ---------------------------------------------------------------------------
# condition images


def make_canny_condition(
    cloth: np.ndarray,
    cloth_mask: np.ndarray | None,
    src_pose: PoseKeypoints | None,
    dst_pose: PoseKeypoints | None,
    out_w: int,
    out_h: int,
    sigma: float = 1.4,
    low: float = 0.1,
    high: float = 0.25,
    lambda_scale: float = 1e-3,
) -> tuple[np.ndarray, bool]:
    """Canny edges of the pose-aligned cloth, white on black.

    Returns (condition image, warp_skipped): when fewer than 3 confident
    common joints exist the unwarped cloth is used and the flag is set.
    """
    cloth = as_rgb(cloth)
    warped = cloth
    skipped = False
    if src_pose is not None and dst_pose is not None:
        src_pts, dst_pts = warp.pose_correspondences(src_pose, dst_pose)
        if len(src_pts) >= 3:
            lam = warp.default_lambda(src_pts, lambda_scale)
            warped = warp.apply_tps(src_pts, dst_pts, cloth, out_w, out_h, lam=lam)
        else:
            skipped = True
    if warped.shape[:2] != (out_h, out_w):
        warped = vision.resize_bilinear(warped, out_w, out_h)
    edges = vision.canny(vision.to_grayscale(warped), low, high, sigma)
    return mask_to_rgb(edges), skipped


# per-limb skeleton colors (OpenPose convention, tiled over the hand chains)
LIMB_COLORS = [
    (255, 0, 0), (255, 85, 0), (255, 170, 0), (255, 255, 0), (170, 255, 0),
    (85, 255, 0), (0, 255, 0), (0, 255, 85), (0, 255, 170), (0, 255, 255),
    (0, 170, 255), (0, 85, 255), (0, 0, 255), (85, 0, 255), (170, 0, 255),
    (255, 0, 255), (255, 0, 170), (255, 0, 85),
]

JOINT_RADIUS = 4
LIMB_WIDTH = 4


def _draw_disc(img: np.ndarray, cx: float, cy: float, radius: float, color) -> None:
    h, w = img.shape[:2]
    x0 = max(0, int(cx - radius - 1))
    x1 = min(w, int(cx + radius + 2))
    y0 = max(0, int(cy - radius - 1))
    y1 = min(h, int(cy + radius + 2))
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    sel = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius
    img[y0:y1, x0:x1][sel] = color


def _draw_segment(img: np.ndarray, p0, p1, width: float, color) -> None:
    # capsule fill: pixels within width/2 of the segment
    x0, y0 = p0
    x1, y1 = p1
    r = width / 2.0
    h, w = img.shape[:2]
    bx0 = max(0, int(min(x0, x1) - r - 1))
    bx1 = min(w, int(max(x0, x1) + r + 2))
    by0 = max(0, int(min(y0, y1) - r - 1))
    by1 = min(h, int(max(y0, y1) + r + 2))
    if bx0 >= bx1 or by0 >= by1:
        return
    ys, xs = np.mgrid[by0:by1, bx0:bx1]
    dx, dy = x1 - x0, y1 - y0
    len2 = dx * dx + dy * dy
    if len2 == 0:
        t = np.zeros_like(xs, dtype=np.float64)
    else:
        t = np.clip(((xs - x0) * dx + (ys - y0) * dy) / len2, 0.0, 1.0)
    ex = xs - (x0 + t * dx)
    ey = ys - (y0 + t * dy)
    sel = ex * ex + ey * ey <= r * r
    img[by0:by1, bx0:bx1][sel] = color


def render_pose_condition(pose: PoseKeypoints, w: int, h: int) -> np.ndarray:
    """Skeleton render: colored limbs and joint discs on black."""
    img = np.zeros((h, w, 3), dtype=np.uint8)
    for i, (a, b) in enumerate(pose.skeleton):
        ja = pose.confident(a)
        jb = pose.confident(b)
        if ja is None or jb is None:
            continue
        color = LIMB_COLORS[i % len(LIMB_COLORS)]
        _draw_segment(img, (ja.x, ja.y), (jb.x, jb.y), LIMB_WIDTH, color)
    for i, j in enumerate(pose.joints):
        if j.confidence < CONFIDENT:
            continue
        _draw_disc(img, j.x, j.y, JOINT_RADIUS, LIMB_COLORS[i % len(LIMB_COLORS)])
    return img


_COLOR_TO_LABEL = {color: label for label, color in SEG_COLORS.items()}
assert len(_COLOR_TO_LABEL) == len(SEG_COLORS), "seg color table must be bijective"


def make_seg_condition(parsing_map: np.ndarray) -> np.ndarray:
    """Color-coded segmentation condition; the color table is invertible."""
    labels = np.asarray(parsing_map)
    present = np.unique(labels)
    lut = np.zeros((256, 3), dtype=np.uint8)
    for v in present.tolist():
        if v not in SEG_COLORS:
            raise UnknownLabelError(f"unknown parsing label {v}")
        lut[v] = SEG_COLORS[v]
    return lut[labels]


def seg_condition_to_labels(img: np.ndarray) -> np.ndarray:
    """Inverse of make_seg_condition."""
    img = as_rgb(img)
    out = np.full(img.shape[:2], -1, dtype=np.int32)
    for label, color in SEG_COLORS.items():
        out[np.all(img == np.array(color, dtype=np.uint8), axis=-1)] = label
    if (out < 0).any():
        raise UnknownLabelError("segmentation image holds colors outside the table")
    return out


# ---------------------------------------------------------------------------
# prompt generation


@dataclass(frozen=True)
class MaskRegion:
    label: BodyRegion
    coverage: float


def identify_mask_region(mask: np.ndarray, parsing_map: np.ndarray) -> MaskRegion:
    """Majority body region under the mask, with the documented tie priority."""
    mask = as_mask(mask)
    if not mask.any():
        raise EmptyRegionError("cannot identify the region of an empty mask")
    vals = np.asarray(parsing_map)[mask]
    totals = {region: 0 for region in BodyRegion}
    counts = np.bincount(vals, minlength=20)
    for label, n in enumerate(counts.tolist()):
        if n and label in LABEL_TO_REGION:
            totals[LABEL_TO_REGION[label]] += n
    best = max(totals.values())
    for region in REGION_PRIORITY:
        if totals[region] == best:
            return MaskRegion(label=region, coverage=best / float(mask.sum()))
    raise AssertionError("unreachable")


def choose_reference(region: MaskRegion, cloth: np.ndarray | None, distorted: np.ndarray) -> np.ndarray:
    """Cloth image for clothing regions (when available), else the distorted image."""
    if region.label in (BodyRegion.UPPER_CLOTH, BodyRegion.LOWER_CLOTH) and cloth is not None:
        return as_rgb(cloth)
    return as_rgb(distorted)


Captioner = Callable[[np.ndarray], str]
"""Pluggable image captioner: image -> short description. Tests use stubs."""


def generate_prompt(
    reference: np.ndarray,
    region: MaskRegion,
    captioner: Captioner | None,
    config: PipelineConfig | None = None,
) -> tuple[str, str, bool]:
    """Assemble (prompt, negative prompt, caption_failed) from the template."""
    cfg = config or PipelineConfig()
    phrase = getattr(cfg.prompt.region_phrases, region.label.value)
    caption = None
    failed = False
    if captioner is not None:
        try:
            caption = captioner(reference)
        except Exception:
            failed = True
    if caption:
        prompt = cfg.prompt.template.format(region=phrase, caption=caption)
    else:
        prompt = cfg.prompt.fallback_template.format(region=phrase)
    return prompt, cfg.prompt.negative, failed


# ---------------------------------------------------------------------------
# bundle


@dataclass
class ConditionBundle:
    canny: np.ndarray
    pose: np.ndarray
    segmentation: np.ndarray
    reference: np.ndarray
    mask: np.ndarray
    prompt: str
    negative_prompt: str
    scales: ScaleVector
    seeds: list[int]
    warnings: list[str]

    def save(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        save_rgb(os.path.join(out_dir, "canny.png"), self.canny)
        save_rgb(os.path.join(out_dir, "pose.png"), self.pose)
        save_rgb(os.path.join(out_dir, "seg.png"), self.segmentation)
        save_rgb(os.path.join(out_dir, "reference.png"), self.reference)
        save_mask(os.path.join(out_dir, "mask.png"), self.mask)
        doc = {
            "prompt": self.prompt,
            "negative_prompt": self.negative_prompt,
            "scales": self.scales.as_dict(),
            "seeds": self.seeds,
            "warnings": self.warnings,
        }
        with open(os.path.join(out_dir, "bundle.json"), "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, out_dir) -> "ConditionBundle":
        with open(os.path.join(out_dir, "bundle.json")) as f:
            doc = json.load(f)
        return cls(
            canny=load_rgb(os.path.join(out_dir, "canny.png")),
            pose=load_rgb(os.path.join(out_dir, "pose.png")),
            segmentation=load_rgb(os.path.join(out_dir, "seg.png")),
            reference=load_rgb(os.path.join(out_dir, "reference.png")),
            mask=load_mask(os.path.join(out_dir, "mask.png")),
            prompt=doc["prompt"],
            negative_prompt=doc["negative_prompt"],
            scales=ScaleVector(**doc["scales"]),
            seeds=list(doc["seeds"]),
            warnings=list(doc.get("warnings", [])),
        )


def build_bundle(
    inputs: DetectorInputs,
    reports: list[ArtifactReport],
    config: PipelineConfig | None = None,
    captioner: Captioner | None = None,
    scale_model: ScaleModel | None = None,
) -> ConditionBundle:
    """Compose condition images, prompt, scales, and the union repair mask."""
    cfg = config or PipelineConfig()
    distorted = as_rgb(inputs.distorted)
    h, w = distorted.shape[:2]
    warnings: list[str] = []

    if not reports:
        raise NothingToRepairError("no artifact reports: nothing to repair")
    mask = np.zeros((h, w), dtype=bool)
    for r in reports:
        mask |= r.mask

    scales = generate_scales(reports, cfg, model=scale_model, distorted=distorted, mask=mask)

    if inputs.reference is not None:
        canny_img, skipped = make_canny_condition(
            inputs.reference, inputs.cloth_mask,
            inputs.reference_pose, inputs.target_pose, w, h,
            sigma=cfg.canny.sigma, low=cfg.canny.low, high=cfg.canny.high,
            lambda_scale=cfg.warp.lambda_scale,
        )
        if skipped:
            warnings.append("canny condition built from unwarped cloth (insufficient correspondences)")
    else:
        canny_img, _ = make_canny_condition(
            distorted, None, None, None, w, h,
            sigma=cfg.canny.sigma, low=cfg.canny.low, high=cfg.canny.high,
        )
        warnings.append("canny condition built from distorted image (no reference)")

    pose_src = inputs.target_pose or inputs.observed_pose
    if pose_src is not None:
        pose_img = render_pose_condition(pose_src, w, h)
    else:
        pose_img = np.zeros((h, w, 3), dtype=np.uint8)
        warnings.append("pose condition empty (no pose sidecar)")

    if inputs.parsing is not None:
        seg_img = make_seg_condition(inputs.parsing)
        region = identify_mask_region(mask, inputs.parsing)
    else:
        seg_img = np.zeros((h, w, 3), dtype=np.uint8)
        region = MaskRegion(label=BodyRegion.OTHER, coverage=1.0)
        warnings.append("segmentation condition empty (no parsing sidecar)")

    reference = choose_reference(region, inputs.reference, distorted)
    prompt, negative, failed = generate_prompt(reference, region, captioner, cfg)
    if failed:
        warnings.append("captioner failed; template-only prompt")

    return ConditionBundle(
        canny=canny_img,
        pose=pose_img,
        segmentation=seg_img,
        reference=reference,
        mask=mask,
        prompt=prompt,
        negative_prompt=negative,
        scales=scales,
        seeds=list(cfg.run.seeds),
        warnings=warnings,
    )
