"""Four-pronged automatic artifact detector.

Strategies: feature-confidence thresholding, color-palette comparison,
Canny-edge matching against the warped cloth, and pose-keypoint matching.
Their regions are classified and fused into per-artifact reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import parsing, vision, warp
from .config import DetectorConfig, PipelineConfig
from .errors import EmptyRegionError, InsufficientCorrespondenceError, ParameterError
from .pose import CONFIDENT, PoseKeypoints
from .raster import as_mask, as_rgb, check_same_dims
from .vision import connected_components, dilate, erode


class Strategy(Enum):
    FEATURE_CONFIDENCE = "feature_confidence"
    PALETTE_MISMATCH = "palette_mismatch"
    EDGE_MISMATCH = "edge_mismatch"
    POSE_MISMATCH = "pose_mismatch"


class ArtifactClass(Enum):
    COLOR_TEXTURE = "color_texture"
    DEFORMATION = "deformation"
    CLOTH_DESIGN = "cloth_design"


# on overlapping regions the most severe class wins ties
CLASS_PRIORITY = [ArtifactClass.DEFORMATION, ArtifactClass.CLOTH_DESIGN, ArtifactClass.COLOR_TEXTURE]

EXPECTED_FEATURES = ("face", "hand_left", "hand_right")

# closing radius used to cluster edge-mismatch pixels into solid regions
_CLUSTER_RADIUS = 12


@dataclass(frozen=True)
class Detection:
    label: str
    box: tuple[int, int, int, int]  # x0, y0, x1, y1 (exclusive)
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ParameterError(f"detection confidence out of [0,1]: {self.confidence}")


@dataclass(frozen=True)
class ArtifactRegion:
    mask: np.ndarray
    strategy: Strategy
    score: float

    def __post_init__(self):
        if not self.mask.any():
            raise ParameterError("artifact region mask must be non-empty")
        if self.score < 0:
            raise ParameterError("artifact region score must be >= 0")


@dataclass(frozen=True)
class ArtifactReport:
    artifact_class: ArtifactClass
    mask: np.ndarray                 # padded mask handed to the inpainter
    core_mask: np.ndarray            # pre-padding mask (conservation invariant)
    strategies: frozenset[Strategy]
    score: float


@dataclass
class DetectorInputs:
    distorted: np.ndarray
    target_pose: PoseKeypoints | None = None
    observed_pose: PoseKeypoints | None = None
    reference: np.ndarray | None = None
    reference_pose: PoseKeypoints | None = None  # None => reference already aligned
    detections: list[Detection] | None = None
    parsing: np.ndarray | None = None
    cloth_mask: np.ndarray | None = None


@dataclass
class DetectionResult:
    reports: list[ArtifactReport]
    skipped: list[str] = field(default_factory=list)


def _box_mask(shape: tuple[int, int], box: tuple[int, int, int, int]) -> np.ndarray:
    h, w = shape
    x0, y0, x1, y1 = box
    m = np.zeros(shape, dtype=bool)
    m[max(0, y0) : min(h, y1), max(0, x0) : min(w, x1)] = True
    return m


def _joint_box(x: float, y: float, half: float) -> tuple[int, int, int, int]:
    return (int(x - half), int(y - half), int(x + half) + 1, int(y + half) + 1)


def detect_low_confidence_features(
    detections: list[Detection],
    threshold: float,
    shape: tuple[int, int],
    pose: PoseKeypoints | None = None,
    box_dilate: int = 8,
) -> list[ArtifactRegion]:
    """Flag detections below the confidence threshold and missing expected features.

    An expected feature (face, both hands) with no detection at all counts as
    confidence 0; its region is predicted from the pose keypoints.
    """
    h, w = shape
    diag = math.hypot(w, h)
    regions = []
    seen = set()
    for det in detections:
        seen.add(det.label)
        if det.confidence < threshold:
            mask = dilate(_box_mask(shape, det.box), box_dilate)
            if mask.any():
                score = (threshold - det.confidence) / threshold if threshold > 0 else 0.0
                regions.append(ArtifactRegion(mask=mask, strategy=Strategy.FEATURE_CONFIDENCE, score=score))
    if pose is not None:
        anchors = {
            "face": ("nose", 0.06 * diag),
            "hand_left": ("l_wrist", 0.04 * diag),
            "hand_right": ("r_wrist", 0.04 * diag),
        }
        for feature in EXPECTED_FEATURES:
            if feature in seen:
                continue
            joint_name, half = anchors[feature]
            j = pose.confident(joint_name)
            if j is None:
                continue
            mask = dilate(_box_mask(shape, _joint_box(j.x, j.y, half)), box_dilate)
            if mask.any():
                regions.append(ArtifactRegion(mask=mask, strategy=Strategy.FEATURE_CONFIDENCE, score=1.0))
    return regions


def compare_palettes(
    image: np.ndarray,
    reference: np.ndarray,
    region: np.ndarray,
    k: int = 8,
    tau: float = 60.0,
    seed: int = 17,
    min_area_fraction: float = 0.002,
) -> list[ArtifactRegion]:
    """Flag pixels whose quantized color has no close match in the reference palette."""
    image = as_rgb(image)
    reference = as_rgb(reference)
    region = as_mask(region)
    check_same_dims(image, region, "image and region")
    if not region.any():
        raise EmptyRegionError("palette comparison region is empty")

    pal_img, labels = vision.quantize_palette(image, k, seed, region=region)
    pal_ref, _ = vision.quantize_palette(reference, k, seed, region=region if reference.shape == image.shape else None)

    diff = pal_img.entries[:, None, :] - pal_ref.entries[None, :, :]
    nearest = np.sqrt(np.sum(diff * diff, axis=2)).min(axis=1)
    alien = np.nonzero(nearest > tau)[0]
    if len(alien) == 0:
        return []

    candidate = np.isin(labels, alien)
    min_area = min_area_fraction * float(region.sum())
    regions = []
    for comp in connected_components(candidate):
        if comp.area < min_area:
            continue
        present = np.unique(labels[comp.mask])
        score = float(max(nearest[e] for e in present if e in set(alien.tolist())))
        regions.append(ArtifactRegion(mask=comp.mask, strategy=Strategy.PALETTE_MISMATCH, score=score))
    return regions


def match_canny_edges(
    inputs: DetectorInputs,
    canny_sigma: float = 1.4,
    canny_low: float = 0.1,
    canny_high: float = 0.25,
    dist_thresh: float = 6.0,
    min_area_fraction: float = 0.002,
    lambda_scale: float = 1e-3,
) -> tuple[list[ArtifactRegion], str | None]:
    """Compare Canny edges of the warped cloth against the distorted image.

    Returns (regions, skip_reason); the strategy skips itself when the warp
    lacks correspondences instead of failing the whole detector.
    """
    if inputs.reference is None or inputs.cloth_mask is None:
        return [], "canny matching skipped: no reference cloth or cloth mask"
    cloth = as_rgb(inputs.reference)
    cloth_mask = as_mask(inputs.cloth_mask)
    distorted = as_rgb(inputs.distorted)

    if inputs.reference_pose is not None and inputs.target_pose is not None:
        src_pts, dst_pts = warp.pose_correspondences(inputs.reference_pose, inputs.target_pose)
        if len(src_pts) < 3:
            return [], "canny matching skipped: insufficient warp correspondences"
        lam = warp.default_lambda(src_pts, lambda_scale)
        h, w = distorted.shape[:2]
        warped = warp.apply_tps(src_pts, dst_pts, cloth, w, h, lam=lam)
        warped_mask = warp.apply_tps(src_pts, dst_pts, cloth_mask, w, h, lam=lam, is_mask=True)
    else:
        warped, warped_mask = cloth, cloth_mask

    if not warped_mask.any():
        return [], None

    edges_cloth = vision.canny(vision.to_grayscale(warped), canny_low, canny_high, canny_sigma)
    edges_img = vision.canny(vision.to_grayscale(distorted), canny_low, canny_high, canny_sigma)
    dist = vision.edge_distance(edges_cloth, edges_img, warped_mask)

    flagged = dist.field > dist_thresh
    if not flagged.any():
        return [], None
    # bridge nearby flagged edge fragments into solid clusters; fixed radius
    # keeps raising dist_thresh monotone (never grows the flagged set)
    clustered = erode(dilate(flagged, _CLUSTER_RADIUS), _CLUSTER_RADIUS) | flagged
    min_area = min_area_fraction * float(warped_mask.sum())
    regions = []
    for comp in connected_components(clustered):
        if comp.area < min_area:
            continue
        excess = dist.field[comp.mask & flagged] - dist_thresh
        score = float(excess.mean()) if excess.size else 0.0
        regions.append(ArtifactRegion(mask=comp.mask, strategy=Strategy.EDGE_MISMATCH, score=score))
    return regions, None


def _disc_mask(shape: tuple[int, int], cx: float, cy: float, radius: float) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius


def match_pose_keypoints(
    target: PoseKeypoints,
    observed: PoseKeypoints,
    tol_fraction: float,
    shape: tuple[int, int],
) -> list[ArtifactRegion]:
    """Flag joints rendered far from their intended position (or not at all)."""
    h, w = shape
    tol = tol_fraction * math.hypot(w, h)
    flagged: dict[str, tuple[np.ndarray, float]] = {}
    for j in target.joints:
        if j.confidence < CONFIDENT:
            continue
        obs = observed.confident(j.name)
        if obs is None:
            score = 2.0  # missing: beyond any finite deviation we can measure
        else:
            dev = math.hypot(obs.x - j.x, obs.y - j.y)
            if dev <= tol:
                continue
            score = dev / tol
        mask = _disc_mask(shape, j.x, j.y, 2 * tol)
        if mask.any():
            flagged[j.name] = (mask, score)

    if not flagged:
        return []
    # merge regions of adjacent skeleton joints (union-find over flagged joints)
    parent = {name: name for name in flagged}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in target.skeleton:
        if a in flagged and b in flagged:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    groups: dict[str, list[str]] = {}
    for name in flagged:
        groups.setdefault(find(name), []).append(name)
    regions = []
    for members in groups.values():
        mask = np.zeros(shape, dtype=bool)
        score = 0.0
        for m in members:
            mask |= flagged[m][0]
            score = max(score, flagged[m][1])
        regions.append(ArtifactRegion(mask=mask, strategy=Strategy.POSE_MISMATCH, score=score))
    return regions


def classify_artifact(region: ArtifactRegion, parsing_map: np.ndarray | None) -> ArtifactClass:
    """Map a strategy region to one of the three artifact classes."""
    if region.strategy == Strategy.PALETTE_MISMATCH:
        return ArtifactClass.COLOR_TEXTURE
    if region.strategy in (Strategy.POSE_MISMATCH, Strategy.FEATURE_CONFIDENCE):
        return ArtifactClass.DEFORMATION
    # edge mismatch: cloth design when the mask sits on clothing
    if parsing_map is not None:
        label = parsing.majority_label(parsing_map, region.mask)
        if label in parsing.CLOTHING_LABEL_IDS:
            return ArtifactClass.CLOTH_DESIGN
    return ArtifactClass.COLOR_TEXTURE


def fuse(
    regions: list[ArtifactRegion],
    parsing_map: np.ndarray | None,
    shape: tuple[int, int],
    padding: int = 12,
) -> list[ArtifactReport]:
    """Merge overlapping strategy regions into per-artifact reports."""
    if not regions:
        return []
    union = np.zeros(shape, dtype=bool)
    for r in regions:
        union |= r.mask
    classes = [classify_artifact(r, parsing_map) for r in regions]
    reports = []
    for comp in connected_components(union):
        hits = [(r, c) for r, c in zip(regions, classes) if (r.mask & comp.mask).any()]
        best_score = max(r.score for r, _ in hits)
        top = [c for r, c in hits if r.score == best_score]
        cls = next(c for c in CLASS_PRIORITY if c in top)
        reports.append(
            ArtifactReport(
                artifact_class=cls,
                mask=dilate(comp.mask, padding),
                core_mask=comp.mask,
                strategies=frozenset(r.strategy for r, _ in hits),
                score=best_score,
            )
        )
    return reports


def detect(inputs: DetectorInputs, config: PipelineConfig | None = None) -> DetectionResult:
    """Run every applicable strategy, classify, and fuse."""
    cfg = config or PipelineConfig()
    d: DetectorConfig = cfg.detector
    distorted = as_rgb(inputs.distorted)
    shape = distorted.shape[:2]
    regions: list[ArtifactRegion] = []
    skipped: list[str] = []

    if inputs.detections is not None:
        regions += detect_low_confidence_features(
            inputs.detections, d.confidence_threshold, shape,
            pose=inputs.target_pose, box_dilate=d.detection_dilate,
        )
    else:
        skipped.append("feature confidence skipped: no detections sidecar")

    if inputs.reference is not None:
        region = inputs.cloth_mask if inputs.cloth_mask is not None else np.ones(shape, dtype=bool)
        if region.any():
            regions += compare_palettes(
                distorted, inputs.reference, region,
                k=d.palette_k, tau=d.palette_tau, seed=d.palette_seed,
                min_area_fraction=d.min_area_fraction,
            )
    else:
        skipped.append("palette comparison skipped: no reference image")

    edge_regions, skip = match_canny_edges(
        inputs,
        canny_sigma=cfg.canny.sigma, canny_low=cfg.canny.low, canny_high=cfg.canny.high,
        dist_thresh=d.edge_dist_thresh, min_area_fraction=d.min_area_fraction,
        lambda_scale=cfg.warp.lambda_scale,
    )
    regions += edge_regions
    if skip:
        skipped.append(skip)

    if inputs.target_pose is not None and inputs.observed_pose is not None:
        regions += match_pose_keypoints(inputs.target_pose, inputs.observed_pose, d.pose_tol_fraction, shape)
    else:
        skipped.append("pose matching skipped: missing pose sidecar")

    reports = fuse(regions, inputs.parsing, shape, padding=d.padding)
    return DetectionResult(reports=reports, skipped=skipped)


# --- sidecar I/O -----------------------------------------------------------


def load_detections(path) -> list[Detection]:
    import json

    with open(path) as f:
        doc = json.load(f)
    return [
        Detection(label=d["label"], box=tuple(d["box"]), confidence=float(d["confidence"]))
        for d in doc
    ]


def save_detections(path, detections: list[Detection]) -> None:
    import json

    with open(path, "w") as f:
        json.dump(
            [{"label": d.label, "box": list(d.box), "confidence": d.confidence} for d in detections],
            f,
        )
