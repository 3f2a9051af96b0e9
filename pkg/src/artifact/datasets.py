"""DDI/VDI-format corpora: on-disk layout, loaders, validation, statistics,
and a synthetic distortion injector used as the test oracle.

Layout (manifest format 1):

    <root>/manifest.json
    <root>/<id>/distorted.png
    <root>/<id>/mask_<n>.png + mask_<n>.json   (region + artifact class)
    <root>/<id>/target.png
    <root>/<id>/ref_<m>.png
    <root>/<id>/cloth_mask.png                 (optional)
    <root>/<id>/detections.json
    <root>/<id>/pose_target.json / pose_observed.json / pose_reference.json
    <root>/<id>/parsing.png
"""

from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass, field

import numpy as np

from .detector import Detection, DetectorInputs, load_detections, save_detections
from .errors import CorpusFormatError, MissingFileError
from .parsing import BodyRegion
from .pose import BODY_JOINTS, Joint, PoseKeypoints
from .raster import (
    load_labels,
    load_mask,
    load_rgb,
    save_labels,
    save_mask,
    save_rgb,
)
from .vision import resize_nearest_mask

MANIFEST_FORMAT = 1

ARTIFACT_CLASSES = ("color_texture", "deformation", "cloth_design")


@dataclass(frozen=True)
class MaskAnnotation:
    mask: np.ndarray
    region: str          # BodyRegion value
    artifact_class: str  # ARTIFACT_CLASSES entry


@dataclass
class DatasetInstance:
    id: str
    task: str  # "VTON" | "PoseTransfer"
    distorted: np.ndarray
    masks: list[MaskAnnotation]
    target: np.ndarray
    references: list[np.ndarray]
    target_pose: PoseKeypoints | None = None
    observed_pose: PoseKeypoints | None = None
    reference_pose: PoseKeypoints | None = None
    detections: list[Detection] | None = None
    parsing: np.ndarray | None = None
    cloth_mask: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    def detector_inputs(self) -> DetectorInputs:
        return DetectorInputs(
            distorted=self.distorted,
            target_pose=self.target_pose,
            observed_pose=self.observed_pose,
            reference=self.references[0] if self.references else None,
            reference_pose=self.reference_pose,
            detections=self.detections,
            parsing=self.parsing,
            cloth_mask=self.cloth_mask,
        )

    def truth_masks(self) -> list[tuple[np.ndarray, str]]:
        return [(m.mask, m.artifact_class) for m in self.masks]


@dataclass
class Manifest:
    name: str
    task: str
    count: int
    resolutions: dict
    index: list[str]
    format: int = MANIFEST_FORMAT

    def to_dict(self) -> dict:
        return {
            "format": self.format,
            "name": self.name,
            "task": self.task,
            "count": self.count,
            "resolutions": self.resolutions,
            "index": self.index,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Manifest":
        try:
            return cls(
                name=doc["name"], task=doc["task"], count=int(doc["count"]),
                resolutions=dict(doc["resolutions"]), index=list(doc["index"]),
                format=int(doc.get("format", MANIFEST_FORMAT)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CorpusFormatError(f"malformed manifest: {e}") from e


def load_manifest(root) -> Manifest:
    path = os.path.join(root, "manifest.json")
    if not os.path.exists(path):
        raise MissingFileError(f"missing manifest: {path}")
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CorpusFormatError(f"manifest is not valid JSON: {e}") from e
    return Manifest.from_dict(doc)


def save_manifest(root, manifest: Manifest) -> None:
    with open(os.path.join(root, "manifest.json"), "w") as f:
        json.dump(manifest.to_dict(), f, indent=2, sort_keys=True)


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise MissingFileError(f"missing file: {path}")
    return path


def load_instance(root, instance_id: str, task: str = "VTON") -> DatasetInstance:
    """Load one instance; masks at a foreign resolution are resized with a warning."""
    d = os.path.join(root, instance_id)
    warnings: list[str] = []
    distorted = load_rgb(_require(os.path.join(d, "distorted.png")))
    target = load_rgb(_require(os.path.join(d, "target.png")))
    h, w = distorted.shape[:2]

    masks: list[MaskAnnotation] = []
    n = 0
    while os.path.exists(os.path.join(d, f"mask_{n}.png")):
        mask = load_mask(os.path.join(d, f"mask_{n}.png"))
        meta_path = _require(os.path.join(d, f"mask_{n}.json"))
        with open(meta_path) as f:
            try:
                meta = json.load(f)
                region = meta["region"]
                cls = meta["artifact_class"]
            except (json.JSONDecodeError, KeyError) as e:
                raise CorpusFormatError(f"malformed mask sidecar {meta_path}: {e}") from e
        if cls not in ARTIFACT_CLASSES:
            raise CorpusFormatError(f"unknown artifact class {cls!r} in {meta_path}")
        if mask.shape != (h, w):
            warnings.append(f"mask_{n} resized from {mask.shape[::-1]} to {(w, h)}")
            mask = resize_nearest_mask(mask, w, h)
        masks.append(MaskAnnotation(mask=mask, region=region, artifact_class=cls))
        n += 1

    references = []
    m = 0
    while os.path.exists(os.path.join(d, f"ref_{m}.png")):
        references.append(load_rgb(os.path.join(d, f"ref_{m}.png")))
        m += 1

    def opt(fname, loader):
        p = os.path.join(d, fname)
        return loader(p) if os.path.exists(p) else None

    return DatasetInstance(
        id=instance_id,
        task=task,
        distorted=distorted,
        masks=masks,
        target=target,
        references=references,
        target_pose=opt("pose_target.json", PoseKeypoints.load),
        observed_pose=opt("pose_observed.json", PoseKeypoints.load),
        reference_pose=opt("pose_reference.json", PoseKeypoints.load),
        detections=opt("detections.json", load_detections),
        parsing=opt("parsing.png", load_labels),
        cloth_mask=opt("cloth_mask.png", load_mask),
        warnings=warnings,
    )


def iter_instances(root):
    manifest = load_manifest(root)
    for instance_id in manifest.index:
        yield load_instance(root, instance_id, task=manifest.task)


# ---------------------------------------------------------------------------
# validation / statistics


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.violations


def validate_corpus(root) -> ValidationReport:
    """Walk the manifest and every indexed instance; list all violations."""
    report = ValidationReport()
    try:
        manifest = load_manifest(root)
    except (MissingFileError, CorpusFormatError) as e:
        report.violations.append(str(e))
        return report

    if manifest.count != len(manifest.index):
        report.violations.append(
            f"manifest count {manifest.count} != index length {len(manifest.index)}"
        )
    declared = manifest.resolutions.get("distorted")
    for instance_id in manifest.index:
        d = os.path.join(root, instance_id)
        if not os.path.isdir(d):
            report.violations.append(f"{instance_id}: instance directory missing")
            continue
        try:
            inst = load_instance(root, instance_id, task=manifest.task)
        except (MissingFileError, CorpusFormatError) as e:
            report.violations.append(f"{instance_id}: {e}")
            continue
        h, w = inst.distorted.shape[:2]
        if declared and [w, h] != list(declared):
            report.violations.append(
                f"{instance_id}: distorted resolution {w}x{h} != declared {declared[0]}x{declared[1]}"
            )
        for i, ann in enumerate(inst.masks):
            if not ann.mask.any():
                report.violations.append(f"{instance_id}: mask_{i} is empty")
        tdecl = manifest.resolutions.get("target")
        th, tw = inst.target.shape[:2]
        if tdecl and [tw, th] != list(tdecl):
            report.violations.append(
                f"{instance_id}: target resolution {tw}x{th} != declared {tdecl[0]}x{tdecl[1]}"
            )
        elif not tdecl and (th, tw) != inst.distorted.shape[:2]:
            report.violations.append(f"{instance_id}: target resolution undeclared and differs")
    return report


def corpus_stats(root) -> dict:
    """Histogram of mask region labels and artifact classes over all masks."""
    regions = {r.value: 0 for r in BodyRegion}
    classes = {c: 0 for c in ARTIFACT_CLASSES}
    total = 0
    for inst in iter_instances(root):
        for ann in inst.masks:
            total += 1
            if ann.region in regions:
                regions[ann.region] += 1
            classes[ann.artifact_class] += 1
    return {"total_masks": total, "regions": regions, "classes": classes}


# ---------------------------------------------------------------------------
# synthetic scene + distortion injector


@dataclass
class SynthScene:
    image: np.ndarray
    parsing: np.ndarray
    pose: PoseKeypoints
    detections: list[Detection]
    cloth: np.ndarray
    cloth_mask: np.ndarray


STRIPE_PERIOD = 16
STRIPE_DARK = (70, 70, 160)
STRIPE_LIGHT = (210, 210, 220)
SKIN = (224, 172, 140)
BACKGROUND = (200, 200, 200)


def _scene_pose(w: int, h: int) -> PoseKeypoints:
    u, v = w / 320.0, h / 448.0
    pts = {
        "nose": (160, 64), "neck": (160, 120),
        "r_shoulder": (110, 130), "r_elbow": (85, 200), "r_wrist": (60, 260),
        "l_shoulder": (210, 130), "l_elbow": (235, 200), "l_wrist": (260, 260),
        "r_hip": (130, 300), "r_knee": (125, 370), "r_ankle": (125, 430),
        "l_hip": (190, 300), "l_knee": (195, 370), "l_ankle": (195, 430),
        "r_eye": (150, 58), "l_eye": (170, 58), "r_ear": (140, 66), "l_ear": (180, 66),
    }
    joints = tuple(Joint(name, pts[name][0] * u, pts[name][1] * v, 0.9) for name in BODY_JOINTS)
    return PoseKeypoints(joints=joints)


def _fill_disc(img, parsing_map, cx, cy, r, color, label):
    h, w = img.shape[:2]
    y0, y1 = max(0, int(cy - r)), min(h, int(cy + r) + 1)
    x0, x1 = max(0, int(cx - r)), min(w, int(cx + r) + 1)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    sel = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    img[y0:y1, x0:x1][sel] = color
    parsing_map[y0:y1, x0:x1][sel] = label


def make_clean_scene(w: int = 320, h: int = 448, pose: PoseKeypoints | None = None) -> SynthScene:
    """Procedural person-with-striped-shirt scene with all sidecars."""
    if pose is None:
        pose = _scene_pose(w, h)
    img = np.full((h, w, 3), BACKGROUND, dtype=np.uint8)
    par = np.zeros((h, w), dtype=np.uint8)

    def j(name):
        joint = pose.get(name)
        return joint.x, joint.y

    diag = math.hypot(w, h)
    # legs / pants
    hx0, hy = int(j("r_hip")[0]), int(j("r_hip")[1])
    hx1 = int(j("l_hip")[0])
    ank = int(j("r_ankle")[1])
    img[hy:ank, hx0 - 10 : hx1 + 10] = (50, 50, 80)
    par[hy:ank, hx0 - 10 : hx1 + 10] = 9
    # striped shirt (the cloth)
    cx0 = int(j("r_shoulder")[0]) - 10
    cx1 = int(j("l_shoulder")[0]) + 10
    cy0 = int(j("neck")[1])
    cy1 = hy
    cloth_mask = np.zeros((h, w), dtype=bool)
    cloth_mask[cy0:cy1, cx0:cx1] = True
    ys = np.arange(h)
    stripe = ((ys // (STRIPE_PERIOD // 2)) % 2).astype(bool)
    shirt = np.where(stripe[:, None, None], STRIPE_LIGHT, STRIPE_DARK).astype(np.uint8)
    img[cloth_mask] = np.broadcast_to(shirt, (h, w, 3))[cloth_mask]
    par[cloth_mask] = 5
    # hair + face
    nx, ny = j("nose")
    _fill_disc(img, par, nx, ny - 12, 0.075 * diag * 0.9, (60, 40, 20), 2)
    _fill_disc(img, par, nx, ny + 4, 0.055 * diag * 0.9, SKIN, 13)
    # hands
    lw = j("l_wrist")
    rw = j("r_wrist")
    hand_r = 12 * w / 320.0
    _fill_disc(img, par, rw[0], rw[1], hand_r, SKIN, 15)
    _fill_disc(img, par, lw[0], lw[1], hand_r, SKIN, 14)

    def box_around(cx, cy, half):
        return (int(cx - half), int(cy - half), int(cx + half) + 1, int(cy + half) + 1)

    detections = [
        Detection("face", box_around(nx, ny + 4, 0.055 * diag), 0.95),
        Detection("hand_left", box_around(lw[0], lw[1], hand_r + 2), 0.95),
        Detection("hand_right", box_around(rw[0], rw[1], hand_r + 2), 0.95),
    ]
    cloth = np.zeros_like(img)
    cloth[cloth_mask] = img[cloth_mask]
    return SynthScene(
        image=img, parsing=par, pose=pose, detections=detections,
        cloth=cloth, cloth_mask=cloth_mask,
    )


SATURATED_COLORS = [(0, 200, 0), (255, 0, 255), (255, 140, 0), (0, 255, 255)]


def _cloth_rect(scene: SynthScene):
    ys, xs = np.nonzero(scene.cloth_mask)
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


@dataclass
class Injection:
    artifact_class: str
    mask: np.ndarray
    region: str
    meta: dict


def inject_color_texture(scene: SynthScene, rng: random.Random) -> tuple[np.ndarray, Injection]:
    """Paste a saturated color patch (3-10% of image area) onto the cloth."""
    h, w = scene.image.shape[:2]
    x0, y0, x1, y1 = _cloth_rect(scene)
    frac = rng.uniform(0.03, 0.10)
    side = int(math.sqrt(frac * w * h))
    side = min(side, x1 - x0 - 4, y1 - y0 - 4)
    px = rng.randint(x0 + 2, x1 - side - 2)
    py = rng.randint(y0 + 2, y1 - side - 2)
    color = SATURATED_COLORS[rng.randrange(len(SATURATED_COLORS))]
    out = scene.image.copy()
    out[py : py + side, px : px + side] = color
    mask = np.zeros((h, w), dtype=bool)
    mask[py : py + side, px : px + side] = True
    return out, Injection(
        artifact_class="color_texture", mask=mask, region=BodyRegion.UPPER_CLOTH.value,
        meta={"color": list(color), "box": [px, py, px + side, py + side]},
    )


def inject_cloth_design(scene: SynthScene, rng: random.Random) -> tuple[np.ndarray, Injection]:
    """Erase the stripe texture inside a patch of the cloth."""
    h, w = scene.image.shape[:2]
    x0, y0, x1, y1 = _cloth_rect(scene)
    side = rng.randint(56, 88)
    side = min(side, x1 - x0 - 4, y1 - y0 - 4)
    px = rng.randint(x0 + 2, x1 - side - 2)
    py = rng.randint(y0 + 2, y1 - side - 2)
    out = scene.image.copy()
    out[py : py + side, px : px + side] = STRIPE_DARK
    mask = np.zeros((h, w), dtype=bool)
    mask[py : py + side, px : px + side] = True
    return out, Injection(
        artifact_class="cloth_design", mask=mask, region=BodyRegion.UPPER_CLOTH.value,
        meta={"box": [px, py, px + side, py + side]},
    )


def inject_deformation(
    scene: SynthScene, rng: random.Random, displacement_fraction: float = 0.10
) -> tuple[np.ndarray, PoseKeypoints, list[Detection], np.ndarray, Injection]:
    """Displace one wrist: the hand moves in the image and the observed pose sidecar.

    Returns (distorted image, observed pose, detections, parsing, injection).
    """
    h, w = scene.image.shape[:2]
    diag = math.hypot(w, h)
    side = rng.choice(["l", "r"])
    joint = scene.pose.get(f"{side}_wrist")
    angle = rng.uniform(0, 2 * math.pi)
    dx = displacement_fraction * diag * math.cos(angle)
    dy = displacement_fraction * diag * math.sin(angle)
    nx = min(max(joint.x + dx, 14), w - 15)
    ny = min(max(joint.y + dy, 14), h - 15)
    displaced = scene.pose.replace_joint(f"{side}_wrist", nx, ny)
    moved = make_clean_scene(w, h, pose=displaced)
    mask = np.zeros((h, w), dtype=bool)
    ys, xs = np.mgrid[0:h, 0:w]
    r = 0.08 * diag
    mask |= (xs - joint.x) ** 2 + (ys - joint.y) ** 2 <= r * r
    return (
        moved.image,
        displaced,
        moved.detections,
        moved.parsing,
        Injection(
            artifact_class="deformation", mask=mask, region=BodyRegion.HANDS.value,
            meta={"joint": f"{side}_wrist", "dx": dx, "dy": dy},
        ),
    )


def synth_corpus(
    out_root,
    plan: dict[str, int],
    seed: int = 0,
    width: int = 320,
    height: int = 448,
    name: str = "synthetic",
) -> str:
    """Fabricate a valid VDI-format corpus with ground-truth artifact masks.

    ``plan`` maps artifact class (or "clean") to an instance count.
    """
    rng = random.Random(seed)
    os.makedirs(out_root, exist_ok=True)
    scene = make_clean_scene(width, height)
    index = []
    for cls in ("color_texture", "deformation", "cloth_design", "clean"):
        for i in range(plan.get(cls, 0)):
            instance_id = f"{cls}_{i:03d}"
            index.append(instance_id)
            d = os.path.join(out_root, instance_id)
            os.makedirs(d, exist_ok=True)

            observed = scene.pose
            detections = scene.detections
            par = scene.parsing
            injection = None
            if cls == "color_texture":
                distorted, injection = inject_color_texture(scene, rng)
            elif cls == "cloth_design":
                distorted, injection = inject_cloth_design(scene, rng)
            elif cls == "deformation":
                distorted, observed, detections, par, injection = inject_deformation(scene, rng)
            else:
                distorted = scene.image.copy()

            save_rgb(os.path.join(d, "distorted.png"), distorted)
            save_rgb(os.path.join(d, "target.png"), scene.image)
            save_rgb(os.path.join(d, "ref_0.png"), scene.cloth)
            save_mask(os.path.join(d, "cloth_mask.png"), scene.cloth_mask)
            save_labels(os.path.join(d, "parsing.png"), par)
            scene.pose.save(os.path.join(d, "pose_target.json"))
            observed.save(os.path.join(d, "pose_observed.json"))
            scene.pose.save(os.path.join(d, "pose_reference.json"))
            save_detections(os.path.join(d, "detections.json"), detections)
            if injection is not None:
                save_mask(os.path.join(d, "mask_0.png"), injection.mask)
                with open(os.path.join(d, "mask_0.json"), "w") as f:
                    json.dump({"region": injection.region, "artifact_class": injection.artifact_class}, f)
                with open(os.path.join(d, "injection.json"), "w") as f:
                    json.dump({"class": injection.artifact_class, **injection.meta}, f)

    manifest = Manifest(
        name=name, task="VTON", count=len(index),
        resolutions={"distorted": [width, height], "target": [width, height]},
        index=index,
    )
    save_manifest(out_root, manifest)
    return out_root
