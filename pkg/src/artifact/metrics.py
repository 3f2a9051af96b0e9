"""Quality metrics and the before/after evaluation harness."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .detector import ArtifactClass, ArtifactReport
from .errors import DimensionMismatchError
from .raster import as_mask, as_rgb, check_same_dims
from .vision import gaussian_kernel1d, to_grayscale

# SSIM constants (Wang et al. defaults on a [0,1] dynamic range)
_K1 = 0.01
_K2 = 0.03
_WINDOW = 11
_SIGMA = 1.5


def _ssim_kernel1d() -> np.ndarray:
    x = np.arange(_WINDOW, dtype=np.float64) - (_WINDOW - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * _SIGMA * _SIGMA))
    return k / k.sum()


_K = _ssim_kernel1d()


def _filter_valid(img: np.ndarray) -> np.ndarray:
    # separable correlation with the Gaussian window, valid positions only
    half = _WINDOW // 2
    t = ndimage.correlate1d(img, _K, axis=1, mode="constant")
    t = ndimage.correlate1d(t, _K, axis=0, mode="constant")
    return t[half : img.shape[0] - half, half : img.shape[1] - half]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over valid 11x11 Gaussian windows."""
    a = as_rgb(a)
    b = as_rgb(b)
    check_same_dims(a, b, "ssim inputs")
    x = to_grayscale(a)
    y = to_grayscale(b)
    if x.shape[0] < _WINDOW or x.shape[1] < _WINDOW:
        raise DimensionMismatchError("image smaller than the SSIM window")
    c1 = _K1 * _K1
    c2 = _K2 * _K2
    mx = _filter_valid(x)
    my = _filter_valid(y)
    mxx = _filter_valid(x * x)
    myy = _filter_valid(y * y)
    mxy = _filter_valid(x * y)
    vx = mxx - mx * mx
    vy = myy - my * my
    cxy = mxy - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union; two empty masks count as identical (ded 1)."""
    a = as_mask(a)
    b = as_mask(b)
    check_same_dims(a, b, "iou masks")
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return float(int((a & b).sum()) / union)


@dataclass
class DetectionScore:
    precision: dict[str, float]
    recall: dict[str, float]
    mean_matched_iou: float
    matches: int


def detection_score(
    predicted: list[ArtifactReport],
    truth: list[tuple[np.ndarray, str]],
    iou_thresh: float = 0.3,
) -> DetectionScore:
    """Greedy IoU matching between reports and ground-truth masks.

    A match requires IoU >= iou_thresh and class equality. Precision with no
    predictions is reported as 1 by convention (nothing asserted, nothing wrong).
    """
    classes = [c.value for c in ArtifactClass]
    pairs = []
    for pi, rep in enumerate(predicted):
        for ti, (tmask, tcls) in enumerate(truth):
            if rep.artifact_class.value != tcls:
                continue
            iou = mask_iou(rep.mask, tmask)
            if iou >= iou_thresh:
                pairs.append((iou, pi, ti))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p, used_t = set(), set()
    matched_iou = []
    matched_by_class = {c: 0 for c in classes}
    for iou, pi, ti in pairs:
        if pi in used_p or ti in used_t:
            continue
        used_p.add(pi)
        used_t.add(ti)
        matched_iou.append(iou)
        matched_by_class[predicted[pi].artifact_class.value] += 1

    precision, recall = {}, {}
    for c in classes:
        n_pred = sum(1 for r in predicted if r.artifact_class.value == c)
        n_true = sum(1 for _, tc in truth if tc == c)
        precision[c] = matched_by_class[c] / n_pred if n_pred else 1.0
        recall[c] = matched_by_class[c] / n_true if n_true else 1.0
    return DetectionScore(
        precision=precision,
        recall=recall,
        mean_matched_iou=float(np.mean(matched_iou)) if matched_iou else 0.0,
        matches=len(matched_iou),
    )


# ---------------------------------------------------------------------------
# evaluation harness


CSV_HEADER = "id,ssim_before,ssim_after,det_iou,p_color,r_color,p_deform,r_deform,p_cloth,r_cloth"

_CLASS_KEYS = {
    "color_texture": ("p_color", "r_color"),
    "deformation": ("p_deform", "r_deform"),
    "cloth_design": ("p_cloth", "r_cloth"),
}


@dataclass
class EvalRow:
    id: str
    ssim_before: float
    ssim_after: float
    det_iou: float
    precision: dict[str, float]
    recall: dict[str, float]
    truth_classes: list[str]
    error: str | None = None


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)
    config_digest: str = ""
    corpus: str = ""

    def aggregate(self) -> dict:
        ok = [r for r in self.rows if r.error is None]
        if not ok:
            return {"instances": 0}
        return {
            "instances": len(ok),
            "mean_ssim_before": float(np.mean([r.ssim_before for r in ok])),
            "mean_ssim_after": float(np.mean([r.ssim_after for r in ok])),
            "mean_det_iou": float(np.mean([r.det_iou for r in ok])),
            "recall": {
                c: float(np.mean([r.recall[c] for r in ok if c in r.truth_classes]))
                for c in _CLASS_KEYS
                if any(c in r.truth_classes for r in ok)
            },
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        for r in sorted(self.rows, key=lambda r: r.id):
            writer.writerow(
                [
                    r.id,
                    f"{r.ssim_before:.6f}",
                    f"{r.ssim_after:.6f}",
                    f"{r.det_iou:.6f}",
                    f"{r.precision['color_texture']:.4f}",
                    f"{r.recall['color_texture']:.4f}",
                    f"{r.precision['deformation']:.4f}",
                    f"{r.recall['deformation']:.4f}",
                    f"{r.precision['cloth_design']:.4f}",
                    f"{r.recall['cloth_design']:.4f}",
                ]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "corpus": self.corpus,
            "config_digest": self.config_digest,
            "aggregate": self.aggregate(),
            "failures": self.failures,
            # lpips/fid reserved for metric-network-equipped runs
            "rows": [
                {
                    "id": r.id,
                    "ssim_before": r.ssim_before,
                    "ssim_after": r.ssim_after,
                    "det_iou": r.det_iou,
                    "precision": r.precision,
                    "recall": r.recall,
                    "lpips": None,
                    "fid": None,
                }
                for r in sorted(self.rows, key=lambda r: r.id)
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def eval_run(
    corpus_root,
    config=None,
    backend_mode: str = "mock:oracle",
    out_dir=None,
    iou_thresh: float = 0.3,
    parallelism: int = 1,
) -> EvalReport:
    """Before/after SSIM plus detection scores over a corpus.

    Deterministic with the mock backends; per-instance failures are recorded
    and the run continues.
    """
    import hashlib
    from concurrent.futures import ThreadPoolExecutor

    from .config import PipelineConfig, dump_config
    from .datasets import iter_instances
    from .orchestrator import MockBackend, HttpBackend, repair
    from .raster import as_rgb as _rgb
    from .vision import resize_bilinear

    cfg = config or PipelineConfig()
    report = EvalReport(
        corpus=str(corpus_root),
        config_digest=hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16],
    )

    def make_backend(instance):
        if backend_mode == "mock:oracle":
            return MockBackend("oracle", target=instance.target)
        if backend_mode == "mock:blur":
            return MockBackend("blur_fill", blur_radius=cfg.backend.blur_fill_radius)
        if backend_mode.startswith("http:"):
            return HttpBackend(backend_mode[len("http:"):], timeout=cfg.backend.timeout, retries=cfg.backend.retries)
        raise ValueError(f"unknown backend {backend_mode!r}")

    def run_one(instance):
        target = _rgb(instance.target)
        h, w = instance.distorted.shape[:2]
        if target.shape[:2] != (h, w):
            target = resize_bilinear(target, w, h)
        before = ssim(instance.distorted, target)
        result = repair(
            instance.detector_inputs(), cfg, make_backend(instance), target=target
        )
        after = ssim(result.repaired, target)
        # context audit, independent of the orchestrator's own guarantee
        union = np.zeros((h, w), dtype=bool)
        for rep in result.reports:
            union |= rep.mask
        outside = ~union
        if not np.array_equal(result.repaired[outside], instance.distorted[outside]):
            raise AssertionError("context pixels modified outside the union mask")
        truth = instance.truth_masks()
        score = detection_score(result.reports, truth, iou_thresh=iou_thresh)
        matched = [mask_iou(r.mask, t) for r in result.reports for t, _ in truth]
        return EvalRow(
            id=instance.id,
            ssim_before=before,
            ssim_after=after,
            det_iou=score.mean_matched_iou,
            precision=score.precision,
            recall=score.recall,
            truth_classes=[c for _, c in truth],
        )

    instances = list(iter_instances(corpus_root))
    if parallelism <= 1:
        outcomes = []
        for inst in instances:
            try:
                outcomes.append((inst.id, run_one(inst), None))
            except Exception as e:
                outcomes.append((inst.id, None, e))
    else:
        def safe(inst):
            try:
                return inst.id, run_one(inst), None
            except Exception as e:
                return inst.id, None, e

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(safe, instances))

    for instance_id, row, exc in outcomes:
        if exc is not None:
            report.failures[instance_id] = f"{type(exc).__name__}: {exc}"
        else:
            report.rows.append(row)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _atomic_write(os.path.join(out_dir, "report.csv"), report.to_csv())
        _atomic_write(os.path.join(out_dir, "report.json"), report.to_json())
        # two-column TSV plot data: ssim before vs after per instance
        lines = ["before\tafter"]
        for r in sorted(report.rows, key=lambda r: r.id):
            lines.append(f"{r.ssim_before:.6f}\t{r.ssim_after:.6f}")
        _atomic_write(os.path.join(out_dir, "ssim_scatter.tsv"), "\n".join(lines) + "\n")
    return report
