"""End-to-end repair pipeline: detect -> bundle -> inpaint -> composite.

The diffusion model sits behind a backend interface; a deterministic mock
backend keeps the whole pipeline testable without any model weights.
"""

from __future__ import annotations

import base64
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np
import requests
from PIL import Image

from .conditioning import Captioner, ConditionBundle, ScaleModel, build_bundle
from .config import PipelineConfig
from .detector import ArtifactReport, DetectorInputs, detect
from .errors import BackendError, DimensionMismatchError, ParameterError, TransportError
from .raster import as_mask, as_rgb, check_same_dims, save_rgb
from .vision import distance_transform, gaussian_blur, to_grayscale

# ---------------------------------------------------------------------------
# compositing


def composite(original: np.ndarray, generated: np.ndarray, mask: np.ndarray, feather: int = 0) -> np.ndarray:
    """Blend generated pixels into the mask; context pixels stay bit-exact.

    The feather band lies strictly inside the mask, so pixels outside the
    mask are always copied from the original unchanged.
    """
    original = as_rgb(original)
    generated = as_rgb(generated)
    mask = as_mask(mask)
    check_same_dims(original, generated, "original and generated")
    check_same_dims(original, mask, "image and mask")
    if feather < 0:
        raise ParameterError("feather must be >= 0")
    out = original.copy()
    if not mask.any():
        return out
    if feather == 0 or not (~mask).any():
        out[mask] = generated[mask]
        return out
    depth = distance_transform(~mask)  # distance to the nearest context pixel
    alpha = np.clip(depth / float(feather + 1), 0.0, 1.0)
    blend = (
        original.astype(np.float64) * (1.0 - alpha[..., None])
        + generated.astype(np.float64) * alpha[..., None]
    )
    out[mask] = np.clip(np.rint(blend), 0, 255).astype(np.uint8)[mask]
    return out


# ---------------------------------------------------------------------------
# backend interface


@dataclass(frozen=True)
class InpaintRequest:
    image: np.ndarray
    mask: np.ndarray
    bundle: ConditionBundle
    seed: int
    out_w: int
    out_h: int


@dataclass(frozen=True)
class InpaintResponse:
    image: np.ndarray
    seed: int
    backend_id: str
    latency_ms: float


class Backend(Protocol):
    def inpaint(self, request: InpaintRequest) -> InpaintResponse: ...


class MockBackend:
    """Deterministic test double.

    oracle mode copies the instance target inside the mask; blur_fill fills
    the mask from Gaussian-blurred surroundings.
    """

    def __init__(self, mode: str, target: np.ndarray | None = None, blur_radius: int = 8):
        if mode not in ("oracle", "blur_fill"):
            raise ParameterError(f"unknown mock backend mode {mode!r}")
        if mode == "oracle" and target is None:
            raise ParameterError("oracle mode requires the instance target")
        self.mode = mode
        self.target = None if target is None else as_rgb(target)
        self.blur_radius = blur_radius
        self.calls = 0

    def inpaint(self, request: InpaintRequest) -> InpaintResponse:
        t0 = time.perf_counter()
        self.calls += 1
        image = as_rgb(request.image)
        mask = as_mask(request.mask)
        if self.mode == "oracle":
            target = self.target
            if target.shape != image.shape:
                raise DimensionMismatchError("oracle target does not match request image")
            out = image.copy()
            out[mask] = target[mask]
        else:
            sigma = max(self.blur_radius / 2.0, 0.5)
            channels = []
            for c in range(3):
                g = image[..., c].astype(np.float64) / 255.0
                channels.append(np.clip(np.rint(gaussian_blur(g, sigma) * 255.0), 0, 255))
            blurred = np.stack(channels, axis=-1).astype(np.uint8)
            out = image.copy()
            out[mask] = blurred[mask]
        return InpaintResponse(
            image=out,
            seed=request.seed,
            backend_id=f"mock:{self.mode}",
            latency_ms=(time.perf_counter() - t0) * 1000.0,
        )


# ---------------------------------------------------------------------------
# HTTP backend client (wire protocol)


def encode_png_b64(img: np.ndarray, mode: str = "RGB") -> str:
    if mode == "L":
        pil = Image.fromarray(np.where(as_mask(img), 255, 0).astype(np.uint8), mode="L")
    else:
        pil = Image.fromarray(as_rgb(img), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_b64(data: str, mode: str = "RGB") -> np.ndarray:
    try:
        raw = base64.b64decode(data, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            if mode == "L":
                return np.asarray(im.convert("L"), dtype=np.uint8) >= 128
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as e:
        raise BackendError(f"malformed image payload: {e}") from e


def request_to_wire(request: InpaintRequest) -> dict:
    b = request.bundle
    return {
        "image": encode_png_b64(request.image),
        "mask": encode_png_b64(request.mask, mode="L"),
        "canny": encode_png_b64(b.canny),
        "pose": encode_png_b64(b.pose),
        "seg": encode_png_b64(b.segmentation),
        "reference": encode_png_b64(b.reference),
        "prompt": b.prompt,
        "negative_prompt": b.negative_prompt,
        "scales": b.scales.as_dict(),
        "seed": request.seed,
        "width": request.out_w,
        "height": request.out_h,
    }


class HttpBackend:
    """Client for the inpainting wire protocol (POST /inpaint, GET /health)."""

    def __init__(self, endpoint: str, timeout: float = 30.0, retries: int = 2, backoff: float = 0.25):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.attempts_log: list[int] = []

    def health(self) -> dict:
        try:
            resp = requests.get(f"{self.endpoint}/health", timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(f"health check failed: {e}") from e
        try:
            return resp.json()
        except ValueError as e:
            raise BackendError(f"malformed health payload: {e}") from e

    def inpaint(self, request: InpaintRequest) -> InpaintResponse:
        payload = request_to_wire(request)
        t0 = time.perf_counter()
        attempts = 0
        last_exc: Exception | None = None
        while attempts <= self.retries:
            attempts += 1
            try:
                resp = requests.post(f"{self.endpoint}/inpaint", json=payload, timeout=self.timeout)
                break
            except requests.RequestException as e:
                last_exc = e
                if attempts <= self.retries:
                    time.sleep(self.backoff * (2 ** (attempts - 1)))
        else:
            self.attempts_log.append(attempts)
            raise TransportError(f"backend unreachable after {attempts} attempts: {last_exc}")
        self.attempts_log.append(attempts)

        if resp.status_code != 200:
            try:
                message = resp.json().get("error", resp.text)
            except ValueError:
                message = resp.text
            raise BackendError(f"backend error ({resp.status_code}): {message}")
        try:
            doc = resp.json()
        except ValueError as e:
            raise BackendError(f"malformed response payload: {e}") from e
        if "image" not in doc:
            raise BackendError("response payload missing 'image'")
        image = decode_png_b64(doc["image"])
        if image.shape[:2] != (request.out_h, request.out_w):
            raise DimensionMismatchError(
                f"backend returned {image.shape[1]}x{image.shape[0]}, "
                f"expected {request.out_w}x{request.out_h}"
            )
        return InpaintResponse(
            image=image,
            seed=int(doc.get("seed", request.seed)),
            backend_id=str(doc.get("backend", "http")),
            latency_ms=(time.perf_counter() - t0) * 1000.0,
        )


# ---------------------------------------------------------------------------
# repair pipeline


@dataclass
class RepairResult:
    repaired: np.ndarray
    reports: list[ArtifactReport]
    bundle: ConditionBundle | None
    candidates: dict[int, np.ndarray]
    chosen_seed: int | None
    skipped: list[str]
    audit: list[dict] = field(default_factory=list)


def repair(
    inputs: DetectorInputs,
    config: PipelineConfig | None = None,
    backend: Backend | None = None,
    captioner: Captioner | None = None,
    scale_model: ScaleModel | None = None,
    target: np.ndarray | None = None,
) -> RepairResult:
    """Full pipeline for one instance.

    With a target image available (evaluation mode) the best seed candidate is
    chosen by SSIM against it; otherwise the first configured seed is used.
    """
    from .metrics import ssim  # local import: metrics also drives repair in eval_run

    cfg = config or PipelineConfig()
    original = as_rgb(inputs.distorted)
    h, w = original.shape[:2]
    audit: list[dict] = []

    def log(stage: str, **info):
        audit.append({"stage": stage, "t": time.time(), **info})

    t0 = time.perf_counter()
    detection = detect(inputs, cfg)
    log("detect", reports=len(detection.reports), skipped=detection.skipped,
        ms=(time.perf_counter() - t0) * 1000.0)

    if not detection.reports:
        log("clean", note="no artifacts; backend not contacted")
        return RepairResult(
            repaired=original.copy(), reports=[], bundle=None,
            candidates={}, chosen_seed=None, skipped=detection.skipped, audit=audit,
        )

    if backend is None:
        raise ParameterError("artifacts found but no backend supplied")

    t0 = time.perf_counter()
    bundle = build_bundle(inputs, detection.reports, cfg, captioner=captioner, scale_model=scale_model)
    log("bundle", prompt=bundle.prompt, scales=bundle.scales.as_dict(),
        warnings=bundle.warnings, ms=(time.perf_counter() - t0) * 1000.0)

    candidates: dict[int, np.ndarray] = {}
    for seed in cfg.run.seeds:
        req = InpaintRequest(image=original, mask=bundle.mask, bundle=bundle, seed=seed, out_w=w, out_h=h)
        resp = backend.inpaint(req)
        if resp.image.shape != original.shape:
            raise DimensionMismatchError("backend response dimensions do not match input")
        candidates[seed] = composite(original, resp.image, bundle.mask, feather=cfg.run.feather)
        log("inpaint", seed=seed, backend=resp.backend_id, ms=resp.latency_ms)

    if target is not None:
        scored = {seed: ssim(img, as_rgb(target)) for seed, img in candidates.items()}
        chosen = max(cfg.run.seeds, key=lambda s: scored[s])
        log("select", mode="ssim", scores={str(k): v for k, v in scored.items()}, chosen=chosen)
    else:
        chosen = cfg.run.seeds[0]
        log("select", mode="first_seed", chosen=chosen)

    return RepairResult(
        repaired=candidates[chosen], reports=detection.reports, bundle=bundle,
        candidates=candidates, chosen_seed=chosen, skipped=detection.skipped, audit=audit,
    )


# ---------------------------------------------------------------------------
# batch


@dataclass
class BatchSummary:
    successes: int = 0
    failures: int = 0
    clean: int = 0
    errors: dict[str, str] = field(default_factory=dict)


def _atomic_save_rgb(path: str, img: np.ndarray) -> None:
    tmp = path + ".tmp"
    save_rgb(tmp, img)
    os.replace(tmp, path)


def _atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def batch_repair(
    instances: Iterable,
    config: PipelineConfig,
    make_backend,
    out_dir: str,
    parallelism: int = 1,
    captioner: Captioner | None = None,
    scale_model: ScaleModel | None = None,
) -> BatchSummary:
    """Repair a corpus with a bounded worker pool; per-instance atomic writes.

    ``make_backend(instance)`` returns the backend for one instance (the mock
    oracle needs the instance target). Individual failures are recorded and
    the batch continues.
    """
    os.makedirs(out_dir, exist_ok=True)
    summary = BatchSummary()

    def run_one(instance):
        inst_dir = os.path.join(out_dir, instance.id)
        os.makedirs(inst_dir, exist_ok=True)
        backend = make_backend(instance)
        result = repair(
            instance.detector_inputs(), config, backend,
            captioner=captioner, scale_model=scale_model, target=instance.target,
        )
        _atomic_save_rgb(os.path.join(inst_dir, "repaired.png"), result.repaired)
        doc = {
            "id": instance.id,
            "chosen_seed": result.chosen_seed,
            "reports": [
                {"class": r.artifact_class.value, "score": r.score,
                 "strategies": sorted(s.value for s in r.strategies)}
                for r in result.reports
            ],
            "skipped": result.skipped,
        }
        _atomic_write_text(os.path.join(inst_dir, "report.json"), json.dumps(doc, indent=2, sort_keys=True))
        return result

    todo = list(instances)
    if parallelism <= 1:
        outcomes = []
        for inst in todo:
            try:
                outcomes.append((inst, run_one(inst), None))
            except Exception as e:
                outcomes.append((inst, None, e))
    else:
        def safe(inst):
            try:
                return inst, run_one(inst), None
            except Exception as e:
                return inst, None, e

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(safe, todo))

    for inst, result, exc in outcomes:
        if exc is not None:
            summary.failures += 1
            summary.errors[inst.id] = f"{type(exc).__name__}: {exc}"
        else:
            summary.successes += 1
            if not result.reports:
                summary.clean += 1
    return summary
