"""Wire codec and request validation for the inpaint protocol.

Request JSON: base64-PNG fields image, mask, canny, pose, seg, reference;
strings prompt, negative_prompt; scales {canny, pose, segmentation,
ip_adapter} in [0,1]; ints seed, width, height. Response JSON: base64-PNG
image, int seed, string backend.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

IMAGE_FIELDS = ("image", "canny", "pose", "seg", "reference")
SCALE_FIELDS = ("canny", "pose", "segmentation", "ip_adapter")


class ProtocolError(ValueError):
    """Client-side problem with a request payload (maps to HTTP 400)."""


def decode_png_b64(data, mode: str = "RGB"):
    if not isinstance(data, str):
        raise ProtocolError(f"expected base64 string, got {type(data).__name__}")
    try:
        raw = base64.b64decode(data, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            if mode == "L":
                return np.asarray(im.convert("L"), dtype=np.uint8) >= 128
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except ProtocolError:
        raise
    except Exception as e:
        raise ProtocolError(f"malformed image payload: {e}") from e


def encode_png_b64(img: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@dataclass
class InpaintRequest:
    image: np.ndarray       # (H, W, 3) uint8
    mask: np.ndarray        # (H, W) bool, True = regenerate
    canny: np.ndarray
    pose: np.ndarray
    seg: np.ndarray
    reference: np.ndarray
    prompt: str
    negative_prompt: str
    scales: dict            # SCALE_FIELDS -> float in [0, 1]
    seed: int
    width: int
    height: int


def parse_request(doc) -> InpaintRequest:
    if not isinstance(doc, dict):
        raise ProtocolError("request body must be a JSON object")
    required = set(IMAGE_FIELDS) | {"mask", "prompt", "negative_prompt", "scales", "seed", "width", "height"}
    missing = sorted(required - doc.keys())
    if missing:
        raise ProtocolError(f"missing fields: {', '.join(missing)}")

    images = {name: decode_png_b64(doc[name]) for name in IMAGE_FIELDS}
    mask = decode_png_b64(doc["mask"], mode="L")

    try:
        width, height, seed = int(doc["width"]), int(doc["height"]), int(doc["seed"])
    except (TypeError, ValueError) as e:
        raise ProtocolError(f"width/height/seed must be integers: {e}") from e

    h, w = images["image"].shape[:2]
    if (w, h) != (width, height):
        raise ProtocolError(f"image is {w}x{h} but request declares {width}x{height}")
    if mask.shape != (h, w):
        raise ProtocolError(f"mask is {mask.shape[1]}x{mask.shape[0]}, image is {w}x{h}")
    for name in ("canny", "pose", "seg"):
        ch, cw = images[name].shape[:2]
        if (ch, cw) != (h, w):
            raise ProtocolError(f"{name} condition is {cw}x{ch}, image is {w}x{h}")

    scales = doc["scales"]
    if not isinstance(scales, dict):
        raise ProtocolError("scales must be an object")
    parsed_scales = {}
    for name in SCALE_FIELDS:
        if name not in scales:
            raise ProtocolError(f"scales missing component {name}")
        try:
            v = float(scales[name])
        except (TypeError, ValueError) as e:
            raise ProtocolError(f"scale {name} is not a number: {e}") from e
        if not (0.0 <= v <= 1.0):
            raise ProtocolError(f"scale {name} out of [0,1]: {v}")
        parsed_scales[name] = v

    if not isinstance(doc["prompt"], str) or not isinstance(doc["negative_prompt"], str):
        raise ProtocolError("prompt and negative_prompt must be strings")

    return InpaintRequest(
        image=images["image"],
        mask=mask,
        canny=images["canny"],
        pose=images["pose"],
        seg=images["seg"],
        reference=images["reference"],
        prompt=doc["prompt"],
        negative_prompt=doc["negative_prompt"],
        scales=parsed_scales,
        seed=seed,
        width=width,
        height=height,
    )
