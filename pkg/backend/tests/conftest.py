"""Fixtures: a stub-mode service on a loopback port and a golden payload."""

import base64
import io
import threading

import numpy as np
import pytest
from PIL import Image

from diffusion_backend.config import BackendConfig
from diffusion_backend.service import make_server


def png_b64(arr, mode="RGB"):
    if mode == "L":
        arr = np.where(arr, 255, 0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr.astype(np.uint8), mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def golden_arrays(w=96, h=128, seed=5):
    """Deterministic request-side arrays shared by every protocol test."""
    rng = np.random.default_rng(seed)
    image = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    mask = np.zeros((h, w), dtype=bool)
    mask[40:80, 30:66] = True
    conds = {k: rng.integers(0, 256, (h, w, 3), dtype=np.uint8) for k in ("canny", "pose", "seg")}
    reference = rng.integers(0, 256, (64, 48, 3), dtype=np.uint8)
    return image, mask, conds, reference


def golden_payload(w=96, h=128, seed=5, request_seed=8):
    image, mask, conds, reference = golden_arrays(w, h, seed)
    return {
        "image": png_b64(image),
        "mask": png_b64(mask, mode="L"),
        "canny": png_b64(conds["canny"]),
        "pose": png_b64(conds["pose"]),
        "seg": png_b64(conds["seg"]),
        "reference": png_b64(reference),
        "prompt": "a high quality photo of upper-body clothing, a red striped shirt",
        "negative_prompt": "deformed, blurry, low quality",
        "scales": {"canny": 0.9, "pose": 0.3, "segmentation": 0.4, "ip_adapter": 0.6},
        "seed": request_seed,
        "width": w,
        "height": h,
    }


@pytest.fixture(scope="session")
def stub_server():
    server = make_server(BackendConfig(stub=True), host="127.0.0.1", port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)
