"""Generation engines: a weight-free stub and a lazy-loaded diffusion pipeline.

An engine produces a full-frame candidate image for a request; the service
composites it into the masked region, so outside-mask preservation never
depends on engine behaviour.
"""

from __future__ import annotations

import threading

import numpy as np
from scipy import ndimage

from .config import BackendConfig
from .wire import InpaintRequest


class StubEngine:
    """Blur-fill: Gaussian-blurred input stands in for the generated content.

    Deterministic by construction, needs no weights; used for protocol and
    integration testing.
    """

    model_id = "stub:blur-fill"

    def __init__(self, config: BackendConfig):
        self.sigma = config.stub_blur_radius / 2.0

    def generate(self, req: InpaintRequest) -> np.ndarray:
        f = req.image.astype(np.float64)
        out = np.empty_like(f)
        for c in range(3):
            out[..., c] = ndimage.gaussian_filter(f[..., c], self.sigma, mode="nearest")
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)


class DiffusionEngine:
    """Latent-diffusion inpainting with edge/pose/seg adapters and an image prompt.

    Heavy imports happen here, not at module import; construction fails with a
    diagnostic if the model stack is unavailable so `serve` can refuse to start.
    Model access is serialized per device.
    """

    def __init__(self, config: BackendConfig):
        self.config = config
        self._lock = threading.Lock()
        try:
            import torch
            from diffusers import ControlNetModel, StableDiffusionControlNetInpaintPipeline
        except Exception as e:  # noqa: BLE001 - any import failure blocks startup
            raise RuntimeError(f"diffusion stack unavailable: {e}") from e

        self._torch = torch
        controlnets = [
            ControlNetModel.from_pretrained(config.canny_adapter),
            ControlNetModel.from_pretrained(config.pose_adapter),
            ControlNetModel.from_pretrained(config.seg_adapter),
        ]
        self.pipe = StableDiffusionControlNetInpaintPipeline.from_pretrained(
            config.base_model, controlnet=controlnets, safety_checker=None
        ).to(config.device)
        self.pipe.load_ip_adapter(config.ip_adapter, subfolder="models", weight_name="ip-adapter_sd15.bin")
        self.model_id = config.base_model

    def generate(self, req: InpaintRequest) -> np.ndarray:
        from PIL import Image

        torch = self._torch
        ceiling = self.config.scale_ceiling
        cond = [Image.fromarray(req.canny), Image.fromarray(req.pose), Image.fromarray(req.seg)]
        cond_scales = [req.scales[k] * ceiling for k in ("canny", "pose", "segmentation")]
        with self._lock:
            self.pipe.set_ip_adapter_scale(req.scales["ip_adapter"] * ceiling)
            generator = torch.Generator(device=self.config.device).manual_seed(req.seed)
            result = self.pipe(
                prompt=req.prompt,
                negative_prompt=req.negative_prompt,
                image=Image.fromarray(req.image),
                mask_image=Image.fromarray(np.where(req.mask, 255, 0).astype(np.uint8)),
                control_image=cond,
                controlnet_conditioning_scale=cond_scales,
                ip_adapter_image=Image.fromarray(req.reference),
                num_inference_steps=self.config.num_inference_steps,
                width=req.width,
                height=req.height,
                generator=generator,
            )
        return np.asarray(result.images[0].convert("RGB"), dtype=np.uint8)


def make_engine(config: BackendConfig):
    config.validate()
    if config.stub:
        return StubEngine(config)
    return DiffusionEngine(config)
