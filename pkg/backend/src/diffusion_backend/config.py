"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class BackendConfig:
    base_model: str = "SG161222/Realistic_Vision_V6.0_B1_noVAE"
    canny_adapter: str = "lllyasviel/control_v11p_sd15_canny"
    pose_adapter: str = "lllyasviel/control_v11p_sd15_openpose"
    seg_adapter: str = "lllyasviel/control_v11p_sd15_seg"
    ip_adapter: str = "h94/IP-Adapter"
    device: str = "cpu"
    max_concurrent: int = 2
    scale_ceiling: float = 1.0
    stub: bool = False
    stub_blur_radius: int = 8
    num_inference_steps: int = 30

    def validate(self) -> None:
        if self.scale_ceiling <= 0:
            raise ValueError(f"scale ceiling must be > 0, got {self.scale_ceiling}")
        if self.max_concurrent < 1:
            raise ValueError(f"max_concurrent must be >= 1, got {self.max_concurrent}")
        if self.stub_blur_radius < 1:
            raise ValueError(f"stub blur radius must be >= 1, got {self.stub_blur_radius}")
