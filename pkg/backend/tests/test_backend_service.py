"""Protocol behaviour of the stub-mode service."""

import base64
import io
import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
import requests
from PIL import Image

from conftest import golden_arrays, golden_payload, png_b64
from diffusion_backend.config import BackendConfig
from diffusion_backend.engines import StubEngine, make_engine
from diffusion_backend.wire import ProtocolError, parse_request


def decode_image(b64):
    raw = base64.b64decode(b64)
    with Image.open(io.BytesIO(raw)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


class TestHealth:
    def test_contract(self, stub_server):
        doc = requests.get(f"{stub_server}/health", timeout=5).json()
        assert doc["status"] == "ok"
        assert doc["model"] == "stub:blur-fill"

    def test_unknown_path_404(self, stub_server):
        r = requests.get(f"{stub_server}/nope", timeout=5)
        assert r.status_code == 404
        assert "error" in r.json()


class TestInpaint:
    def test_round_trip(self, stub_server):
        r = requests.post(f"{stub_server}/inpaint", json=golden_payload(), timeout=30)
        assert r.status_code == 200
        doc = r.json()
        assert doc["seed"] == 8
        assert doc["backend"] == "stub:blur-fill"
        image, mask, _, _ = golden_arrays()
        out = decode_image(doc["image"])
        assert out.shape == image.shape

    def test_outside_mask_preserved(self, stub_server):
        r = requests.post(f"{stub_server}/inpaint", json=golden_payload(), timeout=30)
        image, mask, _, _ = golden_arrays()
        out = decode_image(r.json()["image"])
        assert np.array_equal(out[~mask], image[~mask])
        assert not np.array_equal(out[mask], image[mask])  # something was generated

    def test_deterministic(self, stub_server):
        a = requests.post(f"{stub_server}/inpaint", json=golden_payload(), timeout=30).json()
        b = requests.post(f"{stub_server}/inpaint", json=golden_payload(), timeout=30).json()
        assert a["image"] == b["image"]

    def test_zero_scales_accepted(self, stub_server):
        payload = golden_payload()
        payload["scales"] = {k: 0.0 for k in payload["scales"]}
        assert requests.post(f"{stub_server}/inpaint", json=payload, timeout=30).status_code == 200

    def test_concurrent_requests(self, stub_server):
        payloads = [golden_payload(request_seed=s) for s in range(4)]
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(
                pool.map(lambda p: requests.post(f"{stub_server}/inpaint", json=p, timeout=30), payloads)
            )
        assert [r.status_code for r in results] == [200] * 4
        assert [r.json()["seed"] for r in results] == [0, 1, 2, 3]


class TestValidation:
    def post(self, stub_server, payload):
        return requests.post(f"{stub_server}/inpaint", json=payload, timeout=30)

    def test_mismatched_mask_dims_400(self, stub_server):
        payload = golden_payload()
        payload["mask"] = png_b64(np.zeros((10, 10), dtype=bool), mode="L")
        r = self.post(stub_server, payload)
        assert r.status_code == 400
        assert "mask" in r.json()["error"]

    def test_invalid_base64_400(self, stub_server):
        payload = golden_payload()
        payload["image"] = "not base64!!!"
        r = self.post(stub_server, payload)
        assert r.status_code == 400
        assert "error" in r.json()

    def test_missing_field_400(self, stub_server):
        payload = golden_payload()
        del payload["reference"]
        r = self.post(stub_server, payload)
        assert r.status_code == 400
        assert "reference" in r.json()["error"]

    def test_scale_out_of_range_400(self, stub_server):
        payload = golden_payload()
        payload["scales"]["canny"] = 1.5
        r = self.post(stub_server, payload)
        assert r.status_code == 400
        assert "canny" in r.json()["error"]

    def test_declared_dims_must_match_image_400(self, stub_server):
        payload = golden_payload()
        payload["width"] = 7
        r = self.post(stub_server, payload)
        assert r.status_code == 400

    def test_garbage_body_400(self, stub_server):
        r = requests.post(
            f"{stub_server}/inpaint",
            data=b"not json",
            headers={"Content-Type": "application/json"},
            timeout=30,
        )
        assert r.status_code == 400


class TestParseRequest:
    def test_golden_parses(self):
        req = parse_request(golden_payload())
        image, mask, conds, reference = golden_arrays()
        assert np.array_equal(req.image, image)
        assert np.array_equal(req.mask, mask)
        assert req.scales["ip_adapter"] == 0.6

    def test_non_dict_rejected(self):
        with pytest.raises(ProtocolError):
            parse_request([1, 2, 3])


class TestEngines:
    def test_stub_engine_blurs(self):
        engine = StubEngine(BackendConfig(stub=True))
        req = parse_request(golden_payload())
        out = engine.generate(req)
        assert out.shape == req.image.shape
        # blur reduces local variance
        assert np.diff(out[:, :, 0].astype(int), axis=1).var() < np.diff(
            req.image[:, :, 0].astype(int), axis=1
        ).var()

    def test_make_engine_validates_config(self):
        with pytest.raises(ValueError):
            make_engine(BackendConfig(stub=True, scale_ceiling=0))

    def test_diffusion_engine_unavailable_is_diagnosed(self, monkeypatch):
        import builtins

        real_import = builtins.__import__

        def no_torch(name, *args, **kwargs):
            if name in ("torch", "diffusers"):
                raise ImportError(f"No module named '{name}'")
            return real_import(name, *args, **kwargs)

        monkeypatch.setattr(builtins, "__import__", no_torch)
        with pytest.raises(RuntimeError, match="diffusion stack unavailable"):
            make_engine(BackendConfig(stub=False))
