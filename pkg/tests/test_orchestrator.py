"""Compositing, mock/HTTP backends, the repair pipeline, and batch runs."""

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from artifact.config import PipelineConfig
from artifact.datasets import inject_color_texture, iter_instances
from artifact.detector import DetectorInputs
from artifact.errors import (
    BackendError,
    DimensionMismatchError,
    ParameterError,
    TransportError,
)
from artifact.metrics import ssim
from artifact.orchestrator import (
    HttpBackend,
    InpaintRequest,
    MockBackend,
    batch_repair,
    composite,
    decode_png_b64,
    encode_png_b64,
    repair,
    request_to_wire,
)


def rand_rgb(rng, h=24, w=24):
    return rng.integers(0, 256, (h, w, 3), dtype=np.uint8)


def scene_inputs(scene, distorted=None):
    return DetectorInputs(
        distorted=scene.image if distorted is None else distorted,
        target_pose=scene.pose, observed_pose=scene.pose,
        reference=scene.cloth, reference_pose=scene.pose,
        detections=scene.detections, parsing=scene.parsing, cloth_mask=scene.cloth_mask,
    )


class TestComposite:
    def test_empty_mask_identity(self, rng):
        a, b = rand_rgb(rng), rand_rgb(rng)
        out = composite(a, b, np.zeros((24, 24), dtype=bool))
        assert np.array_equal(out, a)

    def test_full_mask_is_generated(self, rng):
        a, b = rand_rgb(rng), rand_rgb(rng)
        out = composite(a, b, np.ones((24, 24), dtype=bool), feather=0)
        assert np.array_equal(out, b)

    def test_half_mask_pixelwise(self, rng):
        a, b = rand_rgb(rng), rand_rgb(rng)
        mask = np.zeros((24, 24), dtype=bool)
        mask[:, 12:] = True
        out = composite(a, b, mask, feather=0)
        assert np.array_equal(out[:, :12], a[:, :12])
        assert np.array_equal(out[:, 12:], b[:, 12:])

    def test_feather_preserves_context(self, rng):
        a, b = rand_rgb(rng, 40, 40), rand_rgb(rng, 40, 40)
        mask = np.zeros((40, 40), dtype=bool)
        mask[10:30, 10:30] = True
        out = composite(a, b, mask, feather=3)
        assert np.array_equal(out[~mask], a[~mask])  # bit-exact outside
        # deep interior is pure generated
        assert np.array_equal(out[18:22, 18:22], b[18:22, 18:22])

    def test_negative_feather_rejected(self, rng):
        with pytest.raises(ParameterError):
            composite(rand_rgb(rng), rand_rgb(rng), np.zeros((24, 24), dtype=bool), feather=-1)

    def test_dim_mismatch_rejected(self, rng):
        with pytest.raises(DimensionMismatchError):
            composite(rand_rgb(rng), rand_rgb(rng, 25, 24), np.zeros((24, 24), dtype=bool))


class TestMockBackend:
    def request(self, scene, distorted):
        from artifact.conditioning import build_bundle
        from artifact.detector import detect

        inputs = scene_inputs(scene, distorted)
        reports = detect(inputs).reports
        bundle = build_bundle(inputs, reports)
        h, w = distorted.shape[:2]
        return InpaintRequest(image=distorted, mask=bundle.mask, bundle=bundle, seed=8, out_w=w, out_h=h)

    def test_oracle_copies_target(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(1))
        req = self.request(clean_scene, distorted)
        backend = MockBackend("oracle", target=clean_scene.image)
        resp = backend.inpaint(req)
        assert np.array_equal(resp.image[req.mask], clean_scene.image[req.mask])
        assert np.array_equal(resp.image[~req.mask], distorted[~req.mask])

    def test_oracle_requires_target(self):
        with pytest.raises(ParameterError):
            MockBackend("oracle")

    def test_blur_fill_constant_stays_constant(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(1))
        req = self.request(clean_scene, distorted)
        const = np.full_like(distorted, 77)
        resp = MockBackend("blur_fill").inpaint(
            InpaintRequest(image=const, mask=req.mask, bundle=req.bundle, seed=8,
                           out_w=req.out_w, out_h=req.out_h)
        )
        assert np.all(resp.image == 77)

    def test_deterministic(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(1))
        req = self.request(clean_scene, distorted)
        backend = MockBackend("blur_fill")
        assert np.array_equal(backend.inpaint(req).image, backend.inpaint(req).image)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ParameterError):
            MockBackend("upscale")


class TestWireCodec:
    def test_rgb_round_trip(self, rng):
        img = rand_rgb(rng)
        assert np.array_equal(decode_png_b64(encode_png_b64(img)), img)

    def test_mask_round_trip(self, rng):
        mask = rng.random((24, 24)) < 0.4
        assert np.array_equal(decode_png_b64(encode_png_b64(mask, mode="L"), mode="L"), mask)

    def test_malformed_payload_rejected(self):
        with pytest.raises(BackendError):
            decode_png_b64("definitely not base64 png!!")

    def test_wire_payload_fields(self, clean_scene):
        from artifact.conditioning import build_bundle
        from artifact.detector import detect

        distorted, _ = inject_color_texture(clean_scene, random.Random(1))
        inputs = scene_inputs(clean_scene, distorted)
        bundle = build_bundle(inputs, detect(inputs).reports)
        h, w = distorted.shape[:2]
        req = InpaintRequest(image=distorted, mask=bundle.mask, bundle=bundle, seed=11, out_w=w, out_h=h)
        doc = request_to_wire(req)
        assert set(doc) == {
            "image", "mask", "canny", "pose", "seg", "reference",
            "prompt", "negative_prompt", "scales", "seed", "width", "height",
        }
        assert doc["seed"] == 11
        assert doc["width"] == w and doc["height"] == h
        assert set(doc["scales"]) == {"canny", "pose", "segmentation", "ip_adapter"}
        json.dumps(doc)  # must be JSON-serializable as-is


# ---------------------------------------------------------------------------
# loopback HTTP stub for the client


class _StubHandler(BaseHTTPRequestHandler):
    behavior = "echo"  # echo | error | wrong_dims | garbage

    def log_message(self, *args):
        pass

    def do_GET(self):
        if self.path == "/health":
            self._reply(200, {"status": "ok", "model": "stub"})
        else:
            self._reply(404, {"error": "not found"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        doc = json.loads(self.rfile.read(length))
        if self.behavior == "error":
            self._reply(500, {"error": "synthetic failure"})
            return
        if self.behavior == "garbage":
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(b"{not json")
            return
        image = decode_png_b64(doc["image"])
        if self.behavior == "wrong_dims":
            image = image[: image.shape[0] // 2]
        self._reply(200, {"image": encode_png_b64(image), "seed": doc["seed"], "backend": "stub"})

    def _reply(self, code, doc):
        body = json.dumps(doc).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


@pytest.fixture()
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
    thread.join(timeout=5)


class TestHttpBackend:
    def make_request(self, clean_scene):
        from artifact.conditioning import build_bundle
        from artifact.detector import detect

        distorted, _ = inject_color_texture(clean_scene, random.Random(1))
        inputs = scene_inputs(clean_scene, distorted)
        bundle = build_bundle(inputs, detect(inputs).reports)
        h, w = distorted.shape[:2]
        return InpaintRequest(image=distorted, mask=bundle.mask, bundle=bundle, seed=8, out_w=w, out_h=h)

    def test_round_trip(self, stub_server, clean_scene):
        _StubHandler.behavior = "echo"
        backend = HttpBackend(stub_server, timeout=10)
        req = self.make_request(clean_scene)
        resp = backend.inpaint(req)
        assert np.array_equal(resp.image, req.image)
        assert resp.seed == 8
        assert resp.backend_id == "stub"

    def test_health(self, stub_server):
        assert HttpBackend(stub_server).health() == {"status": "ok", "model": "stub"}

    def test_error_payload_surfaced(self, stub_server, clean_scene):
        _StubHandler.behavior = "error"
        backend = HttpBackend(stub_server, timeout=10)
        with pytest.raises(BackendError, match="synthetic failure"):
            backend.inpaint(self.make_request(clean_scene))
        assert backend.attempts_log == [1]  # semantic errors are not retried

    def test_wrong_dims_rejected(self, stub_server, clean_scene):
        _StubHandler.behavior = "wrong_dims"
        backend = HttpBackend(stub_server, timeout=10)
        with pytest.raises(DimensionMismatchError):
            backend.inpaint(self.make_request(clean_scene))

    def test_garbage_payload_rejected(self, stub_server, clean_scene):
        _StubHandler.behavior = "garbage"
        backend = HttpBackend(stub_server, timeout=10)
        with pytest.raises(BackendError):
            backend.inpaint(self.make_request(clean_scene))

    def test_unreachable_retries_then_transport_error(self, clean_scene):
        backend = HttpBackend("http://127.0.0.1:1", timeout=0.2, retries=2, backoff=0.01)
        with pytest.raises(TransportError):
            backend.inpaint(self.make_request(clean_scene))
        assert backend.attempts_log == [3]  # retries + 1

    def test_unreachable_health(self):
        with pytest.raises(TransportError):
            HttpBackend("http://127.0.0.1:1", timeout=0.2).health()


# ---------------------------------------------------------------------------
# repair pipeline


class TestRepair:
    def test_clean_instance_untouched_no_backend_calls(self, clean_scene):
        backend = MockBackend("blur_fill")
        result = repair(scene_inputs(clean_scene), backend=backend)
        assert result.reports == []
        assert np.array_equal(result.repaired, clean_scene.image)
        assert backend.calls == 0

    def test_oracle_improves_ssim(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(2))
        backend = MockBackend("oracle", target=clean_scene.image)
        result = repair(scene_inputs(clean_scene, distorted), backend=backend, target=clean_scene.image)
        before = ssim(distorted, clean_scene.image)
        after = ssim(result.repaired, clean_scene.image)
        assert after > before

    def test_context_bit_exact(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(2))
        backend = MockBackend("oracle", target=clean_scene.image)
        result = repair(scene_inputs(clean_scene, distorted), backend=backend, target=clean_scene.image)
        outside = ~result.bundle.mask
        assert np.array_equal(result.repaired[outside], distorted[outside])

    def test_one_backend_call_per_seed(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(2))
        backend = MockBackend("oracle", target=clean_scene.image)
        result = repair(scene_inputs(clean_scene, distorted), backend=backend, target=clean_scene.image)
        cfg = PipelineConfig()
        assert backend.calls == len(cfg.run.seeds)
        assert set(result.candidates) == set(cfg.run.seeds)
        assert result.chosen_seed in cfg.run.seeds

    def test_production_mode_takes_first_seed(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(2))
        backend = MockBackend("blur_fill")
        result = repair(scene_inputs(clean_scene, distorted), backend=backend)
        assert result.chosen_seed == PipelineConfig().run.seeds[0]

    def test_artifacts_without_backend_rejected(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(2))
        with pytest.raises(ParameterError):
            repair(scene_inputs(clean_scene, distorted))

    def test_audit_records_stages(self, clean_scene):
        distorted, _ = inject_color_texture(clean_scene, random.Random(2))
        backend = MockBackend("oracle", target=clean_scene.image)
        result = repair(scene_inputs(clean_scene, distorted), backend=backend, target=clean_scene.image)
        stages = [entry["stage"] for entry in result.audit]
        assert stages[0] == "detect"
        assert "bundle" in stages
        assert stages.count("inpaint") == len(PipelineConfig().run.seeds)
        assert stages[-1] == "select"


class TestBatchRepair:
    def test_empty_batch(self, tmp_path):
        summary = batch_repair([], PipelineConfig(), lambda inst: None, str(tmp_path / "out"))
        assert summary.successes == 0 and summary.failures == 0

    def test_parallelism_determinism(self, small_corpus, tmp_path):
        from artifact.raster import load_rgb

        cfg = PipelineConfig()

        def backend_for(instance):
            return MockBackend("oracle", target=instance.target)

        out1 = tmp_path / "serial"
        out4 = tmp_path / "parallel"
        instances = list(iter_instances(small_corpus))
        s1 = batch_repair(instances, cfg, backend_for, str(out1), parallelism=1)
        s4 = batch_repair(instances, cfg, backend_for, str(out4), parallelism=4)
        assert s1.failures == 0 and s4.failures == 0
        for inst in instances:
            a = load_rgb(str(out1 / inst.id / "repaired.png"))
            b = load_rgb(str(out4 / inst.id / "repaired.png"))
            assert np.array_equal(a, b)
            r1 = (out1 / inst.id / "report.json").read_text()
            r4 = (out4 / inst.id / "report.json").read_text()
            assert r1 == r4

    def test_failure_recorded_batch_continues(self, small_corpus, tmp_path):
        instances = list(iter_instances(small_corpus))

        class Boom:
            def inpaint(self, request):
                raise RuntimeError("backend exploded")

        summary = batch_repair(
            instances, PipelineConfig(), lambda inst: Boom(), str(tmp_path / "out")
        )
        # clean instances skip the backend and still succeed
        assert summary.failures == 6
        assert summary.successes == 2
        assert summary.clean == 2
        assert len(summary.errors) == 6
