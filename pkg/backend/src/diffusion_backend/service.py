"""The HTTP service: POST /inpaint, GET /health.

Request handling is bounded by a semaphore (max concurrent generations);
the engine serializes model access per device internally. The winning
candidate is composited into the masked region server-side, so pixels
outside the mask always equal the request image.
"""

from __future__ import annotations

import json
import logging
import signal
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .config import BackendConfig
from .engines import make_engine
from .wire import ProtocolError, encode_png_b64, parse_request

log = logging.getLogger("diffusion_backend")

MAX_BODY = 64 * 1024 * 1024


def composite(image: np.ndarray, candidate: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = image.copy()
    out[mask] = candidate[mask]
    return out


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "diffusion-backend"

    # set on the server by make_server
    engine = None
    semaphore: threading.Semaphore = None
    backend_id: str = ""

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _reply(self, code: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path != "/health":
            self._reply(404, {"error": f"no such endpoint: {self.path}"})
            return
        self._reply(200, {"status": "ok", "model": self.server.engine.model_id})

    def do_POST(self):
        if self.path != "/inpaint":
            self._reply(404, {"error": f"no such endpoint: {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            if length <= 0 or length > MAX_BODY:
                self._reply(400, {"error": f"bad content length {length}"})
                return
            doc = json.loads(self.rfile.read(length))
            req = parse_request(doc)
        except ProtocolError as e:
            self._reply(400, {"error": str(e)})
            return
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            self._reply(400, {"error": f"invalid JSON body: {e}"})
            return

        try:
            with self.server.semaphore:
                candidate = self.server.engine.generate(req)
        except MemoryError:
            self._reply(503, {"error": "out of memory"})
            return
        except Exception as e:  # noqa: BLE001 - report, don't crash the server
            log.exception("generation failed")
            self._reply(500, {"error": f"generation failed: {e}"})
            return

        if candidate.shape != req.image.shape:
            self._reply(500, {"error": "engine returned wrong dimensions"})
            return
        repaired = composite(req.image, candidate, req.mask)
        self._reply(
            200,
            {"image": encode_png_b64(repaired), "seed": req.seed, "backend": self.server.backend_id},
        )


def make_server(config: BackendConfig, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build a ready-to-run server; models load here, failures raise before binding."""
    engine = make_engine(config)
    server = ThreadingHTTPServer((host, port), _Handler)
    server.engine = engine
    server.semaphore = threading.Semaphore(config.max_concurrent)
    server.backend_id = engine.model_id
    return server


def serve(config: BackendConfig, host: str = "127.0.0.1", port: int = 8500) -> None:
    server = make_server(config, host, port)

    def _shutdown(signum, frame):
        log.info("signal %d, shutting down", signum)
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGINT, _shutdown)
    signal.signal(signal.SIGTERM, _shutdown)
    log.info("serving %s on %s:%d", server.backend_id, host, server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()
