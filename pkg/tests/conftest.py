"""Shared test helpers: gradient-check pixel sampling and a guidance stub server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from strokeboard import protocol


def chord_distances(verts: np.ndarray, q: np.ndarray):
    """Distances and foot points from query points to every polyline chord."""
    v0 = verts[:-1]
    v1 = verts[1:]
    e = v1 - v0
    ll = (e**2).sum(1)
    diff = q[:, None, :] - v0[None, :, :]
    u = np.clip((diff * e[None, :, :]).sum(2) / np.where(ll > 0, ll, 1.0), 0.0, 1.0)
    p = v0[None, :, :] + u[..., None] * e[None, :, :]
    dist = np.linalg.norm(q[:, None, :] - p, axis=2)
    return dist, p


def smooth_band_mask(verts: np.ndarray, pix: np.ndarray, width: int, gap: float = 0.05):
    """Keep pixels away from creases of the min-distance field.

    A near-tie between chords only counts as smooth when both feet coincide
    (the shared-vertex case); everything else is a crease where the gradient
    is genuinely one-sided and finite differences cannot match.
    """
    q = np.stack([(pix % width) + 0.5, (pix // width) + 0.5], axis=1)
    dist, p = chord_distances(verts, q)
    d1 = dist.min(1)
    c1 = dist.argmin(1)
    p1 = p[np.arange(len(pix)), c1]
    near = dist - d1[:, None] < gap
    same_pt = np.linalg.norm(p - p1[:, None, :], axis=2) < 1e-9
    crease = (near & ~same_pt).any(1)
    return ~crease


class _StubGuidanceHandler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 (http.server API)
        if self.path != "/v1/guidance":
            self.send_error(404)
            return
        length = int(self.headers.get("content-length", 0))
        body = self.rfile.read(length)
        mode = self.server.mode  # type: ignore[attr-defined]
        self.server.requests.append(body)  # type: ignore[attr-defined]
        if mode == "error":
            self.send_response(500)
            payload = b"backend exploded"
            self.send_header("content-type", "text/plain")
            self.send_header("content-length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
            return
        req = protocol.decode_request(body)
        if mode == "latent":
            pool = 8
            grad = np.zeros((req.height // pool, req.width // pool), dtype=np.float32)
            resp = protocol.GuidanceResponse(grad=grad, loss=0.5, space="latent", pool=pool)
        else:
            grad = np.zeros((req.height, req.width), dtype=np.float32)
            resp = protocol.GuidanceResponse(grad=grad, loss=None, space="pixel", pool=1)
        payload = protocol.encode_response(resp)
        self.send_response(200)
        self.send_header("content-type", "application/octet-stream")
        self.send_header("content-length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # silence
        pass


@pytest.fixture
def stub_guidance_server():
    """Threaded zero-gradient guidance server; yields (endpoint, server)."""
    server = HTTPServer(("127.0.0.1", 0), _StubGuidanceHandler)
    server.mode = "pixel"
    server.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}", server
    finally:
        server.shutdown()
        thread.join(timeout=5)
