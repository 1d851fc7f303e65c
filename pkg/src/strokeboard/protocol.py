"""Remote guidance wire protocol.

Frame layout (bit-exact):
    b"SDRG" | version byte 0x01 | u32 little-endian JSON header length |
    UTF-8 JSON header | raw float32 little-endian row-major tensors in
    the order declared by the header's "tensors" list.

Request header keys (in order): prompt, negative_prompt, omega, timestep,
width, height, channels, tensors. Response header keys: tensors, loss,
space, pool. Transport is HTTP POST /v1/guidance with content-type
application/octet-stream.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MAGIC",
    "VERSION",
    "ProtocolError",
    "BackendError",
    "RetriableBackendError",
    "GuidanceRequest",
    "GuidanceResponse",
    "encode_request",
    "decode_request",
    "encode_response",
    "decode_response",
    "remote_guidance_call",
]

MAGIC = b"SDRG"
VERSION = 1

_MAX_HEADER = 1 << 20


class ProtocolError(ValueError):
    """Frame violates the wire format (magic, version, shape, header)."""


class BackendError(RuntimeError):
    """The remote guidance service rejected or failed the request."""


class RetriableBackendError(BackendError):
    """Transient transport failure; carries how many attempts were made."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


@dataclass
class GuidanceRequest:
    prompt: str
    negative_prompt: str | None
    omega: float
    timestep: int | None
    width: int
    height: int
    image: np.ndarray  # float32 (height, width)
    cond: np.ndarray  # float32 (height, width)

    def __eq__(self, other):
        if not isinstance(other, GuidanceRequest):
            return NotImplemented
        return (
            self.prompt == other.prompt
            and self.negative_prompt == other.negative_prompt
            and self.omega == other.omega
            and self.timestep == other.timestep
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.image, other.image)
            and np.array_equal(self.cond, other.cond)
        )


@dataclass
class GuidanceResponse:
    grad: np.ndarray  # float32, pixel (h, w) or latent (h/pool, w/pool)
    loss: float | None
    space: str  # "pixel" | "latent"
    pool: int

    def __eq__(self, other):
        if not isinstance(other, GuidanceResponse):
            return NotImplemented
        return (
            self.loss == other.loss
            and self.space == other.space
            and self.pool == other.pool
            and np.array_equal(self.grad, other.grad)
        )


def _frame(header: dict, tensors: list[np.ndarray]) -> bytes:
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, bytes([VERSION]), struct.pack("<I", len(header_bytes)), header_bytes]
    for tensor in tensors:
        parts.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(parts)


def _unframe(buf: bytes) -> tuple[dict, bytes]:
    if len(buf) < 9:
        raise ProtocolError(f"frame too short ({len(buf)} bytes)")
    if buf[:4] != MAGIC:
        raise ProtocolError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    if buf[4] != VERSION:
        raise ProtocolError(f"unsupported protocol version {buf[4]}")
    (hlen,) = struct.unpack("<I", buf[5:9])
    if hlen > _MAX_HEADER or 9 + hlen > len(buf):
        raise ProtocolError(f"header length {hlen} exceeds frame")
    try:
        header = json.loads(buf[9 : 9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"malformed JSON header: {e}") from e
    if not isinstance(header, dict):
        raise ProtocolError("JSON header must be an object")
    return header, buf[9 + hlen :]


def encode_request(req: GuidanceRequest) -> bytes:
    for name, arr in (("image", req.image), ("cond", req.cond)):
        if arr.shape != (req.height, req.width):
            raise ProtocolError(
                f"{name} shape {arr.shape} != declared ({req.height}, {req.width})"
            )
    header = {
        "prompt": req.prompt,
        "negative_prompt": req.negative_prompt,
        "omega": req.omega,
        "timestep": req.timestep,
        "width": req.width,
        "height": req.height,
        "channels": 1,
        "tensors": ["image", "cond"],
    }
    return _frame(header, [req.image, req.cond])


def decode_request(buf: bytes) -> GuidanceRequest:
    header, payload = _unframe(buf)
    try:
        width = int(header["width"])
        height = int(header["height"])
        if header.get("channels", 1) != 1:
            raise ProtocolError(f"unsupported channel count {header['channels']}")
        if header["tensors"] != ["image", "cond"]:
            raise ProtocolError(f"unexpected request tensors {header['tensors']}")
        prompt = header["prompt"]
        negative_prompt = header["negative_prompt"]
        omega = float(header["omega"])
        timestep = header["timestep"]
    except KeyError as e:
        raise ProtocolError(f"request header missing key {e}") from e
    expected = 2 * width * height * 4
    if len(payload) != expected:
        raise ProtocolError(
            f"tensor payload is {len(payload)} bytes, expected {expected}"
        )
    n = width * height * 4
    image = np.frombuffer(payload[:n], dtype="<f4").reshape(height, width)
    cond = np.frombuffer(payload[n:], dtype="<f4").reshape(height, width)
    return GuidanceRequest(
        prompt=prompt,
        negative_prompt=negative_prompt,
        omega=omega,
        timestep=None if timestep is None else int(timestep),
        width=width,
        height=height,
        image=image,
        cond=cond,
    )


def encode_response(resp: GuidanceResponse) -> bytes:
    if resp.space not in ("pixel", "latent"):
        raise ProtocolError(f"unknown gradient space {resp.space!r}")
    header = {
        "tensors": ["grad"],
        "loss": resp.loss,
        "space": resp.space,
        "pool": resp.pool,
    }
    return _frame(header, [resp.grad])


def decode_response(buf: bytes, width: int, height: int) -> GuidanceResponse:
    """Decode and shape-validate against the originating request's dims."""
    header, payload = _unframe(buf)
    try:
        if header["tensors"] != ["grad"]:
            raise ProtocolError(f"unexpected response tensors {header['tensors']}")
        space = header["space"]
        pool = int(header["pool"])
        loss = header["loss"]
    except KeyError as e:
        raise ProtocolError(f"response header missing key {e}") from e
    if space not in ("pixel", "latent"):
        raise ProtocolError(f"unknown gradient space {space!r}")
    if pool < 1:
        raise ProtocolError(f"pool must be >= 1, got {pool}")
    if space == "pixel":
        shape = (height, width)
    else:
        if height % pool or width % pool:
            raise ProtocolError(
                f"latent space with pool {pool} does not divide ({height}, {width})"
            )
        shape = (height // pool, width // pool)
    expected = shape[0] * shape[1] * 4
    if len(payload) != expected:
        raise ProtocolError(
            f"gradient payload is {len(payload)} bytes, expected {expected}"
        )
    grad = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return GuidanceResponse(
        grad=grad,
        loss=None if loss is None else float(loss),
        space=space,
        pool=pool,
    )


def remote_guidance_call(
    endpoint: str,
    request: GuidanceRequest,
    timeout: float = 120.0,
    retries: int = 2,
) -> GuidanceResponse:
    """POST the framed request; timeouts/connection drops retry up to ``retries``."""
    import requests

    url = endpoint.rstrip("/") + "/v1/guidance"
    payload = encode_request(request)
    attempts = 0
    while True:
        attempts += 1
        try:
            resp = requests.post(
                url,
                data=payload,
                headers={"content-type": "application/octet-stream"},
                timeout=timeout,
            )
        except (requests.Timeout, requests.ConnectionError) as e:
            if attempts <= retries:
                continue
            raise RetriableBackendError(
                f"guidance endpoint {url} unreachable after {attempts} attempts: {e}",
                attempts=attempts,
            ) from e
        if not 200 <= resp.status_code < 300:
            raise BackendError(
                f"guidance endpoint returned {resp.status_code}: {resp.text[:500]}"
            )
        return decode_response(resp.content, request.width, request.height)
