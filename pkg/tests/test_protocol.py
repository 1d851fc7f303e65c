import json
import struct

import numpy as np
import pytest

from strokeboard import protocol
from strokeboard.protocol import (
    BackendError,
    GuidanceRequest,
    GuidanceResponse,
    ProtocolError,
    RetriableBackendError,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
    remote_guidance_call,
)


def _request(w=4, h=3):
    gen = np.random.default_rng(0)
    return GuidanceRequest(
        prompt="a tortoise and a hare",
        negative_prompt=None,
        omega=100.0,
        timestep=500,
        width=w,
        height=h,
        image=gen.random((h, w)).astype(np.float32),
        cond=gen.random((h, w)).astype(np.float32),
    )


def test_request_roundtrip_field_by_field():
    req = _request()
    back = decode_request(encode_request(req))
    assert back == req


def test_response_roundtrip_field_by_field():
    grad = np.random.default_rng(1).standard_normal((3, 4)).astype(np.float32)
    resp = GuidanceResponse(grad=grad, loss=1.25, space="pixel", pool=1)
    back = decode_response(encode_response(resp), width=4, height=3)
    assert back == resp


def test_latent_response_roundtrip():
    grad = np.zeros((2, 2), dtype=np.float32)
    resp = GuidanceResponse(grad=grad, loss=None, space="latent", pool=8)
    back = decode_response(encode_response(resp), width=16, height=16)
    assert back == resp


def test_golden_request_bytes():
    # Hand-constructed frame per the framing rules: magic, version 0x01,
    # little-endian header length, canonical JSON, float32 LE tensors.
    image = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    cond = np.array([[0.0, 0.5], [0.25, 1.0]], dtype=np.float32)
    req = GuidanceRequest(
        prompt="x",
        negative_prompt=None,
        omega=100.0,
        timestep=None,
        width=2,
        height=2,
        image=image,
        cond=cond,
    )
    header = (
        '{"prompt":"x","negative_prompt":null,"omega":100.0,"timestep":null,'
        '"width":2,"height":2,"channels":1,"tensors":["image","cond"]}'
    ).encode("utf-8")
    expected = (
        b"SDRG"
        + bytes([1])
        + struct.pack("<I", len(header))
        + header
        + struct.pack("<8f", 1.0, 2.0, 3.0, 4.0, 0.0, 0.5, 0.25, 1.0)
    )
    assert encode_request(req) == expected
    assert decode_request(expected) == req


def test_golden_response_bytes():
    grad = np.array([[0.5, -1.0], [2.0, 0.0]], dtype=np.float32)
    resp = GuidanceResponse(grad=grad, loss=3.5, space="pixel", pool=1)
    header = b'{"tensors":["grad"],"loss":3.5,"space":"pixel","pool":1}'
    expected = (
        b"SDRG"
        + bytes([1])
        + struct.pack("<I", len(header))
        + header
        + struct.pack("<4f", 0.5, -1.0, 2.0, 0.0)
    )
    assert encode_response(resp) == expected
    assert decode_response(expected, width=2, height=2) == resp


def test_bad_magic():
    buf = b"XXXX" + bytes([1]) + struct.pack("<I", 2) + b"{}"
    with pytest.raises(ProtocolError):
        protocol._unframe(buf)


def test_bad_version():
    buf = b"SDRG" + bytes([9]) + struct.pack("<I", 2) + b"{}"
    with pytest.raises(ProtocolError):
        protocol._unframe(buf)


def test_truncated_header():
    buf = b"SDRG" + bytes([1]) + struct.pack("<I", 100) + b"{}"
    with pytest.raises(ProtocolError):
        protocol._unframe(buf)


def test_payload_size_mismatch():
    req = _request()
    buf = encode_request(req)
    with pytest.raises(ProtocolError):
        decode_request(buf[:-4])


def test_response_shape_validation():
    grad = np.zeros((3, 3), dtype=np.float32)
    buf = encode_response(GuidanceResponse(grad=grad, loss=None, space="pixel", pool=1))
    with pytest.raises(ProtocolError):
        decode_response(buf, width=4, height=4)
    buf2 = encode_response(GuidanceResponse(grad=grad, loss=None, space="latent", pool=8))
    with pytest.raises(ProtocolError):
        decode_response(buf2, width=20, height=20)  # 20 not divisible by 8


def test_remote_call_zero_server(stub_guidance_server):
    endpoint, server = stub_guidance_server
    req = _request(w=8, h=8)
    resp = remote_guidance_call(endpoint, req, timeout=5)
    assert resp.loss is None
    assert resp.space == "pixel"
    assert np.array_equal(resp.grad, np.zeros((8, 8), dtype=np.float32))
    # The server decoded exactly what we framed.
    assert decode_request(server.requests[-1]) == req


def test_remote_call_latent_server(stub_guidance_server):
    endpoint, server = stub_guidance_server
    server.mode = "latent"
    resp = remote_guidance_call(endpoint, _request(w=16, h=16), timeout=5)
    assert resp.space == "latent"
    assert resp.pool == 8
    assert resp.grad.shape == (2, 2)
    assert resp.loss == 0.5


def test_remote_call_backend_error_carries_body(stub_guidance_server):
    endpoint, server = stub_guidance_server
    server.mode = "error"
    with pytest.raises(BackendError) as exc:
        remote_guidance_call(endpoint, _request(), timeout=5)
    assert "backend exploded" in str(exc.value)
    assert not isinstance(exc.value, RetriableBackendError)


def test_remote_call_unreachable_is_retriable():
    with pytest.raises(RetriableBackendError) as exc:
        remote_guidance_call("http://127.0.0.1:9", _request(), timeout=0.2, retries=1)
    assert exc.value.attempts == 2
