"""Binary frame codec for the embedder wire protocol.

Requests: ``<u64 id> <u32 width> <u32 height> <u32 channels>`` (little-endian)
followed by ``width*height*channels`` raw bytes, row-major and
channel-interleaved. Responses: ``<u64 id>`` followed by the embedding as
IEEE-754 binary64 little-endian values. Encode/decode are exact inverses.
"""

from __future__ import annotations

import struct

import numpy as np

REQ_HEADER = struct.Struct("<QIII")
RESP_ID = struct.Struct("<Q")


class FrameError(ValueError):
    """Truncated or inconsistent frame."""


def encode_request(req_id: int, image: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(image, dtype=np.uint8)
    if arr.ndim != 3:
        raise FrameError(f"image must be (H, W, C), got shape {arr.shape}")
    h, w, c = arr.shape
    return REQ_HEADER.pack(req_id, w, h, c) + arr.tobytes()


def decode_request(frame: bytes) -> tuple[int, np.ndarray]:
    if len(frame) < REQ_HEADER.size:
        raise FrameError(f"request frame truncated at {len(frame)} bytes")
    req_id, w, h, c = REQ_HEADER.unpack_from(frame)
    expect = REQ_HEADER.size + w * h * c
    if len(frame) != expect:
        raise FrameError(f"request payload has {len(frame) - REQ_HEADER.size} bytes, want {w * h * c}")
    image = np.frombuffer(frame, dtype=np.uint8, offset=REQ_HEADER.size).reshape(h, w, c)
    return req_id, image


def encode_response(req_id: int, vector) -> bytes:
    vec = np.ascontiguousarray(vector, dtype="<f8")
    if vec.ndim != 1 or vec.size < 1:
        raise FrameError(f"embedding must be a non-empty 1-D vector, got shape {vec.shape}")
    return RESP_ID.pack(req_id) + vec.tobytes()


def decode_response(frame: bytes, dim: int) -> tuple[int, np.ndarray]:
    expect = RESP_ID.size + 8 * dim
    if len(frame) != expect:
        raise FrameError(f"response frame has {len(frame)} bytes, want {expect}")
    (req_id,) = RESP_ID.unpack_from(frame)
    return req_id, np.frombuffer(frame, dtype="<f8", offset=RESP_ID.size).copy()
