"""Binary wire protocol and client for remote denoiser/codec/metric services.

Framing is length-prefixed over any byte stream (socket or pipe pair) and
little-endian on the wire regardless of host. One request is in flight per
session; a framing or contract violation poisons the session so no corrupted
state can leak into later calls.

Frame layout: magic "SSWP" | version u16 | msg_type u8 | payload_len u64 |
payload. Tensors travel as dtype u8 (0 = float32) | ndim u8 | dims u32 each |
raw row-major data.
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .lattice import LatentGrid

__all__ = [
    "MAGIC",
    "VERSION",
    "MsgType",
    "WireMessage",
    "BridgeError",
    "FramingError",
    "ProtocolError",
    "RemoteError",
    "frame_message",
    "parse_message",
    "FrameDecoder",
    "encode_tensor",
    "decode_tensor",
    "save_tensor",
    "load_tensor",
    "Session",
    "denoise_remote",
    "RemoteDenoiser",
    "RemoteCodec",
]

MAGIC = b"SSWP"
VERSION = 1
HEADER = struct.Struct("<4sHBQ")
MAX_PAYLOAD = 2**32 - 1
MAX_TENSOR_NDIM = 4
DEFAULT_TIMEOUT = 120.0


class MsgType(IntEnum):
    DENOISE_REQ = 1
    DENOISE_RESP = 2
    ENCODE_REQ = 3
    ENCODE_RESP = 4
    DECODE_REQ = 5
    DECODE_RESP = 6
    METRIC_REQ = 7
    METRIC_RESP = 8
    ERROR = 9
    HELLO = 10
    HELLO_ACK = 11


@dataclass(frozen=True)
class WireMessage:
    msg_type: int
    payload: bytes


class BridgeError(Exception):
    """Base for everything the bridge can raise."""


class FramingError(BridgeError):
    """Byte stream violates the frame layout at a deterministic offset."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"framing error at byte {offset}: {message}")
        self.offset = offset


class ProtocolError(BridgeError):
    """Well-framed traffic that violates the request/response contract."""


class RemoteError(BridgeError):
    """The backend answered with an ERROR message."""


def frame_message(msg_type: int, payload: bytes) -> bytes:
    """Serialize one frame: magic | version | type | length | payload."""
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(MAGIC, VERSION, int(msg_type), len(payload)) + payload


def parse_message(buf: bytes, base_offset: int = 0) -> tuple[WireMessage, int]:
    """Parse one frame from the head of ``buf``; returns (message, consumed).

    Raises FramingError (with the absolute offset of the violation) for bad
    magic or version, and IncompleteFrame if more bytes are needed.
    """
    if len(buf) < HEADER.size:
        raise IncompleteFrame(HEADER.size - len(buf))
    magic, version, msg_type, length = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FramingError(base_offset, f"bad magic {magic!r}")
    if version != VERSION:
        raise FramingError(base_offset + 4, f"unsupported version {version}")
    if length > MAX_PAYLOAD:
        raise FramingError(base_offset + 7, f"payload length {length} exceeds {MAX_PAYLOAD}")
    total = HEADER.size + length
    if len(buf) < total:
        raise IncompleteFrame(total - len(buf))
    return WireMessage(msg_type, bytes(buf[HEADER.size : total])), total


class IncompleteFrame(BridgeError):
    """More bytes are required before the frame can be parsed."""

    def __init__(self, missing: int):
        super().__init__(f"need {missing} more bytes")
        self.missing = missing


class FrameDecoder:
    """Incremental decoder: feed bytes, pop complete messages.

    Tracks the absolute stream offset so a malformed stream always fails at
    the same, reportable position.
    """

    def __init__(self):
        self._buf = bytearray()
        self._offset = 0

    def feed(self, data: bytes) -> list[WireMessage]:
        self._buf.extend(data)
        out = []
        while True:
            try:
                msg, used = parse_message(bytes(self._buf), self._offset)
            except IncompleteFrame:
                break
            del self._buf[:used]
            self._offset += used
            out.append(msg)
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)


def encode_tensor(array: np.ndarray) -> bytes:
    """Serialize an array as float32 TensorWire bytes."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim < 1 or arr.ndim > MAX_TENSOR_NDIM:
        raise ProtocolError(f"tensor rank {arr.ndim} outside 1..{MAX_TENSOR_NDIM}")
    head = struct.pack("<BB", 0, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one TensorWire blob; returns (float32 array, bytes consumed)."""
    if len(buf) - offset < 2:
        raise ProtocolError("tensor header truncated")
    dtype, ndim = struct.unpack_from("<BB", buf, offset)
    if dtype != 0:
        raise ProtocolError(f"unsupported tensor dtype {dtype}")
    if ndim < 1 or ndim > MAX_TENSOR_NDIM:
        raise ProtocolError(f"tensor rank {ndim} outside 1..{MAX_TENSOR_NDIM}")
    pos = offset + 2
    if len(buf) - pos < 4 * ndim:
        raise ProtocolError("tensor dims truncated")
    dims = struct.unpack_from(f"<{ndim}I", buf, pos)
    pos += 4 * ndim
    count = 1
    for d in dims:
        if d < 1:
            raise ProtocolError("tensor dims must be positive")
        count *= d
    nbytes = 4 * count
    if len(buf) - pos < nbytes:
        raise ProtocolError("tensor data truncated")
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(dims)
    return arr.copy(), pos + nbytes - offset


def save_tensor(array: np.ndarray, path) -> None:
    """Write an array to disk in TensorWire form (float32)."""
    with open(path, "wb") as fh:
        fh.write(encode_tensor(array))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, used = decode_tensor(buf)
    if used != len(buf):
        raise ProtocolError(f"{used} tensor bytes followed by {len(buf) - used} trailing bytes")
    return arr


class _Transport:
    """Blocking read/write over a socket or a (reader, writer) file pair."""

    def __init__(self, stream, timeout: float):
        if isinstance(stream, socket.socket):
            stream.settimeout(timeout)
            self._sock = stream
            self._reader = None
            self._writer = None
        else:
            reader, writer = stream
            self._sock = None
            self._reader = reader
            self._writer = writer

    def write(self, data: bytes) -> None:
        if self._sock is not None:
            self._sock.sendall(data)
        else:
            self._writer.write(data)
            self._writer.flush()

    def read_some(self, limit: int = 65536) -> bytes:
        if self._sock is not None:
            chunk = self._sock.recv(limit)
        else:
            chunk = self._reader.read1(limit) if hasattr(self._reader, "read1") else self._reader.read(limit)
        if not chunk:
            raise ProtocolError("peer closed the connection")
        return chunk

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
        else:
            for f in (self._reader, self._writer):
                try:
                    f.close()
                except Exception:
                    pass


class Session:
    """Serial request/response client for one backend connection."""

    def __init__(self, stream, timeout: float = DEFAULT_TIMEOUT):
        self._transport = _Transport(stream, timeout)
        self._decoder = FrameDecoder()
        self._poisoned = False
        self.capabilities: dict = {}

    @classmethod
    def connect_tcp(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> "Session":
        sock = socket.create_connection((host, port), timeout=timeout)
        session = cls(sock, timeout=timeout)
        session.handshake()
        return session

    @property
    def poisoned(self) -> bool:
        return self._poisoned

    def _recv_message(self) -> WireMessage:
        while True:
            try:
                msgs = self._decoder.feed(self._transport.read_some())
            except FramingError:
                self._poisoned = True
                raise
            if msgs:
                if len(msgs) > 1:
                    self._poisoned = True
                    raise ProtocolError("backend sent more than one response in flight")
                return msgs[0]

    def _roundtrip(self, msg_type: MsgType, payload: bytes, expect: MsgType) -> bytes:
        if self._poisoned:
            raise ProtocolError("session is poisoned; open a new connection")
        self._transport.write(frame_message(msg_type, payload))
        msg = self._recv_message()
        if msg.msg_type == MsgType.ERROR:
            raise RemoteError(msg.payload.decode("utf-8", errors="replace"))
        if msg.msg_type != expect:
            self._poisoned = True
            raise ProtocolError(f"expected {expect.name}, got message type {msg.msg_type}")
        return msg.payload

    def handshake(self) -> dict:
        """HELLO / HELLO_ACK exchange; stores the capability blob."""
        payload = self._roundtrip(MsgType.HELLO, b"", MsgType.HELLO_ACK)
        try:
            caps = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            self._poisoned = True
            raise ProtocolError(f"capability blob is not valid JSON: {exc}") from exc
        if not isinstance(caps, dict) or "caps" not in caps:
            self._poisoned = True
            raise ProtocolError("capability blob is missing the 'caps' list")
        self.capabilities = caps
        return caps

    def _require_cap(self, cap: str) -> None:
        if not self.capabilities:
            raise ProtocolError("handshake() must complete before requests")
        if cap not in self.capabilities.get("caps", []):
            raise ProtocolError(f"backend does not advertise the {cap!r} capability")

    def denoise(self, z: LatentGrid, t: int, cond_token: int = 0) -> LatentGrid:
        self._require_cap("denoise")
        payload = encode_tensor(z.data) + struct.pack("<IQ", t, cond_token)
        resp = self._roundtrip(MsgType.DENOISE_REQ, payload, MsgType.DENOISE_RESP)
        arr, used = decode_tensor(resp)
        if used != len(resp):
            self._poisoned = True
            raise ProtocolError("trailing bytes after response tensor")
        if arr.shape != z.data.shape:
            self._poisoned = True
            raise ProtocolError(f"response shape {arr.shape} violates request shape {z.data.shape}")
        return LatentGrid(arr.astype(np.float64))

    def encode_image(self, image: np.ndarray) -> LatentGrid:
        self._require_cap("encode")
        resp = self._roundtrip(MsgType.ENCODE_REQ, encode_tensor(image), MsgType.ENCODE_RESP)
        arr, _ = decode_tensor(resp)
        return LatentGrid(arr.astype(np.float64))

    def decode_latent(self, z: LatentGrid) -> np.ndarray:
        self._require_cap("decode")
        resp = self._roundtrip(MsgType.DECODE_REQ, encode_tensor(z.data), MsgType.DECODE_RESP)
        arr, _ = decode_tensor(resp)
        return arr.astype(np.float64)

    def metric(self, a: np.ndarray, b: np.ndarray, metric_id: str) -> float:
        self._require_cap("metric")
        ident = metric_id.encode("utf-8")
        if len(ident) > 255:
            raise ProtocolError("metric id longer than 255 bytes")
        payload = struct.pack("<B", len(ident)) + ident + encode_tensor(a) + encode_tensor(b)
        resp = self._roundtrip(MsgType.METRIC_REQ, payload, MsgType.METRIC_RESP)
        arr, _ = decode_tensor(resp)
        if arr.size != 1:
            self._poisoned = True
            raise ProtocolError(f"metric response must hold one value, got {arr.size}")
        return float(arr.reshape(-1)[0])

    def close(self) -> None:
        self._transport.close()


def denoise_remote(session: Session, z: LatentGrid, t: int, cond_token: int = 0) -> LatentGrid:
    """Run one remote noise prediction over an established session."""
    return session.denoise(z, t, cond_token)


class RemoteDenoiser:
    """Adapts a bridge session to the Denoiser predict() surface."""

    def __init__(self, session: Session, cond_token: int = 0):
        self.session = session
        self.cond_token = cond_token

    def predict(self, z: LatentGrid, t: int, cond=None) -> LatentGrid:
        token = cond.token if cond is not None else self.cond_token
        return denoise_remote(self.session, z, t, token)


class RemoteCodec:
    """Adapts a bridge session to the LatentCodec surface."""

    codec_id = "bridge"

    def __init__(self, session: Session):
        self.session = session
        self.channels = int(session.capabilities.get("latent_channels", 0)) or None
        self.scale = int(session.capabilities.get("scale", 0)) or None

    def encode(self, image: np.ndarray) -> LatentGrid:
        return self.session.encode_image(image)

    def decode(self, z: LatentGrid) -> np.ndarray:
        return self.session.decode_latent(z)
