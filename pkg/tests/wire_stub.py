"""Minimal in-process backend used to exercise the bridge client.

Deliberately independent of the Session class: frames are read and written
with explicit struct calls so client bugs cannot cancel out against
themselves.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
from contextlib import contextmanager

HEADER = struct.Struct("<4sHBQ")
CAPS = {"caps": ["denoise", "encode", "decode", "metric"], "latent_channels": 3, "scale": 1}


def read_frame(conn: socket.socket):
    head = b""
    while len(head) < HEADER.size:
        chunk = conn.recv(HEADER.size - len(head))
        if not chunk:
            return None
        head += chunk
    magic, version, msg_type, length = HEADER.unpack(head)
    if magic != b"SSWP" or version != 1:
        raise ValueError("stub got a malformed frame")
    payload = b""
    while len(payload) < length:
        chunk = conn.recv(length - len(payload))
        if not chunk:
            return None
        payload += chunk
    return msg_type, payload


def write_frame(conn: socket.socket, msg_type: int, payload: bytes) -> None:
    conn.sendall(HEADER.pack(b"SSWP", 1, msg_type, len(payload)) + payload)


def echo_handler(msg_type: int, payload: bytes):
    """HELLO -> caps; DENOISE/ENCODE/DECODE -> echo the tensor back."""
    if msg_type == 10:
        return 11, json.dumps(CAPS).encode()
    if msg_type == 1:
        # strip the trailing u32 t + u64 cond, echo the tensor bytes
        return 2, payload[:-12]
    if msg_type == 3:
        return 4, payload
    if msg_type == 5:
        return 6, payload
    if msg_type == 7:
        # constant metric of 0.25 regardless of inputs
        return 8, struct.pack("<BB", 0, 1) + struct.pack("<I", 1) + struct.pack("<f", 0.25)
    return 9, f"unsupported message type {msg_type}".encode()


def shape_mangler_handler(msg_type: int, payload: bytes):
    """Answers denoise requests with a 1x1x1 tensor no matter the request."""
    if msg_type == 10:
        return 11, json.dumps(CAPS).encode()
    if msg_type == 1:
        return 2, struct.pack("<BB", 0, 3) + struct.pack("<3I", 1, 1, 1) + struct.pack("<f", 0.0)
    return 9, b"nope"


def error_handler(msg_type: int, payload: bytes):
    if msg_type == 10:
        return 11, json.dumps(CAPS).encode()
    return 9, "backend exploded: out of virtual memory".encode()


@contextmanager
def stub_backend(handler=echo_handler):
    """Run a one-connection-at-a-time stub on an ephemeral TCP port."""
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind(("127.0.0.1", 0))
    listener.listen(4)
    port = listener.getsockname()[1]
    stop = threading.Event()

    def serve():
        listener.settimeout(0.2)
        while not stop.is_set():
            try:
                conn, _ = listener.accept()
            except socket.timeout:
                continue
            with conn:
                try:
                    while True:
                        frame = read_frame(conn)
                        if frame is None:
                            break
                        write_frame(conn, *handler(*frame))
                except (ValueError, OSError):
                    pass

    thread = threading.Thread(target=serve, daemon=True)
    thread.start()
    try:
        yield "127.0.0.1", port
    finally:
        stop.set()
        thread.join(timeout=2)
        listener.close()
