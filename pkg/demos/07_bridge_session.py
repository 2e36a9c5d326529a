"""
Talking to a backend over the wire protocol
===========================================

Spin up a tiny echo backend on a loopback socket, complete the handshake,
and run a remote denoise call. A real diffusion backend (or the bundled
TypeScript reference server under server/) speaks the same frames:

    magic "SSWP" | version u16 | msg_type u8 | payload_len u64 | payload
"""

import json
import socket
import struct
import threading

import numpy as np

from noisepair.bridge import MsgType, Session, denoise_remote, frame_message
from noisepair.lattice import LatentGrid

HEADER = struct.Struct("<4sHBQ")


def echo_backend(listener):
    conn, _ = listener.accept()
    with conn:
        buf = b""
        while True:
            chunk = conn.recv(65536)
            if not chunk:
                return
            buf += chunk
            while len(buf) >= HEADER.size:
                _, _, msg_type, length = HEADER.unpack_from(buf)
                if len(buf) < HEADER.size + length:
                    break
                payload = buf[HEADER.size : HEADER.size + length]
                buf = buf[HEADER.size + length :]
                if msg_type == MsgType.HELLO:
                    caps = json.dumps({"caps": ["denoise"], "latent_channels": 3, "scale": 1})
                    conn.sendall(frame_message(MsgType.HELLO_ACK, caps.encode()))
                elif msg_type == MsgType.DENOISE_REQ:
                    conn.sendall(frame_message(MsgType.DENOISE_RESP, payload[:-12]))


listener = socket.socket()
listener.bind(("127.0.0.1", 0))
listener.listen(1)
port = listener.getsockname()[1]
threading.Thread(target=echo_backend, args=(listener,), daemon=True).start()

hello = frame_message(MsgType.HELLO, b"")
print(f"HELLO frame on the wire : {hello.hex(' ')}")

session = Session.connect_tcp("127.0.0.1", port)
print(f"backend capabilities    : {session.capabilities}")

z = LatentGrid(np.random.default_rng(0).standard_normal((3, 8, 8)))
eps = denoise_remote(session, z, t=25, cond_token=99)
drift = np.abs(eps.data - z.data.astype(np.float32)).max()
print(f"echo denoise max drift  : {drift:.1e}  (float32 wire precision)")
session.close()
listener.close()
