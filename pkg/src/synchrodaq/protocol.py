"""Wire formats shared by the server, the sensor clients and the bridge.

Control/telemetry: newline-delimited UTF-8 JSON messages over TCP.
Ingestion: length-prefixed records (4-byte little-endian length followed
by a UTF-8 JSON body) on a dedicated socket.
"""

from __future__ import annotations

import json
import socket
import struct

DEFAULT_CONTROL_PORT = 7340
DEFAULT_INGEST_PORT = 7341
DEFAULT_HTTP_PORT = 7342

MAX_RECORD_BYTES = 16 * 1024 * 1024


def encode_message(obj: dict) -> bytes:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True).encode("utf-8") + b"\n"


def decode_message(line: bytes) -> dict:
    return json.loads(line.decode("utf-8"))


def encode_record(obj: dict) -> bytes:
    body = json.dumps(obj, separators=(",", ":"), sort_keys=True).encode("utf-8")
    return struct.pack("<I", len(body)) + body


def read_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on a clean EOF before any byte."""
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            return None if got == 0 else b"".join(chunks)
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_record(sock: socket.socket) -> dict | None:
    header = read_exact(sock, 4)
    if header is None or len(header) < 4:
        return None
    (length,) = struct.unpack("<I", header)
    if length > MAX_RECORD_BYTES:
        raise ValueError(f"record of {length} bytes exceeds the {MAX_RECORD_BYTES} limit")
    body = read_exact(sock, length)
    if body is None or len(body) < length:
        return None
    return json.loads(body.decode("utf-8"))
