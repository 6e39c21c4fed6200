"""HTTP sidecar for the operator console.

Serves the console's static assets and exposes the control protocol over
a WebSocket at /ws: each text frame carries exactly one newline-delimited
JSON message, byte-identical to the TCP control protocol, pumped to and
from a per-connection TCP client against the control port.
"""

from __future__ import annotations

import base64
import hashlib
import socket
import struct
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


def ws_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def ws_encode_frame(payload: bytes, opcode: int = 0x1) -> bytes:
    header = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        header += bytes([n])
    elif n < 1 << 16:
        header += bytes([126]) + struct.pack(">H", n)
    else:
        header += bytes([127]) + struct.pack(">Q", n)
    return header + payload


def ws_read_frame(sock: socket.socket):
    """Returns (opcode, payload) or None on EOF; handles masked client
    frames and continuation fragments."""

    def read_exact(n: int) -> bytes | None:
        buf = b""
        while len(buf) < n:
            chunk = sock.recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    message = b""
    opcode = None
    while True:
        head = read_exact(2)
        if head is None:
            return None
        fin = head[0] & 0x80
        op = head[0] & 0x0F
        masked = head[1] & 0x80
        length = head[1] & 0x7F
        if length == 126:
            ext = read_exact(2)
            if ext is None:
                return None
            (length,) = struct.unpack(">H", ext)
        elif length == 127:
            ext = read_exact(8)
            if ext is None:
                return None
            (length,) = struct.unpack(">Q", ext)
        mask = b""
        if masked:
            mask = read_exact(4)
            if mask is None:
                return None
        payload = read_exact(length) if length else b""
        if payload is None:
            return None
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        if op != 0x0:
            opcode = op
        message += payload
        if fin:
            return opcode, message


class BridgeHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "synchrodaq-console"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def do_GET(self):
        if self.path == "/ws":
            self._upgrade_websocket()
            return
        self._serve_static()

    # --- websocket ------------------------------------------------------------

    def _upgrade_websocket(self):
        key = self.headers.get("Sec-WebSocket-Key")
        if self.headers.get("Upgrade", "").lower() != "websocket" or not key:
            self.send_error(400, "expected a WebSocket upgrade")
            return
        self.send_response(101, "Switching Protocols")
        self.send_header("Upgrade", "websocket")
        self.send_header("Connection", "Upgrade")
        self.send_header("Sec-WebSocket-Accept", ws_accept_key(key))
        self.end_headers()
        self.close_connection = True

        ws = self.connection
        try:
            tcp = socket.create_connection(
                (self.server.control_host, self.server.control_port), timeout=10.0
            )
        except OSError:
            ws.sendall(ws_encode_frame(b"", opcode=0x8))
            return
        tcp.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        send_lock = threading.Lock()

        def tcp_to_ws():
            try:
                rfile = tcp.makefile("rb")
                for line in rfile:
                    with send_lock:
                        ws.sendall(ws_encode_frame(line))
            except OSError:
                pass
            finally:
                try:
                    with send_lock:
                        ws.sendall(ws_encode_frame(b"", opcode=0x8))
                except OSError:
                    pass

        pump = threading.Thread(target=tcp_to_ws, daemon=True)
        pump.start()
        try:
            while True:
                frame = ws_read_frame(ws)
                if frame is None:
                    break
                opcode, payload = frame
                if opcode == 0x8:
                    break
                if opcode == 0x9:  # ping
                    with send_lock:
                        ws.sendall(ws_encode_frame(payload, opcode=0xA))
                    continue
                if payload and not payload.endswith(b"\n"):
                    payload += b"\n"
                tcp.sendall(payload)
        except OSError:
            pass
        finally:
            try:
                tcp.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            tcp.close()

    # --- static assets ----------------------------------------------------------

    def _serve_static(self):
        root = self.server.static_dir
        if root is None:
            self.send_error(404, "no static assets configured")
            return
        rel = self.path.split("?", 1)[0].lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if root.resolve() not in target.parents and target != root.resolve():
            self.send_error(403)
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self.send_error(404)
            return
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", CONTENT_TYPES.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class ConsoleBridge(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, host: str, port: int, control_host: str, control_port: int, static_dir=None):
        super().__init__((host, port), BridgeHandler)
        self.control_host = control_host
        self.control_port = control_port
        self.static_dir = Path(static_dir) if static_dir else None


def start_bridge(
    host: str, port: int, control_host: str, control_port: int, static_dir=None
) -> ConsoleBridge:
    bridge = ConsoleBridge(host, port, control_host, control_port, static_dir)
    threading.Thread(target=bridge.serve_forever, daemon=True).start()
    return bridge
