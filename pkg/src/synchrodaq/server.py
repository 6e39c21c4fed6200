"""Real-time acquisition hub.

Registers streams, stamps every incoming sample on a single monotonic
server clock mapped once to wall time, buffers and records sessions to
per-modality CSV files, reports per-stream health, and serves the
newline-JSON control protocol plus the length-prefixed ingestion socket.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import protocol
from .core import Modality, SchemaError, SessionMeta, StreamSpec, parse_manifest_dict, write_manifest
from .recordings import WRITERS

log = logging.getLogger(__name__)

HEALTH_WINDOW_S = 2.0
STALE_AFTER_S = 2.0
QUEUE_LIMIT = 4096
HEALTH_PUSH_PERIOD_S = 1.0
TELEMETRY_PUSH_PERIOD_S = 0.1


class ServerError(RuntimeError):
    pass


class _Stream:
    def __init__(self, spec: StreamSpec):
        self.spec = spec
        self.writer = WRITERS[spec.modality]
        self.recent: deque[tuple[int, Optional[int]]] = deque()
        self.sample_count = 0
        self.session_samples = 0
        self.drops = 0
        self.rows_written = 0
        self.bytes_written = 0
        self.latest_payload: Optional[dict] = None
        self.queue: deque[list[str]] = deque()
        self.file = None
        self.writer_thread: Optional[threading.Thread] = None


@dataclass
class _Session:
    meta: SessionMeta
    directory: Path
    started_at_ns: int
    stop_flag: threading.Event = field(default_factory=threading.Event)


class AcquisitionServer:
    """Threaded stream hub; all public methods are safe to call concurrently."""

    def __init__(
        self,
        data_dir: Path,
        control_port: int = protocol.DEFAULT_CONTROL_PORT,
        ingest_port: int = protocol.DEFAULT_INGEST_PORT,
        host: str = "127.0.0.1",
        queue_limit: int = QUEUE_LIMIT,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.host = host
        self.queue_limit = queue_limit
        self._wall0_ns = time.time_ns()
        self._mono0_ns = time.monotonic_ns()
        self._lock = threading.RLock()
        self._streams: dict[str, _Stream] = {}
        self._phase = "Idle"
        self._session: Optional[_Session] = None
        self._last_summary: Optional[dict] = None
        self._subscribers: list[tuple[object, str]] = []  # (wfile, kind)
        self._closing = threading.Event()
        self._threads: list[threading.Thread] = []

        self._control_sock = self._listen(control_port)
        self._ingest_sock = self._listen(ingest_port)
        self.control_port = self._control_sock.getsockname()[1]
        self.ingest_port = self._ingest_sock.getsockname()[1]
        self._spawn(self._accept_loop, self._control_sock, self._control_conn)
        self._spawn(self._accept_loop, self._ingest_sock, self._ingest_conn)
        self._spawn(self._push_loop)

    # --- clock ----------------------------------------------------------------

    def now_ns(self) -> int:
        """Monotonic clock mapped once at startup to wall time; immune to
        wall-clock jumps mid-session."""
        return self._wall0_ns + (time.monotonic_ns() - self._mono0_ns)

    # --- core operations --------------------------------------------------------

    def register_stream(self, spec: StreamSpec) -> str:
        with self._lock:
            if spec.stream_id in self._streams:
                raise ServerError(f"stream id {spec.stream_id!r} already registered")
            self._streams[spec.stream_id] = _Stream(spec)
            if self._phase == "Recording":
                self._open_stream_file(self._streams[spec.stream_id])
        return spec.stream_id

    def ingest(self, stream_id: str, payload: dict, source_ts: Optional[int] = None) -> dict:
        """Stamp, buffer and (while recording) persist one sample."""
        stream = self._streams.get(stream_id)
        if stream is None:
            raise ServerError(f"unknown stream {stream_id!r}")
        stream.writer.validate(payload)
        with self._lock:
            server_ts = self.now_ns()
            stream.sample_count += 1
            stream.latest_payload = payload
            stream.recent.append((server_ts, source_ts))
            horizon = server_ts - int((HEALTH_WINDOW_S + 1.0) * 1e9)
            while stream.recent and stream.recent[0][0] < horizon:
                stream.recent.popleft()
            if self._phase == "Recording" and stream.file is not None:
                stream.session_samples += 1
                if len(stream.queue) >= self.queue_limit:
                    stream.queue.popleft()
                    stream.drops += 1
                stream.queue.append(stream.writer.payload_rows(server_ts, source_ts, payload))
        return {"ok": 1, "server_ts_ns": server_ts}

    def start_session(self, meta: SessionMeta) -> dict:
        with self._lock:
            if self._phase != "Idle":
                raise ServerError(f"cannot start a session while {self._phase}")
            if not self._streams:
                raise ServerError("no streams registered")
            by_modality: dict[Modality, str] = {}
            for s in self._streams.values():
                if s.spec.modality in by_modality:
                    raise ServerError(
                        f"streams {by_modality[s.spec.modality]!r} and {s.spec.stream_id!r} "
                        f"share modality {s.spec.modality.value}; one per modality is recordable"
                    )
                by_modality[s.spec.modality] = s.spec.stream_id
            directory = self.data_dir / meta.session_name()
            directory.mkdir(parents=True, exist_ok=True)
            write_manifest(meta, [s.spec for s in self._streams.values()], directory / "manifest.json")
            self._session = _Session(meta, directory, self.now_ns())
            for stream in self._streams.values():
                stream.session_samples = 0
                stream.rows_written = 0
                stream.bytes_written = 0
                stream.drops = 0
                self._open_stream_file(stream)
            self._phase = "Recording"
            return {"phase": self._phase, "dir": str(directory)}

    def _open_stream_file(self, stream: _Stream) -> None:
        assert self._session is not None
        path = self._session.directory / stream.writer.filename
        stream.file = open(path, "w", encoding="utf-8")
        header = ",".join(stream.writer.header) + "\n"
        stream.file.write(header)
        stream.bytes_written += len(header.encode("utf-8"))
        stream.queue.clear()
        stream.writer_thread = threading.Thread(
            target=self._drain_loop, args=(stream,), daemon=True
        )
        stream.writer_thread.start()

    def _drain_loop(self, stream: _Stream) -> None:
        session = self._session
        while True:
            wrote = self._drain_once(stream)
            if not wrote:
                if session is None or session.stop_flag.is_set():
                    if not self._drain_once(stream):
                        return
                else:
                    time.sleep(0.002)

    def _drain_once(self, stream: _Stream) -> bool:
        rows: list[str] = []
        with self._lock:
            while stream.queue:
                rows.extend(stream.queue.popleft())
            file = stream.file
        if not rows or file is None:
            return False
        data = "\n".join(rows) + "\n"
        file.write(data)
        with self._lock:
            stream.rows_written += len(rows)
            stream.bytes_written += len(data.encode("utf-8"))
        return True

    def stop_session(self) -> dict:
        with self._lock:
            if self._phase != "Recording" or self._session is None:
                raise ServerError(f"cannot stop a session while {self._phase}")
            self._phase = "Stopped"
            session = self._session
            session.stop_flag.set()
            writers = [s.writer_thread for s in self._streams.values() if s.writer_thread]
        for t in writers:
            t.join(timeout=30.0)
        with self._lock:
            summary = {}
            for stream in self._streams.values():
                if stream.file is not None:
                    stream.file.flush()
                    stream.file.close()
                    stream.file = None
                stream.writer_thread = None
                summary[stream.spec.stream_id] = {
                    "samples": stream.session_samples,
                    "rows": stream.rows_written,
                    "bytes": stream.bytes_written,
                    "drops": stream.drops,
                }
            elapsed_ns = max(self.now_ns() - session.started_at_ns, 1)
            result = {
                "dir": str(session.directory),
                "elapsed_s": elapsed_ns / 1e9,
                "bytes_total": sum(v["bytes"] for v in summary.values()),
                "bytes_per_minute": sum(v["bytes"] for v in summary.values()) * 60e9 / elapsed_ns,
                "streams": summary,
            }
            self._last_summary = result
            self._session = None
            self._phase = "Idle"
            return result

    def snapshot_health(self) -> dict:
        with self._lock:
            now = self.now_ns()
            streams = []
            for stream in self._streams.values():
                window = [(s, src) for s, src in stream.recent if now - s <= HEALTH_WINDOW_S * 1e9]
                age_ms = None
                if stream.recent:
                    age_ms = (now - stream.recent[-1][0]) / 1e6
                stale = age_ms is None or age_ms > STALE_AFTER_S * 1e3
                rate = 0.0
                if not stale and len(window) >= 2:
                    span_ns = window[-1][0] - window[0][0]
                    if span_ns > 0:
                        rate = (len(window) - 1) * 1e9 / span_ns
                lat = [s - src for s, src in window if src is not None]
                latency_ms = (sum(lat) / len(lat)) / 1e6 if lat else None
                streams.append(
                    {
                        "stream_id": stream.spec.stream_id,
                        "modality": stream.spec.modality.value,
                        "nominal_rate_hz": stream.spec.nominal_rate_hz,
                        "observed_rate_hz": rate,
                        "last_sample_age_ms": age_ms,
                        "mean_recording_latency_ms": latency_ms,
                        "sample_count": stream.sample_count,
                        "session_samples": stream.session_samples,
                        "drops": stream.drops,
                        "bytes_written": stream.bytes_written,
                        "stale": stale,
                    }
                )
            snapshot = {
                "snapshot_ts_ns": now,
                "phase": self._phase,
                "window_s": HEALTH_WINDOW_S,
                "streams": streams,
            }
            if self._session is not None:
                elapsed_ns = max(now - self._session.started_at_ns, 1)
                total = sum(s["bytes_written"] for s in streams)
                snapshot["session"] = {
                    "dir": str(self._session.directory),
                    "meta": {"subject": self._session.meta.subject, "trial": self._session.meta.trial},
                    "bytes_per_minute": total * 60e9 / elapsed_ns,
                }
            return snapshot

    # --- control protocol -------------------------------------------------------

    def handle_control(self, msg: dict) -> dict:
        """Execute one control message and build the reply document."""
        cmd = msg.get("cmd")
        try:
            if cmd == "status":
                snap = self.snapshot_health()
                return {"ok": True, **snap}
            if cmd == "list_streams":
                with self._lock:
                    specs = [
                        {
                            "stream_id": s.spec.stream_id,
                            "modality": s.spec.modality.value,
                            "nominal_rate_hz": s.spec.nominal_rate_hz,
                            "channel_count": s.spec.channel_count,
                        }
                        for s in self._streams.values()
                    ]
                return {"ok": True, "streams": specs}
            if cmd == "register_stream":
                entry = msg.get("spec", {})
                try:
                    modality = Modality(entry.get("modality"))
                except ValueError:
                    return {"ok": False, "error": f"unknown modality tag {entry.get('modality')!r}"}
                spec = StreamSpec(
                    stream_id=entry.get("stream_id", ""),
                    modality=modality,
                    nominal_rate_hz=float(entry.get("nominal_rate_hz", 0)),
                    channel_count=int(entry.get("channel_count", 1)),
                )
                self.register_stream(spec)
                return {"ok": True, "stream_id": spec.stream_id}
            if cmd == "start_session":
                meta, _ = parse_manifest_dict({**msg.get("meta", {}), "streams": []})
                return {"ok": True, **self.start_session(meta)}
            if cmd == "stop_session":
                return {"ok": True, **self.stop_session()}
        except (ServerError, SchemaError, ValueError) as exc:
            return {"ok": False, "error": str(exc)}
        return {"ok": False, "error": f"unknown command {cmd!r}"}

    # --- sockets -----------------------------------------------------------------

    def _listen(self, port: int) -> socket.socket:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, port))
        sock.listen(32)
        return sock

    def _spawn(self, fn, *args) -> None:
        t = threading.Thread(target=fn, args=args, daemon=True)
        t.start()
        self._threads.append(t)

    def _accept_loop(self, listener: socket.socket, handler) -> None:
        while not self._closing.is_set():
            try:
                conn, _addr = listener.accept()
            except OSError:
                return
            self._spawn(handler, conn)

    def _control_conn(self, conn: socket.socket) -> None:
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        rfile = conn.makefile("rb")
        wfile = conn.makefile("wb")
        wlock = threading.Lock()
        subscribed: list[str] = []
        try:
            for line in rfile:
                line = line.strip()
                if not line:
                    continue
                try:
                    msg = protocol.decode_message(line)
                except ValueError as exc:
                    reply = {"ok": False, "error": f"malformed message: {exc}"}
                else:
                    cmd = msg.get("cmd")
                    if cmd in ("subscribe_health", "subscribe_telemetry"):
                        kind = "health" if cmd == "subscribe_health" else "telemetry"
                        with self._lock:
                            self._subscribers.append(((wfile, wlock), kind))
                        subscribed.append(kind)
                        reply = {"ok": True, "subscribed": kind}
                    else:
                        reply = self.handle_control(msg)
                with wlock:
                    wfile.write(protocol.encode_message(reply))
                    wfile.flush()
        except (OSError, ValueError):
            pass
        finally:
            with self._lock:
                self._subscribers = [s for s in self._subscribers if s[0][0] is not wfile]
            for f in (rfile, wfile):
                try:
                    f.close()
                except OSError:
                    pass
            conn.close()

    def _ingest_conn(self, conn: socket.socket) -> None:
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        try:
            while True:
                try:
                    record = protocol.read_record(conn)
                except (ValueError, OSError) as exc:
                    conn.sendall(protocol.encode_record({"ok": 0, "error": str(exc)}))
                    return
                if record is None:
                    return
                try:
                    ack = self.ingest(
                        record.get("stream_id", ""),
                        record.get("payload", {}),
                        record.get("source_ts_ns"),
                    )
                except (ServerError, SchemaError) as exc:
                    ack = {"ok": 0, "error": str(exc)}
                conn.sendall(protocol.encode_record(ack))
        except OSError:
            pass
        finally:
            conn.close()

    def _push_loop(self) -> None:
        last_health = 0.0
        while not self._closing.wait(TELEMETRY_PUSH_PERIOD_S):
            now = time.monotonic()
            with self._lock:
                subs = list(self._subscribers)
                latest = {
                    sid: s.latest_payload
                    for sid, s in self._streams.items()
                    if s.latest_payload is not None
                }
            if not subs:
                continue
            messages = []
            if now - last_health >= HEALTH_PUSH_PERIOD_S:
                last_health = now
                messages.append(("health", {"event": "health", **self.snapshot_health()}))
            messages.append(
                ("telemetry", {"event": "telemetry", "t_ns": self.now_ns(), "latest": latest})
            )
            for (wfile, wlock), kind in subs:
                for mkind, payload in messages:
                    if mkind != kind:
                        continue
                    try:
                        with wlock:
                            wfile.write(protocol.encode_message(payload))
                            wfile.flush()
                    except (OSError, ValueError):
                        with self._lock:
                            self._subscribers = [
                                s for s in self._subscribers if s[0][0] is not wfile
                            ]

    def close(self) -> Optional[dict]:
        """Stop accepting, flush any open session, shut the server down."""
        summary = None
        with self._lock:
            recording = self._phase == "Recording"
        if recording:
            summary = self.stop_session()
        self._closing.set()
        for sock in (self._control_sock, self._ingest_sock):
            try:
                sock.close()
            except OSError:
                pass
        return summary

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
