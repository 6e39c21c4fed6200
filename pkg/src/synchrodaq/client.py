"""Drives the four simulated sensor clients against a live server.

Realtime mode paces each stream on its own thread and connection at true
wall-clock rate. Replay mode sends the merged timeline in emission order
over a single multiplexed connection as fast as the server accepts it:
TCP ordering then guarantees the server stamps samples in emission
order, so offline alignment of a compressed replay stays faithful.
Source timestamps are stamped at send time minus the configured
per-stream transmission latency, so the server's latency accounting sees
the injected delays in either mode.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass, field

from . import protocol
from .simulate import GroundTruthScenario, SimSample


class ClientError(RuntimeError):
    pass


@dataclass
class StreamStats:
    sent: int = 0
    acked: int = 0
    errors: int = 0
    messages: list[str] = field(default_factory=list)


@dataclass
class RunSummary:
    streams: dict[str, StreamStats]
    wall_s: float

    @property
    def total_sent(self) -> int:
        return sum(s.sent for s in self.streams.values())

    @property
    def total_acked(self) -> int:
        return sum(s.acked for s in self.streams.values())

    @property
    def total_errors(self) -> int:
        return sum(s.errors for s in self.streams.values())


def _connect(host: str, port: int) -> socket.socket:
    try:
        sock = socket.create_connection((host, port), timeout=10.0)
    except OSError as exc:
        raise ClientError(f"cannot reach server at {host}:{port}: {exc}") from exc
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def control_request(host: str, port: int, msg: dict, timeout: float = 10.0) -> dict:
    """One request/response round-trip on a fresh control connection."""
    with _connect(host, port) as sock:
        sock.settimeout(timeout)
        sock.sendall(protocol.encode_message(msg))
        buf = b""
        while b"\n" not in buf:
            chunk = sock.recv(65536)
            if not chunk:
                raise ClientError("server closed the control connection")
            buf += chunk
        return protocol.decode_message(buf.split(b"\n", 1)[0])


def register_streams(host: str, control_port: int, scenario: GroundTruthScenario) -> None:
    """Register the scenario's streams, skipping ids the server already has."""
    listing = control_request(host, control_port, {"cmd": "list_streams"})
    if not listing.get("ok"):
        raise ClientError(f"list_streams failed: {listing.get('error')}")
    known = {s["stream_id"] for s in listing["streams"]}
    for spec in scenario.stream_specs():
        if spec.stream_id in known:
            continue
        reply = control_request(
            host,
            control_port,
            {
                "cmd": "register_stream",
                "spec": {
                    "stream_id": spec.stream_id,
                    "modality": spec.modality.value,
                    "nominal_rate_hz": spec.nominal_rate_hz,
                    "channel_count": spec.channel_count,
                },
            },
        )
        if not reply.get("ok"):
            raise ClientError(f"registering {spec.stream_id!r} failed: {reply.get('error')}")


def _ack_reader(sock: socket.socket, order, stats_by_id: dict[str, StreamStats], done: threading.Event) -> None:
    """Attribute acks to streams; the server handles one connection
    sequentially, so acks arrive in send order and `order` (a FIFO of
    stream ids in send order) resolves the owner of each ack."""
    try:
        while True:
            ack = protocol.read_record(sock)
            if ack is None:
                return
            stats = stats_by_id[order.popleft()]
            if ack.get("ok"):
                stats.acked += 1
            else:
                stats.errors += 1
                if len(stats.messages) < 10:
                    stats.messages.append(str(ack.get("error")))
            if done.is_set() and not order:
                return
    except (OSError, ValueError, IndexError, KeyError):
        return


def _send(sock: socket.socket, stream_id: str, sample: SimSample, stats: StreamStats) -> None:
    record: dict = {"stream_id": stream_id, "payload": sample.payload}
    if sample.latency_s is not None:
        record["source_ts_ns"] = time.time_ns() - int(sample.latency_s * 1e9)
    sock.sendall(protocol.encode_record(record))
    stats.sent += 1


def run_clients(
    host: str,
    control_port: int,
    ingest_port: int,
    scenario: GroundTruthScenario,
    realtime: bool = False,
    register: bool = True,
    ack_timeout_s: float = 60.0,
) -> RunSummary:
    """Stream the whole scenario; returns per-stream sent/acked counts."""
    from collections import deque

    if register:
        register_streams(host, control_port, scenario)
    streams = scenario.streams()
    stats = {sid: StreamStats() for sid in streams}
    done = threading.Event()
    socks: list[socket.socket] = []
    readers: list[threading.Thread] = []

    t_start = time.monotonic()
    try:
        if realtime:
            per_stream = {sid: _connect(host, ingest_port) for sid in streams}
            socks.extend(per_stream.values())
            orders = {sid: deque() for sid in streams}
            for sid, sock in per_stream.items():
                readers.append(
                    threading.Thread(
                        target=_ack_reader, args=(sock, orders[sid], stats, done), daemon=True
                    )
                )
            for t in readers:
                t.start()

            def pace(sid, samples):
                sock = per_stream[sid]
                order = orders[sid]
                t0 = time.monotonic()
                for sample in samples:
                    lag = t0 + sample.emit_t_s - time.monotonic()
                    if lag > 0:
                        time.sleep(lag)
                    order.append(sid)
                    _send(sock, sid, sample, stats[sid])

            senders = [
                threading.Thread(target=pace, args=(sid, samples), daemon=True)
                for sid, samples in streams.items()
            ]
            for t in senders:
                t.start()
            for t in senders:
                t.join()
            orders = list(orders.values())
        else:
            # one multiplexed connection: TCP FIFO keeps the merged emission
            # order intact through server-side stamping
            sock = _connect(host, ingest_port)
            socks.append(sock)
            order: deque = deque()
            reader = threading.Thread(target=_ack_reader, args=(sock, order, stats, done), daemon=True)
            readers.append(reader)
            reader.start()
            merged = sorted(
                ((s.emit_t_s, sid, s) for sid, samples in streams.items() for s in samples),
                key=lambda item: item[0],
            )
            for _t, sid, sample in merged:
                order.append(sid)
                _send(sock, sid, sample, stats[sid])
            orders = [order]
    except OSError as exc:
        raise ClientError(f"connection lost mid-run: {exc}") from exc
    finally:
        done.set()

    deadline = time.monotonic() + ack_timeout_s
    while any(orders) and time.monotonic() < deadline:
        time.sleep(0.005)
    for sock in socks:
        try:
            sock.close()
        except OSError:
            pass
    return RunSummary(streams=stats, wall_s=time.monotonic() - t_start)
