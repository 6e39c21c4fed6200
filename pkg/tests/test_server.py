import json
import socket
import time

import numpy as np
import pandas as pd
import pytest

from synchrodaq import protocol
from synchrodaq.core import Modality, SchemaError, SessionMeta, StreamSpec, parse_manifest
from synchrodaq.server import AcquisitionServer, ServerError


@pytest.fixture
def server(tmp_path):
    srv = AcquisitionServer(tmp_path, control_port=0, ingest_port=0)
    yield srv
    srv.close()


def em_spec(stream_id="em"):
    return StreamSpec(stream_id, Modality.EM_TRACKER, 270.0, 4)


def em_payload(x=1.0):
    return {
        "poses": [
            {"sensor_id": i, "pos_cm": [x, 2.0, 3.0], "ori_deg": [10.0, 20.0, 30.0]}
            for i in (1, 2, 3, 4)
        ]
    }


def pedal_payload(v=0.4):
    return {"readings": [{"channel": 4, "voltage_v": v, "state": 0}]}


def meta(trial=1):
    return SessionMeta("subj", "task", trial, 30.0, {4: "camera"})


class TestRegistration:
    def test_register_then_health_rate_zero(self, server):
        server.register_stream(em_spec())
        snap = server.snapshot_health()
        assert len(snap["streams"]) == 1
        assert snap["streams"][0]["observed_rate_hz"] == 0.0

    def test_duplicate_id_rejected(self, server):
        server.register_stream(em_spec())
        with pytest.raises(ServerError, match="already registered"):
            server.register_stream(em_spec())

    def test_four_modalities_visible(self, server):
        server.register_stream(em_spec())
        server.register_stream(StreamSpec("kp", Modality.HAND_KEYPOINTS, 30.0, 4))
        server.register_stream(StreamSpec("pss", Modality.PEDAL_FSR, 30.0, 4))
        server.register_stream(StreamSpec("video", Modality.VIDEO_CLOCK, 30.0))
        assert len(server.snapshot_health()["streams"]) == 4


class TestIngest:
    def test_server_ts_assigned_and_monotonic(self, server):
        server.register_stream(em_spec())
        stamps = [server.ingest("em", em_payload())["server_ts_ns"] for _ in range(100)]
        assert all(b >= a for a, b in zip(stamps, stamps[1:]))
        lo = server.now_ns()
        assert stamps[-1] <= lo

    def test_unknown_stream_rejected(self, server):
        with pytest.raises(ServerError, match="unknown stream"):
            server.ingest("nope", em_payload())

    def test_modality_mismatch_rejected(self, server):
        server.register_stream(em_spec())
        with pytest.raises(SchemaError):
            server.ingest("em", pedal_payload())

    def test_pose_guard_applies_on_ingest(self, server):
        server.register_stream(em_spec())
        bad = em_payload()
        bad["poses"][0]["pos_cm"] = [500.0, 0.0, 0.0]
        with pytest.raises(SchemaError):
            server.ingest("em", bad)

    def test_observed_rate_tracks_paced_stream(self, server):
        server.register_stream(StreamSpec("pss", Modality.PEDAL_FSR, 270.0, 1))
        t0 = time.monotonic()
        sent = 0
        while sent < 270:
            target = t0 + sent / 270.0
            lag = target - time.monotonic()
            if lag > 0:
                time.sleep(lag)
            server.ingest("pss", pedal_payload())
            sent += 1
        rate = server.snapshot_health()["streams"][0]["observed_rate_hz"]
        assert rate == pytest.approx(270.0, rel=0.05)


class TestSessionLifecycle:
    def test_start_writes_manifest(self, server, tmp_path):
        server.register_stream(em_spec())
        out = server.start_session(meta())
        mpath = tmp_path / "subj_task_trial001" / "manifest.json"
        assert mpath.exists()
        loaded_meta, specs = parse_manifest(mpath)
        assert loaded_meta == meta()
        assert specs == [em_spec()]
        assert out["phase"] == "Recording"

    def test_stop_while_idle_rejected(self, server):
        with pytest.raises(ServerError, match="Idle"):
            server.stop_session()

    def test_double_start_rejected(self, server):
        server.register_stream(em_spec())
        server.start_session(meta())
        with pytest.raises(ServerError, match="Recording"):
            server.start_session(meta(trial=2))

    def test_counts_match_ingested(self, server):
        server.register_stream(em_spec())
        server.register_stream(StreamSpec("video", Modality.VIDEO_CLOCK, 30.0))
        server.start_session(meta())
        for k in range(50):
            server.ingest("em", em_payload())
        for k in range(20):
            server.ingest("video", {"frame_index": k})
        summary = server.stop_session()
        assert summary["streams"]["em"]["samples"] == 50
        assert summary["streams"]["em"]["rows"] == 200  # 4 sensors per sample
        assert summary["streams"]["video"]["samples"] == 20
        assert summary["streams"]["video"]["rows"] == 20

    def test_two_streams_same_modality_not_recordable(self, server):
        server.register_stream(em_spec("em1"))
        server.register_stream(em_spec("em2"))
        with pytest.raises(ServerError, match="modality"):
            server.start_session(meta())

    def test_restart_after_stop(self, server):
        server.register_stream(em_spec())
        server.start_session(meta(trial=1))
        server.stop_session()
        out = server.start_session(meta(trial=2))
        assert "trial002" in out["dir"]
        server.stop_session()


class TestRecordingCompleteness:
    def test_every_acked_sample_on_disk_once(self, server, tmp_path):
        server.register_stream(StreamSpec("pss", Modality.PEDAL_FSR, 30.0, 1))
        server.start_session(meta())
        sent = [pedal_payload(round(0.001 * k, 6)) for k in range(500)]
        for p in sent:
            server.ingest("pss", p)
        summary = server.stop_session()
        assert summary["streams"]["pss"]["drops"] == 0
        df = pd.read_csv(tmp_path / "subj_task_trial001" / "pss.csv")
        assert len(df) == 500  # no loss, no duplication
        assert np.allclose(df["voltage_v"].to_numpy(), [p["readings"][0]["voltage_v"] for p in sent])
        assert np.all(np.diff(df["server_ts_ns"].to_numpy()) >= 0)  # ordered

    def test_latency_matches_bruteforce_from_file(self, server, tmp_path):
        delay_ns = int(43.3e6)
        server.register_stream(em_spec())
        server.start_session(meta())
        for _ in range(60):
            server.ingest("em", em_payload(), source_ts=server.now_ns() - delay_ns)
        snap = server.snapshot_health()
        stream = snap["streams"][0]
        assert stream["mean_recording_latency_ms"] == pytest.approx(43.3, abs=5.0)
        server.stop_session()
        df = pd.read_csv(tmp_path / "subj_task_trial001" / "em.csv")
        per_sample = df.drop_duplicates("server_ts_ns")
        window = per_sample[
            (per_sample["server_ts_ns"] > snap["snapshot_ts_ns"] - int(snap["window_s"] * 1e9))
            & (per_sample["server_ts_ns"] <= snap["snapshot_ts_ns"])
        ]
        brute = (window["server_ts_ns"] - window["source_ts_ns"]).sum() / len(window) / 1e6
        assert abs(brute - stream["mean_recording_latency_ms"]) < 1e-3  # within 1 us

    def test_storage_accounting_matches_file_sizes(self, server, tmp_path):
        server.register_stream(em_spec())
        server.register_stream(StreamSpec("video", Modality.VIDEO_CLOCK, 30.0))
        server.start_session(meta())
        for k in range(40):
            server.ingest("em", em_payload(x=0.25 * k))
            server.ingest("video", {"frame_index": k})
        summary = server.stop_session()
        session = tmp_path / "subj_task_trial001"
        assert summary["streams"]["em"]["bytes"] == (session / "em.csv").stat().st_size
        assert summary["streams"]["video"]["bytes"] == (session / "video.csv").stat().st_size
        assert summary["bytes_per_minute"] > 0

    def test_backpressure_drops_oldest_and_counts(self, tmp_path):
        srv = AcquisitionServer(tmp_path, control_port=0, ingest_port=0, queue_limit=8)
        try:
            srv.register_stream(StreamSpec("pss", Modality.PEDAL_FSR, 30.0, 1))
            srv.start_session(meta())
            srv._session.stop_flag.set()  # white box: halt the drain thread
            time.sleep(0.05)
            for k in range(20):
                srv.ingest("pss", pedal_payload(0.01 * k))
            snap = srv.snapshot_health()
            assert snap["streams"][0]["drops"] == 12
        finally:
            srv.close()


class TestHealth:
    def test_snapshots_consistent_under_concurrent_ingestion(self, server):
        import threading

        server.register_stream(em_spec())
        server.start_session(meta())
        stop = threading.Event()
        errors = []

        def pump():
            while not stop.is_set():
                try:
                    server.ingest("em", em_payload())
                except Exception as exc:  # pragma: no cover
                    errors.append(exc)

        threads = [threading.Thread(target=pump, daemon=True) for _ in range(3)]
        for t in threads:
            t.start()
        counts = []
        for _ in range(200):
            snap = server.snapshot_health()
            counts.append(snap["streams"][0]["sample_count"])
        stop.set()
        for t in threads:
            t.join(timeout=5)
        server.stop_session()
        assert not errors
        assert counts == sorted(counts)  # never goes backwards: no torn reads

    def test_no_source_ts_reports_no_latency(self, server):
        server.register_stream(StreamSpec("video", Modality.VIDEO_CLOCK, 30.0))
        server.ingest("video", {"frame_index": 0})
        stream = server.snapshot_health()["streams"][0]
        assert stream["mean_recording_latency_ms"] is None

    def test_silent_stream_goes_stale(self, server):
        server.register_stream(em_spec())
        server.ingest("em", em_payload())
        time.sleep(2.2)
        stream = server.snapshot_health()["streams"][0]
        assert stream["stale"] is True
        assert stream["observed_rate_hz"] == 0.0
        assert stream["last_sample_age_ms"] > 2000


class TestControlProtocol:
    def test_status_idle(self, server):
        reply = server.handle_control({"cmd": "status"})
        assert reply["ok"] is True
        assert reply["phase"] == "Idle"

    def test_start_then_status_recording(self, server):
        server.register_stream(em_spec())
        reply = server.handle_control(
            {
                "cmd": "start_session",
                "meta": {"subject": "s", "task": "t", "trial": 1, "master_frequency_hz": 30.0},
            }
        )
        assert reply["ok"] is True
        assert server.handle_control({"cmd": "status"})["phase"] == "Recording"
        stop = server.handle_control({"cmd": "stop_session"})
        assert stop["ok"] is True and "dir" in stop

    def test_register_and_list_via_control(self, server):
        reply = server.handle_control(
            {
                "cmd": "register_stream",
                "spec": {"stream_id": "em", "modality": "EmTracker", "nominal_rate_hz": 270, "channel_count": 4},
            }
        )
        assert reply["ok"] is True
        listing = server.handle_control({"cmd": "list_streams"})
        assert [s["stream_id"] for s in listing["streams"]] == ["em"]

    def test_unknown_verb_is_error_response(self, server):
        reply = server.handle_control({"cmd": "jump"})
        assert reply["ok"] is False
        assert "jump" in reply["error"]

    def test_stop_while_idle_is_error_response(self, server):
        reply = server.handle_control({"cmd": "stop_session"})
        assert reply["ok"] is False

    def test_connection_survives_unknown_verb(self, server):
        with socket.create_connection(("127.0.0.1", server.control_port), timeout=5) as sock:
            f = sock.makefile("rwb")
            for msg, expect_ok in ((
                {"cmd": "jump"}, False), ({"cmd": "status"}, True)):
                f.write(protocol.encode_message(msg))
                f.flush()
                reply = json.loads(f.readline())
                assert reply["ok"] is expect_ok

    def test_health_push_to_subscriber(self, server):
        server.register_stream(em_spec())
        with socket.create_connection(("127.0.0.1", server.control_port), timeout=5) as sock:
            f = sock.makefile("rwb")
            f.write(protocol.encode_message({"cmd": "subscribe_health"}))
            f.flush()
            ack = json.loads(f.readline())
            assert ack["ok"] is True
            sock.settimeout(3.0)
            push = json.loads(f.readline())
            assert push["event"] == "health"
            assert push["streams"][0]["stream_id"] == "em"

    def test_ingest_socket_acks_and_errors(self, server):
        server.register_stream(em_spec())
        with socket.create_connection(("127.0.0.1", server.ingest_port), timeout=5) as sock:
            sock.sendall(protocol.encode_record({"stream_id": "em", "payload": em_payload()}))
            ack = protocol.read_record(sock)
            assert ack["ok"] == 1
            sock.sendall(protocol.encode_record({"stream_id": "em", "payload": pedal_payload()}))
            ack = protocol.read_record(sock)
            assert ack["ok"] == 0 and "poses" in ack["error"]
            # connection still usable
            sock.sendall(protocol.encode_record({"stream_id": "em", "payload": em_payload()}))
            assert protocol.read_record(sock)["ok"] == 1
