"""Per-modality recording formats: one CSV file per modality in each
session directory, with payload validation shared by the live server and
the offline session writer."""

from __future__ import annotations

import numpy as np

from .core import Modality, PedalReading, Pose6Dof, SchemaError


def _num(v) -> str:
    f = float(v)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def _src(source_ts) -> str:
    return "" if source_ts is None else str(int(source_ts))


class EmWriter:
    filename = "em.csv"
    header = (
        "server_ts_ns",
        "source_ts_ns",
        "sensor_id",
        "x_cm",
        "y_cm",
        "z_cm",
        "azimuth_deg",
        "elevation_deg",
        "roll_deg",
    )

    @staticmethod
    def validate(payload: dict) -> None:
        poses = payload.get("poses")
        if not isinstance(poses, list) or not poses:
            raise SchemaError("tracker payload must carry a non-empty 'poses' list")
        for p in poses:
            try:
                Pose6Dof(tuple(p["pos_cm"]), tuple(p["ori_deg"]))
                int(p["sensor_id"])
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"malformed tracker pose entry: {exc}") from exc

    @staticmethod
    def payload_rows(server_ts: int, source_ts, payload: dict) -> list[str]:
        rows = []
        for p in payload["poses"]:
            x, y, z = p["pos_cm"]
            az, el, roll = p["ori_deg"]
            rows.append(
                ",".join(
                    [str(server_ts), _src(source_ts), str(int(p["sensor_id"]))]
                    + [_num(v) for v in (x, y, z, az, el, roll)]
                )
            )
        return rows


class KeypointWriter:
    filename = "keypoints.csv"
    header = ("server_ts_ns", "source_ts_ns", "hand", "keypoint_id", "x_m", "y_m", "z_m", "valid")

    @staticmethod
    def validate(payload: dict) -> None:
        points = payload.get("points")
        if not isinstance(points, list) or not points:
            raise SchemaError("keypoint payload must carry a non-empty 'points' list")
        for p in points:
            if not {"hand", "keypoint_id", "pos_m", "valid"} <= set(p):
                raise SchemaError(f"malformed keypoint entry {p!r}")
            if len(p["pos_m"]) != 3 or not all(np.isfinite(p["pos_m"])):
                raise SchemaError(f"keypoint position must be a finite 3-vector, got {p['pos_m']!r}")

    @staticmethod
    def payload_rows(server_ts: int, source_ts, payload: dict) -> list[str]:
        rows = []
        for p in payload["points"]:
            rows.append(
                ",".join(
                    [str(server_ts), _src(source_ts), str(p["hand"]), str(p["keypoint_id"])]
                    + [_num(v) for v in p["pos_m"]]
                    + [str(int(p["valid"]))]
                )
            )
        return rows


class PedalWriter:
    filename = "pss.csv"
    header = ("server_ts_ns", "source_ts_ns", "channel", "voltage_v", "state")

    @staticmethod
    def validate(payload: dict) -> None:
        readings = payload.get("readings")
        if not isinstance(readings, list) or not readings:
            raise SchemaError("pedal payload must carry a non-empty 'readings' list")
        for r in readings:
            try:
                PedalReading(int(r["channel"]), float(r["voltage_v"]), int(r.get("state", 0)))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"malformed pedal reading {r!r}: {exc}") from exc

    @staticmethod
    def payload_rows(server_ts: int, source_ts, payload: dict) -> list[str]:
        return [
            ",".join(
                [
                    str(server_ts),
                    _src(source_ts),
                    str(int(r["channel"])),
                    _num(r["voltage_v"]),
                    str(int(r.get("state", 0))),
                ]
            )
            for r in payload["readings"]
        ]


class VideoClockWriter:
    filename = "video.csv"
    header = ("server_ts_ns", "frame_index")

    @staticmethod
    def validate(payload: dict) -> None:
        if "frame_index" not in payload or int(payload["frame_index"]) < 0:
            raise SchemaError("video payload must carry a non-negative 'frame_index'")

    @staticmethod
    def payload_rows(server_ts: int, source_ts, payload: dict) -> list[str]:
        return [f"{server_ts},{int(payload['frame_index'])}"]


WRITERS = {
    Modality.EM_TRACKER: EmWriter,
    Modality.HAND_KEYPOINTS: KeypointWriter,
    Modality.PEDAL_FSR: PedalWriter,
    Modality.VIDEO_CLOCK: VideoClockWriter,
}
