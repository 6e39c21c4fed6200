"""Shared domain types, unit conventions and the session manifest schema.

Units are fixed package-wide at the type boundary: positions in
centimeters, angles in degrees, voltages in volts, timestamps as integer
nanoseconds since the Unix epoch.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

TimestampNs = int

BACKGROUND_LABEL = "BG"

POSITION_LIMIT_CM = 100.0  # tracker working-volume guard


class SchemaError(ValueError):
    """A document or value violates one of the declared schemas."""


class Frame(enum.Enum):
    TRACKER = "T"
    MTM = "M"
    PSM = "P"
    CAMERA = "C"


class Modality(enum.Enum):
    EM_TRACKER = "EmTracker"
    HAND_KEYPOINTS = "HandKeypoints"
    PEDAL_FSR = "PedalFsr"
    VIDEO_CLOCK = "VideoClock"


def check_timestamp(ts: int) -> int:
    if not isinstance(ts, int) or isinstance(ts, bool) or ts < 0:
        raise SchemaError(f"timestamp must be a non-negative integer of nanoseconds, got {ts!r}")
    return ts


@dataclass(frozen=True)
class Pose6Dof:
    """Position (cm) plus azimuth/elevation/roll orientation (degrees)."""

    position: tuple[float, float, float]
    orientation: tuple[float, float, float]  # azimuth, elevation, roll

    def __post_init__(self):
        if len(self.position) != 3 or len(self.orientation) != 3:
            raise SchemaError("Pose6Dof needs 3 position and 3 orientation components")
        for v in (*self.position, *self.orientation):
            if not _finite(v):
                raise SchemaError(f"non-finite pose component {v!r}")
        if max(abs(c) for c in self.position) > POSITION_LIMIT_CM:
            raise SchemaError(
                f"position {self.position} outside the +/-{POSITION_LIMIT_CM:g} cm working volume"
            )
        az, el, roll = self.orientation
        if not (-180.0 <= az <= 180.0 and -180.0 <= roll <= 180.0):
            raise SchemaError(f"azimuth/roll must be within [-180, 180], got {az}, {roll}")
        if not (-90.0 <= el <= 90.0):
            raise SchemaError(f"elevation must be within [-90, 90], got {el}")

    @property
    def azimuth(self) -> float:
        return self.orientation[0]

    @property
    def elevation(self) -> float:
        return self.orientation[1]

    @property
    def roll(self) -> float:
        return self.orientation[2]


def _finite(v) -> bool:
    try:
        return abs(float(v)) != float("inf") and float(v) == float(v)
    except (TypeError, ValueError):
        return False


@dataclass(frozen=True)
class StreamSpec:
    stream_id: str
    modality: Modality
    nominal_rate_hz: float
    channel_count: int = 1

    def __post_init__(self):
        if not self.stream_id:
            raise SchemaError("stream_id must be non-empty")
        if not isinstance(self.modality, Modality):
            raise SchemaError(f"unknown modality {self.modality!r}")
        if not (self.nominal_rate_hz > 0):
            raise SchemaError(f"nominal_rate_hz must be > 0, got {self.nominal_rate_hz}")
        if self.channel_count < 1:
            raise SchemaError(f"channel_count must be >= 1, got {self.channel_count}")


@dataclass(frozen=True)
class StampedSample:
    """One reading on one stream. server_ts is assigned on arrival."""

    stream_id: str
    server_ts: TimestampNs
    payload: object
    source_ts: Optional[TimestampNs] = None

    def __post_init__(self):
        check_timestamp(self.server_ts)
        if self.source_ts is not None:
            check_timestamp(self.source_ts)


@dataclass(frozen=True)
class PedalReading:
    channel: int
    voltage: float
    state: int = 0  # 1 = pressed

    def __post_init__(self):
        if not (1 <= self.channel <= 9):
            raise SchemaError(f"pedal channel must be in 1..9, got {self.channel}")
        if self.voltage < 0:
            raise SchemaError(f"negative pedal voltage {self.voltage}")
        if self.state not in (0, 1):
            raise SchemaError(f"pedal state must be 0 or 1, got {self.state}")


@dataclass(frozen=True)
class GestureSegment:
    label: str
    start: TimestampNs
    end: TimestampNs

    def __post_init__(self):
        check_timestamp(self.start)
        check_timestamp(self.end)
        if not self.start < self.end:
            raise SchemaError(f"segment {self.label}: start {self.start} is not before end {self.end}")


@dataclass(frozen=True)
class SessionMeta:
    subject: str
    task: str
    trial: int
    master_frequency_hz: float
    pedal_mapping: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.subject or not self.task:
            raise SchemaError("subject and task must be non-empty")
        if self.trial < 1:
            raise SchemaError(f"trial must be >= 1, got {self.trial}")
        if not (self.master_frequency_hz > 0):
            raise SchemaError(f"master_frequency_hz must be > 0, got {self.master_frequency_hz}")
        for ch in self.pedal_mapping:
            if not (1 <= ch <= 9):
                raise SchemaError(f"pedal_mapping channel {ch} outside 1..9")

    def session_name(self) -> str:
        safe = lambda s: "".join(c if (c.isalnum() or c in "-.") else "-" for c in s)
        return f"{safe(self.subject)}_{safe(self.task)}_trial{self.trial:03d}"


# --- session manifest -------------------------------------------------------

def manifest_dict(meta: SessionMeta, specs: list[StreamSpec]) -> dict:
    ids = [s.stream_id for s in specs]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise SchemaError(f"duplicate stream_id(s): {', '.join(dup)}")
    return {
        "subject": meta.subject,
        "task": meta.task,
        "trial": meta.trial,
        "master_frequency_hz": meta.master_frequency_hz,
        "pedal_mapping": {str(ch): name for ch, name in sorted(meta.pedal_mapping.items())},
        "streams": [
            {
                "stream_id": s.stream_id,
                "modality": s.modality.value,
                "nominal_rate_hz": s.nominal_rate_hz,
                "channel_count": s.channel_count,
            }
            for s in specs
        ],
    }


def write_manifest(meta: SessionMeta, specs: list[StreamSpec], path: Union[str, Path]) -> dict:
    """Write manifest.json; returns the document written."""
    doc = manifest_dict(meta, specs)
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc


def parse_manifest(path: Union[str, Path]) -> tuple[SessionMeta, list[StreamSpec]]:
    """Inverse of write_manifest."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed manifest {path}: {exc}") from exc
    return parse_manifest_dict(doc)


def parse_manifest_dict(doc: dict) -> tuple[SessionMeta, list[StreamSpec]]:
    for key in ("subject", "task", "trial", "master_frequency_hz", "streams"):
        if key not in doc:
            raise SchemaError(f"manifest missing required field {key!r}")
    meta = SessionMeta(
        subject=doc["subject"],
        task=doc["task"],
        trial=int(doc["trial"]),
        master_frequency_hz=float(doc["master_frequency_hz"]),
        pedal_mapping={int(ch): name for ch, name in doc.get("pedal_mapping", {}).items()},
    )
    specs = []
    for entry in doc["streams"]:
        try:
            modality = Modality(entry["modality"])
        except ValueError:
            raise SchemaError(f"unknown modality tag {entry['modality']!r}") from None
        specs.append(
            StreamSpec(
                stream_id=entry["stream_id"],
                modality=modality,
                nominal_rate_hz=float(entry["nominal_rate_hz"]),
                channel_count=int(entry.get("channel_count", 1)),
            )
        )
    ids = [s.stream_id for s in specs]
    if len(set(ids)) != len(ids):
        raise SchemaError("duplicate stream_id in manifest")
    return meta, specs
