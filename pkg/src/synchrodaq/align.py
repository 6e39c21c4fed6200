"""Offline alignment of a recorded session onto the video reference clock.

Every modality is associated to the video frame times by causal
zero-order hold (latest sample at or before the frame), detection gaps
are filled (short gaps by local cubic interpolation, long gaps by
forward fill), gesture segments expand to frame labels, clutched frames
can be excised, and the result exports as one analysis-ready CSV per
trial plus a schema sidecar.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .core import BACKGROUND_LABEL, GestureSegment, SchemaError, SessionMeta, parse_manifest

MAX_SPLINE_GAP_S = 1.0


class AlignmentError(ValueError):
    pass


# --- timebase ----------------------------------------------------------------

def build_timebase(video_ts: np.ndarray, frame_index: np.ndarray | None = None):
    """Strictly increasing frame times from the video clock rows.

    Duplicate timestamps are collapsed (first occurrence wins) with a
    warning. Returns (frame_times, frame_index).
    """
    ts = np.asarray(video_ts, dtype=np.int64)
    if ts.size < 2:
        raise AlignmentError(f"need at least 2 video samples, got {ts.size}")
    if np.any(np.diff(ts) < 0):
        raise AlignmentError("video timestamps must be non-decreasing")
    idx = np.arange(ts.size, dtype=np.int64) if frame_index is None else np.asarray(frame_index, dtype=np.int64)
    keep = np.concatenate(([True], np.diff(ts) > 0))
    if not keep.all():
        warnings.warn(f"collapsed {int((~keep).sum())} duplicate video timestamps")
    return ts[keep], idx[keep]


# --- association -------------------------------------------------------------

def associate(sample_ts: np.ndarray, values: np.ndarray, frame_times: np.ndarray):
    """Causal zero-order hold of a sorted stream onto the frame times.

    For each frame time t_k the associated value is the latest sample with
    server timestamp <= t_k; frames before the first sample are missing.
    Returns (aligned values, missing mask).
    """
    ts = np.asarray(sample_ts, dtype=np.int64)
    if np.any(np.diff(ts) < 0):
        raise AlignmentError("stream samples must be sorted by server timestamp")
    vals = np.asarray(values)
    ft = np.asarray(frame_times, dtype=np.int64)
    pick = np.searchsorted(ts, ft, side="right") - 1
    missing = pick < 0
    safe = np.where(missing, 0, pick)
    if vals.ndim == 1:
        out = vals[safe].astype(float, copy=True)
        out[missing] = np.nan
    else:
        out = vals[safe].astype(float, copy=True)
        out[missing] = np.nan
    return out, missing


def associate_bruteforce(sample_ts, values, frame_times):
    """O(n*m) reference implementation used as the association oracle."""
    ts = list(sample_ts)
    vals = np.asarray(values)
    out = []
    missing = []
    for t in frame_times:
        best = -1
        for i, s in enumerate(ts):
            if s <= t:
                best = i
        missing.append(best < 0)
        out.append(vals[best] if best >= 0 else np.nan * np.ones_like(np.asarray(vals[0], dtype=float)))
    return np.asarray(out, dtype=float), np.asarray(missing)


# --- gap filling -------------------------------------------------------------

def _missing_runs(missing: np.ndarray):
    runs = []
    start = None
    for i, m in enumerate(missing):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, missing.size - 1))
    return runs


def fill_gaps(
    column: np.ndarray,
    missing: np.ndarray,
    frame_times: np.ndarray,
    max_spline_gap_s: float = MAX_SPLINE_GAP_S,
) -> np.ndarray:
    """Fill missing entries of one aligned column.

    Interior gaps whose data-free interval is at most max_spline_gap_s are
    filled with a local cubic through up to two valid neighbors on each
    side (exact for cubic signals); longer interior gaps and trailing gaps
    forward-fill, leading gaps back-fill. Valid entries are never altered.
    """
    col = np.asarray(column, dtype=float).copy()
    miss = np.asarray(missing, dtype=bool)
    ft = np.asarray(frame_times, dtype=np.int64)
    valid_idx = np.flatnonzero(~miss)
    if valid_idx.size == 0:
        raise AlignmentError("cannot fill a column with no valid samples")

    for start, end in _missing_runs(miss):
        before = valid_idx[valid_idx < start]
        after = valid_idx[valid_idx > end]
        if before.size == 0:
            col[start : end + 1] = col[after[0]]
            continue
        if after.size == 0:
            col[start : end + 1] = col[before[-1]]
            continue
        gap_s = (ft[after[0]] - ft[before[-1]]) / 1e9
        if gap_s > max_spline_gap_s:
            col[start : end + 1] = col[before[-1]]
            continue
        knots = np.concatenate((before[-2:], after[:2]))
        t0 = ft[before[-1]]
        tk = (ft[knots] - t0) / 1e9
        coeffs = np.polyfit(tk, col[knots], deg=knots.size - 1)
        col[start : end + 1] = np.polyval(coeffs, (ft[start : end + 1] - t0) / 1e9)
    return col


# --- aligned trial -----------------------------------------------------------

@dataclass
class AlignedTrial:
    frame_times: np.ndarray  # server timestamps, int64 ns
    frame_index: np.ndarray  # video frame numbers
    rate_hz: float
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    missing: dict[str, np.ndarray] = field(default_factory=dict)
    labels: np.ndarray | None = None
    meta: Optional[SessionMeta] = None

    def __post_init__(self):
        n = self.n_frames
        if self.frame_index.size != n:
            raise AlignmentError("frame_index length mismatch")
        if np.any(np.diff(self.frame_times) <= 0):
            raise AlignmentError("frame_times must be strictly increasing")
        for name, col in self.columns.items():
            if col.shape[0] != n:
                raise AlignmentError(f"column {name} has {col.shape[0]} rows, expected {n}")
        if self.labels is None:
            self.labels = np.full(n, BACKGROUND_LABEL, dtype=object)

    @property
    def n_frames(self) -> int:
        return self.frame_times.size

    def select(self, idx: np.ndarray) -> "AlignedTrial":
        return AlignedTrial(
            frame_times=self.frame_times[idx],
            frame_index=self.frame_index[idx],
            rate_hz=self.rate_hz,
            columns={k: v[idx] for k, v in self.columns.items()},
            missing={k: v[idx] for k, v in self.missing.items()},
            labels=self.labels[idx],
            meta=self.meta,
        )


def resample(trial: AlignedTrial, target_rate_hz: float) -> AlignedTrial:
    """Integer-stride decimation keeping frames 0, s, 2s, ..."""
    stride = trial.rate_hz / target_rate_hz
    if abs(stride - round(stride)) > 1e-9 or stride < 1:
        raise AlignmentError(
            f"target rate {target_rate_hz} Hz does not divide source rate {trial.rate_hz} Hz"
        )
    stride = int(round(stride))
    out = trial.select(np.arange(0, trial.n_frames, stride))
    out.rate_hz = target_rate_hz
    return out


def expand_labels(segments: Sequence[GestureSegment], frame_times: np.ndarray) -> np.ndarray:
    """Frame labels from half-open [start, end) segments; gaps are BG."""
    ordered = sorted(segments, key=lambda s: s.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end:
            raise SchemaError(f"segments overlap: {a.label} [{a.start},{a.end}) and {b.label} [{b.start},{b.end})")
    labels = np.full(len(frame_times), BACKGROUND_LABEL, dtype=object)
    ft = np.asarray(frame_times, dtype=np.int64)
    for seg in ordered:
        labels[(ft >= seg.start) & (ft < seg.end)] = seg.label
    return labels


def labels_to_segments(labels: np.ndarray, frame_times: np.ndarray) -> list[GestureSegment]:
    """Inverse of expand_labels up to frame quantization; BG runs yield no
    segment. Segment ends extend one nominal frame period past the last
    labeled frame so re-expansion reproduces the label column."""
    ft = np.asarray(frame_times, dtype=np.int64)
    period = int(round(np.median(np.diff(ft)))) if ft.size > 1 else 1
    segs = []
    i, n = 0, len(labels)
    while i < n:
        j = i
        while j < n and labels[j] == labels[i]:
            j += 1
        if labels[i] != BACKGROUND_LABEL:
            end = int(ft[j]) if j < n else int(ft[-1]) + period
            segs.append(GestureSegment(str(labels[i]), int(ft[i]), end))
        i = j
    return segs


def mask_clutch(trial: AlignedTrial, channel: int, threshold_v: float | None = None) -> AlignedTrial:
    """Drop frames where the clutch pedal is pressed; surviving frames keep
    a `clutch` feature column."""
    state_col = f"pss{channel}_state"
    volt_col = f"pss{channel}_voltage_v"
    if threshold_v is None:
        if state_col not in trial.columns:
            raise AlignmentError(f"no recorded state for pedal channel {channel}")
        pressed = trial.columns[state_col] >= 0.5
    else:
        if volt_col not in trial.columns:
            raise AlignmentError(f"no voltage column for pedal channel {channel}")
        pressed = trial.columns[volt_col] >= threshold_v
    keep = ~pressed
    if not keep.any():
        warnings.warn("every frame is clutched; masked trial is empty")
    out = trial.select(np.flatnonzero(keep))
    out.columns["clutch"] = pressed[keep].astype(float)
    out.missing["clutch"] = np.zeros(out.n_frames, dtype=bool)
    return out


# --- session loading ---------------------------------------------------------

EM_FIELDS = ("x_cm", "y_cm", "z_cm", "azimuth_deg", "elevation_deg", "roll_deg")
KP_FIELDS = ("x_m", "y_m", "z_m")


def _read_csv(path: Path) -> pd.DataFrame:
    if not path.exists():
        return pd.DataFrame()
    return pd.read_csv(path)


def load_aligned_columns(session_dir: Path, max_spline_gap_s: float = MAX_SPLINE_GAP_S) -> AlignedTrial:
    """Associate every recorded modality of a session onto the video clock."""
    session_dir = Path(session_dir)
    meta, _specs = parse_manifest(session_dir / "manifest.json")
    video = _read_csv(session_dir / "video.csv")
    if video.empty:
        raise AlignmentError(f"{session_dir} has no video clock recording")
    frame_times, frame_index = build_timebase(
        video["server_ts_ns"].to_numpy(), video["frame_index"].to_numpy()
    )
    rate = _video_rate(session_dir, meta)
    trial = AlignedTrial(frame_times=frame_times, frame_index=frame_index, rate_hz=rate, meta=meta)

    em = _read_csv(session_dir / "em.csv")
    if not em.empty:
        for sensor_id, group in em.groupby("sensor_id"):
            ts = group["server_ts_ns"].to_numpy()
            vals = group[list(EM_FIELDS)].to_numpy()
            aligned, miss = associate(ts, vals, frame_times)
            for j, fieldname in enumerate(EM_FIELDS):
                name = f"em{int(sensor_id)}_{fieldname}"
                trial.columns[name] = fill_gaps(aligned[:, j], miss, frame_times, max_spline_gap_s)
                trial.missing[name] = miss

    kp = _read_csv(session_dir / "keypoints.csv")
    if not kp.empty:
        for (hand, point), group in kp.groupby(["hand", "keypoint_id"]):
            ts = group["server_ts_ns"].to_numpy()
            vals = group[list(KP_FIELDS)].to_numpy()
            valid = group["valid"].to_numpy().astype(bool)
            aligned, miss = associate(ts, vals, frame_times)
            vflag, _ = associate(ts, valid.astype(float), frame_times)
            miss = miss | (np.nan_to_num(vflag, nan=0.0) < 0.5)
            for j, fieldname in enumerate(KP_FIELDS):
                name = f"kp_{hand}_{point}_{fieldname}"
                trial.columns[name] = fill_gaps(aligned[:, j], miss, frame_times, max_spline_gap_s)
                trial.missing[name] = miss
            vcol = f"kp_{hand}_{point}_valid"
            trial.columns[vcol] = (~miss).astype(float)
            trial.missing[vcol] = np.zeros(len(frame_times), dtype=bool)

    pss = _read_csv(session_dir / "pss.csv")
    if not pss.empty:
        for channel, group in pss.groupby("channel"):
            ts = group["server_ts_ns"].to_numpy()
            vals = group[["voltage_v", "state"]].to_numpy()
            aligned, miss = associate(ts, vals, frame_times)
            for j, fieldname in enumerate(("voltage_v", "state")):
                name = f"pss{int(channel)}_{fieldname}"
                trial.columns[name] = fill_gaps(aligned[:, j], miss, frame_times, max_spline_gap_s)
                trial.missing[name] = miss
    return trial


def _video_rate(session_dir: Path, meta: SessionMeta) -> float:
    _, specs = parse_manifest(Path(session_dir) / "manifest.json")
    for spec in specs:
        if spec.modality.value == "VideoClock":
            return spec.nominal_rate_hz
    return meta.master_frequency_hz


def read_label_csv(path: Path) -> list[tuple[str, float, float]]:
    """Annotation rows (label, start_s, end_s), video-relative seconds."""
    df = pd.read_csv(path)
    for col in ("label", "start_s", "end_s"):
        if col not in df.columns:
            raise SchemaError(f"label file {path} missing column {col!r}")
    return [(str(r.label), float(r.start_s), float(r.end_s)) for r in df.itertuples()]


def apply_label_rows(trial: AlignedTrial, rows: list[tuple[str, float, float]]) -> None:
    """Expand video-relative (label, start_s, end_s) rows onto the trial.

    Times are matched on the video frame number axis, not on server
    timestamps, so annotations remain valid for time-compressed replays.
    """
    video_time_ns = np.round(trial.frame_index * (1e9 / trial.rate_hz)).astype(np.int64)
    segments = [
        GestureSegment(label, int(start_s * 1e9), int(end_s * 1e9)) for label, start_s, end_s in rows
    ]
    trial.labels = expand_labels(segments, video_time_ns)


# --- export ------------------------------------------------------------------

def _fmt(value: float) -> str:
    if np.isnan(value):
        return "nan"
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def export_dataset(trial: AlignedTrial, path: Path, fmt: str = "csv") -> tuple[Path, Path]:
    """Write one trial table plus its schema sidecar; deterministic bytes."""
    if fmt != "csv":
        raise SchemaError(f"unknown export format {fmt!r}")
    if trial.n_frames == 0:
        raise AlignmentError("refusing to export an empty trial")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(trial.columns)
    lines = [",".join(["frame_time_ns", "frame_index", *names, "label"])]
    for i in range(trial.n_frames):
        row = [str(int(trial.frame_times[i])), str(int(trial.frame_index[i]))]
        row += [_fmt(trial.columns[n][i]) for n in names]
        row.append(str(trial.labels[i]))
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")

    schema = {
        "n_frames": trial.n_frames,
        "rate_hz": trial.rate_hz,
        "background_label": BACKGROUND_LABEL,
        "columns": ["frame_time_ns", "frame_index", *names, "label"],
        "units": {
            "frame_time_ns": "ns since epoch (server clock)",
            "frame_index": "video frame number",
            "label": "gesture id or BG",
            **{n: _column_unit(n) for n in names},
        },
    }
    schema_path = path.with_suffix(".schema.json")
    atomic_write_text(schema_path, json.dumps(schema, indent=2, sort_keys=True) + "\n")
    return path, schema_path


def _column_unit(name: str) -> str:
    if name.endswith("_cm"):
        return "cm"
    if name.endswith("_m"):
        return "m"
    if name.endswith("_deg"):
        return "deg"
    if name.endswith("_voltage_v"):
        return "V"
    if name.endswith("_state") or name.endswith("_valid") or name == "clutch":
        return "binary"
    return ""


def load_exported_trial(path: Path) -> AlignedTrial:
    """Read back a CSV written by export_dataset."""
    df = pd.read_csv(path)
    schema = json.loads(Path(path).with_suffix(".schema.json").read_text())
    names = [c for c in df.columns if c not in ("frame_time_ns", "frame_index", "label")]
    return AlignedTrial(
        frame_times=df["frame_time_ns"].to_numpy(np.int64),
        frame_index=df["frame_index"].to_numpy(np.int64),
        rate_hz=float(schema["rate_hz"]),
        columns={n: df[n].to_numpy(float) for n in names},
        missing={n: np.zeros(len(df), dtype=bool) for n in names},
        labels=df["label"].to_numpy(object),
    )
