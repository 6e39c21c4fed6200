"""Deterministic, seedable teleoperation scenarios and the sensor streams
derived from them.

A scenario owns the ground truth: hand-controller (MTM) trajectories
built from minimum-jerk segments, the robot-arm (PSM) trajectories
derived through a fixed known controller map, grasper and pedal
schedules, and the true frame transforms. Every sensor stream is a pure
function of (config, seed), so calibration and every metric can be
validated against known truth without hardware.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .core import Frame, Modality, SessionMeta, StreamSpec
from .rigid import RigidTransform
from .rotations import angles_to_matrix, matrix_to_angles, random_rotation

HANDS = ("left", "right")
# tracker sensor indexing: (1) left middle, (2) left thumb, (3) right thumb, (4) right middle
EM_SENSORS = {"left": {"middle": 1, "thumb": 2}, "right": {"thumb": 3, "middle": 4}}
KP_POINTS = ("thumb", "index")

GESTURE_CYCLE = ("S1", "S2", "S3", "S4", "S5", "S6", "S7")


@dataclass(frozen=True)
class FsrChannelModel:
    v_cc: float = 5.0
    r_series_ohm: float = 10_000.0
    r_pressed_ohm: float = 1_000.0
    r_released_ohm: float = 100_000.0
    noise_sd_v: float = 0.0

    def __post_init__(self):
        if min(self.r_series_ohm, self.r_pressed_ohm, self.r_released_ohm) <= 0:
            raise ValueError("all resistances must be positive")
        if self.r_released_ohm <= self.r_pressed_ohm:
            raise ValueError("released FSR resistance must exceed pressed resistance")


def fsr_voltage(model: FsrChannelModel, pressed: bool, rng: np.random.Generator | None = None) -> float:
    """Voltage-divider output for one force-sensitive resistor channel.

    The FSR sits on top of a known series resistor; pressure lowers the
    FSR resistance and raises the divider output. Optional Gaussian noise
    is clamped to the supply range.
    """
    r_fsr = model.r_pressed_ohm if pressed else model.r_released_ohm
    v = model.r_series_ohm * model.v_cc / (model.r_series_ohm + r_fsr)
    if rng is not None and model.noise_sd_v > 0:
        v += rng.normal(0.0, model.noise_sd_v)
    return float(min(max(v, 0.0), model.v_cc))


@dataclass(frozen=True)
class ScenarioConfig:
    duration_s: float = 20.0
    seed: int = 0
    trials: int = 1

    em_rate_hz: float = 270.0
    keypoint_rate_hz: float = 30.0
    pedal_rate_hz: float = 30.0
    video_rate_hz: float = 30.0

    workspace_cm: float = 18.0
    segment_s: float = 2.5
    orientation_amp_deg: float = 30.0

    controller_scale: float = 0.5
    controller_delay_samples: int = 3  # at the video/master rate
    controller_perturb_deg: float = 5.0
    controller_offset_cm: float = 4.0

    open_gap_cm: float = 6.0
    closed_gap_cm: float = 2.0
    grasp_closed_s: float = 3.0
    grasp_open_s: float = 3.0

    kp_gap_cm: float = 4.0
    keypoint_dropout: float = 0.0
    dropout_mean_gap_frames: int = 8

    em_noise_sd_cm: float = 0.0
    em_orientation_noise_sd_deg: float = 0.0
    keypoint_noise_sd_m: float = 0.0
    em_distortion_cm: float = 0.0

    pedal_channels: tuple[int, ...] = (2, 4, 5, 6)
    clutch_channel: int = 5
    pedal_press_s: float = 2.0
    pedal_gap_s: float = 4.0
    pedal_detection_delay_s: float = 0.0
    fsr_noise_sd_v: float = 0.0

    em_latency_s: float = 0.0433
    keypoint_latency_s: float = 0.02466
    pedal_latency_s: float = 0.01297

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if min(self.em_rate_hz, self.keypoint_rate_hz, self.pedal_rate_hz, self.video_rate_hz) <= 0:
            raise ValueError("all rates must be positive")
        if not (0.0 <= self.keypoint_dropout < 1.0):
            raise ValueError("keypoint_dropout must be in [0, 1)")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        doc = json.loads(text)
        doc["pedal_channels"] = tuple(doc.get("pedal_channels", (2, 4, 5, 6)))
        return cls(**doc)


def _minjerk(tau: np.ndarray) -> np.ndarray:
    tau = np.clip(tau, 0.0, 1.0)
    return 10 * tau**3 - 15 * tau**4 + 6 * tau**5


class _WaypointTrack:
    """Piecewise minimum-jerk interpolation through per-segment waypoints;
    velocity and acceleration vanish at segment boundaries, so the whole
    track is twice continuously differentiable."""

    def __init__(self, waypoints: np.ndarray, segment_s: float):
        self.points = np.asarray(waypoints, dtype=float)
        self.segment_s = segment_s

    def at(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n_seg = self.points.shape[0] - 1
        if n_seg == 0:
            return np.repeat(self.points[:1], t.size, axis=0)
        k = np.clip(np.floor(t / self.segment_s).astype(int), 0, n_seg - 1)
        tau = _minjerk(t / self.segment_s - k)
        p0 = self.points[k]
        p1 = self.points[k + 1]
        return p0 + (p1 - p0) * tau[:, None]


def _press_intervals(rng, duration, press_s, gap_s, t0=0.5):
    out = []
    t = t0 + rng.uniform(0.0, gap_s)
    while t + press_s < duration:
        out.append((t, t + press_s))
        t += press_s + gap_s + rng.uniform(0.0, gap_s)
    return out


def _in_intervals(t: np.ndarray, intervals) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    state = np.zeros(t.shape, dtype=np.int8)
    for start, end in intervals:
        state[(t >= start) & (t < end)] = 1
    return state


class GroundTruthScenario:
    """Known-truth world for one trial.

    Rig geometry (true transforms, distortion field, controller map) is
    seeded by the base seed only, so every trial of a multi-trial run
    shares one calibration; motion and schedules use the per-trial seed.
    """

    def __init__(self, config: ScenarioConfig, trial: int = 1):
        self.config = config
        self.trial = trial
        rig = np.random.default_rng(config.seed)  # shared across trials
        rng = np.random.default_rng((config.seed, trial))

        self.t_tracker_to_mtm = RigidTransform(
            Frame.TRACKER, Frame.MTM, random_rotation(rig, 30.0), rig.uniform(-15, 15, 3)
        )
        self.t_camera_to_mtm = RigidTransform(
            Frame.CAMERA, Frame.MTM, random_rotation(rig, 30.0), rig.uniform(-15, 15, 3)
        )
        self.controller_rot = random_rotation(rig, config.controller_perturb_deg)
        self.controller_offset = rig.uniform(-config.controller_offset_cm, config.controller_offset_cm, 3)
        base = RigidTransform(
            Frame.MTM, Frame.PSM, self.controller_rot, self.controller_offset
        )
        self.t_tracker_to_psm = RigidTransform(
            Frame.TRACKER,
            Frame.PSM,
            base.rotation @ self.t_tracker_to_mtm.rotation,
            base.rotation @ self.t_tracker_to_mtm.translation + base.translation,
        )
        # smooth quadratic distortion field, one symmetric matrix per output
        # axis; diagonal-dominant (bias grows with squared distance per axis)
        # with mild cross coupling
        diag_w = rig.uniform(0.5, 1.0, 3) * rig.choice([-1.0, 1.0], 3)
        cross = np.array([(m + m.T) / 2 for m in rig.uniform(-0.15, 0.15, (3, 3, 3))])
        self._distortion_q = np.array([np.diag(np.roll(diag_w, k)) + cross[k] for k in range(3)])

        n_seg = max(1, int(round(config.duration_s / config.segment_s)))
        self.segment_s = config.duration_s / n_seg
        w = config.workspace_cm
        amp = config.orientation_amp_deg
        self._pos_tracks = {}
        self._ori_tracks = {}
        for hand in HANDS:
            pos_wp = rng.uniform(-w, w, (n_seg + 1, 3)) if w > 0 else np.zeros((n_seg + 1, 3))
            ori_wp = np.column_stack(
                [
                    rng.uniform(-amp, amp, n_seg + 1),
                    rng.uniform(-amp * 0.8, amp * 0.8, n_seg + 1),
                    rng.uniform(-amp, amp, n_seg + 1),
                ]
            ) if amp > 0 else np.zeros((n_seg + 1, 3))
            self._pos_tracks[hand] = _WaypointTrack(pos_wp, self.segment_s)
            self._ori_tracks[hand] = _WaypointTrack(ori_wp, self.segment_s)

        cycle = config.grasp_closed_s + config.grasp_open_s
        self.grasper_closed = {}
        for i, hand in enumerate(HANDS):
            start = 0.5 + i * cycle / 2 + rng.uniform(0, 1)
            ivs = []
            t = start
            while t < config.duration_s:
                ivs.append((t, min(t + config.grasp_closed_s, config.duration_s)))
                t += cycle
            self.grasper_closed[hand] = ivs

        self.pedal_schedule = {
            ch: _press_intervals(rng, config.duration_s, config.pedal_press_s, config.pedal_gap_s)
            for ch in config.pedal_channels
        }
        self.clutch_intervals = self.pedal_schedule.get(config.clutch_channel, [])

        bounds = np.linspace(0.0, config.duration_s, n_seg + 1)
        self.gesture_segments = [
            (GESTURE_CYCLE[k % len(GESTURE_CYCLE)], float(bounds[k]), float(bounds[k + 1]))
            for k in range(n_seg)
        ]

    # --- ground truth -------------------------------------------------------

    def mtm_pose(self, t, hand: str):
        """(positions (n,3) cm, orientations (n,3) deg) in the MTM frame."""
        return self._pos_tracks[hand].at(t), self._ori_tracks[hand].at(t)

    @property
    def controller_delay_s(self) -> float:
        return self.config.controller_delay_samples / self.config.video_rate_hz

    def psm_pose(self, t, hand: str):
        """Controller map: fixed scale, fixed delay, fixed small rotation."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        td = np.maximum(t - self.controller_delay_s, 0.0)
        pos, ori = self.mtm_pose(td, hand)
        pos = pos @ (self.config.controller_scale * self.controller_rot).T + self.controller_offset
        ori_mats = [self.controller_rot @ angles_to_matrix(*o) for o in ori]
        ori = np.array([matrix_to_angles(m) for m in ori_mats])
        return pos, ori

    def mtm_grasper(self, t, hand: str) -> np.ndarray:
        return _in_intervals(t, self.grasper_closed[hand])

    def psm_grasper(self, t, hand: str) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.mtm_grasper(np.maximum(t - self.controller_delay_s, 0.0), hand)

    def pedal_pressed(self, t, channel: int) -> np.ndarray:
        return _in_intervals(t, self.pedal_schedule.get(channel, []))

    def distortion(self, p_tracker: np.ndarray) -> np.ndarray:
        """Smooth quadratic position-dependent bias in the tracker frame."""
        if self.config.em_distortion_cm == 0.0:
            return np.zeros_like(p_tracker)
        x = np.atleast_2d(p_tracker) / max(self.config.workspace_cm, 1.0)
        out = np.stack([np.einsum("ni,ij,nj->n", x, q, x) for q in self._distortion_q], axis=1)
        return self.config.em_distortion_cm * out.reshape(np.shape(p_tracker))

    def _finger_positions(self, t, hand: str, gap_open: float, gap_closed: float, axis: int):
        """Two finger-pad points straddling the hand point along one axis of
        the hand frame; the gap follows the grasper schedule."""
        pos, ori = self.mtm_pose(t, hand)
        closed = self.mtm_grasper(t, hand).astype(float)
        gap = gap_open + (gap_closed - gap_open) * closed
        offsets = np.zeros((len(pos), 3))
        offsets[:, axis] = gap / 2.0
        world_off = np.array([angles_to_matrix(*o) @ off for o, off in zip(ori, offsets)])
        return pos + world_off, pos - world_off, ori

    # --- sensor streams -----------------------------------------------------

    def em_stream(self, noise_sd_cm: float | None = None, latency_s: float | None = None):
        """Four tracker sensor poses per tick at the tracker rate."""
        cfg = self.config
        noise = cfg.em_noise_sd_cm if noise_sd_cm is None else noise_sd_cm
        latency = cfg.em_latency_s if latency_s is None else latency_s
        rng = np.random.default_rng((cfg.seed, self.trial, 1))
        ticks = _ticks(cfg.em_rate_hz, cfg.duration_s)
        inv = self.t_tracker_to_mtm.inverse()
        per_hand = {}
        for hand in HANDS:
            a, b, ori = self._finger_positions(ticks, hand, cfg.open_gap_cm, cfg.closed_gap_cm, axis=1)
            thumb_t = inv.apply_points(a)
            middle_t = inv.apply_points(b)
            ori_t = np.array(
                [matrix_to_angles(inv.rotation @ angles_to_matrix(*o)) for o in ori]
            )
            per_hand[hand] = {"thumb": thumb_t, "middle": middle_t, "ori": ori_t}

        samples = []
        for i, t in enumerate(ticks):
            poses = []
            for hand in HANDS:
                for point, sensor_id in EM_SENSORS[hand].items():
                    p = per_hand[hand][point][i]
                    p = p + self.distortion(p)
                    if noise > 0:
                        p = p + rng.normal(0.0, noise, 3)
                    o = per_hand[hand]["ori"][i]
                    if cfg.em_orientation_noise_sd_deg > 0:
                        o = o + rng.normal(0.0, cfg.em_orientation_noise_sd_deg, 3)
                    o = _wrap_angles(o)
                    poses.append(
                        {
                            "sensor_id": sensor_id,
                            "pos_cm": [float(v) for v in p],
                            "ori_deg": [float(v) for v in o],
                        }
                    )
            samples.append(SimSample(float(t), latency, {"poses": sorted(poses, key=lambda d: d["sensor_id"])}))
        return samples

    def keypoint_stream(self, dropout: float | None = None, mean_gap_frames: int | None = None):
        """Thumb/index keypoints per hand in the camera frame (meters), with
        contiguous dropout gaps flagged valid = 0."""
        cfg = self.config
        dropout = cfg.keypoint_dropout if dropout is None else dropout
        if not (0.0 <= dropout < 1.0):
            raise ValueError("dropout fraction must be in [0, 1)")
        mean_gap = cfg.dropout_mean_gap_frames if mean_gap_frames is None else mean_gap_frames
        rng = np.random.default_rng((cfg.seed, self.trial, 2))
        ticks = _ticks(cfg.keypoint_rate_hz, cfg.duration_s)
        inv = self.t_camera_to_mtm.inverse()
        pts = {}
        for hand in HANDS:
            a, b, _ = self._finger_positions(ticks, hand, cfg.kp_gap_cm, cfg.kp_gap_cm / 2, axis=0)
            pts[hand] = {"thumb": inv.apply_points(a) / 100.0, "index": inv.apply_points(b) / 100.0}

        missing = {hand: _dropout_mask(rng, len(ticks), dropout, mean_gap) for hand in HANDS}
        samples = []
        for i, t in enumerate(ticks):
            points = []
            for hand in HANDS:
                ok = not missing[hand][i]
                for point in KP_POINTS:
                    if ok:
                        p = pts[hand][point][i]
                        if cfg.keypoint_noise_sd_m > 0:
                            p = p + rng.normal(0.0, cfg.keypoint_noise_sd_m, 3)
                        coords = [float(v) for v in p]
                    else:
                        coords = [0.0, 0.0, 0.0]
                    points.append(
                        {"hand": hand, "keypoint_id": point, "pos_m": coords, "valid": int(ok)}
                    )
            samples.append(SimSample(float(t), cfg.keypoint_latency_s, {"points": points}))
        return samples

    def pss_stream(self, models: dict[int, FsrChannelModel] | None = None):
        """Per-tick voltage readings for every configured pedal channel."""
        cfg = self.config
        if models is None:
            models = {ch: FsrChannelModel(noise_sd_v=cfg.fsr_noise_sd_v) for ch in cfg.pedal_channels}
        bad = set(models) - set(range(1, 10))
        if bad:
            raise ValueError(f"pedal channels outside 1..9: {sorted(bad)}")
        rng = np.random.default_rng((cfg.seed, self.trial, 3))
        ticks = _ticks(cfg.pedal_rate_hz, cfg.duration_s)
        samples = []
        for t in ticks:
            readings = []
            for ch in sorted(models):
                pressed = bool(self.pedal_pressed(t - cfg.pedal_detection_delay_s, ch)[0])
                v = fsr_voltage(models[ch], pressed, rng)
                readings.append({"channel": ch, "voltage_v": round(v, 6), "state": 0})
            samples.append(SimSample(float(t), cfg.pedal_latency_s, {"readings": readings}))
        return samples

    def video_clock_stream(self):
        """Frame indices at the video rate; carries no source timestamp."""
        cfg = self.config
        ticks = _ticks(cfg.video_rate_hz, cfg.duration_s)
        return [SimSample(float(t), None, {"frame_index": int(i)}) for i, t in enumerate(ticks)]

    def streams(self) -> dict[str, list["SimSample"]]:
        return {
            "em": self.em_stream(),
            "keypoints": self.keypoint_stream(),
            "pss": self.pss_stream(),
            "video": self.video_clock_stream(),
        }

    def stream_specs(self) -> list[StreamSpec]:
        cfg = self.config
        return [
            StreamSpec("em", Modality.EM_TRACKER, cfg.em_rate_hz, channel_count=4),
            StreamSpec("keypoints", Modality.HAND_KEYPOINTS, cfg.keypoint_rate_hz, channel_count=4),
            StreamSpec("pss", Modality.PEDAL_FSR, cfg.pedal_rate_hz, channel_count=len(cfg.pedal_channels)),
            StreamSpec("video", Modality.VIDEO_CLOCK, cfg.video_rate_hz),
        ]

    def session_meta(self, subject: str = "sim", task: str = "pegtransfer") -> SessionMeta:
        names = {2: "energy-secondary-right", 4: "energy-primary-right", 5: "clutch", 6: "camera"}
        return SessionMeta(
            subject=subject,
            task=task,
            trial=self.trial,
            master_frequency_hz=self.config.video_rate_hz,
            pedal_mapping={ch: names.get(ch, f"pedal-{ch}") for ch in self.config.pedal_channels},
        )


@dataclass(frozen=True)
class SimSample:
    emit_t_s: float
    latency_s: float | None
    payload: dict


def _ticks(rate_hz: float, duration_s: float) -> np.ndarray:
    n = int(np.floor(rate_hz * duration_s))
    return np.arange(n) / rate_hz


def _wrap_angles(o: np.ndarray) -> np.ndarray:
    az, el, roll = o
    az = (az + 180.0) % 360.0 - 180.0
    roll = (roll + 180.0) % 360.0 - 180.0
    el = float(np.clip(el, -90.0, 90.0))
    return np.array([az, el, roll])


def _dropout_mask(rng, n: int, fraction: float, mean_gap: int) -> np.ndarray:
    """Contiguous dropout gaps totalling exactly round(fraction * n) frames."""
    missing = np.zeros(n, dtype=bool)
    target = int(round(fraction * n))
    guard = 0
    while missing.sum() < target and guard < 100 * n:
        guard += 1
        length = 1 + rng.geometric(1.0 / max(mean_gap, 1))
        start = int(rng.integers(0, n))
        missing[start : start + length] = True
        overshoot = int(missing.sum()) - target
        if overshoot > 0:
            tail = np.flatnonzero(missing)[-overshoot:]
            missing[tail] = False
    return missing


def generate_scenario(config: ScenarioConfig, seed: int | None = None, trial: int = 1) -> GroundTruthScenario:
    """Build the ground-truth world for one trial; pure in (config, seed, trial)."""
    if seed is not None:
        config = replace(config, seed=seed)
    return GroundTruthScenario(config, trial=trial)


# --- offline session writer ---------------------------------------------------

def write_session(
    scenario: GroundTruthScenario,
    session_dir: Path,
    epoch_ns: int = 1_700_000_000_000_000_000,
    subject: str = "sim",
    task: str = "pegtransfer",
) -> Path:
    """Write a session directory in the recorder's on-disk layout without a
    live server: server timestamps are emission time plus the configured
    per-stream latency. Deterministic for a fixed scenario."""
    from .core import write_manifest
    from .recordings import WRITERS  # local import to avoid a cycle

    session_dir = Path(session_dir)
    session_dir.mkdir(parents=True, exist_ok=True)
    meta = scenario.session_meta(subject, task)
    specs = {s.stream_id: s for s in scenario.stream_specs()}
    write_manifest(meta, list(specs.values()), session_dir / "manifest.json")
    for stream_id, samples in scenario.streams().items():
        writer = WRITERS[specs[stream_id].modality]
        rows = []
        for s in samples:
            src = None if s.latency_s is None else epoch_ns + int(s.emit_t_s * 1e9)
            server = epoch_ns + int((s.emit_t_s + (s.latency_s or 0.0)) * 1e9)
            rows.extend(writer.payload_rows(server, src, s.payload))
        (session_dir / writer.filename).write_text(
            "\n".join([",".join(writer.header)] + rows) + "\n", encoding="utf-8"
        )
    write_labels(scenario, session_dir / "labels.csv")
    return session_dir


def write_labels(scenario: GroundTruthScenario, path: Path) -> None:
    lines = ["label,start_s,end_s"]
    lines += [f"{lab},{s:.3f},{e:.3f}" for lab, s, e in scenario.gesture_segments]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
