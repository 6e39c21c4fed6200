"""Cross-modal validation of recorded sessions against scenario ground
truth, rendered as deterministic CSV + text reports."""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from .align import AlignedTrial, atomic_write_text
from .calibrate import (
    CalibrationError,
    em_hand_orientation,
    em_hand_positions,
    em_sensor_positions,
    find_sessions,
    kp_hand_positions,
    load_aligned_trial,
    load_calibration,
    split_pair,
    truth_times_s,
)
from .grasper import GrasperEstimatorConfig, estimate_grasper_state
from .metrics import (
    cosine_similarity,
    detection_metrics,
    estimate_lag,
    frame_iou,
    grasper_agreement,
    nrmse,
    pedal_usage,
    series_to_intervals,
    temporal_iou,
    unwrap_degrees,
)
from .mlp import predict_corrected
from .pedal import binarize_pedal, calibrate_pedal_threshold
from .rotations import angles_to_matrix, matrix_to_angles
from .simulate import HANDS, GroundTruthScenario, ScenarioConfig

POSITION_AXES = ("X", "Y", "Z")
ORIENTATION_AXES = ("Roll", "Pitch", "Yaw")  # roll, elevation, azimuth
_ORI_COLUMN = {"Yaw": 0, "Pitch": 1, "Roll": 2}  # index into (az, el, roll)


class EvaluationError(RuntimeError):
    pass


def _compose_orientation(rotation: np.ndarray, ori_deg: np.ndarray) -> np.ndarray:
    return np.array([matrix_to_angles(rotation @ angles_to_matrix(*o)) for o in ori_deg])


def _traj_rows(tag: str, pred: np.ndarray, truth: np.ndarray, bucket: dict) -> None:
    for j, axis in enumerate(POSITION_AXES):
        bucket[(tag, axis)].append(
            (cosine_similarity(pred[:, j], truth[:, j]), nrmse(pred[:, j], truth[:, j]))
        )


def _ori_rows(tag: str, pred: np.ndarray, truth: np.ndarray, bucket: dict) -> None:
    for axis, col in _ORI_COLUMN.items():
        p = unwrap_degrees(pred[:, col])
        t = unwrap_degrees(truth[:, col])
        if np.ptp(t) == 0:
            continue
        bucket[(tag, axis)].append((cosine_similarity(p, t), nrmse(p, t)))


def evaluate_sessions(
    sessions_root: Path,
    scenario_config: ScenarioConfig,
    calib_dir: Path,
    pair_names: tuple[str, ...] = ("em-mtm", "em-psm", "kp-mtm", "kp-psm"),
    grasper_cfg: GrasperEstimatorConfig | None = None,
    lag_max_shift: int = 15,
) -> dict:
    """Compute the full metric suite over every session under a root."""
    sessions = find_sessions(Path(sessions_root))
    trials: list[tuple[AlignedTrial, GroundTruthScenario]] = []
    for sdir in sessions:
        trial = load_aligned_trial(sdir)
        trials.append((trial, GroundTruthScenario(scenario_config, trial=trial.meta.trial)))
    if not trials:
        raise EvaluationError("no trials to evaluate")

    if grasper_cfg is None:
        th = (scenario_config.open_gap_cm + scenario_config.closed_gap_cm) / 2.0
        grasper_cfg = GrasperEstimatorConfig(threshold_cm=th)

    traj_bucket: dict = defaultdict(list)
    for pair in pair_names:
        try:
            rigid, model = load_calibration(calib_dir, pair)
        except CalibrationError:
            continue
        src_kind, dst_kind = split_pair(pair)
        for trial, scenario in trials:
            times = truth_times_s(trial)
            for hand in HANDS:
                truth_pos, truth_ori = (
                    scenario.mtm_pose(times, hand) if dst_kind == "mtm" else scenario.psm_pose(times, hand)
                )
                if src_kind == "em":
                    src = em_hand_positions(trial, hand)
                    variants = {"": np.ones(trial.n_frames, dtype=bool)}
                else:
                    src, valid = kp_hand_positions(trial, hand)
                    variants = {"": np.ones(trial.n_frames, dtype=bool), "+detected": valid}
                for suffix, keep in variants.items():
                    if keep.sum() < 2:
                        continue
                    _traj_rows(
                        f"{pair}/rigid{suffix}",
                        rigid.apply_points(src[keep]),
                        truth_pos[keep],
                        traj_bucket,
                    )
                    _traj_rows(
                        f"{pair}/mlp{suffix}",
                        predict_corrected(rigid, model, src[keep]),
                        truth_pos[keep],
                        traj_bucket,
                    )
                if src_kind == "em":
                    pred_ori = _compose_orientation(rigid.rotation, em_hand_orientation(trial, hand))
                    _ori_rows(f"{pair}/rigid", pred_ori, truth_ori, traj_bucket)

    trajectory = [
        {
            "modality_pair": tag,
            "axis": axis,
            "cos": float(np.mean([v[0] for v in vals])),
            "nrmse_pct": float(np.mean([v[1] for v in vals])),
        }
        for (tag, axis), vals in sorted(traj_bucket.items())
    ]

    # --- pedals ---------------------------------------------------------------
    mapping = trials[0][0].meta.pedal_mapping if trials[0][0].meta else {}
    channels = sorted(mapping)
    thresholds: dict[int, float] = {}
    first_trial, first_scn = trials[0]
    for ch in channels:
        col = f"pss{ch}_voltage_v"
        if col not in first_trial.columns:
            continue
        truth = first_scn.pedal_pressed(truth_times_s(first_trial), ch)
        if truth.min() == truth.max():
            continue
        thresholds[ch], _ = calibrate_pedal_threshold(first_trial.columns[col], truth)

    pedal_rows = []
    usage_states: dict[int, list[np.ndarray]] = defaultdict(list)
    for ch in channels:
        per_trial = []
        for trial, scenario in trials:
            col = f"pss{ch}_voltage_v"
            if col not in trial.columns:
                continue
            times = truth_times_s(trial)
            truth = scenario.pedal_pressed(times, ch)
            usage_states[ch].append(truth)
            if ch not in thresholds or truth.max() == 0:
                continue
            pred = binarize_pedal(trial.columns[col], thresholds[ch])
            precision, recall, f1 = detection_metrics(pred, truth)
            iou_f = frame_iou(pred == 1, truth == 1)
            iou_i = temporal_iou(
                series_to_intervals(pred, times), series_to_intervals(truth, times)
            )
            lag = estimate_lag(pred, truth, trial.rate_hz, lag_max_shift)
            per_trial.append((precision, recall, f1, iou_f, iou_i, lag))
        if per_trial:
            arr = np.array(per_trial)
            pedal_rows.append(
                {
                    "platform": "sim",
                    "channel": ch,
                    "pedal": mapping.get(ch, f"pedal-{ch}"),
                    "f1": float(arr[:, 2].mean()),
                    "precision": float(arr[:, 0].mean()),
                    "recall": float(arr[:, 1].mean()),
                    "iou": float(arr[:, 3].mean()),
                    "iou_interval": float(arr[:, 4].mean()),
                    "lag_ms": float(arr[:, 5].mean()),
                    "threshold_v": thresholds[ch],
                }
            )

    usage_rows = []
    if usage_states:
        pooled = {ch: np.concatenate(v) for ch, v in usage_states.items()}
        energy = [ch for ch in channels if "energy" in mapping.get(ch, "")]
        usage_all = pedal_usage(pooled, mapping, channels)
        usage_energy = pedal_usage(pooled, mapping, energy) if energy else {}
        for ch in channels:
            usage_rows.append(
                {
                    "channel": ch,
                    "pedal": mapping.get(ch, f"pedal-{ch}"),
                    "usage_energy_pct": usage_energy.get(ch),
                    "usage_all_pct": usage_all.get(ch, 0.0),
                }
            )

    # --- grasper ----------------------------------------------------------------
    grasper_bucket: dict = defaultdict(list)
    for trial, scenario in trials:
        times = truth_times_s(trial)
        for hand in HANDS:
            sensors = em_sensor_positions(trial, hand)
            est = estimate_grasper_state(sensors["thumb"], sensors["middle"], grasper_cfg)
            mtm = scenario.mtm_grasper(times, hand)
            psm = scenario.psm_grasper(times, hand)
            grasper_bucket["psm-mtm"].append(grasper_agreement(psm, mtm))
            grasper_bucket["em-mtm"].append(grasper_agreement(est, mtm))
            grasper_bucket["em-psm"].append(grasper_agreement(est, psm))
    grasper_rows = [
        {
            "pair": pair,
            "iou": float(np.mean([v[0] for v in vals])),
            "accuracy": float(np.mean([v[1] for v in vals])),
            "precision": float(np.mean([v[2] for v in vals])),
        }
        for pair, vals in sorted(grasper_bucket.items())
    ]

    return {
        "n_trials": len(trials),
        "trajectory": trajectory,
        "pedals": pedal_rows,
        "usage": usage_rows,
        "grasper": grasper_rows,
        "pedal_thresholds": {str(ch): v for ch, v in thresholds.items()},
    }


# --- rendering ---------------------------------------------------------------

def _csv(path: Path, header: list[str], rows: list[dict]) -> None:
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.6f}"
        return str(v)

    lines = [",".join(header)]
    lines += [",".join(fmt(row.get(h)) for h in header) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def build_report(results: dict, out_dir: Path) -> dict[str, Path]:
    """Write the metric tables plus a human-readable summary; byte-stable
    across reruns on identical inputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    _csv(
        out_dir / "trajectory_metrics.csv",
        ["modality_pair", "axis", "cos", "nrmse_pct"],
        results["trajectory"],
    )
    _csv(
        out_dir / "pedal_metrics.csv",
        ["platform", "channel", "pedal", "f1", "precision", "recall", "iou", "iou_interval", "lag_ms", "threshold_v"],
        results["pedals"],
    )
    _csv(out_dir / "grasper_metrics.csv", ["pair", "iou", "accuracy", "precision"], results["grasper"])
    _csv(out_dir / "usage.csv", ["channel", "pedal", "usage_energy_pct", "usage_all_pct"], results["usage"])

    lines = [f"validation report over {results['n_trials']} trial(s)", ""]
    lines.append("trajectory (mean over trials and hands):")
    for row in results["trajectory"]:
        lines.append(
            f"  {row['modality_pair']:<24} {row['axis']:<5} cos={row['cos']:+.3f} nrmse={row['nrmse_pct']:.2f}%"
        )
    lines.append("")
    lines.append("pedals:")
    for row in results["pedals"]:
        lines.append(
            f"  ch{row['channel']} {row['pedal']:<24} f1={row['f1']:.3f} p={row['precision']:.3f} "
            f"r={row['recall']:.3f} iou={row['iou']:.3f} lag={row['lag_ms']:.2f}ms"
        )
    lines.append("")
    lines.append("grasper state agreement:")
    for row in results["grasper"]:
        lines.append(
            f"  {row['pair']:<8} iou={row['iou']:.3f} acc={row['accuracy']:.3f} prec={row['precision']:.3f}"
        )
    atomic_write_text(out_dir / "summary.txt", "\n".join(lines) + "\n")
    atomic_write_text(
        out_dir / "results.json", json.dumps(results, indent=2, sort_keys=True) + "\n"
    )
    for name in ("trajectory_metrics.csv", "pedal_metrics.csv", "grasper_metrics.csv", "usage.csv", "summary.txt", "results.json"):
        paths[name] = out_dir / name
    return paths
