"""Calibration of external sensing onto robot frames.

Builds correspondence pairs from aligned session tables plus ground
truth (either regenerated from a scenario file or supplied as an
explicit pairs CSV), fits the rigid map, trains the residual network
under leave-one-trial-out cross-validation, and persists the models.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .align import AlignedTrial, atomic_write_text, load_exported_trial
from .core import Frame, parse_manifest
from .mlp import ResidualMlp, TrainingConfig, train_residual_mlp
from .rigid import RigidTransform, estimate_rigid
from .simulate import EM_SENSORS, HANDS, KP_POINTS, GroundTruthScenario, ScenarioConfig

PAIR_NAMES = ("em-mtm", "em-psm", "kp-mtm", "kp-psm")

SOURCE_FRAMES = {"em": Frame.TRACKER, "kp": Frame.CAMERA}
TARGET_FRAMES = {"mtm": Frame.MTM, "psm": Frame.PSM}


class CalibrationError(RuntimeError):
    pass


def split_pair(pair: str) -> tuple[str, str]:
    src, _, dst = pair.partition("-")
    if src not in SOURCE_FRAMES or dst not in TARGET_FRAMES:
        raise CalibrationError(f"unknown calibration pair {pair!r}; choose from {PAIR_NAMES}")
    return src, dst


def em_hand_positions(trial: AlignedTrial, hand: str) -> np.ndarray:
    """Hand point in the tracker frame: midpoint of the two finger sensors."""
    ids = EM_SENSORS[hand]
    cols = []
    for axis in ("x_cm", "y_cm", "z_cm"):
        a = trial.columns[f"em{ids['thumb']}_{axis}"]
        b = trial.columns[f"em{ids['middle']}_{axis}"]
        cols.append((a + b) / 2.0)
    return np.column_stack(cols)


def em_sensor_positions(trial: AlignedTrial, hand: str) -> dict[str, np.ndarray]:
    ids = EM_SENSORS[hand]
    return {
        point: np.column_stack([trial.columns[f"em{ids[point]}_{ax}"] for ax in ("x_cm", "y_cm", "z_cm")])
        for point in ids
    }


def em_hand_orientation(trial: AlignedTrial, hand: str) -> np.ndarray:
    sensor = EM_SENSORS[hand]["thumb"]
    return np.column_stack(
        [trial.columns[f"em{sensor}_{ax}"] for ax in ("azimuth_deg", "elevation_deg", "roll_deg")]
    )


def kp_hand_positions(trial: AlignedTrial, hand: str) -> tuple[np.ndarray, np.ndarray]:
    """(hand point in the camera frame in cm, originally-detected mask)."""
    pts = []
    valid = np.ones(trial.n_frames, dtype=bool)
    for point in KP_POINTS:
        pts.append(
            np.column_stack([trial.columns[f"kp_{hand}_{point}_{ax}"] for ax in ("x_m", "y_m", "z_m")])
        )
        valid &= trial.columns[f"kp_{hand}_{point}_valid"] >= 0.5
    return 100.0 * (pts[0] + pts[1]) / 2.0, valid


def truth_times_s(trial: AlignedTrial) -> np.ndarray:
    """Scenario time of each aligned frame, recovered from the video frame
    numbers (valid even when replay compressed the wall clock)."""
    return trial.frame_index / trial.rate_hz


def extract_pairs(
    trial: AlignedTrial, scenario: GroundTruthScenario, pair: str
) -> tuple[np.ndarray, np.ndarray]:
    """(source positions, truth target positions), both (n,3) in cm."""
    src_kind, dst_kind = split_pair(pair)
    times = truth_times_s(trial)
    srcs, dsts = [], []
    for hand in HANDS:
        if src_kind == "em":
            src = em_hand_positions(trial, hand)
            keep = np.ones(trial.n_frames, dtype=bool)
        else:
            src, keep = kp_hand_positions(trial, hand)
        truth_pos = (
            scenario.mtm_pose(times, hand)[0] if dst_kind == "mtm" else scenario.psm_pose(times, hand)[0]
        )
        srcs.append(src[keep])
        dsts.append(truth_pos[keep])
    return np.concatenate(srcs), np.concatenate(dsts)


def find_sessions(root: Path) -> list[Path]:
    """Session directories under root (or root itself), by manifest presence."""
    root = Path(root)
    if (root / "manifest.json").exists():
        return [root]
    out = sorted(p.parent for p in root.glob("*/manifest.json"))
    if not out:
        raise CalibrationError(f"no session directories under {root}")
    return out


def load_aligned_trial(session_dir: Path) -> AlignedTrial:
    session_dir = Path(session_dir)
    candidates = sorted((session_dir / "aligned").glob("*.csv"))
    if not candidates:
        raise CalibrationError(f"{session_dir} has no aligned tables; run align first")
    trial = load_exported_trial(candidates[0])
    trial.meta = parse_manifest(session_dir / "manifest.json")[0]
    return trial


def load_pairs_csv(path: Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Explicit correspondence file: trial, sx, sy, sz, tx, ty, tz (cm)."""
    df = pd.read_csv(path)
    need = {"trial", "sx", "sy", "sz", "tx", "ty", "tz"}
    if not need <= set(df.columns):
        raise CalibrationError(f"pairs file {path} must have columns {sorted(need)}")
    out = {}
    for trial, group in df.groupby("trial"):
        out[str(trial)] = (
            group[["sx", "sy", "sz"]].to_numpy(float),
            group[["tx", "ty", "tz"]].to_numpy(float),
        )
    return out


def calibrate_pair(
    pairs_by_trial: dict[str, tuple[np.ndarray, np.ndarray]],
    pair: str,
    cfg: TrainingConfig = TrainingConfig(),
    seed: int = 0,
) -> tuple[RigidTransform, ResidualMlp, dict]:
    src_kind, dst_kind = split_pair(pair)
    all_src = np.concatenate([v[0] for v in pairs_by_trial.values()])
    all_dst = np.concatenate([v[1] for v in pairs_by_trial.values()])
    if all_src.shape[0] < 3:
        raise CalibrationError(f"pair {pair}: not enough correspondences ({all_src.shape[0]})")
    rigid = estimate_rigid(all_src, all_dst, SOURCE_FRAMES[src_kind], TARGET_FRAMES[dst_kind])
    model, report = train_residual_mlp(pairs_by_trial, rigid, cfg, seed=seed)
    report["pair"] = pair
    return rigid, model, report


def run_calibration(
    sessions_root: Path,
    out_dir: Path,
    scenario_config: ScenarioConfig | None = None,
    pairs_csv: Path | None = None,
    pair_names: tuple[str, ...] = PAIR_NAMES,
    cfg: TrainingConfig = TrainingConfig(),
    seed: int = 0,
) -> dict:
    """Calibrate every requested pair across all sessions under a root."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    if pairs_csv is not None:
        if len(pair_names) != 1:
            raise CalibrationError("an explicit pairs file calibrates exactly one pair")
        pairs_by_trial = load_pairs_csv(pairs_csv)
        rigid, model, report = calibrate_pair(pairs_by_trial, pair_names[0], cfg, seed)
        _store(out_dir, pair_names[0], rigid, model, cfg, seed)
        reports[pair_names[0]] = report
    else:
        if scenario_config is None:
            raise CalibrationError("need a scenario file (ground truth) or an explicit pairs file")
        sessions = find_sessions(Path(sessions_root))
        trials = {}
        for sdir in sessions:
            trial = load_aligned_trial(sdir)
            scenario = GroundTruthScenario(scenario_config, trial=trial.meta.trial)
            trials[sdir.name] = (trial, scenario)
        for pair in pair_names:
            pairs_by_trial = {
                name: extract_pairs(trial, scenario, pair) for name, (trial, scenario) in trials.items()
            }
            rigid, model, report = calibrate_pair(pairs_by_trial, pair, cfg, seed)
            _store(out_dir, pair, rigid, model, cfg, seed)
            reports[pair] = report
    cv_doc = {"pairs": reports, "config": _config_echo(cfg, seed)}
    atomic_write_text(out_dir / "cv_report.json", json.dumps(cv_doc, indent=2, sort_keys=True) + "\n")
    return cv_doc


def _config_echo(cfg: TrainingConfig, seed: int) -> dict:
    return {
        "learning_rate": cfg.learning_rate,
        "epochs": cfg.epochs,
        "weight_decay": cfg.weight_decay,
        "dropout": cfg.dropout,
        "batch_size": cfg.batch_size,
        "seed": seed,
    }


def _store(
    out_dir: Path, pair: str, rigid: RigidTransform, model: ResidualMlp,
    cfg: TrainingConfig = TrainingConfig(), seed: int = 0,
) -> None:
    atomic_write_text(out_dir / f"{pair}.rigid.json", json.dumps(rigid.to_dict(), indent=2) + "\n")
    doc = {**model.to_dict(), "training": _config_echo(cfg, seed)}
    atomic_write_text(out_dir / f"{pair}.mlp.json", json.dumps(doc, indent=2) + "\n")


def load_calibration(calib_dir: Path, pair: str) -> tuple[RigidTransform, ResidualMlp]:
    calib_dir = Path(calib_dir)
    rigid_path = calib_dir / f"{pair}.rigid.json"
    mlp_path = calib_dir / f"{pair}.mlp.json"
    if not rigid_path.exists() or not mlp_path.exists():
        raise CalibrationError(f"no stored calibration for pair {pair!r} in {calib_dir}")
    rigid = RigidTransform.from_dict(json.loads(rigid_path.read_text()))
    model = ResidualMlp.from_dict(json.loads(mlp_path.read_text()))
    return rigid, model
