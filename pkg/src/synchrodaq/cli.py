"""Command-line front end: serve, sim, align, calibrate, eval, export.

Exit codes: 0 success, 1 usage, 2 I/O, 3 validation failure. Flag
resolution order is defaults < --config file < explicit flags; the data
directory defaults to $SYNCHRODAQ_DATA_DIR.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import protocol
from .align import (
    AlignmentError,
    apply_label_rows,
    export_dataset,
    load_aligned_columns,
    load_exported_trial,
    mask_clutch,
    read_label_csv,
    resample,
)
from .calibrate import PAIR_NAMES, CalibrationError, find_sessions, run_calibration
from .client import ClientError, control_request, run_clients
from .core import SchemaError
from .mlp import TrainingConfig
from .report import EvaluationError, build_report, evaluate_sessions
from .server import AcquisitionServer, ServerError
from .simulate import GroundTruthScenario, ScenarioConfig, write_labels, write_session

log = logging.getLogger("synchrodaq")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VALIDATION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class UsageError(Exception):
    pass


def _default_data_dir() -> str:
    return os.environ.get("SYNCHRODAQ_DATA_DIR", "./data")


def build_parser() -> _Parser:
    parser = _Parser(prog="synchrodaq", description=__doc__)
    parser.add_argument("--config", type=Path, help="JSON file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", parents=[], help="run the acquisition server until interrupted")
    p.add_argument("--port", type=int, default=protocol.DEFAULT_CONTROL_PORT)
    p.add_argument("--ingest-port", type=int, default=protocol.DEFAULT_INGEST_PORT)
    p.add_argument("--http-port", type=int, default=protocol.DEFAULT_HTTP_PORT)
    p.add_argument("--no-http", action="store_true", help="disable the console bridge")
    p.add_argument("--static-dir", type=Path, help="console assets to serve at /")
    p.add_argument("--data-dir", type=Path, default=None)
    p.add_argument("--host", default="127.0.0.1")

    p = sub.add_parser("sim", help="drive the simulated sensor clients")
    p.add_argument("--scenario", type=Path, help="scenario JSON (defaults are used when omitted)")
    p.add_argument("--server", default="127.0.0.1")
    p.add_argument("--port", type=int, default=protocol.DEFAULT_CONTROL_PORT)
    p.add_argument("--ingest-port", type=int, default=protocol.DEFAULT_INGEST_PORT)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--replay", action="store_true", help="send as fast as the server accepts (default)")
    mode.add_argument("--realtime", action="store_true", help="pace streams at wall-clock rate")
    mode.add_argument("--offline", action="store_true", help="write session files directly, no server")
    p.add_argument("--data-dir", type=Path, default=None, help="output root for --offline")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--subject", default="sim")
    p.add_argument("--task", default="pegtransfer")

    p = sub.add_parser("align", help="align recorded sessions onto the video clock")
    p.add_argument("--session", type=Path, required=True, help="session dir, or a root of sessions")
    p.add_argument("--labels", type=Path, help="label CSV (label,start_s,end_s); default <session>/labels.csv when present")
    p.add_argument("--rate", type=float, help="downsample to this rate (must divide the video rate)")
    p.add_argument("--mask-clutch", type=int, metavar="CHANNEL", help="drop frames with this pedal pressed")
    p.add_argument("--clutch-threshold", type=float, help="voltage threshold for --mask-clutch")
    p.add_argument("--max-gap", type=float, default=1.0, help="longest gap (s) filled by interpolation")

    p = sub.add_parser("calibrate", help="fit rigid + residual models from aligned sessions")
    p.add_argument("--sessions", type=Path, required=True)
    p.add_argument("--gt", type=Path, help="scenario JSON providing ground truth")
    p.add_argument("--pairs", default=",".join(PAIR_NAMES), help="comma list among em-mtm,em-psm,kp-mtm,kp-psm")
    p.add_argument("--pairs-file", type=Path, help="explicit correspondence CSV (trial,sx,sy,sz,tx,ty,tz)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)

    p = sub.add_parser("eval", help="run the validation metric suite")
    p.add_argument("--sessions", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True, help="scenario JSON providing ground truth")
    p.add_argument("--calib", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("export", help="re-export aligned trials as dataset files")
    p.add_argument("--session", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", default="csv")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args, remaining = _parse_with_config(parser, list(sys.argv[1:] if argv is None else argv))
        return _dispatch(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, PermissionError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SchemaError, AlignmentError, CalibrationError, EvaluationError, ServerError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def _parse_with_config(parser: _Parser, argv: list[str]):
    args = parser.parse_args(argv)
    if args.config:
        defaults = json.loads(Path(args.config).read_text())
        if not isinstance(defaults, dict):
            raise UsageError("--config must contain a JSON object")
        explicit = {tok.split("=", 1)[0] for tok in argv if tok.startswith("--")}
        for key, value in defaults.items():
            dest = key.replace("-", "_")
            if f"--{key.replace('_', '-')}" in explicit or not hasattr(args, dest):
                continue  # flags beat the config file; unknown keys are ignored
            setattr(args, dest, value)
    return args, []


def _dispatch(args) -> int:
    return {
        "serve": _cmd_serve,
        "sim": _cmd_sim,
        "align": _cmd_align,
        "calibrate": _cmd_calibrate,
        "eval": _cmd_eval,
        "export": _cmd_export,
    }[args.command](args)


def _load_scenario(path: Path | None, seed=None, trials=None) -> ScenarioConfig:
    config = ScenarioConfig() if path is None else ScenarioConfig.from_json(Path(path).read_text())
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if trials is not None:
        updates["trials"] = trials
    if updates:
        from dataclasses import replace

        config = replace(config, **updates)
    return config


def _cmd_serve(args) -> int:
    data_dir = args.data_dir or Path(_default_data_dir())
    try:
        server = AcquisitionServer(
            data_dir, control_port=args.port, ingest_port=args.ingest_port, host=args.host
        )
    except OSError as exc:
        print(f"i/o error: cannot bind: {exc}", file=sys.stderr)
        return EXIT_IO
    bridge = None
    if not args.no_http:
        from .wsbridge import start_bridge

        bridge = start_bridge(args.host, args.http_port, args.host, server.control_port, args.static_dir)
        log.info("console bridge on http://%s:%d (ws at /ws)", args.host, args.http_port)
    log.info(
        "serving: control port %d, ingest port %d, data dir %s",
        server.control_port,
        server.ingest_port,
        data_dir,
    )
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        summary = server.close()
        if bridge is not None:
            bridge.shutdown()
        if summary:
            log.info("flushed open session: %s", json.dumps(summary["streams"]))
        log.info("server stopped")
    return EXIT_OK


def _cmd_sim(args) -> int:
    config = _load_scenario(args.scenario, seed=args.seed, trials=args.trials)
    if args.offline:
        root = args.data_dir or Path(_default_data_dir())
        for trial_no in range(1, config.trials + 1):
            scenario = GroundTruthScenario(config, trial=trial_no)
            meta = scenario.session_meta(args.subject, args.task)
            sdir = write_session(scenario, Path(root) / meta.session_name(), subject=args.subject, task=args.task)
            log.info("wrote %s", sdir)
        return EXIT_OK

    realtime = bool(args.realtime)
    totals = {"sent": 0, "acked": 0, "errors": 0}
    from .client import register_streams

    register_streams(args.server, args.port, GroundTruthScenario(config, trial=1))
    for trial_no in range(1, config.trials + 1):
        scenario = GroundTruthScenario(config, trial=trial_no)
        meta = scenario.session_meta(args.subject, args.task)
        started = control_request(
            args.server,
            args.port,
            {
                "cmd": "start_session",
                "meta": {
                    "subject": meta.subject,
                    "task": meta.task,
                    "trial": meta.trial,
                    "master_frequency_hz": meta.master_frequency_hz,
                    "pedal_mapping": {str(k): v for k, v in meta.pedal_mapping.items()},
                },
            },
        )
        if not started.get("ok"):
            raise ClientError(f"start_session failed: {started.get('error')}")
        summary = run_clients(
            args.server, args.port, args.ingest_port, scenario, realtime=realtime
        )
        stopped = control_request(args.server, args.port, {"cmd": "stop_session"})
        if not stopped.get("ok"):
            raise ClientError(f"stop_session failed: {stopped.get('error')}")
        write_labels(scenario, Path(stopped["dir"]) / "labels.csv")
        for sid, stats in summary.streams.items():
            recorded = stopped["streams"].get(sid, {}).get("samples")
            log.info(
                "trial %d %s: sent=%d acked=%d errors=%d recorded=%s",
                trial_no, sid, stats.sent, stats.acked, stats.errors, recorded,
            )
        totals["sent"] += summary.total_sent
        totals["acked"] += summary.total_acked
        totals["errors"] += summary.total_errors
    log.info("sim done: %s", json.dumps(totals))
    if totals["errors"]:
        return EXIT_VALIDATION
    return EXIT_OK


def _cmd_align(args) -> int:
    sessions = find_sessions(args.session)
    for sdir in sessions:
        trial = load_aligned_columns(sdir, max_spline_gap_s=args.max_gap)
        labels = args.labels
        if labels is None and (sdir / "labels.csv").exists():
            labels = sdir / "labels.csv"
        if labels is not None:
            apply_label_rows(trial, read_label_csv(labels))
        if args.rate is not None:
            trial = resample(trial, args.rate)
        if args.mask_clutch is not None:
            trial = mask_clutch(trial, args.mask_clutch, args.clutch_threshold)
        out = sdir / "aligned" / f"trial_{trial.meta.trial:03d}.csv"
        export_dataset(trial, out)
        log.info("aligned %s -> %s (%d frames)", sdir.name, out, trial.n_frames)
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    pair_names = tuple(p.strip() for p in args.pairs.split(",") if p.strip())
    scenario_config = _load_scenario(args.gt) if args.gt else None
    cfg = TrainingConfig(epochs=args.epochs)
    doc = run_calibration(
        args.sessions,
        args.out,
        scenario_config=scenario_config,
        pairs_csv=args.pairs_file,
        pair_names=pair_names,
        cfg=cfg,
        seed=args.seed,
    )
    for pair, report in doc["pairs"].items():
        log.info(
            "%s: rigid rmse %.3f cm -> corrected %.3f cm over %d folds",
            pair,
            report["mean_rigid_rmse_cm"],
            report["mean_corrected_rmse_cm"],
            report["n_trials"],
        )
    return EXIT_OK


def _cmd_eval(args) -> int:
    config = _load_scenario(args.gt)
    results = evaluate_sessions(args.sessions, config, args.calib)
    paths = build_report(results, args.out)
    log.info("reports under %s", args.out)
    for row in results["trajectory"]:
        if row["modality_pair"].startswith("em-mtm"):
            log.info(
                "  %s %s cos=%.3f nrmse=%.2f%%",
                row["modality_pair"], row["axis"], row["cos"], row["nrmse_pct"],
            )
    return EXIT_OK if paths else EXIT_VALIDATION


def _cmd_export(args) -> int:
    sessions = find_sessions(args.session)
    out_root = Path(args.out)
    for sdir in sessions:
        aligned = sorted((sdir / "aligned").glob("*.csv"))
        if not aligned:
            raise AlignmentError(f"{sdir} has no aligned tables; run align first")
        for src in aligned:
            trial = load_exported_trial(src)
            export_dataset(trial, out_root / sdir.name / src.name, fmt=args.format)
            log.info("exported %s/%s", sdir.name, src.name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
