"""Command-line entry point: ``python -m app.cli <command> ...``."""
import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from app import config
from app.exceptions import RaceSimError
from app.schemas.race import RaceConfig
from app.schemas.track import Gate
from app.schemas.trajectory import TrajectoryConfig
from app.services import analysis, track_service
from app.services.geometry import camera_looking
from app.services.race import run_race, write_run
from app.services.trajectory import generate_surrogate, place_waypoints, save_trajectory
from app.services.vision import estimate_R_montecarlo

logger = logging.getLogger(__name__)


def cmd_sim(args) -> int:
    cfg = track_service.load_race_config(args.config)
    overrides = {
        key: value
        for key, value in (("seed", args.seed), ("laps", args.laps), ("mode", args.mode), ("track", args.track))
        if value is not None
    }
    if overrides:
        cfg = RaceConfig.model_validate({**cfg.model_dump(), **overrides})
    out_dir = args.out or os.path.join(config.OUTPUT_DIR, f"{cfg.run_label}-seed{cfg.seed}")

    result = run_race(cfg)
    write_run(result, out_dir)
    with open(os.path.join(out_dir, "summary.txt")) as f:
        print(f.read(), end="")
    print(f"logs written to {out_dir}")
    return 0


def cmd_gen_traj(args) -> int:
    gate_map = track_service.get_track(args.track)
    cfg = TrajectoryConfig(twr_gen=args.twr, dt=args.dt)
    waypoints = place_waypoints(gate_map, cfg=cfg)
    if args.waypoints_json:
        with open(args.waypoints_json, "w") as f:
            json.dump(
                [{"gate_id": w.gate_id, "side": w.side, "position": [float(x) for x in w.position]} for w in waypoints],
                f, indent=2,
            )
    traj = generate_surrogate(waypoints, twr_gen=args.twr, dt=args.dt, closed=True, cfg=cfg)
    save_trajectory(traj, args.out)
    print(
        f"{gate_map.name}: lap time {traj.lap_time:.3f} s, {len(traj)} samples, "
        f"peak thrust {np.max(traj.thrust_accel):.2f} m/s^2 -> {args.out}"
    )
    return 0


def cmd_calib_r(args) -> int:
    K = track_service.get_intrinsics()
    gate = Gate(id="calibration", center=[0.0, 0.0, 0.0], yaw_rad=0.0)
    cam = camera_looking([-args.gate_dist, 0.0, 0.0], 0.0)
    R = estimate_R_montecarlo(gate, cam, K, args.sigma_px, args.n, seed=args.seed)
    logger.info("calibration at %.2f m, sigma %.2f px, %d samples", args.gate_dist, args.sigma_px, args.n)
    np.set_printoptions(precision=6, suppress=False)
    print(f"R (m^2), gate distance {args.gate_dist} m, sigma {args.sigma_px} px, n={args.n}:")
    print(R)
    print("std (m):", np.sqrt(np.diag(R)))
    return 0


def _flight_log_laps(args) -> pd.DataFrame:
    log = pd.read_csv(args.flight_log)
    if args.mapping:
        with open(args.mapping) as f:
            log = log.rename(columns=json.load(f))
    gate_map = track_service.get_track(args.track)
    laps, _ = analysis.laps_from_positions(log, gate_map, run=os.path.basename(args.flight_log))
    return analysis.laps_frame(laps)


def cmd_analyze(args) -> int:
    if args.flight_log:
        laps = _flight_log_laps(args)
    else:
        laps = analysis.load_runs(args.dirs)
    print(analysis.format_summary(analysis.summarize(laps)), end="")

    if args.sectors and args.dirs:
        frames = [
            pd.read_csv(os.path.join(d, "sectors.csv"))
            for d in args.dirs
            if os.path.isfile(os.path.join(d, "sectors.csv"))
        ]
        if frames:
            table = analysis.sector_summary(pd.concat(frames, ignore_index=True))
            out = os.path.join(args.dirs[0], "sector_summary.csv")
            table.to_csv(out, index=False)
            print(table.to_string(index=False))
            print(f"sector summary written to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.cli", description="Deterministic drone-racing autonomy simulator")
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="Logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="Fly a closed-loop race and write its logs")
    sim.add_argument("--config", default=None, help="Race config JSON (default: bundled race_default.json)")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--laps", type=int, default=None)
    sim.add_argument("--mode", choices=["vio", "mocap", "ablate-kf"], default=None)
    sim.add_argument("--track", default=None, help="Bundled track name or gate-map JSON path")
    sim.add_argument("--out", default=None, help="Output directory")
    sim.set_defaults(func=cmd_sim)

    gen = sub.add_parser("gen-traj", help="Generate a closed-lap reference trajectory CSV")
    gen.add_argument("--track", default=config.DEFAULT_TRACK)
    gen.add_argument("--twr", type=float, default=3.8)
    gen.add_argument("--dt", type=float, default=0.01)
    gen.add_argument("--out", required=True, help="Output CSV")
    gen.add_argument("--waypoints-json", default=None, help="Also dump the placed waypoints")
    gen.set_defaults(func=cmd_gen_traj)

    calib = sub.add_parser("calib-R", help="Monte-Carlo PnP position covariance")
    calib.add_argument("--gate-dist", type=float, default=3.0)
    calib.add_argument("--sigma-px", type=float, default=1.0)
    calib.add_argument("-n", type=int, default=100)
    calib.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    calib.set_defaults(func=cmd_calib_r)

    analyze = sub.add_parser("analyze", help="Summarize lap tables of one or more run directories")
    analyze.add_argument("dirs", nargs="*", help="Run directories written by sim")
    analyze.add_argument("--sectors", action="store_true", help="Also summarize sector times")
    analyze.add_argument("--flight-log", default=None, help="External flight log CSV")
    analyze.add_argument("--mapping", default=None, help="JSON column mapping for the flight log")
    analyze.add_argument("--track", default=config.DEFAULT_TRACK)
    analyze.set_defaults(func=cmd_analyze)

    serve = sub.add_parser("serve", help="Run the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config.configure_logging(args.log_level)
    try:
        return args.func(args)
    except RaceSimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
