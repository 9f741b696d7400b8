"""Command-line entry point: ``radodom run | eval | sim``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import OdomConfig
from .errors import ConfigError, RadarOdometryError
from .evaluation import DEFAULT_LENGTHS, evaluate
from .io import read_sequence, read_trajectory_tum, write_jsonl, write_trajectory_tum
from .pipeline import Odometry

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

log = logging.getLogger("radodom")


class UsageError(Exception):
    pass


def _parse_lengths(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--lengths must be comma-separated numbers, got {text!r}") from None
    if not vals or any(not np.isfinite(v) or v <= 0 for v in vals):
        raise UsageError(f"--lengths must be positive, got {text!r}")
    return vals


def cmd_run(args) -> int:
    config = OdomConfig.from_file(args.config) if args.config else OdomConfig()
    odom = Odometry(config)
    for scan in read_sequence(args.data):
        odom.process_scan(scan)
    out = Path(args.out)
    write_trajectory_tum(odom.trajectory, out)
    if args.diag:
        write_jsonl((d.record() for d in odom.diagnostics), args.diag)
    n = len(odom.diagnostics)
    runtime = np.mean([d.runtime_s for d in odom.diagnostics]) if n else 0.0
    print(f"frames:    {n}")
    print(f"poses:     {len(odom.trajectory)}")
    print(f"keyframes: {odom.keyframes}")
    print(f"skipped:   {odom.skipped}")
    print(f"runtime:   {1e3 * runtime:.1f} ms/frame (mean)")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    lengths = _parse_lengths(args.lengths) if args.lengths else DEFAULT_LENGTHS
    if args.rpe_delta < 1:
        raise UsageError("--rpe-delta must be >= 1")
    est = read_trajectory_tum(args.est)
    gt = read_trajectory_tum(args.gt)
    report = evaluate(est, gt, rpe_delta=args.rpe_delta, lengths=lengths, max_dt=args.max_dt)
    sys.stdout.write(report.to_text())
    csv_path = Path(args.est).parent / "metrics.csv"
    csv_path.write_text(report.to_csv())
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_sim(args) -> int:
    from .sim import read_scene, read_trajectory_spec, simulate_sequence

    scene, sensor = read_scene(args.scene)
    traj = read_trajectory_spec(args.traj)
    manifest = simulate_sequence(scene, traj, sensor, args.out, rng_seed=args.seed)
    for name in sorted(manifest):
        print(f"{manifest[name]}  {name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radodom", description="4D radar odometry toolkit.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress (-v) or per-frame details (-vv) to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{run,eval,sim}")

    p = sub.add_parser("run", help="estimate the trajectory of a scan sequence")
    p.add_argument("--data", required=True, help="sequence directory containing scans/")
    p.add_argument("--config", help="key = value config file (defaults when omitted)")
    p.add_argument("--out", required=True, help="output trajectory (TUM format)")
    p.add_argument("--diag", help="write per-frame diagnostics as JSON lines")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="compare an estimated trajectory with ground truth")
    p.add_argument("--est", required=True, help="estimated trajectory (TUM)")
    p.add_argument("--gt", required=True, help="ground-truth trajectory (TUM)")
    p.add_argument("--rpe-delta", type=int, default=1, help="RPE frame offset (default 1)")
    p.add_argument("--lengths", help="comma-separated path lengths in m (default 10,20,50)")
    p.add_argument("--max-dt", type=float, default=0.05,
                   help="max timestamp difference for pairing poses, s (default 0.05)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sim", help="render a synthetic dataset")
    p.add_argument("--scene", required=True, help="scene file (geometry and sensor keys)")
    p.add_argument("--traj", required=True, help="trajectory spec file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.set_defaults(func=cmd_sim)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"radodom {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RadarOdometryError, OSError) as exc:
        print(f"radodom {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
