"""Render whole sequences and write them in the on-disk dataset layout."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..io import format_scan, format_trajectory_tum, scan_filename
from .render import ScanTruth, simulate_scan
from .scene import SceneModel, SensorSpec, format_scene
from .trajectory import SampledTrajectory, TrajectorySpec, format_trajectory_spec, sample_trajectory


@dataclass(frozen=True)
class SimulatedSequence:
    scans: list
    truths: list
    ground_truth: SampledTrajectory

    def __len__(self):
        return len(self.scans)


def frame_rngs(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def render_sequence(scene: SceneModel, traj: TrajectorySpec | SampledTrajectory,
                    sensor: SensorSpec, rng_seed: int = 0) -> SimulatedSequence:
    gt = sample_trajectory(traj) if isinstance(traj, TrajectorySpec) else traj
    rngs = frame_rngs(rng_seed, len(gt))
    scans, truths = [], []
    for pose, vel, rate, rng in zip(gt.poses, gt.velocities, gt.yaw_rates, rngs):
        scan, truth = simulate_scan(scene, pose, vel, (0.0, 0.0, rate), sensor, rng)
        scans.append(scan)
        truths.append(truth)
    return SimulatedSequence(scans, truths, gt)


def simulate_sequence(scene: SceneModel, traj: TrajectorySpec, sensor: SensorSpec, out_dir,
                      rng_seed: int = 0) -> dict:
    """Write ``scans/``, ``gt.tum``, ``labels.csv``, ``gt_velocity.csv`` and ``sim_config.txt``.

    Returns a manifest mapping relative file names to SHA-256 digests.
    """
    out = Path(out_dir)
    (out / "scans").mkdir(parents=True, exist_ok=True)  # fail before rendering
    seq = render_sequence(scene, traj, sensor, rng_seed)
    files = {}
    for i, scan in enumerate(seq.scans):
        files[f"scans/{scan_filename(i, scan.timestamp)}"] = format_scan(scan)
    files["gt.tum"] = format_trajectory_tum(seq.ground_truth.poses)

    rows = ["scan_index,point_index,label,mover"]
    for i, truth in enumerate(seq.truths):
        rows += [f"{i},{j},{lab},{m}" for j, (lab, m) in enumerate(zip(truth.labels, truth.mover))]
    files["labels.csv"] = "\n".join(rows) + "\n"

    rows = ["timestamp_s,vx_body,vy_body,vz_body,yaw_rate"]
    for scan, truth, rate in zip(seq.scans, seq.truths, seq.ground_truth.yaw_rates):
        rows.append(",".join([format(scan.timestamp, ".9f")] + [format(v, ".9g") for v in (*truth.velocity_body, rate)]))
    files["gt_velocity.csv"] = "\n".join(rows) + "\n"

    files["sim_config.txt"] = (
        f"# seed = {rng_seed}\n# --- scene ---\n{format_scene(scene, sensor)}"
        f"# --- trajectory ---\n{format_trajectory_spec(traj)}"
    )

    manifest = {}
    for name, text in files.items():
        (out / name).write_text(text)
        manifest[name] = hashlib.sha256(text.encode()).hexdigest()
    return manifest


def read_velocity_truth(path) -> np.ndarray:
    """``gt_velocity.csv`` as an array with columns t, vx, vy, vz, yaw_rate."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
