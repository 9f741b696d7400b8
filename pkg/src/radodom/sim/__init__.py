"""Synthetic 4D radar: scenes, ray-cast scans, trajectories, datasets."""

from .render import DYNAMIC, GHOST, STATIC, ScanTruth, simulate_scan
from .scene import Mover, Patch, SceneModel, SensorSpec, box_patches, format_scene, parse_scene, read_scene
from .scenes import (
    block_movers,
    block_scene,
    lead_vehicle,
    room_scene,
    square_loop_trajectory,
    straight_trajectory,
    street_scene,
    tram,
)
from .sequence import SimulatedSequence, read_velocity_truth, render_sequence, simulate_sequence
from .trajectory import (
    SampledTrajectory,
    TrajectorySpec,
    parse_trajectory_spec,
    read_trajectory_spec,
    sample_trajectory,
)

__all__ = [
    "DYNAMIC", "GHOST", "STATIC", "ScanTruth", "simulate_scan",
    "Mover", "Patch", "SceneModel", "SensorSpec", "box_patches", "format_scene", "parse_scene",
    "read_scene", "SimulatedSequence", "read_velocity_truth", "render_sequence",
    "simulate_sequence", "SampledTrajectory", "TrajectorySpec", "parse_trajectory_spec",
    "read_trajectory_spec", "sample_trajectory", "block_movers", "block_scene", "lead_vehicle", "room_scene",
    "square_loop_trajectory", "straight_trajectory", "street_scene", "tram",
]
