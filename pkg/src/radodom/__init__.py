"""Doppler-aided 4D radar odometry on voxel feature cells.

Typical use::

    from radodom import OdomConfig, run_odometry, read_sequence
    odom = run_odometry(read_sequence("data/seq0"), OdomConfig())
    print(odom.trajectory[-1])
"""

from .config import OdomConfig
from .errors import RadarOdometryError
from .evaluation import MetricReport, evaluate
from .geometry import Pose, Trajectory
from .io import RadarScan, read_sequence, read_trajectory_tum, write_trajectory_tum
from .pipeline import Odometry, run_odometry

__version__ = "0.1.0"

__all__ = [
    "OdomConfig", "RadarOdometryError", "MetricReport", "evaluate", "Pose", "Trajectory",
    "RadarScan", "read_sequence", "read_trajectory_tum", "write_trajectory_tum",
    "Odometry", "run_odometry", "__version__",
]
