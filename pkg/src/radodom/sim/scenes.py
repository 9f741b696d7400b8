"""Procedural scenes used by the demos and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .scene import Mover, Patch, SceneModel, box_patches
from .trajectory import TrajectorySpec

CAR = (4.5, 1.8, 1.5)


def _box(rng, a, b, la, lb, h, axis, refl):
    """Box centered at (a, b) along ``axis``; swaps coordinates for rows along y."""
    if axis == "x":
        return box_patches((a, b, h / 2), (la, lb, h), refl)
    return box_patches((b, a, h / 2), (lb, la, h), refl)


def building_row(rng, start, end, face, side, axis="x", depth=10.0):
    """Buildings lining a street that runs along ``axis``.

    The street-facing walls sit at ``face`` (plus a random setback) on the
    ``side`` (+1 / -1) of the street.
    """
    patches = []
    a = start
    while a < end:
        length = rng.uniform(8.0, 20.0)
        near = face + side * rng.uniform(0.0, 3.0)
        h = rng.uniform(6.0, 20.0)
        patches += _box(rng, a + length / 2, near + side * depth / 2, length, depth, h, axis,
                        rng.uniform(0.6, 1.2))
        a += length + rng.uniform(2.0, 6.0)
    return patches


def pole_row(rng, start, end, offset, spacing=12.0, axis="x", height=4.0):
    patches = []
    for a in np.arange(start, end, spacing):
        patches += _box(rng, a + rng.uniform(-1, 1), offset, 0.4, 0.4, height, axis,
                        rng.uniform(1.5, 3.0))
    return patches


def street_scene(length=150.0, half_width=8.0, seed=0) -> SceneModel:
    """Straight street along +x with building rows, poles and parked cars."""
    rng = np.random.default_rng(seed)
    patches = []
    for side in (1, -1):
        patches += building_row(rng, -20.0, length + 100.0, side * half_width, side)
        patches += pole_row(rng, -10.0, length + 90.0, side * (half_width - 1.0))
        for a in np.arange(-5.0, length + 80.0, 23.0):
            if rng.uniform() < 0.6:
                patches += _box(rng, a + rng.uniform(-3, 3), side * (half_width - 2.5),
                                CAR[0], CAR[1], CAR[2], "x", rng.uniform(0.8, 1.5))
    return SceneModel(patches=patches)


def straight_trajectory(length=100.0, speed=10.0, rate_hz=10.0, height=1.0) -> TrajectorySpec:
    """``length`` meters of straight driving along +x, both end frames included."""
    return TrajectorySpec(waypoints=[(0.0, 0.0), (length + 50.0, 0.0)], speed=speed,
                          rate_hz=rate_hz, height=height,
                          frames=int(round(length / speed * rate_hz)) + 1)


def block_scene(side=25.0, road=5.0, seed=0) -> SceneModel:
    """A city block encircled by the square loop, with buildings across each street."""
    rng = np.random.default_rng(seed)
    patches = []
    lo, hi = -road, side + road
    inner = side - 2 * road
    # the block inside the loop
    for (fa, fb), (sa, sb) in [
        ((0.27, 0.27), (0.45, 0.45)),
        ((0.76, 0.30), (0.40, 0.55)),
        ((0.50, 0.79), (0.90, 0.38)),
    ]:
        patches += _box(rng, road + inner * fa, road + inner * fb, inner * sa, inner * sb,
                        rng.uniform(8.0, 18.0), "x", rng.uniform(0.6, 1.2))
    # across-the-street buildings on all four sides
    patches += building_row(rng, -40.0, side + 40.0, lo, -1, axis="x")
    patches += building_row(rng, -40.0, side + 40.0, hi, 1, axis="x")
    patches += building_row(rng, -25.0, side + 25.0, lo, -1, axis="y")
    patches += building_row(rng, -25.0, side + 25.0, hi, 1, axis="y")
    # poles along both kerbs of every leg, kept clear of the crossings
    for axis in ("x", "y"):
        for off in (-road + 1.0, road - 1.0, side - road + 1.0, side + road - 1.0):
            patches += pole_row(rng, road + 1.0, side - road, off, spacing=4.5, axis=axis)
    return SceneModel(patches=patches)


def square_loop_trajectory(side=25.0, speed=10.0, rate_hz=10.0, height=1.0,
                           turn_length=15.0) -> TrajectorySpec:
    """One closed lap around a ``side`` x ``side`` square starting mid-way along the first leg."""
    h = side / 2
    wps = [(h, 0.0), (side, 0.0), (side, side), (0.0, side), (0.0, 0.0), (h, 0.0)]
    return TrajectorySpec(waypoints=wps, speed=speed, rate_hz=rate_hz, height=height,
                          turn_length=turn_length,
                          frames=int(round(4 * side / speed * rate_hz)) + 1)


def block_movers(side=25.0, lane=3.0) -> list[Mover]:
    """Three cars on the loop streets, timed for :func:`square_loop_trajectory`.

    Two oncoming cars pass in the far lane (on the second and fourth legs) and
    a slow car drives ahead in the adjacent lane of the third leg, where the
    sensor closes in on it. None of them crosses in front of the sensor: a car
    moving across the line of sight has near-static Doppler on part of its
    body, which Doppler clustering cannot separate.
    """
    cx, cy = CAR, (CAR[1], CAR[0], CAR[2])
    return [
        Mover((side + lane, side + 20.0, 0.75), (0.0, -8.0, 0.0), cy, 1.0),
        Mover((-lane, -75.0, 0.75), (0.0, 9.0, 0.0), cy, 1.0),
        Mover((side + 3.75, side + lane, 0.75), (-5.0, 0.0, 0.0), cx, 1.0),
    ]


def tram(speed=-10.0, lateral=4.0, height=2.5, length=600.0, x0=0.0) -> Mover:
    """A long vehicle running along the street beside the sensor."""
    return Mover((x0, lateral, height / 2), (speed, 0.0, 0.0), (length, 2.5, height), 1.0)


def room_scene(depth=18.0, half_width=8.0, height=6.0) -> SceneModel:
    """Three walls around the origin (ahead, left, right) on the ground plane."""
    back = -5.0
    length = depth - back
    return SceneModel(patches=[
        Patch((depth, -half_width, 0.0), (0.0, 2 * half_width, 0.0), (0.0, 0.0, height), 1.0),
        Patch((back, half_width, 0.0), (length, 0.0, 0.0), (0.0, 0.0, height), 0.8),
        Patch((back, -half_width, 0.0), (length, 0.0, 0.0), (0.0, 0.0, height), 0.8),
    ])


def lead_vehicle(speed=10.0, gap=8.25, lateral=2.5, extent=(6.0, 2.2, 3.0)) -> Mover:
    """A van keeping pace ``gap`` meters ahead in the adjacent lane.

    With :func:`straight_trajectory` at the same speed it holds about 15% of
    the returns of a default scan in :func:`street_scene`.
    """
    return Mover((gap, lateral, extent[2] / 2), (speed, 0.0, 0.0), extent, 1.0)
