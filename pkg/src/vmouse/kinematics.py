"""Rigid-body device poses and ideal displacement-sensor emulation.

A device pose is (x, y, theta): position of the reference point in mm
(world frame) and heading in rad.  The reference point is the rear
sensor; a sensor at fraction ``p`` of the front-rear axis (0 = front,
1 = rear) sits ``(1 - p) * r`` ahead of it along the heading unit
vector ``u(theta) = (-sin theta, cos theta)``.

Sign conventions.  ``theta`` grows counterclockwise in the world frame
(x right, y away from the user); at ``theta = 0`` the device points
along +y and moving the device along +x reads positive dx.  The
rotation a two-sensor rig observes (front dx minus rear dx over the
baseline) is therefore positive when the device turns clockwise, i.e.
when ``theta`` decreases; that matches the natural coupling of a right
hand sweeping rightward.  Sensors are ideal translation transducers:
each reports the world displacement of its own mounting point,
expressed in the device frame of the earlier sample and scaled to
counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BASE_CPI = 12000.0
MM_PER_INCH = 25.4

#: counts per millimetre at the base sensor resolution
COUNTS_PER_MM = BASE_CPI / MM_PER_INCH

#: default distance between the front and rear sensors, mm
DEFAULT_BASELINE_MM = 72.0


class EmptyPoseSequence(ValueError):
    """Raised when a sensor read is requested for fewer than two poses."""


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    t = math.fmod(theta, 2.0 * math.pi)
    if t <= -math.pi:
        t += 2.0 * math.pi
    elif t > math.pi:
        t -= 2.0 * math.pi
    return t


@dataclass(frozen=True)
class Pose:
    """Device pose: reference point (mm, world frame) and heading (rad)."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", normalize_angle(self.theta))


@dataclass(frozen=True)
class SensorOffset:
    """Sensor position on the centerline: fraction p of the front-rear axis."""

    p: float
    r: float = DEFAULT_BASELINE_MM

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if self.r <= 0.0:
            raise ValueError(f"baseline r must be positive, got {self.r}")


def pose_array(poses) -> np.ndarray:
    """Coerce a Pose sequence or array-like into an (N, 3) float array."""
    if isinstance(poses, np.ndarray):
        arr = np.asarray(poses, dtype=float)
    else:
        seq = list(poses)
        if seq and isinstance(seq[0], Pose):
            arr = np.array([(q.x, q.y, q.theta) for q in seq], dtype=float)
        else:
            arr = np.asarray(seq, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("poses must have shape (N, 3)")
    return arr


def heading_unit(theta):
    """Heading unit vector(s) u(theta) = (-sin, cos)."""
    return -np.sin(theta), np.cos(theta)


def sensor_world_position(pose: Pose, offset: SensorOffset) -> tuple[float, float]:
    """World position (mm) of the sensor point for one pose."""
    ux, uy = -math.sin(pose.theta), math.cos(pose.theta)
    ahead = (1.0 - offset.p) * offset.r
    return pose.x + ahead * ux, pose.y + ahead * uy


def sensor_world_track(poses, offset: SensorOffset) -> np.ndarray:
    """World positions (N, 2) of the sensor point along a pose sequence."""
    arr = pose_array(poses)
    ux, uy = heading_unit(arr[:, 2])
    ahead = (1.0 - offset.p) * offset.r
    return np.stack([arr[:, 0] + ahead * ux, arr[:, 1] + ahead * uy], axis=1)


def ideal_sensor_read(poses, offset: SensorOffset, cpi: float = BASE_CPI) -> np.ndarray:
    """Per-sample (dx, dy) counts an ideal sensor at ``offset`` would report.

    For each consecutive pose pair the world displacement of the sensor
    point is projected into the device frame of the earlier pose
    (x axis (cos theta, sin theta), y axis (-sin theta, cos theta)) and
    scaled by ``cpi / 25.4``.  Returns an (N-1, 2) float array.
    """
    arr = pose_array(poses)
    if len(arr) < 2:
        raise EmptyPoseSequence("need at least two poses to read displacements")
    track = sensor_world_track(arr, offset)
    d = np.diff(track, axis=0)
    th = arr[:-1, 2]
    c, s = np.cos(th), np.sin(th)
    scale = cpi / MM_PER_INCH
    dx = (d[:, 0] * c + d[:, 1] * s) * scale
    dy = (-d[:, 0] * s + d[:, 1] * c) * scale
    return np.stack([dx, dy], axis=1)


def step_reading(
    x0: float, y0: float, th0: float,
    x1: float, y1: float, th1: float,
    p: float, r: float, scale: float = COUNTS_PER_MM,
) -> tuple[float, float]:
    """Scalar single-step sensor reading; same math as ideal_sensor_read.

    Kept allocation-free for simulation inner loops.
    """
    ahead = (1.0 - p) * r
    dxw = (x1 - ahead * math.sin(th1)) - (x0 - ahead * math.sin(th0))
    dyw = (y1 + ahead * math.cos(th1)) - (y0 + ahead * math.cos(th0))
    c, s = math.cos(th0), math.sin(th0)
    return (dxw * c + dyw * s) * scale, (-dxw * s + dyw * c) * scale
