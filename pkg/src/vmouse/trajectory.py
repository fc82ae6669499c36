"""Simulated robot runs: figure-eight trajectories, with and without rotation.

The device's midpoint (50% position, where the robot grips it) traces a
lemniscate of Bernoulli rescaled to the planned path length, sampled
uniformly in arc length at the device sample rate.  With rotation
enabled the device twists between -20 deg at the leftmost point of the
figure and +40 deg at the rightmost, interpolated linearly along the
path the way a robot interpolates yaw between waypoints.  Angles use
the rig-measured convention (positive = the direction that increases
the front sensor's dx).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .fusion import VirtualConfig, fuse_stream
from .kinematics import COUNTS_PER_MM, DEFAULT_BASELINE_MM, SensorOffset, ideal_sensor_read

DEFAULT_LENGTH_MM = 700.0
DEFAULT_SAMPLE_RATE = 500.0
#: default traversal durations for the two modes, seconds
DURATION_TRANSLATE_S = 9.2
DURATION_ROTATE_S = 11.8

_ROT_LEFT_DEG = -20.0
_ROT_RIGHT_DEG = 40.0


@dataclass
class TrajectoryPlan:
    """An arc-length-uniform lemniscate traversal plus rotation profile."""

    planned_length: float = DEFAULT_LENGTH_MM
    rotate: bool = False
    sample_rate: float = DEFAULT_SAMPLE_RATE
    duration: float = 0.0
    baseline_r: float = DEFAULT_BASELINE_MM
    rotation_deg: tuple[float, float] = (_ROT_LEFT_DEG, _ROT_RIGHT_DEG)
    _poses: np.ndarray | None = field(default=None, repr=False)
    _rotation: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.duration)) + 1

    def poses(self) -> np.ndarray:
        if self._poses is None:
            self._materialize()
        return self._poses

    def rotation_profile(self) -> np.ndarray:
        """Per-sample measured rotation angle (rad)."""
        if self._rotation is None:
            self._materialize()
        return self._rotation

    def _materialize(self) -> None:
        mid, s_norm = _lemniscate_track(self.planned_length, self.n_samples)
        if self.rotate:
            rot = np.deg2rad(_triangle_profile(s_norm, *self.rotation_deg))
        else:
            rot = np.zeros_like(s_norm)
        theta = -rot  # pose heading is CCW-positive, measured rotation CW-positive
        ux, uy = -np.sin(theta), np.cos(theta)
        # the robot mount pivots at the 50% point; the pose reference (rear
        # sensor) trails half a baseline behind it
        xr = mid[:, 0] - 0.5 * self.baseline_r * ux
        yr = mid[:, 1] - 0.5 * self.baseline_r * uy
        self._poses = np.stack([xr, yr, theta], axis=1)
        self._rotation = rot


def _lemniscate_track(length_mm: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Arc-length-uniform samples of a Bernoulli lemniscate of given length."""
    t = np.linspace(0.0, 2.0 * math.pi, 20001)
    den = 1.0 + np.sin(t) ** 2
    x = np.cos(t) / den
    y = np.sin(t) * np.cos(t) / den
    seg = np.hypot(np.diff(x), np.diff(y))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    a = length_mm / cum[-1]
    s_targets = np.linspace(0.0, cum[-1], n)
    t_s = np.interp(s_targets, cum, t)
    den = 1.0 + np.sin(t_s) ** 2
    xs = a * np.cos(t_s) / den
    ys = a * np.sin(t_s) * np.cos(t_s) / den
    return np.stack([xs, ys], axis=1), s_targets / cum[-1]


def _triangle_profile(s_norm: np.ndarray, left_deg: float, right_deg: float) -> np.ndarray:
    """Rotation angle along the path: right extreme at s=0 and s=1, left at s=0.5."""
    span = right_deg - left_deg
    return np.where(
        s_norm <= 0.5,
        right_deg - 2.0 * span * s_norm,
        left_deg + 2.0 * span * (s_norm - 0.5),
    )


def lemniscate_plan(
    length: float = DEFAULT_LENGTH_MM,
    rotate: bool = False,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    duration: float | None = None,
    baseline_r: float = DEFAULT_BASELINE_MM,
) -> TrajectoryPlan:
    """Build a figure-eight plan of the given polyline length."""
    if length <= 0:
        raise ValueError(f"planned length must be positive, got {length}")
    if duration is None:
        duration = DURATION_ROTATE_S if rotate else DURATION_TRANSLATE_S
    if duration <= 0 or sample_rate <= 0:
        raise ValueError("duration and sample_rate must be positive")
    return TrajectoryPlan(length, rotate, sample_rate, duration, baseline_r)


def path_length(stream: np.ndarray) -> float:
    """Detected path length of a (dx, dy) count stream, in kilocounts."""
    arr = np.asarray(stream, dtype=float)
    if arr.size == 0:
        return 0.0
    return float(np.hypot(arr[:, 0], arr[:, 1]).sum() / 1000.0)


@dataclass
class PositionResult:
    p: float
    length_direct_kc: float
    length_fused_kc: float
    discrepancy_kc: float        # mean distance between integrated trajectories
    discrepancy_pct: float       # as % of the direct path length

    @property
    def length_direct_mm(self) -> float:
        return self.length_direct_kc * 1000.0 / COUNTS_PER_MM

    @property
    def length_fused_mm(self) -> float:
        return self.length_fused_kc * 1000.0 / COUNTS_PER_MM


@dataclass
class EquivalenceReport:
    rotate: bool
    positions: list[PositionResult]
    length_ratio_20_80: float | None

    def by_p(self, p: float) -> PositionResult:
        for r in self.positions:
            if abs(r.p - p) < 1e-9:
                return r
        raise KeyError(f"position {p} not in report")


def run_experiment(
    plan: TrajectoryPlan,
    positions=(0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8),
    r: float = DEFAULT_BASELINE_MM,
) -> EquivalenceReport:
    """Compare directly emulated sensors against two-sensor fusion.

    For each position the detected path length is computed twice: from an
    ideal sensor emulated at p, and from the fusion of the p=0 / p=1
    streams (k = 1, full-resolution counts).  The discrepancy is
    the mean distance between the two integrated trajectories.
    """
    positions = sorted(float(p) for p in positions)
    if any(not 0.0 <= p <= 1.0 for p in positions):
        raise ValueError("positions must lie in [0, 1]")
    poses = plan.poses()
    front = ideal_sensor_read(poses, SensorOffset(0.0, r))
    rear = ideal_sensor_read(poses, SensorOffset(1.0, r))
    results = []
    for p in positions:
        direct = ideal_sensor_read(poses, SensorOffset(p, r))
        cfg = VirtualConfig(p_percent=int(round(p * 100)), user_cpi=12000.0)
        fused = fuse_stream(front, rear, cfg)
        # percent grid has 1% resolution; use the exact fraction when off-grid
        pf = cfg.p if abs(cfg.p - p) < 1e-12 else p
        if pf != cfg.p:
            fused = np.stack(
                [(1.0 - pf) * front[:, 0] + pf * rear[:, 0],
                 (front[:, 1] + rear[:, 1]) / 2.0], axis=1)
        ld = path_length(direct)
        lf = path_length(fused)
        gap = np.cumsum(fused, axis=0) - np.cumsum(direct, axis=0)
        disc_kc = float(np.hypot(gap[:, 0], gap[:, 1]).mean() / 1000.0)
        pct = 100.0 * disc_kc / ld if ld > 0 else 0.0
        results.append(PositionResult(p, ld, lf, disc_kc, pct))
    ratio = None
    have = {round(r_.p, 9) for r_ in results}
    if 0.2 in have and 0.8 in have:
        by = {round(r_.p, 9): r_ for r_ in results}
        ratio = by[0.2].length_direct_kc / by[0.8].length_direct_kc
    return EquivalenceReport(plan.rotate, results, ratio)


def report_table(report: EquivalenceReport) -> str:
    """Human-readable fixed-width table."""
    lines = [
        f"mode: {'translate+rotate' if report.rotate else 'translate only'}",
        f"{'p':>5} {'direct kc':>10} {'fused kc':>10} {'direct mm':>10} "
        f"{'discrepancy kc':>15} {'% of length':>12}",
    ]
    for r in report.positions:
        lines.append(
            f"{r.p*100:4.0f}% {r.length_direct_kc:10.3f} {r.length_fused_kc:10.3f} "
            f"{r.length_direct_mm:10.2f} {r.discrepancy_kc:15.6f} {r.discrepancy_pct:12.6f}"
        )
    if report.length_ratio_20_80 is not None:
        lines.append(f"length ratio 20% / 80%: {report.length_ratio_20_80:.4f}")
    return "\n".join(lines)


def report_csv(report: EquivalenceReport, fileobj: io.TextIOBase | None = None) -> str:
    """CSV with columns p_percent, mode, length_kilocounts, length_mm, discrepancy_pct."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p_percent", "mode", "length_kilocounts", "length_mm", "discrepancy_pct"])
    for r in report.positions:
        w.writerow([int(round(r.p * 100)), "direct",
                    f"{r.length_direct_kc:.6f}", f"{r.length_direct_mm:.4f}", "0.0"])
        w.writerow([int(round(r.p * 100)), "fused",
                    f"{r.length_fused_kc:.6f}", f"{r.length_fused_mm:.4f}",
                    f"{r.discrepancy_pct:.8f}"])
    text = buf.getvalue()
    if fileobj is not None:
        fileobj.write(text)
    return text
