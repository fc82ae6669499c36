"""Virtual-sensor fusion: two fixed sensors emulate one at any position.

The fused reading for a virtual sensor at fraction ``p`` is

    mx = k * ((1 - p) * dx_front + p * dx_rear)
    my = k * (dy_front + dy_rear) / 2

with ``k = user_cpi / 12000`` the resolution multiplier.  Horizontal
readings differ between the sensors only through device rotation, so
their difference over the baseline recovers the per-sample rotation
angle.  Cursor reports are integers; fractional remainders carry over
to the next sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .kinematics import (
    BASE_CPI,
    COUNTS_PER_MM,
    DEFAULT_BASELINE_MM,
    SensorOffset,
    ideal_sensor_read,
)

SAMPLE_RATE_HZ = 500.0
SAMPLE_DT_US = 2000


class CountVec(NamedTuple):
    """Raw sensor displacement in counts at base CPI (real-valued)."""

    dx: float
    dy: float


class CursorDelta(NamedTuple):
    """Integer cursor report at user CPI."""

    mx: int
    my: int


@dataclass(frozen=True)
class DualSample:
    """One timestamped reading of both sensors plus button states."""

    t_us: int
    front: CountVec
    rear: CountVec
    btn_left: bool = False
    btn_right: bool = False


@dataclass(frozen=True)
class VirtualConfig:
    """Virtual sensor position (integer percent) and user resolution."""

    p_percent: int = 50
    user_cpi: float = 800.0

    def __post_init__(self) -> None:
        if not 0 <= int(self.p_percent) <= 100:
            raise ValueError(f"p_percent must be in 0..100, got {self.p_percent}")
        if not 0.0 < self.user_cpi <= BASE_CPI:
            raise ValueError(f"user_cpi must be in (0, {BASE_CPI:.0f}], got {self.user_cpi}")
        object.__setattr__(self, "p_percent", int(self.p_percent))

    @property
    def p(self) -> float:
        return self.p_percent / 100.0

    @property
    def k(self) -> float:
        return self.user_cpi / BASE_CPI


def virtual_fuse(sample: DualSample, cfg: VirtualConfig) -> CountVec:
    """Fuse one dual reading into the virtual sensor's (real-valued) counts."""
    p, k = cfg.p, cfg.k
    return CountVec(
        k * ((1.0 - p) * sample.front.dx + p * sample.rear.dx),
        k * (sample.front.dy + sample.rear.dy) / 2.0,
    )


def fuse_stream(front: np.ndarray, rear: np.ndarray, cfg: VirtualConfig) -> np.ndarray:
    """Vectorized virtual_fuse over (N, 2) front/rear count arrays."""
    front = np.asarray(front, dtype=float)
    rear = np.asarray(rear, dtype=float)
    p, k = cfg.p, cfg.k
    out = np.empty_like(front)
    out[:, 0] = k * ((1.0 - p) * front[:, 0] + p * rear[:, 0])
    out[:, 1] = k * (front[:, 1] + rear[:, 1]) / 2.0
    return out


def estimate_rotation(sample: DualSample, r_counts: float) -> float:
    """Per-sample device rotation (rad) from the horizontal reading gap."""
    if r_counts <= 0:
        raise ValueError("baseline r_counts must be positive")
    return (sample.front.dx - sample.rear.dx) / r_counts


class CarryAccumulator:
    """Truncate-toward-zero quantizer that carries remainders forward."""

    __slots__ = ("remainder",)

    def __init__(self) -> None:
        self.remainder = 0.0

    def push(self, value: float) -> int:
        self.remainder += value
        out = math.trunc(self.remainder)
        self.remainder -= out
        return int(out)

    def reset(self) -> None:
        self.remainder = 0.0


def quantize_carry(stream: Iterable) -> list[CursorDelta]:
    """Quantize a real-valued (dx, dy) stream into integer cursor reports."""
    ax, ay = CarryAccumulator(), CarryAccumulator()
    out = []
    for v in stream:
        dx, dy = float(v[0]), float(v[1])
        out.append(CursorDelta(ax.push(dx), ay.push(dy)))
    return out


@dataclass
class EmulationResult:
    """Streams produced by emulate_stream."""

    t_us: np.ndarray            # (N,) int64 sample timestamps
    front: np.ndarray           # (N, 2) raw counts at base CPI
    rear: np.ndarray            # (N, 2)
    fused: np.ndarray           # (N, 2) real-valued virtual sensor at user CPI
    cursor: list[CursorDelta]   # integer HID-style reports
    direct: np.ndarray          # (N, 2) ideal sensor emulated directly at p (x k)

    @property
    def samples(self) -> list[DualSample]:
        return [
            DualSample(int(t), CountVec(*f), CountVec(*r))
            for t, f, r in zip(self.t_us, self.front, self.rear)
        ]


def emulate_stream(
    poses,
    cfg: VirtualConfig,
    r: float = DEFAULT_BASELINE_MM,
    sample_dt_us: int = SAMPLE_DT_US,
) -> EmulationResult:
    """Run a pose sequence through the two-sensor pipeline.

    Produces the raw front/rear streams, the fused virtual-sensor stream,
    the quantized cursor reports, and, for equivalence checks, the stream
    of an ideal sensor emulated directly at position p.
    """
    front = ideal_sensor_read(poses, SensorOffset(0.0, r))
    rear = ideal_sensor_read(poses, SensorOffset(1.0, r))
    fused = fuse_stream(front, rear, cfg)
    direct = cfg.k * ideal_sensor_read(poses, SensorOffset(cfg.p, r))
    t_us = np.arange(len(front), dtype=np.int64) * sample_dt_us + sample_dt_us
    return EmulationResult(
        t_us=t_us,
        front=front,
        rear=rear,
        fused=fused,
        cursor=quantize_carry(fused),
        direct=direct,
    )


def baseline_counts(r_mm: float = DEFAULT_BASELINE_MM) -> float:
    """Sensor baseline expressed in counts at base CPI."""
    return r_mm * COUNTS_PER_MM
