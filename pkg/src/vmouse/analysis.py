"""ISO 9241-411 multi-directional task metrics.

Covers the full per-session pipeline: outlier screening, bivariate
endpoint deviation, effective width/distance/difficulty, throughput,
path-deviation metrics (MAE, RMSE, PDR), per-block Fitts regression,
nonparametric condition comparison, and t-based confidence intervals.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

WE_FACTOR = 4.133


class AnalysisError(ValueError):
    pass


class DegenerateSessionError(AnalysisError):
    """All endpoints coincide; effective width would be zero."""


class ZeroLengthPathError(AnalysisError):
    """The ideal path start coincides with the click point."""


class RankDeficientError(AnalysisError):
    """Not enough distinct difficulty values to fit a line."""


@dataclass(frozen=True)
class TaskConfig:
    """Geometry of one multi-directional tapping session."""

    d_px: float                      # diameter of the target circle
    w_px: float                      # target diameter
    n_targets: int = 15
    order_step: int = 8              # crossing pattern stride
    center: tuple[float, float] = (960.0, 540.0)

    def __post_init__(self) -> None:
        if not self.d_px > self.w_px > 0:
            raise AnalysisError(f"need D > W > 0, got D={self.d_px}, W={self.w_px}")
        if self.n_targets < 3:
            raise AnalysisError("need at least 3 targets")

    @property
    def id_nominal(self) -> float:
        return math.log2(self.d_px / self.w_px + 1.0)


def target_order(cfg: TaskConfig) -> list[int]:
    """Click sequence indices: 16 clicks visiting all 15 targets and returning."""
    n, s = cfg.n_targets, cfg.order_step
    return [(j * s) % n for j in range(n + 1)]


def task_geometry(cfg: TaskConfig) -> np.ndarray:
    """Centers of the targets, evenly spaced on a circle of diameter D."""
    n = cfg.n_targets
    radius = cfg.d_px / 2.0
    ang = -math.pi / 2.0 + 2.0 * math.pi * np.arange(n) / n
    cx, cy = cfg.center
    return np.stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)], axis=1)


@dataclass
class Trial:
    """One recorded movement: previous target, current target, and the path."""

    prev_target: tuple[float, float]
    target: tuple[float, float]
    click: tuple[float, float]
    path: np.ndarray                  # (N, 3): t_seconds, x, y
    mt: float
    success: bool = True

    @property
    def start(self) -> tuple[float, float]:
        if len(self.path):
            return float(self.path[0, 1]), float(self.path[0, 2])
        return self.prev_target

    @property
    def movement_distance(self) -> float:
        sx, sy = self.start
        return math.hypot(self.click[0] - sx, self.click[1] - sy)


@dataclass
class SessionSummary:
    d_px: float
    w_px: float
    n_trials: int
    d_e: float
    sd_xy: float
    w_e: float
    id_e: float
    mt_mean: float
    tp: float
    mae: float
    rmse: float
    pdr: float


@dataclass
class FittsFit:
    a: float          # intercept, s
    b: float          # slope, s/bit
    r2: float


@dataclass
class BlockSummary:
    p_percent: int
    sessions: list[SessionSummary]
    tp_mean: float
    tp_ci95: float
    mae_mean: float
    pdr_mean: float
    fit: FittsFit


def screen_outliers(trials, cfg: TaskConfig):
    """Apply the three screening rules; returns (kept, removed_with_reason)."""
    kept, removed = [], []
    max_mt = cfg.id_nominal
    for tr in trials:
        if tr.movement_distance < cfg.d_px / 2.0:
            removed.append((tr, "movement distance below D/2"))
            continue
        sx, sy = tr.start
        start_err = math.hypot(sx - tr.prev_target[0], sy - tr.prev_target[1])
        end_err = math.hypot(tr.click[0] - tr.target[0], tr.click[1] - tr.target[1])
        if start_err > 2.0 * cfg.w_px or end_err > 2.0 * cfg.w_px:
            removed.append((tr, "endpoint more than 2W from desired position"))
            continue
        if tr.mt > max_mt:
            removed.append((tr, "movement time above log2(D/W+1) seconds"))
            continue
        kept.append(tr)
    return kept, removed


def segment_deviations(points: np.ndarray, a, b) -> np.ndarray:
    """Signed perpendicular distances of points from the line through a and b."""
    ax, ay = a
    bx, by = b
    length = math.hypot(bx - ax, by - ay)
    if length == 0:
        raise ZeroLengthPathError("ideal path has zero length")
    rx = points[:, 0] - ax
    ry = points[:, 1] - ay
    return (rx * (by - ay) - ry * (bx - ax)) / length


def ideal_path_start(path: np.ndarray) -> tuple[float, float]:
    """Start of the largest-amplitude submovement.

    Submovements are separated by dwells where speed drops below 5% of
    the peak; the burst with largest displacement defines the start.
    """
    pts = path[:, 1:3]
    if len(pts) < 2:
        return float(pts[0, 0]), float(pts[0, 1])
    step = np.hypot(*np.diff(pts, axis=0).T)
    peak = step.max()
    if peak == 0:
        return float(pts[0, 0]), float(pts[0, 1])
    moving = step > 0.05 * peak
    best_amp, best_start = -1.0, 0
    i = 0
    n = len(moving)
    while i < n:
        if moving[i]:
            j = i
            while j < n and moving[j]:
                j += 1
            amp = math.hypot(*(pts[j] - pts[i]))
            if amp > best_amp:
                best_amp, best_start = amp, i
            i = j
        else:
            i += 1
    return float(pts[best_start, 0]), float(pts[best_start, 1])


def path_deviation(trial: Trial) -> tuple[float, float, float]:
    """(MAE, RMSE, PDR) of one trial against its ideal straight path."""
    if len(trial.path) < 2:
        raise AnalysisError("path needs at least two samples")
    start = ideal_path_start(trial.path)
    err = segment_deviations(trial.path[:, 1:3], start, trial.click)
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err ** 2).mean()))
    length = math.hypot(trial.click[0] - start[0], trial.click[1] - start[1])
    return mae, rmse, mae / length


def summarize_session(trials, cfg: TaskConfig) -> SessionSummary:
    """Effective Fitts quantities for one session of kept trials.

    Endpoint deviation is bivariate and measured about the mean endpoint
    relative to each trial's target, as in post-hoc accuracy adjustment.
    """
    trials = list(trials)
    if len(trials) < 2:
        raise AnalysisError("need at least 2 usable trials")
    dev = np.array([
        (tr.click[0] - tr.target[0], tr.click[1] - tr.target[1]) for tr in trials
    ], dtype=float)
    dev -= dev.mean(axis=0)
    sd_xy = math.sqrt(float((dev ** 2).sum()) / (len(trials) - 1))
    if sd_xy == 0.0:
        raise DegenerateSessionError("all endpoints identical; W_e would be zero")
    w_e = WE_FACTOR * sd_xy
    d_e = float(np.mean([tr.movement_distance for tr in trials]))
    id_e = math.log2(d_e / w_e + 1.0)
    mt_mean = float(np.mean([tr.mt for tr in trials]))
    devs = [path_deviation(tr) for tr in trials]
    return SessionSummary(
        d_px=cfg.d_px,
        w_px=cfg.w_px,
        n_trials=len(trials),
        d_e=d_e,
        sd_xy=sd_xy,
        w_e=w_e,
        id_e=id_e,
        mt_mean=mt_mean,
        tp=id_e / mt_mean,
        mae=float(np.mean([d[0] for d in devs])),
        rmse=float(np.mean([d[1] for d in devs])),
        pdr=float(np.mean([d[2] for d in devs])),
    )


def fitts_fit(sessions) -> FittsFit:
    """Ordinary least squares MT = a + b * ID_e over session summaries."""
    ids = np.array([s.id_e for s in sessions], dtype=float)
    mts = np.array([s.mt_mean for s in sessions], dtype=float)
    if len(ids) < 3 or np.unique(np.round(ids, 12)).size < 2:
        raise RankDeficientError("need >= 3 sessions with distinct ID_e")
    b, a = np.polyfit(ids, mts, 1)
    pred = a + b * ids
    ss_tot = float(((mts - mts.mean()) ** 2).sum())
    r2 = 1.0 - float(((mts - pred) ** 2).sum()) / ss_tot if ss_tot > 0 else 0.0
    return FittsFit(float(a), float(b), r2)


def friedman_test(matrix) -> tuple[float, int]:
    """Friedman chi-square over a subjects x conditions matrix.

    Uses average ranks for ties and the classical statistic
    12n/(k(k+1)) * sum_j (Rbar_j - (k+1)/2)^2 with df = k - 1.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise AnalysisError("need at least 2 subjects and 2 conditions")
    n, k = m.shape
    ranks = np.apply_along_axis(stats.rankdata, 1, m)
    mean_ranks = ranks.mean(axis=0)
    chi2 = 12.0 * n / (k * (k + 1.0)) * float(((mean_ranks - (k + 1.0) / 2.0) ** 2).sum())
    return chi2, k - 1


def mean_ci(values, level: float = 0.95) -> tuple[float, float]:
    """Mean and t-distribution confidence half-width."""
    v = np.asarray(list(values), dtype=float)
    if v.size < 2:
        raise AnalysisError("need n >= 2 for a confidence interval")
    sd = float(v.std(ddof=1))
    t = float(stats.t.ppf((1.0 + level) / 2.0, v.size - 1))
    return float(v.mean()), t * sd / math.sqrt(v.size)


def block_summary(p_percent: int, sessions) -> BlockSummary:
    """Aggregate a block of sessions at one sensor position (mean of means)."""
    sessions = list(sessions)
    tp_mean, tp_ci = mean_ci([s.tp for s in sessions])
    return BlockSummary(
        p_percent=p_percent,
        sessions=sessions,
        tp_mean=tp_mean,
        tp_ci95=tp_ci,
        mae_mean=float(np.mean([s.mae for s in sessions])),
        pdr_mean=float(np.mean([s.pdr for s in sessions])),
        fit=fitts_fit(sessions),
    )


def best_subset(blocks) -> list[BlockSummary]:
    """Blocks statistically indistinguishable from the top performer.

    A block belongs to the subset when its TP confidence interval
    overlaps the top block's interval (conservative proxy for a
    post-hoc homogeneous subset).
    """
    blocks = list(blocks)
    top = max(blocks, key=lambda b: b.tp_mean)
    floor = top.tp_mean - top.tp_ci95
    return [b for b in blocks if b.tp_mean + b.tp_ci95 >= floor]


SESSION_CSV_COLUMNS = [
    "d_px", "w_px", "n_trials", "d_e", "sd_xy", "w_e", "id_e",
    "mt_mean", "tp", "mae", "rmse", "pdr",
]


def sessions_csv(summaries, fileobj: io.TextIOBase | None = None) -> str:
    """Session summaries as CSV in the documented column order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SESSION_CSV_COLUMNS)
    for s in summaries:
        w.writerow([f"{getattr(s, c):.9g}" for c in SESSION_CSV_COLUMNS])
    text = buf.getvalue()
    if fileobj is not None:
        fileobj.write(text)
    return text


BLOCK_CSV_COLUMNS = [
    "p_percent", "n_sessions", "tp_mean", "tp_ci95", "mae_mean", "pdr_mean",
    "fit_a", "fit_b", "fit_r2",
]


def blocks_csv(blocks, fileobj: io.TextIOBase | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BLOCK_CSV_COLUMNS)
    for b in blocks:
        w.writerow([
            b.p_percent, len(b.sessions), f"{b.tp_mean:.9g}", f"{b.tp_ci95:.9g}",
            f"{b.mae_mean:.9g}", f"{b.pdr_mean:.9g}",
            f"{b.fit.a:.9g}", f"{b.fit.b:.9g}", f"{b.fit.r2:.9g}",
        ])
    text = buf.getvalue()
    if fileobj is not None:
        fileobj.write(text)
    return text
