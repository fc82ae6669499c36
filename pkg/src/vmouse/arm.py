"""Synthetic user: a pivot-coupled arm drives the device in closed loop.

The device heading follows the line from a forearm pivot behind the pad
to the device, plus radial-ulnar wrist deviation proportional to lateral
travel; rightward hand movement therefore rotates the device the way the
two-sensor rig measures as positive, making the front sensor read more
horizontal displacement than the rear one.

Aiming is modeled as ballistic minimum-jerk submovements toward the
perceived remaining cursor error, re-planned at a fixed correction
cadence.  The user plans through an inverse model that assumes the
cursor responds as if the sensor were at an internally preferred
position; when the actual virtual-sensor position differs, every
submovement lands with a systematic lateral error that must be corrected,
inflating both movement time and path deviation.  Submovement landing
scatter is signal-dependent (proportional to planned amplitude).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .analysis import (
    DegenerateSessionError,
    SessionSummary,
    TaskConfig,
    Trial,
    path_deviation,
    screen_outliers,
    summarize_session,
    target_order,
    task_geometry,
)
from .fusion import CarryAccumulator, SAMPLE_DT_US, VirtualConfig
from .kinematics import COUNTS_PER_MM, DEFAULT_BASELINE_MM

DT = SAMPLE_DT_US * 1e-6  # 2 ms
MAX_WRIST_AMP = 0.44      # rad, ~25 deg radial-ulnar range


class DegenerateDataError(ValueError):
    """Raised when a stream has no variance to regress on."""


@dataclass(frozen=True)
class ArmModel:
    """Arm geometry and motor parameters of one synthetic user."""

    pivot_mm: float | None = 300.0        # forearm pivot distance behind the pad
    wrist_amp: float = 0.25               # max wrist deviation, rad
    wrist_gain: float = 0.25 / 30.0       # wrist deviation per mm of lateral travel
    p_ref: float = 0.5                    # internally preferred sensor position
    noise_scale: float = 0.07             # landing scatter / planned amplitude
    correction_interval: float = 0.1      # s, re-planning cadence
    adaptation: float = 0.22              # fraction of an off-reference p absorbed
    submovement_t_min: float = 0.14       # s
    submovement_t_coef: float = 0.045     # s per sqrt(amplitude/tolerance)
    submovement_t_max: float = 0.8        # s
    click_dwell: float = 0.1              # s spent committing the click
    click_margin: float = 0.45            # accepted error as a fraction of W
    max_submovements: int = 20

    def __post_init__(self) -> None:
        if not 0.0 <= self.wrist_amp <= MAX_WRIST_AMP:
            raise ValueError(f"wrist_amp must be in [0, {MAX_WRIST_AMP}], got {self.wrist_amp}")
        if not 0.0 <= self.p_ref <= 1.0:
            raise ValueError(f"p_ref must be in [0, 1], got {self.p_ref}")

    @property
    def pivot_coupled(self) -> bool:
        return self.pivot_mm is not None and math.isfinite(self.pivot_mm)


@dataclass
class TrialTrace:
    """Everything one aimed movement produced."""

    start: tuple[int, int]
    target: tuple[float, float]
    width: float
    t0_us: int
    poses: np.ndarray        # (N+1, 3) device poses over the trial
    dual: np.ndarray         # (N, 4) dxf, dyf, dxr, dyr raw counts
    path: np.ndarray         # (N+1, 3) t_seconds, cursor x, cursor y
    click: tuple[int, int]
    mt: float
    success: bool
    n_submovements: int


class RegressionResult(NamedTuple):
    slope_dx: float
    intercept_dx: float
    r2_dx: float
    slope_dy: float
    intercept_dy: float
    r2_dy: float


def _minjerk_fractions(n: int) -> np.ndarray:
    tau = np.linspace(0.0, 1.0, n + 1)
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    return np.diff(s)


class ArmSession:
    """Mutable simulation state: one user holding one device over one sitting.

    Carry accumulators and device pose persist across trials, like a
    continuously running device.  All randomness comes from the seed.
    """

    def __init__(
        self,
        model: ArmModel,
        cfg: VirtualConfig,
        seed: int = 0,
        screen: tuple[int, int] = (1920, 1080),
        baseline_r: float = DEFAULT_BASELINE_MM,
    ) -> None:
        self.model = model
        self.cfg = cfg
        self.screen = screen
        self.r = baseline_r
        self.rng = np.random.default_rng(seed)
        # pre-drawn per-(trial, submovement) landing noise so that runs at
        # different sensor positions share draws (common random numbers)
        self._noise = np.random.default_rng(seed ^ 0x5EED).standard_normal((4096, 24, 2))
        self.trial_idx = 0
        # device state; device (0,0) corresponds to the screen center
        self.xd = 0.0
        self.yd = 0.0
        self.x_anchor = 0.0
        self.pivot = (0.0, -(model.pivot_mm or 0.0))
        self.theta = self._arm_heading()
        self.sample_idx = 0
        self.cursor = (screen[0] // 2, screen[1] // 2)
        self._carry_x = CarryAccumulator()
        self._carry_y = CarryAccumulator()
        self.p_adapted = model.p_ref + model.adaptation * (cfg.p - model.p_ref)
        self._log: list | None = None
        self.click_samples: list[int] = []

    # -- arm geometry -------------------------------------------------

    def _arm_heading(self) -> float:
        m = self.model
        ang = 0.0
        if m.pivot_coupled:
            ang = math.atan2(self.xd - self.pivot[0], self.yd - self.pivot[1])
        w = m.wrist_gain * (self.xd - self.x_anchor)
        w = max(-m.wrist_amp, min(m.wrist_amp, w))
        # measured rotation is clockwise-positive; pose heading is its negative
        return -(ang + w)

    def _heading_gradient(self) -> tuple[float, float]:
        """d(measured rotation)/d(device x, y) at the current state."""
        m = self.model
        gx = gy = 0.0
        if m.pivot_coupled:
            dx = self.xd - self.pivot[0]
            dy = self.yd - self.pivot[1]
            l2 = dx * dx + dy * dy
            gx = dy / l2
            gy = -dx / l2
        w = m.wrist_gain * (self.xd - self.x_anchor)
        if -m.wrist_amp < w < m.wrist_amp:
            gx += m.wrist_gain
        return gx, gy

    # -- core stepping ------------------------------------------------

    def _step(self, cpx: float, cpy: float, record) -> None:
        """Advance one 500 Hz sample executing planned cursor step (cpx, cpy)."""
        th = self.theta
        c, s = math.cos(th), math.sin(th)
        gx, gy = self._heading_gradient()
        ks = self.cfg.k * COUNTS_PER_MM
        q = (1.0 - self.p_adapted) * self.r
        # believed Jacobian: cursor px per mm of device motion (screen y down)
        a11 = ks * (c + q * gx)
        a12 = ks * (s + q * gy)
        a21 = ks * s
        a22 = -ks * c
        det = a11 * a22 - a12 * a21
        wx = (a22 * cpx - a12 * cpy) / det
        wy = (a11 * cpy - a21 * cpx) / det
        r = self.r
        # sensor positions before the step; u(theta) = (-sin, cos)
        fx0 = self.xd - r * s
        fy0 = self.yd + r * c
        rx0, ry0 = self.xd, self.yd
        self.xd += wx
        self.yd += wy
        self.theta = self._arm_heading()
        s1, c1 = math.sin(self.theta), math.cos(self.theta)
        fx1 = self.xd + r * -s1
        fy1 = self.yd + r * c1
        dxw_f, dyw_f = fx1 - fx0, fy1 - fy0
        dxw_r, dyw_r = self.xd - rx0, self.yd - ry0
        dxf = (dxw_f * c + dyw_f * s) * COUNTS_PER_MM
        dyf = (-dxw_f * s + dyw_f * c) * COUNTS_PER_MM
        dxr = (dxw_r * c + dyw_r * s) * COUNTS_PER_MM
        dyr = (-dxw_r * s + dyw_r * c) * COUNTS_PER_MM
        k, p = self.cfg.k, self.cfg.p
        mx = self._carry_x.push(k * ((1.0 - p) * dxf + p * dxr))
        my = self._carry_y.push(k * (dyf + dyr) / 2.0)
        cx, cy = self.cursor
        self.cursor = (cx + mx, cy - my)
        self.sample_idx += 1
        record(dxf, dyf, dxr, dyr)

    def _idle(self, n: int, record) -> None:
        for _ in range(n):
            self.sample_idx += 1
            record(0.0, 0.0, 0.0, 0.0)

    @property
    def t(self) -> float:
        return self.sample_idx * DT

    # -- trials -------------------------------------------------------

    def trial(self, target: tuple[float, float], width: float,
              deadline_s: float | None = None) -> TrialTrace:
        """Aim at the target and click.

        The user clicks once the perceived error is inside the accepted
        margin, or immediately if the target is about to expire
        (``deadline_s``, absolute session time) or the correction budget
        runs out.  Success is the actual hit test: click inside the
        target circle.
        """
        m = self.model
        tx, ty = target
        click_tol = max(2.0, m.click_margin * width)
        start = self.cursor
        t0_idx = self.sample_idx
        poses = [(self.xd, self.yd, self.theta)]
        dual: list[tuple[float, float, float, float]] = []
        path = [(self.t, *self.cursor)]

        def record(dxf, dyf, dxr, dyr):
            dual.append((dxf, dyf, dxr, dyr))
            poses.append((self.xd, self.yd, self.theta))
            path.append((self.t, *self.cursor))
            if self._log is not None:
                self._log.append((dxf, dyf, dxr, dyr))

        interval = max(1, int(round(m.correction_interval / DT)))
        n_sub = 0
        while True:
            if deadline_s is not None and self.t >= deadline_s - m.click_dwell:
                break
            ex = tx - self.cursor[0]
            ey = ty - self.cursor[1]
            amp = math.hypot(ex, ey)
            if amp <= click_tol:
                break
            if n_sub >= m.max_submovements:
                break
            t_sub = min(
                m.submovement_t_max,
                m.submovement_t_min + m.submovement_t_coef * math.sqrt(amp / click_tol),
            )
            n = max(1, int(round(t_sub / DT)))
            eta = self._noise[self.trial_idx % 4096, min(n_sub, 23)]
            hx = 1.0 + m.noise_scale * eta[0]
            hy = 1.0 + m.noise_scale * eta[1]
            for f in _minjerk_fractions(n):
                self._step(ex * f * hx, ey * f * hy, record)
            n_sub += 1
            # hold until the next correction tick before deciding again
            self._idle(interval - self.sample_idx % interval, record)
        self._idle(max(1, int(round(m.click_dwell / DT))), record)
        self.trial_idx += 1
        self.click_samples.append(self.sample_idx - 1)
        mt = (self.sample_idx - t0_idx) * DT
        hit = math.hypot(self.cursor[0] - tx, self.cursor[1] - ty) <= width / 2.0
        return TrialTrace(
            start=start,
            target=(tx, ty),
            width=width,
            t0_us=t0_idx * SAMPLE_DT_US,
            poses=np.array(poses),
            dual=np.array(dual),
            path=np.array(path),
            click=self.cursor,
            mt=mt,
            success=hit,
            n_submovements=n_sub,
        )

    def idle(self, seconds: float) -> None:
        n = int(round(seconds / DT))
        if self._log is not None:
            self._log.extend([(0.0, 0.0, 0.0, 0.0)] * n)
        self.sample_idx += n

    def capture_log(self) -> list:
        """Start recording the raw dual stream (for regression / export)."""
        self._log = []
        return self._log


def simulate_trial(
    model: ArmModel,
    start: tuple[int, int],
    target: tuple[float, float],
    width: float,
    cfg: VirtualConfig,
    seed: int = 0,
) -> TrialTrace:
    """One aimed movement from a fresh session whose cursor begins at start."""
    session = ArmSession(model, cfg, seed=seed)
    session.cursor = (int(start[0]), int(start[1]))
    return session.trial(target, width)


@dataclass
class AimGameResult:
    traces: list[TrialTrace]
    spawn_rates: list[float]          # rate after each resolved target
    successes: list[bool]
    duration: float

    @property
    def achieved_rate(self) -> float:
        return len(self.traces) / self.duration if self.duration > 0 else 0.0

    def success_rate(self, last_seconds: float | None = None) -> float:
        if not self.traces:
            return 0.0
        if last_seconds is None:
            sel = self.successes
        else:
            t_end = self.traces[-1].t0_us * 1e-6 + self.traces[-1].mt
            cut = t_end - last_seconds
            sel = [ok for tr, ok in zip(self.traces, self.successes)
                   if tr.t0_us * 1e-6 >= cut]
        return sum(sel) / len(sel) if sel else 0.0


TARGET_LIFETIME_S = 3.5
SPAWN_RATE_INITIAL = 2.0
SPAWN_RATE_BOUNDS = (0.25, 2.5)
SUCCESS_TARGET = 0.92
MAX_ALIVE_TARGETS = 4
_RATE_UP = 1.01
# up^s * down^(1-s) = 1 at the target success rate
_RATE_DOWN = _RATE_UP ** (-SUCCESS_TARGET / (1.0 - SUCCESS_TARGET))


def simulate_aim_game(
    model: ArmModel,
    cfg: VirtualConfig,
    duration: float,
    seed: int = 0,
    target_width: float = 40.0,
    session: ArmSession | None = None,
) -> AimGameResult:
    """Adaptive aim-trainer session: random targets, rate chasing 92% success.

    Targets spawn on a fixed cadence of 1/rate seconds, persist 3.5 s, and
    the user always engages the oldest one still alive.  Each resolved
    target nudges the spawn rate multiplicatively toward the success goal.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if session is None:
        session = ArmSession(model, cfg, seed=seed)
    rng = np.random.default_rng(seed ^ 0xA1)
    w, h = session.screen
    margin = target_width
    rate = SPAWN_RATE_INITIAL
    traces: list[TrialTrace] = []
    rates: list[float] = []
    successes: list[bool] = []
    next_spawn = 0.0
    queue: list[tuple[float, float, float]] = []  # spawn_t, x, y
    while session.t < duration:
        while session.t >= next_spawn:
            # the field holds a bounded number of simultaneous targets;
            # spawns while full are skipped rather than queued forever
            if len(queue) < MAX_ALIVE_TARGETS:
                queue.append((
                    next_spawn,
                    float(rng.uniform(margin, w - margin)),
                    float(rng.uniform(margin, h - margin)),
                ))
            next_spawn += 1.0 / rate
        # expire stale targets: each costs a miss
        alive = []
        for spawn_t, x, y in queue:
            if session.t - spawn_t >= TARGET_LIFETIME_S:
                successes.append(False)
                rate = min(max(rate * _RATE_DOWN, SPAWN_RATE_BOUNDS[0]), SPAWN_RATE_BOUNDS[1])
                rates.append(rate)
            else:
                alive.append((spawn_t, x, y))
        queue = alive
        if not queue:
            session.idle(DT * 5)
            continue
        spawn_t, x, y = queue.pop(0)
        tr = session.trial((x, y), target_width,
                           deadline_s=spawn_t + TARGET_LIFETIME_S)
        in_time = session.t - spawn_t <= TARGET_LIFETIME_S + DT
        ok = tr.success and in_time
        traces.append(tr)
        successes.append(ok)
        rate = rate * (_RATE_UP if ok else _RATE_DOWN)
        rate = min(max(rate, SPAWN_RATE_BOUNDS[0]), SPAWN_RATE_BOUNDS[1])
        rates.append(rate)
    return AimGameResult(traces, rates, successes, duration)


def trace_to_trial(trace: TrialTrace, prev_target: tuple[float, float] | None = None) -> Trial:
    """Convert a simulated trace into an analysis trial."""
    return Trial(
        prev_target=prev_target if prev_target is not None else trace.start,
        target=trace.target,
        click=trace.click,
        path=trace.path,
        mt=trace.mt,
        success=trace.success,
    )


def simulate_tapping_session(session: ArmSession, cfg: TaskConfig) -> list[Trial]:
    """One 15-trial multi-directional session; the approach click is not scored."""
    centers = task_geometry(cfg)
    order = target_order(cfg)
    session.trial(tuple(centers[order[0]]), cfg.w_px)  # move onto the first target
    trials = []
    for j in range(1, len(order)):
        tr = session.trial(tuple(centers[order[j]]), cfg.w_px)
        trials.append(trace_to_trial(tr, prev_target=tuple(centers[order[j - 1]])))
    return trials


#: default D x W combinations, px; difficulty spans ~1.8-5.5 bits
DEFAULT_COMBOS = ((300, 20), (300, 50), (300, 120), (900, 20), (900, 50), (900, 120))


class SyntheticUser:
    """A seeded ArmModel exposed through the calibration/optimizer interfaces.

    Blocks at different sensor positions reuse the same seed so that noise
    draws are shared across positions (common random numbers), which keeps
    position comparisons smooth.
    """

    def __init__(self, model: ArmModel, seed: int = 0, user_cpi: float = 800.0,
                 combos=DEFAULT_COMBOS) -> None:
        self.model = model
        self.seed = seed
        self.user_cpi = user_cpi
        self.combos = tuple(combos)

    def _session(self, p_percent: int) -> ArmSession:
        cfg = VirtualConfig(p_percent=int(round(p_percent)), user_cpi=self.user_cpi)
        return ArmSession(self.model, cfg, seed=self.seed)

    def tapping_sessions(self, p_percent: int, n_sessions: int) -> list[SessionSummary]:
        """A fixed number of tapping sessions cycling the D x W set."""
        session = self._session(p_percent)
        out = []
        for i in range(n_sessions):
            d, w = self.combos[i % len(self.combos)]
            cfg = TaskConfig(d_px=d, w_px=w)
            trials = simulate_tapping_session(session, cfg)
            kept, _ = screen_outliers(trials, cfg)
            try:
                out.append(summarize_session(kept, cfg))
            except DegenerateSessionError:
                continue
        return out

    def tapping_block(self, p_percent: int, seconds: float = 240.0) -> list[SessionSummary]:
        """Tapping sessions until the simulated task time budget is spent."""
        session = self._session(p_percent)
        out = []
        i = 0
        while session.t < seconds:
            d, w = self.combos[i % len(self.combos)]
            cfg = TaskConfig(d_px=d, w_px=w)
            trials = simulate_tapping_session(session, cfg)
            kept, _ = screen_outliers(trials, cfg)
            try:
                out.append(summarize_session(kept, cfg))
            except DegenerateSessionError:
                pass
            i += 1
        return out

    def aim_pdr(self, p_percent: int, seconds: float = 60.0) -> float:
        """Mean path deviation rate over an aim-game block."""
        cfg = VirtualConfig(p_percent=int(round(p_percent)), user_cpi=self.user_cpi)
        result = simulate_aim_game(self.model, cfg, seconds, seed=self.seed)
        pdrs = []
        for trace in result.traces:
            if len(trace.path) < 2:
                continue
            try:
                pdrs.append(path_deviation(trace_to_trial(trace))[2])
            except (DegenerateSessionError, ValueError):
                continue
        if not pdrs:
            raise DegenerateSessionError("aim block produced no scorable trials")
        return float(np.mean(pdrs))


def regression_check(
    model: ArmModel,
    duration: float = 60.0,
    cfg: VirtualConfig | None = None,
    seed: int = 0,
) -> RegressionResult:
    """Regress rear on front, per axis, over an aim-game dual stream."""
    if duration < 60.0:
        raise ValueError("need at least 60 s of play for a stable regression")
    cfg = cfg or VirtualConfig()
    session = ArmSession(model, cfg, seed=seed)
    log = session.capture_log()
    simulate_aim_game(model, cfg, duration, seed=seed, session=session)
    arr = np.asarray(log, dtype=float)
    out = []
    for ax in (0, 1):
        f = arr[:, ax]
        r = arr[:, 2 + ax]
        if float(np.var(f)) == 0.0:
            raise DegenerateDataError("front stream has zero variance")
        slope, intercept = np.polyfit(f, r, 1)
        pred = slope * f + intercept
        ss_res = float(((r - pred) ** 2).sum())
        ss_tot = float(((r - r.mean()) ** 2).sum())
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
        out.append((float(slope), float(intercept), r2))
    (sx, ix, r2x), (sy, iy, r2y) = out
    return RegressionResult(sx, ix, r2x, sy, iy, r2y)
