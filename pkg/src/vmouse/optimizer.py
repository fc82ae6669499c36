"""Sensor-position selection: one-shot calibration and in-task optimization.

Calibration runs the tapping task at each position of a discrete set and
picks the median of the positions whose throughput confidence interval
overlaps the top mean.  In-task optimization treats position-to-PDR as a
black box: an exact Gaussian process (squared-exponential kernel) is the
proxy model and expected improvement picks the next position on the
integer-percent grid 20..80.  Observation counts per user are tiny, so
an exact GP is preferred over sparse approximations.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from scipy import optimize as sciopt
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from .analysis import best_subset, block_summary

P_DOMAIN = (20, 80)
P_GRID = tuple(range(P_DOMAIN[0], P_DOMAIN[1] + 1))
SEED_POSITIONS = (30, 50, 70)
DEFAULT_XI = 0.01
REFIT_EVERY = 5
NOISE_FLOOR = 1e-6

CHECKPOINT_MAGIC = "# vmouse-optimizer-checkpoint v1"


class OptimizerError(ValueError):
    pass


class CalibrationSource(Protocol):
    """A user (synthetic or live) that can run tapping blocks."""

    def tapping_block(self, p_percent: int, seconds: float) -> list: ...


class TaskSource(Protocol):
    """A user that can play an aimed task and report a PDR sample."""

    def aim_pdr(self, p_percent: int, seconds: float) -> float: ...


# ---------------------------------------------------------------------------
# Gaussian process proxy

@dataclass(frozen=True)
class GPState:
    """Observations plus squared-exponential hyperparameters."""

    xs: tuple[float, ...] = ()
    ys: tuple[float, ...] = ()
    lengthscale: float = 15.0        # percent points
    signal_var: float = 1.0
    noise_var: float = NOISE_FLOOR
    xi: float = DEFAULT_XI

    @property
    def incumbent(self) -> float:
        if not self.ys:
            raise OptimizerError("no observations yet")
        return min(self.ys)

    @property
    def n(self) -> int:
        return len(self.xs)


def _kernel(xa: np.ndarray, xb: np.ndarray, ell: float, sf2: float) -> np.ndarray:
    d = xa[:, None] - xb[None, :]
    return sf2 * np.exp(-0.5 * (d / ell) ** 2)


def _neg_log_marginal(params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    ell, sf2, sn2 = np.exp(params)
    k = _kernel(x, x, ell, sf2) + (sn2 + 1e-12) * np.eye(len(x))
    try:
        c, low = cho_factor(k)
    except np.linalg.LinAlgError:
        return 1e12
    alpha = cho_solve((c, low), y)
    return float(
        0.5 * y @ alpha + np.log(np.diag(c)).sum() + 0.5 * len(x) * math.log(2 * math.pi)
    )


def _fit_hyperparameters(state: GPState) -> GPState:
    x = np.asarray(state.xs)
    y = np.asarray(state.ys)
    y = y - y.mean()
    x0 = np.log([state.lengthscale, max(state.signal_var, 1e-8),
                 max(state.noise_var, NOISE_FLOOR)])
    bounds = [(math.log(3.0), math.log(60.0)),
              (math.log(1e-10), math.log(1e2)),
              (math.log(NOISE_FLOOR), math.log(1.0))]
    res = sciopt.minimize(
        _neg_log_marginal, x0, args=(x, y), method="L-BFGS-B", bounds=bounds
    )
    ell, sf2, sn2 = np.exp(res.x)
    return replace(state, lengthscale=float(ell), signal_var=float(sf2),
                   noise_var=float(max(sn2, NOISE_FLOOR)))


def gp_update(state: GPState, obs: tuple[float, float]) -> GPState:
    """Append one (p_percent, PDR) observation; refit every 5 observations."""
    p, pdr = float(obs[0]), float(obs[1])
    if not math.isfinite(pdr):
        raise OptimizerError(f"non-finite PDR observation: {pdr}")
    if not P_DOMAIN[0] <= p <= P_DOMAIN[1]:
        raise OptimizerError(f"position {p} outside the {P_DOMAIN} domain")
    xs = state.xs + (p,)
    ys = state.ys + (pdr,)
    new = replace(state, xs=xs, ys=ys)
    if new.n == 1:
        return new
    var = float(np.var(np.asarray(ys)))
    if new.n < REFIT_EVERY:
        # before the first refit, scale priors from the data seen so far
        return replace(new, signal_var=max(var, 1e-8),
                       noise_var=max(NOISE_FLOOR, 0.1 * var))
    if new.n % REFIT_EVERY == 0:
        return _fit_hyperparameters(new)
    return new


def gp_posterior(state: GPState, candidates) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation at the candidate positions."""
    xs = np.asarray(candidates, dtype=float)
    if state.n == 0:
        return np.zeros_like(xs), np.full_like(xs, math.sqrt(state.signal_var))
    x = np.asarray(state.xs)
    y = np.asarray(state.ys)
    mean0 = y.mean()
    k = _kernel(x, x, state.lengthscale, state.signal_var)
    k += (state.noise_var + 1e-12) * np.eye(state.n)
    c, low = cho_factor(k)
    alpha = cho_solve((c, low), y - mean0)
    kx = _kernel(x, xs, state.lengthscale, state.signal_var)
    mu = mean0 + kx.T @ alpha
    v = cho_solve((c, low), kx)
    var = state.signal_var - np.einsum("ij,ij->j", kx, v)
    return mu, np.sqrt(np.clip(var, 0.0, None))


def expected_improvement(mu, sigma, best: float, xi: float = DEFAULT_XI) -> np.ndarray:
    """EI for minimization; exactly zero where sigma = 0 and mu >= best - xi."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    gap = best - mu - xi
    ei = np.where(gap > 0, gap, 0.0).astype(float)
    pos = sigma > 0
    z = np.zeros_like(mu)
    z[pos] = gap[pos] / sigma[pos]
    ei[pos] = gap[pos] * norm.cdf(z[pos]) + sigma[pos] * norm.pdf(z[pos])
    return ei


def ei_acquire(state: GPState, candidates=P_GRID) -> int:
    """Position with maximal EI; deterministic tie-break toward lower p."""
    cand = list(candidates)
    if not cand:
        raise OptimizerError("empty candidate grid")
    if state.n == 0:
        raise OptimizerError("need at least one observation")
    mu, sd = gp_posterior(state, cand)
    ei = expected_improvement(mu, sd, state.incumbent, state.xi)
    return int(cand[int(np.argmax(ei))])


def posterior_argmin(state: GPState, candidates=P_GRID) -> int:
    mu, _ = gp_posterior(state, candidates)
    return int(list(candidates)[int(np.argmin(mu))])


# ---------------------------------------------------------------------------
# Checkpointing

def save_checkpoint(state: GPState, path: str | Path) -> None:
    lines = [
        CHECKPOINT_MAGIC,
        f"# lengthscale={state.lengthscale!r} signal_var={state.signal_var!r} "
        f"noise_var={state.noise_var!r} xi={state.xi!r}",
        "p_percent,pdr",
    ]
    lines += [f"{x!r},{y!r}" for x, y in zip(state.xs, state.ys)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_checkpoint(path: str | Path) -> GPState:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise OptimizerError(f"not a recognized checkpoint file: {path}")
    params = dict(
        kv.split("=", 1) for kv in lines[1].lstrip("# ").split()
    )
    xs, ys = [], []
    for line in lines[3:]:
        if not line.strip():
            continue
        a, b = line.split(",")
        xs.append(float(a))
        ys.append(float(b))
    return GPState(
        xs=tuple(xs),
        ys=tuple(ys),
        lengthscale=float(params["lengthscale"]),
        signal_var=float(params["signal_var"]),
        noise_var=float(params["noise_var"]),
        xi=float(params["xi"]),
    )


# ---------------------------------------------------------------------------
# One-shot calibration

@dataclass(frozen=True)
class CalibrationPlan:
    """Discrete positions (extremes excluded) and per-position task time."""

    positions: tuple[int, ...] = (20, 40, 50, 60, 80)
    seconds_per_position: float = 240.0
    rest_seconds: float = 60.0

    def __post_init__(self) -> None:
        if any(not P_DOMAIN[0] <= p <= P_DOMAIN[1] for p in self.positions):
            raise OptimizerError("calibration positions must lie within 20..80%")


@dataclass
class CalibrationResult:
    chosen_p: int
    blocks: list            # BlockSummary per position (input order)
    subset: list[int]       # positions in the best homogeneous subset
    order: list[int]        # randomized visiting order


def run_calibration(
    plan: CalibrationPlan,
    source: CalibrationSource,
    seed: int = 0,
) -> CalibrationResult:
    """Visit each position in random order, compare TP, pick the median best."""
    order = list(plan.positions)
    random.Random(seed).shuffle(order)
    blocks = {}
    for p in order:
        sessions = source.tapping_block(p, plan.seconds_per_position)
        if len(sessions) < 2:
            raise OptimizerError(f"insufficient sessions at position {p}%")
        blocks[p] = block_summary(p, sessions)
    ordered = [blocks[p] for p in sorted(blocks)]
    subset = sorted(b.p_percent for b in best_subset(ordered))
    median = _median(subset)
    chosen = _snap(median, sorted(plan.positions))
    return CalibrationResult(chosen, ordered, subset, order)


def _median(values: Sequence[int]) -> float:
    v = sorted(values)
    mid = len(v) // 2
    if len(v) % 2:
        return float(v[mid])
    return (v[mid - 1] + v[mid]) / 2.0


def _snap(value: float, grid: Sequence[int]) -> int:
    """Nearest grid position; ties resolve to the lower one."""
    return min(grid, key=lambda g: (abs(g - value), g))


# ---------------------------------------------------------------------------
# In-task bayesian optimization

@dataclass
class OptimizeResult:
    final_p: int
    history: list[tuple[int, float]]
    state: GPState


def optimize_in_task(
    source: TaskSource,
    budget: int = 15,
    seconds_per_sample: float = 60.0,
    seeds: Sequence[int] = SEED_POSITIONS,
    xi: float = DEFAULT_XI,
    checkpoint: str | Path | None = None,
) -> OptimizeResult:
    """Seeded EI loop minimizing PDR; returns the posterior-mean argmin."""
    if budget < 4:
        raise OptimizerError("budget must be at least 4 (seeds + 1)")
    state = GPState(xi=xi)
    history: list[tuple[int, float]] = []

    def observe(p: int) -> None:
        nonlocal state
        pdr = float(source.aim_pdr(p, seconds_per_sample))
        state = gp_update(state, (p, pdr))
        history.append((p, pdr))
        if checkpoint is not None:
            save_checkpoint(state, checkpoint)

    for p in seeds:
        if len(history) >= budget:
            break
        observe(int(p))
    while len(history) < budget:
        observe(ei_acquire(state))
    return OptimizeResult(posterior_argmin(state), history, state)
