"""
Dyadic crossing scheme for the inner Brownian motion Y.

Y is read only through the successive hitting times T_k of the lattice
{j·2^{-n/2}}. Between them Y moves by exactly one lattice cell, so the
sampled positions form a simple symmetric random walk and everything the
variations need reduces to the walk, its crossing counts and its endpoint.

Two modes:
    walk     the walk is drawn directly as iid ±1 steps (exact in law)
    coupled  a fine-grid Brownian path is simulated and the hitting times
             are detected on it, so Y_t and its local time are available
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.gaussian_core import SpanExceeded, grid_spacing

logger = logging.getLogger(__name__)

WALK = "walk"
COUPLED = "coupled"

DEFAULT_OVERSAMPLE = 6
# Scan window, in multiples of the mean exit time 2^{m-n} fine steps.
WINDOW_FACTOR = 4
# Hitting times running past this multiple of the horizon count as an excursion.
MAX_TIME_FACTOR = 16.0


class WalkExcursion(SpanExceeded):
    """The coupled walk left its configured position or time bounds."""


def steps_for(level, horizon):
    """Number of walk steps ⌊2^n t⌋."""
    return int(math.floor(math.ldexp(horizon, level) + 1e-9))


@dataclass(frozen=True, eq=False)
class CrossingRecord:
    """
    One realization of the embedded walk up to step ⌊2^n t⌋.

    Crossing counts are stored as arrays over cells offset..offset+len-1;
    cell j is the segment [j·h, (j+1)·h].
    """

    level: int
    horizon: float
    steps: np.ndarray
    positions: np.ndarray
    offset: int
    up: np.ndarray
    down: np.ndarray
    mode: str = WALK
    hitting_times: np.ndarray = None
    y_path: np.ndarray = None
    fine_level: int = None

    @property
    def h(self):
        return grid_spacing(self.level)

    @property
    def n_steps(self):
        return len(self.steps)

    @property
    def j_star(self):
        return int(self.positions[-1])

    @property
    def y_end(self):
        """Y at the last hitting time, j*·h."""
        return self.j_star * self.h

    @property
    def cells(self):
        return np.arange(self.offset, self.offset + len(self.up))

    @property
    def up_counts(self):
        return {int(j): int(c) for j, c in zip(self.cells, self.up) if c}

    @property
    def down_counts(self):
        return {int(j): int(c) for j, c in zip(self.cells, self.down) if c}

    def count_up(self, j):
        i = j - self.offset
        return int(self.up[i]) if 0 <= i < len(self.up) else 0

    def count_down(self, j):
        i = j - self.offset
        return int(self.down[i]) if 0 <= i < len(self.down) else 0

    @property
    def dt(self):
        return 2.0 ** (-self.fine_level) if self.fine_level is not None else None

    def y_at(self, t):
        """Fine-grid Y at time t (coupled records only)."""
        if self.mode != COUPLED:
            raise ValueError("Y is only available on coupled records")
        i = int(round(t / self.dt))
        if i >= len(self.y_path):
            raise WalkExcursion(f"time {t} beyond simulated path ({len(self.y_path)} points)")
        return float(self.y_path[i])

    @property
    def y_horizon(self):
        """Y_t at the horizon (coupled records only)."""
        return self.y_at(self.horizon)

    def counts_frame(self):
        return pd.DataFrame({"j": self.cells, "U": self.up, "D": self.down})

    def truncate(self, horizon):
        """Record restricted to the first ⌊2^n t'⌋ steps, t' <= t."""
        if horizon > self.horizon:
            raise ValueError(f"cannot extend record from t={self.horizon} to t={horizon}")
        count = steps_for(self.level, horizon)
        if count < 1:
            raise ValueError(f"no walk steps at level {self.level} before t={horizon}")
        extra = {}
        if self.mode == COUPLED:
            keep = max(int(round(horizon / self.dt)), int(math.ceil(self.hitting_times[count] / self.dt))) + 1
            extra = dict(
                hitting_times=self.hitting_times[:count + 1],
                y_path=self.y_path[:keep],
                fine_level=self.fine_level,
            )
        return _build(self.level, horizon, self.steps[:count], self.mode, **extra)


def _build(level, horizon, steps, mode=WALK, **extra):
    steps = np.asarray(steps, dtype=np.int8)
    positions = np.concatenate([[0], np.cumsum(steps, dtype=np.int64)])
    lo = int(positions.min())
    size = int(positions.max()) - lo
    up = np.bincount(positions[:-1][steps > 0] - lo, minlength=size)
    down = np.bincount(positions[1:][steps < 0] - lo, minlength=size)
    for arr in (steps, positions, up, down):
        arr.setflags(write=False)
    return CrossingRecord(level, float(horizon), steps, positions, lo, up, down, mode, **extra)


def record_from_steps(level, horizon, steps):
    """Walk-only record from given ±1 increments."""
    steps = np.asarray(steps)
    expected = steps_for(level, horizon)
    if len(steps) != expected:
        raise ValueError(f"level {level}, t={horizon} needs {expected} steps, got {len(steps)}")
    if not np.all(np.abs(steps) == 1):
        raise ValueError("walk steps must be +1 or -1")
    return _build(level, horizon, steps)


def simulate_walk(level, horizon, seed=None):
    """Walk-only record with iid uniform ±1 steps."""
    count = steps_for(level, horizon)
    if count < 1:
        raise ValueError(f"⌊2^n t⌋ must be at least 1 (level {level}, t={horizon})")
    rng = np.random.default_rng(seed)
    steps = 2 * rng.integers(0, 2, size=count, dtype=np.int8) - 1
    return _build(level, horizon, steps)


def walk_endpoint_samples(level, horizon, reps, seed=None):
    """Exact-in-law samples of j* = 2·Bin(⌊2^n t⌋, 1/2) - ⌊2^n t⌋."""
    count = steps_for(level, horizon)
    rng = np.random.default_rng(seed)
    return 2 * rng.binomial(count, 0.5, size=reps) - count


def walk_moment(level, horizon, order, reps, seed=None):
    """Monte Carlo estimate of E[(Y_{T_⌊2^n t⌋})^order]."""
    if reps < 100:
        raise ValueError(f"walk_moment needs at least 100 replications, got {reps}")
    if order < 1 or order % 2:
        raise ValueError(f"order must be a positive even integer, got {order}")
    endpoints = walk_endpoint_samples(level, horizon, reps, seed) * grid_spacing(level)
    return float(np.mean(endpoints ** order))


class _FinePath:
    """Brownian path on spacing dt, generated in blocks on demand."""

    def __init__(self, rng, dt, initial):
        self.rng = rng
        self.dt = dt
        self.block = max(initial, 1024)
        self.values = np.concatenate([[0.0], np.cumsum(rng.standard_normal(initial)) * math.sqrt(dt)])

    def ensure(self, last_index):
        while last_index >= len(self.values):
            more = self.values[-1] + np.cumsum(self.rng.standard_normal(self.block)) * math.sqrt(self.dt)
            self.values = np.concatenate([self.values, more])
            logger.debug("fine path extended to %d points", len(self.values))


def simulate_coupled(level, horizon, fine_level=None, seed=None, bridge=True, max_position=None):
    """
    Path-coupled record: hitting times detected on a fine Brownian path.

    A crossing is the first fine-grid point at or beyond a neighbouring
    lattice level. With bridge=True, an interval whose endpoints both stay
    inside the band still counts as a crossing with the Brownian-bridge
    probability exp(-2(b - y_{i-1})(b - y_i)/dt); its time is the interval
    midpoint.

    Args:
        level: Lattice level n
        horizon: Time t
        fine_level: m with dt = 2^{-m}; defaults to n + 6
        seed: Anything numpy.random.default_rng accepts
        bridge: Resample unseen crossings between fine points
        max_position: Bound on |walk position| in lattice units

    Raises:
        WalkExcursion: position bound exceeded or hitting times run past
            MAX_TIME_FACTOR·t
    """
    count = steps_for(level, horizon)
    if count < 1:
        raise ValueError(f"⌊2^n t⌋ must be at least 1 (level {level}, t={horizon})")
    fine_level = level + DEFAULT_OVERSAMPLE if fine_level is None else fine_level
    if fine_level < level + DEFAULT_OVERSAMPLE:
        raise ValueError(
            f"fine level {fine_level} too coarse for level {level}: need m >= n + {DEFAULT_OVERSAMPLE}"
        )
    rng = np.random.default_rng(seed)
    dt = 2.0 ** (-fine_level)
    h = grid_spacing(level)
    horizon_index = int(math.ceil(horizon / dt))
    max_index = int(MAX_TIME_FACTOR * horizon / dt)
    window = WINDOW_FACTOR * 2 ** (fine_level - level)
    path = _FinePath(rng, dt, horizon_index + window)

    steps = np.empty(count, dtype=np.int8)
    times = np.zeros(count + 1)
    position = 0
    start = 0
    skipped = 0
    for k in range(count):
        lower, upper = (position - 1) * h, (position + 1) * h
        found = None
        while found is None:
            if start + window > max_index:
                raise WalkExcursion(
                    f"hitting time {k + 1} of {count} not reached before t={MAX_TIME_FACTOR * horizon:g}"
                )
            path.ensure(start + window)
            prev = path.values[start:start + window]
            cur = path.values[start + 1:start + window + 1]
            direct = np.flatnonzero((cur >= upper) | (cur <= lower))
            first_direct = direct[0] if direct.size else window
            if bridge:
                inside = (prev > lower) & (prev < upper) & (cur > lower) & (cur < upper)
                gap_up = np.clip(upper - prev, 0.0, None) * np.clip(upper - cur, 0.0, None)
                gap_down = np.clip(prev - lower, 0.0, None) * np.clip(cur - lower, 0.0, None)
                p_up = np.where(inside, np.exp(-2.0 * gap_up / dt), 0.0)
                p_down = np.where(inside, np.exp(-2.0 * gap_down / dt), 0.0)
                u = rng.random(window)
                hits = np.flatnonzero(u[:first_direct] < (p_up + p_down)[:first_direct])
                if hits.size:
                    i = hits[0]
                    found = (start + i + 1, start + i + 0.5, 1 if u[i] < p_up[i] else -1)
                    break
            if direct.size:
                i = first_direct
                step = 1 if cur[i] >= upper else -1
                if abs(cur[i] - position * h) >= 2 * h:
                    skipped += 1
                found = (start + i + 1, start + i + 1.0, step)
            else:
                start += window
        index, fine_time, step = found
        steps[k] = step
        position += step
        times[k + 1] = fine_time * dt
        start = index
        if max_position is not None and abs(position) > max_position:
            raise WalkExcursion(f"walk reached position {position}, bound {max_position}")
    if skipped:
        logger.warning("%d fine steps jumped over a lattice level (n=%d, m=%d)", skipped, level, fine_level)
    path.ensure(max(horizon_index, start))
    return _build(
        level, horizon, steps, COUPLED,
        hitting_times=times, y_path=path.values, fine_level=fine_level,
    )


@dataclass(frozen=True, eq=False)
class LocalTimeEstimate:
    """Local time on the lattice {j·h}, from crossings or from occupation."""

    level: int
    horizon: float
    indices: np.ndarray
    values: np.ndarray
    kind: str = "crossing"

    @property
    def h(self):
        return grid_spacing(self.level)

    def total(self):
        return math.fsum(self.values)

    def value_at(self, j):
        j = np.asarray(j)
        i = j - self.indices[0]
        ok = (i >= 0) & (i < len(self.values))
        out = np.where(ok, self.values[np.clip(i, 0, len(self.values) - 1)], 0.0)
        return out[()] if out.ndim == 0 else out

    def as_dict(self):
        return {int(j): float(v) for j, v in zip(self.indices, self.values)}


def local_time_estimate(rec):
    """ℒ_j = 2^{-n/2}(U_j + D_j)."""
    values = rec.h * (rec.up + rec.down).astype(np.float64)
    return LocalTimeEstimate(rec.level, rec.horizon, rec.cells, values)


def occupation_local_time(rec, bandwidth=None):
    """
    Occupation-density estimate of L_t^{jh}(Y) from the fine path.

    Counts fine points on [0, t) within bandwidth of each lattice level;
    default bandwidth is 4·2^{-m/2}.
    """
    if rec.mode != COUPLED:
        raise ValueError("occupation local time needs a coupled record")
    dt = rec.dt
    bandwidth = 4.0 * math.sqrt(dt) if bandwidth is None else bandwidth
    used = rec.y_path[:int(round(rec.horizon / dt))]
    ordered = np.sort(used)
    lo = int(math.floor(ordered[0] / rec.h))
    hi = int(math.ceil(ordered[-1] / rec.h))
    indices = np.arange(lo, hi + 1)
    x = indices * rec.h
    inside = np.searchsorted(ordered, x + bandwidth, side="right") - np.searchsorted(ordered, x - bandwidth, side="left")
    values = inside * dt / (2.0 * bandwidth)
    return LocalTimeEstimate(rec.level, rec.horizon, indices, values, kind="occupation")


def integrity_violations(rec):
    """Messages for every failed counting identity; empty when the record is sound."""
    problems = []
    total = int(rec.up.sum() + rec.down.sum())
    if total != rec.n_steps:
        problems.append(f"Σ(U+D) = {total}, expected {rec.n_steps}")
    j_star = rec.j_star
    cells = rec.cells
    if j_star > 0:
        expected = ((cells >= 0) & (cells < j_star)).astype(np.int64)
    elif j_star < 0:
        expected = -((cells >= j_star) & (cells < 0)).astype(np.int64)
    else:
        expected = np.zeros(len(cells), dtype=np.int64)
    if not np.array_equal(rec.up.astype(np.int64) - rec.down, expected):
        problems.append(f"U - D does not match the indicator of [0, j*) for j* = {j_star}")
    if rec.mode == COUPLED and not np.all(np.diff(rec.hitting_times) > 0):
        problems.append("hitting times are not strictly increasing")
    return problems
