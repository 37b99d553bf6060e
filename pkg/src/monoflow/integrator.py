"""Left-point Euler scheme with blow-up stopping and shared-noise flow grids.

Noise comes from a Philox counter-based stream keyed by
``(master_seed, replica)``.  Uniforms are built from the top 53 bits of each
raw 64-bit output and mapped to normals with the inverse normal CDF
(``scipy.special.ndtri``), so a replica's increments depend only on its key
and never on how replicas are batched or threaded.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import InputError
from .field import CoefficientField

DEFAULT_R_MAX = 1e6
OVERSHOOT_FACTOR = 1e3
CHUNK_SIZE = 256


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if not (self.t0 >= 0 and self.t1 > self.t0):
            raise InputError("time grid needs 0 <= t0 < t1")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InputError("n_steps must be a positive integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def step(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    # single canonical formula for grid times
    def time(self, k: int) -> float:
        return self.t0 + float(k) * self.step

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1, dtype=float) * self.step

    def index_of(self, s: float) -> int:
        k = int(round((s - self.t0) / self.step))
        if not 0 <= k <= self.n_steps or abs(self.time(k) - s) > 1e-9 * max(1.0, abs(s)):
            raise InputError(f"time {s!r} is not a point of the grid")
        return k


@dataclass(frozen=True)
class NoiseRealization:
    grid: TimeGrid
    m: int
    increments: np.ndarray  # (n_steps, m)
    seed_path: tuple[int, int]

    def coarsen(self, factor: int) -> "NoiseRealization":
        """Same Brownian path on a grid ``factor`` times coarser (summed increments)."""
        n = self.grid.n_steps
        if factor < 1 or n % factor:
            raise InputError("coarsening factor must divide n_steps")
        inc = self.increments.reshape(n // factor, factor, self.m).sum(axis=1)
        grid = TimeGrid(self.grid.t0, self.grid.t1, n // factor)
        return NoiseRealization(grid, self.m, inc, self.seed_path)


def _standard_normals(master_seed: int, replica: int, count: int) -> np.ndarray:
    if master_seed < 0 or replica < 0:
        raise InputError("seed and replica index must be non-negative")
    key = np.array([master_seed & (2**64 - 1), replica & (2**64 - 1)], dtype=np.uint64)
    raw = np.random.Philox(key=key).random_raw(count)
    u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53
    return ndtri(u)


def sample_noise(grid: TimeGrid, m: int, master_seed: int, replica: int) -> NoiseRealization:
    """Brownian increments ``(n_steps, m)``, each Normal(0, step), for one replica."""
    if m < 0:
        raise InputError("noise dimension must be non-negative")
    z = _standard_normals(master_seed, replica, grid.n_steps * m)
    inc = (z * math.sqrt(grid.step)).reshape(grid.n_steps, m)
    return NoiseRealization(grid, m, inc, (master_seed, replica))


def noise_block(grid: TimeGrid, m: int, master_seed: int, replicas: Iterable[int]) -> np.ndarray:
    """Increments for several replicas stacked: ``(R, n_steps, m)``."""
    rows = [sample_noise(grid, m, master_seed, r).increments for r in replicas]
    if not rows:
        return np.zeros((0, grid.n_steps, m))
    return np.stack(rows)


@dataclass(frozen=True)
class FlowState:
    value: np.ndarray | None = None
    exit_time: float | None = None
    exit_radius: float | None = None

    @property
    def blown_up(self) -> bool:
        return self.value is None


class StepObserver(Protocol):
    def start(self, x: np.ndarray) -> None: ...

    def update(self, k: int, x: np.ndarray, alive: np.ndarray) -> None: ...


@dataclass
class EulerResult:
    final: np.ndarray  # last alive value of every trajectory
    exit_step: np.ndarray  # number of steps taken when blown up, -1 if alive
    exit_radius: np.ndarray  # |phi| at the exit step, nan if alive


def euler(
    field: CoefficientField,
    x0: np.ndarray,
    dw: np.ndarray,
    dt: float,
    r_max: float = DEFAULT_R_MAX,
    observer: StepObserver | None = None,
) -> EulerResult:
    """Run ``phi <- phi + b(phi) dt + sum_k sigma_k(phi) dW^k`` over a batch.

    ``x0`` has shape ``(R, P, d)`` (R noise replicas, P points each) and ``dw``
    has shape ``(R, n, m)``; all P points of a replica share its increments.
    A trajectory is stopped at the first step where ``|phi| >= r_max``, the
    state becomes non-finite, or one step multiplies ``|phi|`` by more than
    ``OVERSHOOT_FACTOR`` (relative to ``max(|phi|, 1)``).  Stopped
    trajectories keep their last alive value.

    The observer sees the state after every step and may modify live rows in
    place (used for pinning coalesced pairs).
    """
    x = np.array(x0, dtype=float, copy=True)
    if x.ndim != 3 or x.shape[-1] != field.dim:
        raise InputError(f"expected initial states (R, P, {field.dim}), got {x.shape}")
    R, P, _ = x.shape
    if dw.ndim != 3 or dw.shape[0] != R or dw.shape[2] != field.noise_dim:
        raise InputError(f"noise shape {dw.shape} does not match {R} replicas and m={field.noise_dim}")
    n = dw.shape[1]
    norms = np.linalg.norm(x, axis=-1)
    exit_step = np.full((R, P), -1, dtype=np.int64)
    exit_radius = np.full((R, P), np.nan)
    at_start = ~(norms < r_max)
    exit_step[at_start] = 0
    exit_radius[at_start] = norms[at_start]
    alive = exit_step < 0
    if observer is not None:
        observer.start(x)
    sigmas = field.diffusion
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            if alive.all():
                cur = x
                inc = dw[:, k, None, :]
                new = cur + field.drift(cur) * dt
                for j, sig in enumerate(sigmas):
                    new = new + sig(cur) * inc[..., j : j + 1]
                old = norms
            elif alive.any():
                cur = x[alive]
                inc = np.broadcast_to(dw[:, k, None, :], (R, P, dw.shape[2]))[alive]
                new = cur + field.drift(cur) * dt
                for j, sig in enumerate(sigmas):
                    new = new + sig(cur) * inc[:, j : j + 1]
                old = norms[alive]
            else:
                if observer is not None:
                    observer.update(k, x, alive)
                continue
            new_norm = np.sqrt(np.sum(new * new, axis=-1))
            bad = ~(new_norm < r_max) | (new_norm > OVERSHOOT_FACTOR * np.maximum(old, 1.0))
            if alive.all():
                keep = ~bad
                x[keep] = new[keep]
                norms = np.where(keep, new_norm, norms)
                idx = bad
            else:
                rows = np.argwhere(alive)
                good_rows, bad_rows = rows[~bad], rows[bad]
                x[good_rows[:, 0], good_rows[:, 1]] = new[~bad]
                norms[good_rows[:, 0], good_rows[:, 1]] = new_norm[~bad]
                idx = np.zeros_like(alive)
                idx[bad_rows[:, 0], bad_rows[:, 1]] = True
                new_norm_full = np.full((R, P), np.nan)
                new_norm_full[alive] = new_norm
                new_norm = new_norm_full
            if idx.any():
                exit_step[idx] = k + 1
                rad = np.where(np.isfinite(new_norm[idx]), new_norm[idx], np.inf)
                exit_radius[idx] = rad
                alive = exit_step < 0
            if observer is not None:
                observer.update(k, x, alive)
    return EulerResult(x, exit_step, exit_radius)


def _check_start(grid: TimeGrid, noise: NoiseRealization, field: CoefficientField) -> None:
    if noise.grid != grid:
        raise InputError("noise realization was sampled on a different grid")
    if noise.m != field.noise_dim:
        raise InputError(f"noise has m={noise.m} but the field has {field.noise_dim} diffusion vectors")


class _Recorder:
    def __init__(self, n_total: int, shape: tuple[int, ...]):
        self.path = np.full((n_total + 1,) + shape, np.nan)
        self.k0 = 0

    def start(self, x):
        self.path[0] = x

    def update(self, k, x, alive):
        self.path[k + 1] = np.where(alive[..., None], x, np.nan)


def evolve(
    field: CoefficientField,
    x,
    s: float,
    grid: TimeGrid,
    noise: NoiseRealization,
    R_max: float = DEFAULT_R_MAX,
) -> list[FlowState]:
    """States at every grid time ``>= s`` of the Euler trajectory started at ``(s, x)``."""
    states, _ = _evolve_points(field, np.atleast_2d(field.check_points(x)), s, grid, noise, R_max)
    return [row[0] for row in states]


def _evolve_points(field, points, s, grid, noise, r_max):
    _check_start(grid, noise, field)
    k0 = grid.index_of(s)
    points = field.check_points(points)
    P = points.shape[0]
    rec = _Recorder(grid.n_steps - k0, (1, P, field.dim))
    res = euler(field, points[None], noise.increments[None, k0:], grid.step, r_max, rec)
    out = []
    exit_times = np.full(P, np.nan)
    for p in range(P):
        if res.exit_step[0, p] >= 0:
            exit_times[p] = grid.time(k0 + int(res.exit_step[0, p]))
    for j in range(grid.n_steps - k0 + 1):
        row = []
        for p in range(P):
            es = res.exit_step[0, p]
            if es >= 0 and j >= es:
                row.append(FlowState(None, exit_times[p], float(res.exit_radius[0, p])))
            else:
                row.append(FlowState(rec.path[j, 0, p].copy()))
        out.append(row)
    return out, (rec.path[:, 0], res, exit_times)


@dataclass
class FlowGrid:
    """``phi_{s,t}(x)`` for initial times ``s`` and points ``x`` under one noise path.

    ``values[i, k, p]`` is the state at grid index ``k`` of the trajectory
    started at ``initial_times[i]`` from ``initial_points[p]``; it is nan
    before the start and after blow-up.
    """

    initial_points: np.ndarray
    initial_times: np.ndarray
    values: np.ndarray  # (n_s, n_steps + 1, P, d)
    exit_time: np.ndarray  # (n_s, P), nan if alive at the end
    exit_radius: np.ndarray
    noise: NoiseRealization
    R_max: float
    field: CoefficientField

    @property
    def grid(self) -> TimeGrid:
        return self.noise.grid

    def state(self, s: float, t: float, x_index: int) -> FlowState:
        i = self._time_slot(s)
        k = self.grid.index_of(t)
        if t < s:
            raise InputError("state requested before its initial time")
        et = self.exit_time[i, x_index]
        if not np.isnan(et) and t >= et:
            return FlowState(None, float(et), float(self.exit_radius[i, x_index]))
        return FlowState(self.values[i, k, x_index].copy())

    def _time_slot(self, s: float) -> int:
        hits = np.flatnonzero(np.abs(self.initial_times - s) <= 1e-9 * max(1.0, abs(s)))
        if hits.size == 0:
            raise InputError(f"{s!r} is not an initial time of this flow grid")
        return int(hits[0])


def flow_grid(
    field: CoefficientField,
    points,
    times: Sequence[float],
    grid: TimeGrid,
    noise: NoiseRealization,
    R_max: float = DEFAULT_R_MAX,
) -> FlowGrid:
    points = field.check_points(np.atleast_2d(points))
    times_arr = np.array([grid.time(grid.index_of(s)) for s in times], dtype=float)
    n_s, P = len(times_arr), points.shape[0]
    values = np.full((n_s, grid.n_steps + 1, P, field.dim), np.nan)
    exit_time = np.full((n_s, P), np.nan)
    exit_radius = np.full((n_s, P), np.nan)
    for i, s in enumerate(times_arr):
        k0 = grid.index_of(s)
        _, (path, res, et) = _evolve_points(field, points, s, grid, noise, R_max)
        values[i, k0:] = path
        exit_time[i] = et
        exit_radius[i] = np.where(res.exit_step[0] >= 0, res.exit_radius[0], np.nan)
    return FlowGrid(points, times_arr, values, exit_time, exit_radius, noise, R_max, field)


def compose_check(fg: FlowGrid, s: float, t: float, u: float, x_index: int) -> float:
    """``|phi_{s,u}(x) - phi_{t,u}(phi_{s,t}(x))|`` with the restart reusing the same noise.

    Blow-up on either side counts as agreement (0.0) only when both sides are
    blown up with the same exit time; any disagreement returns ``inf``.
    """
    if not s <= t <= u:
        raise InputError("compose_check needs s <= t <= u")
    grid = fg.grid
    direct = fg.state(s, u, x_index)
    mid = fg.state(s, t, x_index)
    if mid.blown_up:
        return 0.0 if direct.blown_up and direct.exit_time == mid.exit_time else math.inf
    restarted = evolve(fg.field, mid.value, t, grid, fg.noise, fg.R_max)
    composed = restarted[grid.index_of(u) - grid.index_of(t)]
    if direct.blown_up or composed.blown_up:
        if direct.blown_up and composed.blown_up and direct.exit_time == composed.exit_time:
            return 0.0
        return math.inf
    return float(np.linalg.norm(direct.value - composed.value))


def replica_chunks(replicas: int, chunk_size: int = CHUNK_SIZE) -> list[range]:
    return [range(a, min(a + chunk_size, replicas)) for a in range(0, replicas, chunk_size)]


def map_replicas(
    fn: Callable[[range], dict[str, np.ndarray]],
    replicas: int,
    threads: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> dict[str, np.ndarray]:
    """Apply ``fn`` to fixed replica chunks and concatenate per-replica arrays in index order.

    Chunk boundaries do not depend on ``threads``, so the result is identical
    for every worker count.
    """
    if replicas < 1:
        raise InputError("replicas must be at least 1")
    chunks = replica_chunks(replicas, chunk_size)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def simulate(
    field: CoefficientField,
    points,
    grid: TimeGrid,
    master_seed: int,
    replicas: int,
    make_observer: Callable[[np.ndarray, np.ndarray], object],
    R_max: float = DEFAULT_R_MAX,
    threads: int = 1,
) -> dict[str, np.ndarray]:
    """Monte Carlo over replicas: every replica runs all ``points`` under its own noise.

    ``make_observer(dw, x0)`` builds a per-chunk observer; its ``finish(result)``
    must return a dict of per-replica arrays.
    """
    points = field.check_points(np.atleast_2d(points))

    def run(chunk: range) -> dict[str, np.ndarray]:
        dw = noise_block(grid, field.noise_dim, master_seed, chunk)
        x0 = np.broadcast_to(points, (len(chunk),) + points.shape)
        obs = make_observer(dw, x0)
        res = euler(field, x0, dw, grid.step, R_max, obs)
        return obs.finish(res)

    return map_replicas(run, replicas, threads)
