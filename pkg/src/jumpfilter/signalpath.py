"""Observation synthesis on a uniform grid:  dy = x dt + beta dw.

Each increment combines the exact signal integral over its step (computed
from the jump path, no Riemann error) with a Gaussian term beta*sqrt(dt)*z.
Brownian increments are retained so different schemes can consume the
identical noise realization, and so a fine grid can be aggregated into a
coarse one for refinement studies.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .chain import ChainModel, JumpPath, step_level_integrals

__all__ = [
    "ObservationGrid",
    "synthesize_observations",
    "synthesize_from_brownian",
    "cumulative_y",
    "cumulative_observation",
    "coarsen",
    "write_observations_csv",
    "read_observations_csv",
]

CSV_HEADER = ["r", "t", "dy", "dw", "x_level"]


@dataclass(frozen=True, eq=False)
class ObservationGrid:
    """Observation increments on a uniform grid, with y(0) = 0.

    Attributes:
        dt: step size (> 0).
        beta: noise intensity (> 0).
        dy: observation increments, shape (n,).
        dw: Brownian increments used to build ``dy``, shape (n,).
        x_level: signal level at the start of each step, shape (n,).
    """

    dt: float
    beta: float
    dy: np.ndarray
    dw: np.ndarray
    x_level: np.ndarray

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        for name in ("dy", "dw", "x_level"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.dy.ndim == 1 and self.dy.shape == self.dw.shape == self.x_level.shape):
            raise ValueError("dy, dw and x_level must be aligned 1-d arrays")

    @property
    def n_steps(self) -> int:
        return self.dy.shape[0]

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        """Step start times r*dt, r = 0..n-1."""
        return np.arange(self.n_steps) * self.dt


def _step_count(horizon: float, dt: float) -> int:
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, abs(horizon)):
        raise ValueError(f"dt={dt} does not divide horizon={horizon}")
    return n


def synthesize_from_brownian(
    path: JumpPath, model: ChainModel, dt: float, beta: float, dw: np.ndarray
) -> ObservationGrid:
    """Build observation increments from given Brownian increments."""
    dw = np.asarray(dw, dtype=float)
    n = _step_count(path.horizon, dt)
    if dw.shape != (n,):
        raise ValueError(f"dw must have shape ({n},)")
    signal = step_level_integrals(path, model, dt, n)
    starts = np.arange(n) * dt
    idx = np.searchsorted(path.jump_times, starts, side="right")
    levels = model.levels[path.states_visited[idx]]
    return ObservationGrid(dt=dt, beta=beta, dy=signal + beta * dw, dw=dw, x_level=levels)


def synthesize_observations(
    path: JumpPath, model: ChainModel, dt: float, beta: float, rng: np.random.Generator
) -> ObservationGrid:
    """Draw Brownian increments and synthesize  dy_r = integral of x + beta dw_r."""
    if dt <= 0 or beta <= 0:
        raise ValueError("dt and beta must be positive")
    n = _step_count(path.horizon, dt)
    dw = np.sqrt(dt) * rng.standard_normal(n)
    return synthesize_from_brownian(path, model, dt, beta, dw)


def cumulative_observation(grid: ObservationGrid) -> np.ndarray:
    """y at all grid points 0..n (prefix sums, y(0) = 0), shape (n+1,)."""
    return np.concatenate(([0.0], np.cumsum(grid.dy)))


def cumulative_y(grid: ObservationGrid, r: int) -> float:
    """y(r*dt) as a prefix sum of increments."""
    if not 0 <= r <= grid.n_steps:
        raise IndexError(f"index {r} outside [0, {grid.n_steps}]")
    return float(grid.dy[:r].sum())


def coarsen(grid: ObservationGrid, factor: int) -> ObservationGrid:
    """Aggregate consecutive groups of ``factor`` steps into one coarse step."""
    if factor < 1 or grid.n_steps % factor != 0:
        raise ValueError(f"factor {factor} does not divide {grid.n_steps} steps")
    return ObservationGrid(
        dt=grid.dt * factor,
        beta=grid.beta,
        dy=grid.dy.reshape(-1, factor).sum(axis=1),
        dw=grid.dw.reshape(-1, factor).sum(axis=1),
        x_level=grid.x_level[::factor].copy(),
    )


def write_observations_csv(grid: ObservationGrid, destination) -> None:
    """Write "r,t,dy,dw,x_level" rows with 17 significant digits."""
    with open(destination, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in range(grid.n_steps):
            writer.writerow(
                [
                    r,
                    f"{r * grid.dt:.17g}",
                    f"{grid.dy[r]:.17g}",
                    f"{grid.dw[r]:.17g}",
                    f"{grid.x_level[r]:.17g}",
                ]
            )


def read_observations_csv(source, beta: float) -> ObservationGrid:
    """Read a grid written by :func:`write_observations_csv`.

    beta is not stored in the CSV; it travels with the experiment config.
    """
    with open(source, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        rows = [(float(t), float(dy), float(dw), float(lvl)) for _, t, dy, dw, lvl in reader]
    if len(rows) < 2:
        raise ValueError("need at least 2 rows to recover the step size")
    t = np.array([row[0] for row in rows])
    return ObservationGrid(
        dt=float(t[1] - t[0]),
        beta=beta,
        dy=np.array([row[1] for row in rows]),
        dw=np.array([row[2] for row in rows]),
        x_level=np.array([row[3] for row in rows]),
    )
