"""Finite-state Markov jump process: model, transition semigroup, exact path
simulation, and stationary behavior.

A model is a set of signal levels ``a_1..a_K``, a matrix of jump rates
``rates[i, j]`` (intensity of i -> j transitions, diagonal ignored), and an
initial distribution. Exit rates are always recomputed from the off-diagonal
rates, never stored independently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "ChainModel",
    "JumpPath",
    "ValidationReport",
    "ReducibleChainError",
    "telegraph_model",
    "validate_model",
    "transition_matrix",
    "simulate_jump_path",
    "state_at",
    "integrate_level",
    "step_level_integrals",
    "stationary_distribution",
    "model_from_json",
    "model_to_json",
]

# Poisson tail mass dropped when truncating the uniformization series.
UNIFORMIZATION_TAIL = 1e-13


class ReducibleChainError(ValueError):
    """The jump chain is not irreducible (raised where uniqueness is needed)."""


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Markov jump process with signal levels attached to its states.

    Attributes:
        levels: signal value of each state, shape (K,). Duplicates allowed;
            states are identified by index.
        rates: off-diagonal jump intensities, shape (K, K). The diagonal is
            zeroed on construction.
        initial_dist: distribution of the state at time 0, shape (K,).
    """

    levels: np.ndarray
    rates: np.ndarray
    initial_dist: np.ndarray

    def __post_init__(self):
        levels = np.atleast_1d(np.asarray(self.levels, dtype=float))
        rates = np.array(self.rates, dtype=float, copy=True)
        initial = np.atleast_1d(np.asarray(self.initial_dist, dtype=float))
        k = levels.shape[0]
        if levels.ndim != 1 or k < 1:
            raise ValueError("levels must be a nonempty 1-d array")
        if rates.shape != (k, k):
            raise ValueError(f"rates must have shape ({k}, {k}), got {rates.shape}")
        if initial.shape != (k,):
            raise ValueError(f"initial_dist must have shape ({k},), got {initial.shape}")
        np.fill_diagonal(rates, 0.0)
        for name, arr in (("levels", levels), ("rates", rates), ("initial_dist", initial)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self) -> int:
        return self.levels.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        """Total jump intensity out of each state (derived, not stored)."""
        return self.rates.sum(axis=1)

    @property
    def generator(self) -> np.ndarray:
        """Rate matrix Q with off-diagonals ``rates[i, j]`` and diagonal -exit_rates."""
        q = self.rates.copy()
        q[np.diag_indices(self.n_states)] = -self.exit_rates
        return q


def telegraph_model(nu: float, initial_dist=(0.5, 0.5)) -> ChainModel:
    """Symmetric two-state chain with levels (+1, -1) and switching rate ``nu``."""
    return ChainModel(
        levels=np.array([1.0, -1.0]),
        rates=np.array([[0.0, nu], [nu, 0.0]]),
        initial_dist=np.asarray(initial_dist, dtype=float),
    )


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    violations: tuple[str, ...]


def validate_model(model: ChainModel) -> ValidationReport:
    """Check model invariants; returns a report instead of raising."""
    violations = []
    if not np.all(np.isfinite(model.levels)):
        violations.append("nonfinite level")
    if not np.all(np.isfinite(model.rates)):
        violations.append("nonfinite rate")
    elif np.any(model.rates < 0):
        violations.append("negative rate")
    init = model.initial_dist
    if not np.all(np.isfinite(init)):
        violations.append("nonfinite initial probability")
    else:
        if np.any(init < 0) or np.any(init > 1):
            violations.append("initial probability outside [0, 1]")
        if abs(init.sum() - 1.0) > 1e-12:
            violations.append("initial distribution does not sum to 1")
    return ValidationReport(passed=not violations, violations=tuple(violations))


def transition_matrix(model: ChainModel, h: float) -> np.ndarray:
    """Transition probabilities over horizon ``h``: exp(h Q) by uniformization.

    The series  exp(hQ) = sum_m  Pois(lam*h, m) * S^m  with S = I + Q/lam and
    lam = max exit rate is truncated once the accumulated Poisson mass reaches
    1 - 1e-13. Every term is entrywise nonnegative and row-stochastic, so the
    result is a probability matrix by construction.
    """
    if h < 0:
        raise ValueError("horizon must be nonnegative")
    k = model.n_states
    lam = float(model.exit_rates.max(initial=0.0))
    mu = lam * h
    if mu == 0.0:
        return np.eye(k)
    if mu > 400.0:
        # keep the series short; squaring preserves stochastic structure
        half = transition_matrix(model, h / 2.0)
        return half @ half
    stoch = np.eye(k) + model.generator / lam
    weight = np.exp(-mu)
    total = weight
    power = np.eye(k)
    out = weight * power
    m = 0
    while total < 1.0 - UNIFORMIZATION_TAIL:
        m += 1
        power = power @ stoch
        weight *= mu / m
        out += weight * power
        total += weight
    return out


@dataclass(frozen=True, eq=False)
class JumpPath:
    """Piecewise-constant realized trajectory: right-continuous in time.

    ``jump_times`` are strictly increasing in (0, horizon]; ``jump_states[k]``
    is the state entered at ``jump_times[k]``. At a jump instant the path
    already equals the post-jump state.
    """

    initial_state: int
    jump_times: np.ndarray
    jump_states: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.asarray(self.jump_times, dtype=float)
        states = np.asarray(self.jump_states, dtype=np.intp)
        if times.shape != states.shape or times.ndim != 1:
            raise ValueError("jump_times and jump_states must be 1-d and aligned")
        if times.size and (times[0] <= 0 or times[-1] > self.horizon):
            raise ValueError("jump times must lie in (0, horizon]")
        if np.any(np.diff(times) <= 0):
            raise ValueError("jump times must be strictly increasing")
        seq = np.concatenate(([self.initial_state], states))
        if np.any(seq[1:] == seq[:-1]):
            raise ValueError("consecutive states must differ")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "jump_states", states)
        object.__setattr__(self, "states_visited", seq)
        self.states_visited.setflags(write=False)

    @property
    def n_jumps(self) -> int:
        return self.jump_times.shape[0]


def simulate_jump_path(model: ChainModel, horizon: float, rng: np.random.Generator) -> JumpPath:
    """Exact simulation: exponential holding times, embedded-chain jumps.

    Deterministic given ``rng``; an absorbing state (exit rate 0) ends the
    jump sequence.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    k = model.n_states
    exit_rates = model.exit_rates
    initial = int(rng.choice(k, p=model.initial_dist))
    state = initial
    times, states = [], []
    t = 0.0
    while True:
        rate = exit_rates[state]
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t > horizon:
            break
        state = int(rng.choice(k, p=model.rates[state] / rate))
        times.append(t)
        states.append(state)
    return JumpPath(
        initial_state=initial,
        jump_times=np.asarray(times, dtype=float),
        jump_states=np.asarray(states, dtype=np.intp),
        horizon=float(horizon),
    )


def state_at(path: JumpPath, t: float) -> int:
    """State index at time ``t`` (right-continuous lookup)."""
    if not 0.0 <= t <= path.horizon:
        raise ValueError(f"time {t} outside [0, {path.horizon}]")
    idx = int(np.searchsorted(path.jump_times, t, side="right"))
    return int(path.states_visited[idx])


def _cumulative_level(path: JumpPath, model: ChainModel, times: np.ndarray) -> np.ndarray:
    """Exact values of  t -> integral_0^t a_{x(s)} ds  at the given times."""
    seg_levels = model.levels[path.states_visited]
    knots = np.concatenate(([0.0], path.jump_times))
    seg_len = np.diff(np.concatenate((knots, [path.horizon])))
    cum_at_knots = np.concatenate(([0.0], np.cumsum(seg_levels * seg_len)))
    idx = np.searchsorted(path.jump_times, times, side="right")
    return cum_at_knots[idx] + seg_levels[idx] * (times - knots[idx])


def integrate_level(path: JumpPath, model: ChainModel, t0: float, t1: float) -> float:
    """Exact integral of the signal level over [t0, t1] (no quadrature error)."""
    if not 0.0 <= t0 <= t1 <= path.horizon:
        raise ValueError(f"bad interval [{t0}, {t1}] for horizon {path.horizon}")
    vals = _cumulative_level(path, model, np.array([t0, t1]))
    return float(vals[1] - vals[0])


def step_level_integrals(path: JumpPath, model: ChainModel, dt: float, n_steps: int) -> np.ndarray:
    """Exact per-step signal integrals over the uniform grid r*dt, r=0..n."""
    grid = np.arange(n_steps + 1) * dt
    grid[-1] = min(grid[-1], path.horizon)  # guard against rounding past the end
    cum = _cumulative_level(path, model, grid)
    return np.diff(cum)


def stationary_distribution(model: ChainModel) -> np.ndarray:
    """Unique probability vector pi with pi^T Q = 0 (requires irreducibility)."""
    k = model.n_states
    if k == 1:
        return np.array([1.0])
    adjacency = csr_matrix((model.rates > 0).astype(np.int8))
    n_comp, labels = connected_components(adjacency, directed=True, connection="strong")
    if n_comp > 1:
        blocks = [tuple(np.flatnonzero(labels == c)) for c in range(n_comp)]
        raise ReducibleChainError(
            f"chain is reducible; strongly connected blocks: {blocks}"
        )
    q = model.generator
    system = np.vstack([q.T, np.ones(k)])
    rhs = np.zeros(k + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    residual = float(np.abs(pi @ q).max())
    if residual > 1e-10:
        raise RuntimeError(f"stationary solve residual {residual:.3e} exceeds 1e-10")
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def model_from_json(source: str | dict) -> ChainModel:
    """Load a model from the JSON document {"levels":[...], "rates":[[...]], "initial":[...]}."""
    doc = json.loads(source) if isinstance(source, str) else source
    return ChainModel(
        levels=np.asarray(doc["levels"], dtype=float),
        rates=np.asarray(doc["rates"], dtype=float),
        initial_dist=np.asarray(doc["initial"], dtype=float),
    )


def model_to_json(model: ChainModel) -> dict:
    """Inverse of :func:`model_from_json` (diagonal rates emitted as 0)."""
    return {
        "levels": model.levels.tolist(),
        "rates": model.rates.tolist(),
        "initial": model.initial_dist.tolist(),
    }
