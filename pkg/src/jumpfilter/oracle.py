"""Independent ground-truth computations for validating the SDE filters.

Two oracles, both built without the stochastic difference schemes they check:

* a discrete-time Bayes forward filter whose prediction step uses the exact
  transition matrix over one grid step and whose correction step uses the
  Gaussian increment likelihood with within-step transitions ignored, and
* a small-scale path-space enumeration of the unnormalized weights

      psi_j(T) = sum_i p_i(0) * sum_m  integral over m-jump paths i -> j of
                 (path density) * exp(-1/(2 beta^2) int x~^2 ds
                                      + 1/beta^2 int x~ dy)

  with the jump-time integrals done by tensor-product Gauss-Legendre
  quadrature over the ordered simplex, and int x~ dy evaluated exactly
  against the stored piecewise increments.

Plus a Monte Carlo check of the defining property of conditional probability:
averaged over independent replicas, the filter output must match the
unconditional law, and its mean-square error must beat the best constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.stats import poisson

from .chain import ChainModel, simulate_jump_path, step_level_integrals, transition_matrix
from .seeding import ROLE_JUMP, ROLE_NOISE, derive_rng
from .signalpath import ObservationGrid, cumulative_observation
from .wonham import finish_simplex_step, wonham_update_raw

__all__ = [
    "DiscreteBayesState",
    "PathspaceResult",
    "TowerReport",
    "bayes_forward_step",
    "pathspace_expectation",
    "tower_property_check",
]


@dataclass(frozen=True, eq=False)
class DiscreteBayesState:
    """Posterior of the discrete Bayes forward filter after ``step`` updates."""

    probs: np.ndarray
    step: int = 0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if abs(probs.sum() - 1.0) > 1e-12 or np.any(probs < 0):
            raise ValueError("posterior must be a probability vector (1e-12 tolerance)")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


def bayes_forward_step(
    state: DiscreteBayesState,
    model: ChainModel,
    dt: float,
    dy: float,
    beta: float,
    trans: np.ndarray | None = None,
) -> DiscreteBayesState:
    """One predict-correct cycle of the discrete Bayes filter.

    Predict with the exact one-step transition matrix (all transitions
    counted), then weight state j by the Gaussian likelihood of the increment,
    exp(-(dy - a_j dt)^2 / (2 beta^2 dt)), which ignores within-step
    transitions. Normalization is done in log space with a max shift.

    ``trans`` may carry a precomputed transition matrix for this dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not np.isfinite(dy):
        raise ValueError("observation increment must be finite")
    if trans is None:
        trans = transition_matrix(model, dt)
    prior = state.probs @ trans
    log_like = -((dy - model.levels * dt) ** 2) / (2.0 * beta**2 * dt)
    with np.errstate(divide="ignore"):
        log_post = np.log(prior) + log_like
    log_post -= log_post.max()
    post = np.exp(log_post)
    return DiscreteBayesState(probs=post / post.sum(), step=state.step + 1)


@dataclass(frozen=True, eq=False)
class PathspaceResult:
    """Normalized path-space estimate with its de facto error budget."""

    probs: np.ndarray
    unnormalized: np.ndarray
    truncation_bound: float
    max_jumps: int
    quad_points: int


def _state_sequences(rates: np.ndarray, start: int, end: int, n_jumps: int):
    """State sequences start -> ... -> end with positive rates along the way."""
    k = rates.shape[0]
    if n_jumps == 0:
        if start == end:
            yield (start,)
        return
    for middle in product(range(k), repeat=n_jumps - 1):
        seq = (start, *middle, end)
        if all(seq[i] != seq[i + 1] and rates[seq[i], seq[i + 1]] > 0 for i in range(n_jumps)):
            yield seq


def _ordered_times(horizon: float, nodes: np.ndarray, weights: np.ndarray, m: int):
    """Tensor grid over ordered jump times 0 < tau_1 < ... < tau_m < horizon.

    Sequential map tau_k = tau_{k-1} + (horizon - tau_{k-1}) u_k from the unit
    cube; returns (times (n, m), combined quadrature weight * jacobian (n,)).
    """
    grids = np.meshgrid(*([nodes] * m), indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([weights] * m), indexing="ij")
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    times = np.empty_like(u)
    jac = np.ones(u.shape[0])
    prev = np.zeros(u.shape[0])
    for k in range(m):
        remaining = horizon - prev
        times[:, k] = prev + remaining * u[:, k]
        jac *= remaining
        prev = times[:, k]
    return times, w * jac


def pathspace_expectation(
    model: ChainModel,
    grid: ObservationGrid,
    horizon: float,
    max_jumps: int,
    quad_points: int,
    exponent_scale: float = 1.0,
    max_truncation: float = 1e-4,
) -> PathspaceResult:
    """Enumerate paths with up to ``max_jumps`` jumps and integrate their weights.

    Refuses to run outside its honest envelope: the state space must be small
    (K <= 3), max_jumps <= 3, and the Poisson mass of the omitted jump counts,
    bounded with rate max_i nu_i, must not exceed ``max_truncation``. That
    omitted mass is reported as ``truncation_bound`` alongside the result.

    ``exponent_scale`` scales the observation exponent; 0 collapses the
    weights to bare path probabilities (test hook for the noninformative
    limit).
    """
    k = model.n_states
    if k > 3:
        raise ValueError(f"path enumeration supports K <= 3 states, got {k}")
    if not 0 <= max_jumps <= 3:
        raise ValueError(f"max_jumps must be in 0..3, got {max_jumps}")
    n_steps = int(round(horizon / grid.dt))
    if abs(n_steps * grid.dt - horizon) > 1e-9 * max(1.0, horizon) or n_steps > grid.n_steps:
        raise ValueError("horizon must match a whole number of grid steps")
    lam = float(model.exit_rates.max()) * horizon
    truncation_bound = float(poisson.sf(max_jumps, lam))
    if truncation_bound > max_truncation:
        raise ValueError(
            f"omitted >= {max_jumps + 1}-jump Poisson mass {truncation_bound:.3e} "
            f"exceeds max_truncation={max_truncation:.3e}; shorten the horizon, "
            "raise max_jumps, or loosen max_truncation explicitly"
        )

    beta2 = grid.beta**2
    t_knots = np.arange(grid.n_steps + 1) * grid.dt
    y_knots = cumulative_observation(grid)
    nodes, gl_weights = np.polynomial.legendre.leggauss(quad_points)
    nodes = 0.5 * (nodes + 1.0)
    gl_weights = 0.5 * gl_weights
    exit_rates = model.exit_rates
    levels = model.levels

    def segment_weight(bounds: np.ndarray, seq) -> np.ndarray:
        # bounds: (n, m+2) segment boundaries; seq: states per segment (m+1,)
        durations = np.diff(bounds, axis=1)
        a_seq = levels[list(seq)]
        nu_seq = exit_rates[list(seq)]
        y_at = np.interp(bounds, t_knots, y_knots)
        dy_seg = np.diff(y_at, axis=1)
        log_density = -(durations @ nu_seq)
        exponent = exponent_scale * (
            -(durations @ (a_seq**2)) / (2.0 * beta2) + (dy_seg @ a_seq) / beta2
        )
        return np.exp(log_density + exponent)

    psi = np.zeros(k)
    for start in range(k):
        weight0 = model.initial_dist[start]
        if weight0 == 0.0:
            continue
        for m in range(max_jumps + 1):
            if m == 0:
                bounds = np.array([[0.0, horizon]])
                contrib = segment_weight(bounds, (start,))[0]
                psi[start] += weight0 * contrib
                continue
            times, combined = _ordered_times(horizon, nodes, gl_weights, m)
            bounds = np.concatenate(
                [np.zeros((times.shape[0], 1)), times, np.full((times.shape[0], 1), horizon)],
                axis=1,
            )
            for end in range(k):
                for seq in _state_sequences(model.rates, start, end, m):
                    rate_product = math.prod(
                        model.rates[seq[i], seq[i + 1]] for i in range(m)
                    )
                    values = segment_weight(bounds, seq)
                    psi[end] += weight0 * rate_product * float(combined @ values)
    total = psi.sum()
    if total <= 0:
        raise RuntimeError("path-space enumeration produced no mass")
    return PathspaceResult(
        probs=psi / total,
        unnormalized=psi,
        truncation_bound=truncation_bound,
        max_jumps=max_jumps,
        quad_points=quad_points,
    )


@dataclass(frozen=True, eq=False)
class TowerReport:
    """Per-state z-scores of the replica-averaged filter, plus MSE comparison."""

    z_scores: np.ndarray
    mean_terminal: np.ndarray
    target: np.ndarray
    mse_filter: float
    mse_const: float
    mse_margin_se: float
    n_replicas: int

    def to_json(self) -> dict:
        return {
            "z_scores": self.z_scores.tolist(),
            "mse_filter": self.mse_filter,
            "mse_const": self.mse_const,
            "mse_margin_se": self.mse_margin_se,
            "n_replicas": self.n_replicas,
        }


def tower_property_check(
    model: ChainModel,
    horizon: float,
    dt: float,
    beta: float,
    n_replicas: int,
    master_seed: int,
) -> TowerReport:
    """Monte Carlo unbiasedness check of the normalized filter.

    Runs ``n_replicas`` independent (path, observation, filter) triples with
    per-replica derived seeds and compares the replica mean of p(T) against
    the unconditional law initial^T P(T), reporting per-state z-scores. Also
    reports the filter's empirical mean-square error against the best
    constant predictor and the significance (in standard errors) of the gap.
    """
    if n_replicas < 100:
        raise ValueError("need at least 100 replicas for meaningful z-scores")
    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"dt={dt} does not divide horizon={horizon}")
    k = model.n_states
    levels = model.levels
    generator = model.generator

    increments = np.empty((n_replicas, n_steps))
    terminal_level = np.empty(n_replicas)
    for r in range(n_replicas):
        path = simulate_jump_path(model, horizon, derive_rng(master_seed, r, ROLE_JUMP))
        signal = step_level_integrals(path, model, dt, n_steps)
        noise = derive_rng(master_seed, r, ROLE_NOISE).standard_normal(n_steps)
        increments[r] = signal + beta * math.sqrt(dt) * noise
        terminal_level[r] = levels[path.states_visited[-1]]

    probs = np.tile(model.initial_dist, (n_replicas, 1))
    for step in range(n_steps):
        raw = wonham_update_raw(
            probs, generator, levels, beta, dt, increments[:, step : step + 1], "innovation"
        )
        probs, _ = finish_simplex_step(raw)

    target = model.initial_dist @ transition_matrix(model, horizon)
    mean_terminal = probs.mean(axis=0)
    spread = probs.std(axis=0, ddof=1)
    deviation = mean_terminal - target
    z_scores = np.zeros(k)
    nonzero = spread > 0
    z_scores[nonzero] = deviation[nonzero] / (spread[nonzero] / math.sqrt(n_replicas))
    z_scores[~nonzero & (np.abs(deviation) > 1e-12)] = np.inf

    xbar = probs @ levels
    const = float(target @ levels)
    err_filter = (terminal_level - xbar) ** 2
    err_const = (terminal_level - const) ** 2
    gap = err_const - err_filter
    gap_se = gap.std(ddof=1) / math.sqrt(n_replicas)
    return TowerReport(
        z_scores=z_scores,
        mean_terminal=mean_terminal,
        target=target,
        mse_filter=float(err_filter.mean()),
        mse_const=float(err_const.mean()),
        mse_margin_se=float(gap.mean() / gap_se) if gap_se > 0 else math.inf,
        n_replicas=n_replicas,
    )
