"""Normalized filter for the state distribution, telegraph specialization,
point estimates, and prediction.

The conditional distribution p solves the nonlinear Ito equation

    dp_j = (Q^T p)_j dt + beta^-2 (a_j - xbar) p_j (dy - xbar dt),
    xbar = sum_j a_j p_j,

written here in innovation form: the observation enters only through its
surprise  dy - xbar dt  relative to the filter's own prediction. The
``sign_variant`` argument also offers the 'paper' variant with
+beta^-2 xbar (a_j - xbar) p_j dt  in place of the innovation coupling; the
two differ only in the sign of that drift term and are adjudicated
numerically by the harness. Both preserve sum(p) = 1 exactly in real
arithmetic, since sum_j (a_j - xbar) p_j = 0.

For the symmetric two-state chain with levels (+1, -1) ("random telegraph
signal") the filter reduces to the scalar difference q = p_1 - p_2:

    dq = -2 nu q dt - beta^-2 q (1 - q^2) dt + beta^-2 (1 - q^2) dy

and its smooth-noise form is the Riccati equation
dq/dt = -2 nu q + beta^-2 (1 - q^2) r with r the observed signal-plus-noise
rate. The scalar steps here reproduce the two-state general filter exactly,
step by step, not just asymptotically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainModel, transition_matrix

__all__ = [
    "FilterState",
    "TelegraphState",
    "wonham_update_raw",
    "wonham_step",
    "wonham_langevin_step",
    "telegraph_ito_step",
    "telegraph_langevin_step",
    "finish_simplex_step",
    "mean_estimate",
    "map_decision",
    "predict",
]

SIGN_VARIANTS = ("innovation", "paper")

# Floor for nonpositive probabilities after an Euler step; matches the
# unnormalized filter's clamp policy so cross-scheme statistics align.
PROB_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class FilterState:
    """Probability vector over states at time t; ``clamps`` counts floor events."""

    probs: np.ndarray
    t: float = 0.0
    clamps: int = 0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True, eq=False)
class TelegraphState:
    """Posterior difference q = p_plus - p_minus for the telegraph chain."""

    q: float
    t: float = 0.0
    clamps: int = 0

    def __post_init__(self):
        if not np.isfinite(self.q) or abs(self.q) > 1.0:
            raise ValueError(f"q must lie in [-1, 1], got {self.q}")


def _check_increment(dt: float, dy: float) -> None:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not np.isfinite(dy):
        raise ValueError("observation increment must be finite")


def wonham_update_raw(
    probs,
    generator: np.ndarray,
    levels: np.ndarray,
    beta: float,
    dt: float,
    dy,
    sign_variant: str = "innovation",
):
    """One raw Euler update, before flooring and renormalization.

    Works on any (..., K) array (``dy`` scalar or broadcastable (..., 1)),
    so Monte Carlo replicas can be stepped in a batch with the identical
    arithmetic as the scalar API.
    """
    if sign_variant not in SIGN_VARIANTS:
        raise ValueError(f"sign_variant must be one of {SIGN_VARIANTS}")
    xbar = np.sum(probs * levels, axis=-1, keepdims=probs.ndim > 1)
    gain = (levels - xbar) * probs / beta**2
    drift = probs @ generator
    if sign_variant == "innovation":
        return probs + dt * drift + gain * (dy - xbar * dt)
    return probs + dt * drift + gain * dy + gain * (xbar * dt)


def finish_simplex_step(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Floor nonpositive entries and renormalize the 1e-12-level rounding drift.

    Returns the renormalized vector and the number of floored entries. The
    pre-renormalization sum is the caller's to inspect (it is an exact
    invariant of the update in real arithmetic).
    """
    clamped = int(np.count_nonzero(raw <= 0.0))
    if clamped:
        raw = np.maximum(raw, PROB_FLOOR)
    return raw / raw.sum(axis=-1, keepdims=raw.ndim > 1), clamped


def wonham_step(
    state: FilterState,
    model: ChainModel,
    beta: float,
    dt: float,
    dy: float,
    sign_variant: str = "innovation",
) -> FilterState:
    """Euler-Maruyama step of the normalized filter."""
    _check_increment(dt, dy)
    raw = wonham_update_raw(
        state.probs, model.generator, model.levels, beta, dt, dy, sign_variant
    )
    presum = raw.sum()
    if not np.isfinite(presum) or abs(presum - 1.0) > 1e-6:
        raise ValueError(
            f"step left the simplex (pre-renormalization sum {presum!r}); "
            "reduce dt or check the inputs"
        )
    probs, clamped = finish_simplex_step(raw)
    return FilterState(probs=probs, t=state.t + dt, clamps=state.clamps + clamped)


def wonham_langevin_field(probs, generator, levels, beta, rate, correction_sign):
    """Drift field of the smooth-noise normalized filter driven by ``rate``."""
    xbar = np.sum(probs * levels, axis=-1, keepdims=probs.ndim > 1)
    second_moment = np.sum(probs * levels**2, axis=-1, keepdims=probs.ndim > 1)
    correction = 0.5 * probs * (levels**2 - second_moment) / beta**2
    return (
        probs @ generator
        + correction_sign * correction
        + (levels - xbar) * probs * (rate / beta**2)
    )


def wonham_langevin_step(
    state: FilterState,
    model: ChainModel,
    beta: float,
    dt: float,
    dy: float,
    correction_sign: int = -1,
) -> FilterState:
    """Heun (explicit trapezoidal) step of the smooth-noise normalized filter.

    The correction term sums to zero over states for either sign, so the
    simplex sum is preserved exactly in real arithmetic.
    """
    _check_increment(dt, dy)
    generator, levels = model.generator, model.levels
    rate = dy / dt

    def field(p):
        return wonham_langevin_field(p, generator, levels, beta, rate, correction_sign)

    predictor = state.probs + dt * field(state.probs)
    raw = state.probs + 0.5 * dt * (field(state.probs) + field(predictor))
    probs, clamped = finish_simplex_step(raw)
    return FilterState(probs=probs, t=state.t + dt, clamps=state.clamps + clamped)


def _clamp_q(q: float) -> tuple[float, int]:
    if q > 1.0:
        return 1.0, 1
    if q < -1.0:
        return -1.0, 1
    return q, 0


def telegraph_ito_step(
    state: TelegraphState, nu: float, beta: float, dt: float, dy: float
) -> TelegraphState:
    """Euler step of  dq = -2 nu q dt - q(1-q^2)/beta^2 dt + (1-q^2)/beta^2 dy."""
    _check_increment(dt, dy)
    q = state.q
    spread = 1.0 - q * q
    raw = q + dt * (-2.0 * nu * q) - dt * q * spread / beta**2 + spread * dy / beta**2
    q_new, clamped = _clamp_q(raw)
    return TelegraphState(q=q_new, t=state.t + dt, clamps=state.clamps + clamped)


def telegraph_langevin_step(
    state: TelegraphState, nu: float, beta: float, dt: float, dy: float
) -> TelegraphState:
    """Heun step of the Riccati field  dq/dt = -2 nu q + (1-q^2) r / beta^2."""
    _check_increment(dt, dy)
    rate = dy / dt

    def field(q):
        return -2.0 * nu * q + (1.0 - q * q) * rate / beta**2

    predictor = state.q + dt * field(state.q)
    raw = state.q + 0.5 * dt * (field(state.q) + field(predictor))
    q_new, clamped = _clamp_q(raw)
    return TelegraphState(q=q_new, t=state.t + dt, clamps=state.clamps + clamped)


def mean_estimate(state: FilterState, model: ChainModel) -> float:
    """Posterior mean of the signal level:  xbar = sum_j a_j p_j."""
    return float(state.probs @ model.levels)


def map_decision(state: FilterState) -> int:
    """Index of the maximal posterior probability; ties go to the lowest index."""
    return int(np.argmax(state.probs))


def predict(state: FilterState, model: ChainModel, h: float) -> np.ndarray:
    """Distribution of the state h time units ahead:  p(t)^T P(h).

    Future evolution is independent of the observations given the present
    state, so prediction is one transition-matrix application.
    """
    if h < 0:
        raise ValueError("prediction horizon must be nonnegative")
    return state.probs @ transition_matrix(model, h)
