"""Finite-horizon LQR synthesis and closed-loop evaluation for LTV models.

Gains come from the standard backward Riccati recursion over the model's
horizon, and the closed-loop rollout applies them to an arbitrary plant
model so that controllers synthesized from estimated dynamics can be
judged against the true system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .core import LtvModel

Array = np.ndarray

__all__ = [
    "LqrWeights",
    "GainSchedule",
    "RolloutResult",
    "TrackingStats",
    "SingularInputCost",
    "lqr_synthesize",
    "closed_loop_rollout",
    "tracking_stats",
]


class SingularInputCost(Exception):
    """The input-cost term R + B^T P B lost positive definiteness."""

    def __init__(self, instant: int):
        self.instant = instant
        super().__init__(f"input cost block at instant {instant} is not positive definite")


def position_coordinates(p: int, mask=None) -> np.ndarray:
    """Indices of the position-like coordinates: the first ceil(p/2) by default."""
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (p,) or not mask.any():
            raise ValueError(f"position mask must select at least one of {p} coordinates")
        return np.flatnonzero(mask)
    return np.arange((p + 1) // 2)


@dataclass(frozen=True)
class LqrWeights:
    """Diagonal LQR weights: q_x on positions, q_v on the rest, r on inputs.

    ``terminal`` overrides the terminal state cost (default: same as the
    running state cost).  ``position_mask`` overrides which coordinates
    count as positions.
    """

    q_x: float = 1.0
    q_v: float = 0.1
    r: float = 1e-3
    terminal: Optional[Array] = None
    position_mask: Optional[tuple[bool, ...]] = None

    def __post_init__(self):
        if self.q_x <= 0.0 or self.q_v <= 0.0 or self.r <= 0.0:
            raise ValueError("LQR weights must be positive")
        if self.terminal is not None:
            term = np.asarray(self.terminal, dtype=np.float64)
            object.__setattr__(self, "terminal", term)

    def state_cost(self, p: int) -> Array:
        diag = np.full(p, self.q_v)
        diag[position_coordinates(p, self.position_mask)] = self.q_x
        return np.diag(diag)

    def input_cost(self, q: int) -> Array:
        return self.r * np.eye(q)

    def terminal_cost(self, p: int) -> Array:
        if self.terminal is None:
            return self.state_cost(p)
        if self.terminal.shape != (p, p):
            raise ValueError(f"terminal cost has shape {self.terminal.shape}, expected ({p}, {p})")
        return self.terminal


@dataclass(frozen=True)
class GainSchedule:
    """Time-varying feedback gains K(k), with the Riccati solutions kept."""

    K: Array           # (N, q, p)
    P: Optional[Array] = None  # (N+1, p, p)

    def __post_init__(self):
        object.__setattr__(self, "K", np.array(self.K, dtype=np.float64))
        if self.K.ndim != 3:
            raise ValueError("gain schedule must be an (N, q, p) array")
        if self.P is not None:
            object.__setattr__(self, "P", np.array(self.P, dtype=np.float64))

    @property
    def N(self) -> int:
        return self.K.shape[0]

    def to_dict(self) -> dict:
        return {"K": self.K.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "GainSchedule":
        try:
            return cls(K=np.asarray(obj["K"], dtype=np.float64))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed gain record: {exc}") from None


@dataclass(frozen=True)
class RolloutResult:
    states: Array           # (N+1, p)
    inputs: Array           # (N, q)
    tracking_errors: Array  # (N+1,)


@dataclass(frozen=True)
class TrackingStats:
    mean: float
    stddev: float
    sum_sq: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stddev": self.stddev, "sum_sq": self.sum_sq}


def lqr_synthesize(model: LtvModel, weights: Optional[LqrWeights] = None) -> GainSchedule:
    """Backward Riccati recursion over the model horizon.

    With P(N) set to the terminal cost, each step computes
    K(k) = (R + B^T P(k+1) B)^{-1} B^T P(k+1) A and
    P(k) = Q + A^T P(k+1) (A - B K(k)), symmetrizing P along the way.
    Raises SingularInputCost if R + B^T P B stops being positive definite.
    """
    weights = weights or LqrWeights()
    p, q, n = model.p, model.q, model.N
    state_cost = weights.state_cost(p)
    input_cost = weights.input_cost(q)
    a_seq, b_seq = model.A_seq, model.B_seq

    ric = np.empty((n + 1, p, p))
    gains = np.empty((n, q, p))
    ric[n] = weights.terminal_cost(p)
    for k in range(n - 1, -1, -1):
        a, b = a_seq[k], b_seq[k]
        pb = ric[k + 1] @ b
        if q > 0:
            s = input_cost + b.T @ pb
            s = 0.5 * (s + s.T)
            try:
                gains[k] = scipy.linalg.solve(s, b.T @ ric[k + 1] @ a, assume_a="pos")
            except np.linalg.LinAlgError:
                raise SingularInputCost(k) from None
        else:
            gains[k] = np.zeros((0, p))
        nxt = ric[k + 1] @ (a - b @ gains[k])
        ric[k] = state_cost + a.T @ nxt
        ric[k] = 0.5 * (ric[k] + ric[k].T)
    return GainSchedule(K=gains, P=ric)


def closed_loop_rollout(plant: LtvModel, gains: GainSchedule, reference=None,
                        x0=None, noise=None, position_mask=None) -> RolloutResult:
    """Apply a gain schedule to a plant and track a reference trajectory.

    The control law is u(k) = -K(k) (x(k) - ref(k)), evaluated on the
    measured state (the true state plus Gaussian noise when a noise
    config is given), while the plant propagates the true state.  The
    reference defaults to zero, making this a regulation run.  Tracking
    errors are the Euclidean deviations of the position coordinates from
    the reference at every instant.
    """
    n, p, q = plant.N, plant.p, plant.q
    if gains.K.shape != (n, q, p):
        raise ValueError(f"gain schedule shape {gains.K.shape} does not match plant ({n}, {q}, {p})")
    ref = np.zeros((n + 1, p)) if reference is None else np.asarray(reference, dtype=np.float64)
    if ref.shape != (n + 1, p):
        raise ValueError(f"reference has shape {ref.shape}, expected ({n + 1}, {p})")
    x0 = ref[0] if x0 is None else np.asarray(x0, dtype=np.float64)
    if x0.shape != (p,):
        raise ValueError(f"initial state has shape {x0.shape}, expected ({p},)")

    meas_noise = None
    if noise is not None and noise.sigma > 0.0:
        meas_noise = np.random.default_rng(noise.seed).normal(0.0, noise.sigma, size=(n, p))

    a_seq, b_seq = plant.A_seq, plant.B_seq
    states = np.empty((n + 1, p))
    inputs = np.empty((n, q))
    states[0] = x0
    for k in range(n):
        measured = states[k] if meas_noise is None else states[k] + meas_noise[k]
        inputs[k] = -gains.K[k] @ (measured - ref[k])
        states[k + 1] = a_seq[k] @ states[k] + b_seq[k] @ inputs[k]
    pos = position_coordinates(p, position_mask)
    errors = np.linalg.norm(states[:, pos] - ref[:, pos], axis=1)
    return RolloutResult(states=states, inputs=inputs, tracking_errors=errors)


def tracking_stats(errors) -> TrackingStats:
    """Mean, population standard deviation, and sum of squares of an error sequence."""
    e = np.asarray(errors, dtype=np.float64)
    if e.ndim != 1 or e.size == 0:
        raise ValueError("tracking statistics need a nonempty error vector")
    return TrackingStats(
        mean=float(e.mean()),
        stddev=float(e.std()),
        sum_sq=float(np.sum(e * e)),
    )
