"""Bootstrap particle filter over a scalar state observed through projective
single-shot measurements.

Weights come solely from the likelihood of the latest outcome, followed by a
full multinomial resample back to uniform weights. Used to validate the
convergence machinery against the exact grid oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import (
    ConfigError,
    DegenerateWeightsError,
    WeightedEnsemble,
    multinomial_resample,
)
from .measurement import MeasurementModel, SignalMap, likelihood


@dataclass(frozen=True)
class TransitionKernel:
    """State transition applied before each weighting step.

    The static kernel (``apply is None``) is the identity on positions: a
    point mass at the current state, modeling a field that changes slowly
    relative to the measurement rate.
    """

    apply: Callable[[np.ndarray, np.random.Generator], np.ndarray] | None = None

    @property
    def static_flag(self) -> bool:
        return self.apply is None

    def propagate(self, positions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.apply is None:
            return positions
        return np.asarray(self.apply(positions, rng), dtype=float)


STATIC_KERNEL = TransitionKernel(apply=None)


@dataclass
class BootstrapState:
    """Filter state between iterations; weights are uniform 1/n after every
    step by construction."""

    ensemble: WeightedEnsemble
    model: MeasurementModel
    signal: SignalMap
    kernel: TransitionKernel
    t: int = 0
    degenerate_steps: int = 0


def init(
    prior_bounds: tuple[float, float],
    n: int,
    model: MeasurementModel,
    signal: SignalMap,
    rng: np.random.Generator,
    kernel: TransitionKernel = STATIC_KERNEL,
) -> BootstrapState:
    """Sample ``n`` positions i.i.d. uniform over the prior interval with
    uniform weights."""
    lo, hi = prior_bounds
    if n < 1:
        raise ConfigError("need at least one particle")
    if hi < lo:
        raise ConfigError("empty prior interval")
    positions = rng.uniform(lo, hi, size=n) if hi > lo else np.full(n, float(lo))
    ensemble = WeightedEnsemble(positions=positions, weights=np.full(n, 1.0 / n))
    return BootstrapState(ensemble=ensemble, model=model, signal=signal, kernel=kernel)


def step(state: BootstrapState, outcome: int, rng: np.random.Generator) -> BootstrapState:
    """One filter iteration: propagate, weight by the outcome likelihood,
    multinomial-resample back to n uniform-weight particles.

    Degenerate (all-zero) weights fall back to a uniform resample and bump
    the diagnostic counter.
    """
    n = state.ensemble.n
    positions = state.kernel.propagate(state.ensemble.positions, rng)
    s = state.signal.forward(positions)
    raw = likelihood(outcome, s, state.model)
    degenerate = 0
    try:
        outcome_draw = multinomial_resample(raw, n, rng)
    except DegenerateWeightsError:
        outcome_draw = multinomial_resample(np.full(n, 1.0 / n), n, rng)
        degenerate = 1
    new_positions = positions[outcome_draw.parent_indices]
    ensemble = WeightedEnsemble(
        positions=new_positions,
        weights=np.full(n, 1.0 / n),
        generation_index=state.t + 1,
    )
    return replace(
        state,
        ensemble=ensemble,
        t=state.t + 1,
        degenerate_steps=state.degenerate_steps + degenerate,
    )


def empirical_moments(state: BootstrapState) -> tuple[float, float]:
    """Weighted mean and weighted (population) variance of the ensemble."""
    w = state.ensemble.weights
    x = state.ensemble.positions
    mean = float(np.dot(w, x))
    var = float(np.dot(w, (x - mean) ** 2))
    return mean, var
