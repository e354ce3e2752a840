"""Particle containers, seeded randomness, the multinomial resampler, a
branching-statistics validator, and a dense-grid exact-Bayes oracle.

Everything here is measurement-model agnostic: ensembles are plain position
vectors with normalized weights, and the resampler only sees a probability
vector. Filters build on these primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

WEIGHT_SUM_TOL = 1e-12


class ConfigError(ValueError):
    """Invalid configuration (bad interval, length mismatch, oversized grid)."""


class DegenerateWeightsError(ValueError):
    """Every resampling weight is zero (or non-finite). Callers decide the
    fallback; silently uniformizing here would mask likelihood bugs."""


class ImpossibleObservationError(ValueError):
    """An observation carries zero likelihood mass over the whole grid."""


@dataclass(frozen=True)
class SeededRng:
    """Reproducible randomness handle: a 64-bit root seed plus a stream key.

    Identical (seed, stream_id) pairs produce bit-identical draw sequences on
    any platform (PCG64 seeded through SeedSequence spawn keys). Sub-streams
    for independent runs/repetitions/purposes are derived with :meth:`child`,
    so repetitions can execute in parallel yet stay individually reproducible.
    """

    seed: int
    stream_id: tuple[int, ...] = ()

    def child(self, *ids: int) -> "SeededRng":
        return SeededRng(self.seed, self.stream_id + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.PCG64(ss))


def normalize_weights(weights: np.ndarray) -> np.ndarray:
    """Return weights scaled to unit sum.

    Raises DegenerateWeightsError when the vector has no positive mass, and
    ValueError on negative or non-finite entries.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise ValueError("weights must be a non-empty 1-D vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0.0:
        raise DegenerateWeightsError("all weights are zero")
    return w / total


@dataclass
class WeightedEnsemble:
    """Positions with normalized weights at one filter generation."""

    positions: np.ndarray
    weights: np.ndarray
    generation_index: int = 0

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float)
        self.weights = normalize_weights(self.weights)
        if self.positions.shape[0] != self.weights.shape[0]:
            raise ConfigError("positions and weights must have equal length")

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def mean(self) -> float | np.ndarray:
        m = np.tensordot(self.weights, self.positions, axes=(0, 0))
        return float(m) if np.ndim(m) == 0 else m


@dataclass(frozen=True)
class ResampleOutcome:
    """One branching draw: per-parent offspring counts plus the chosen
    parent indices (a multiset, in index order)."""

    offspring_counts: np.ndarray
    parent_indices: np.ndarray

    def __post_init__(self) -> None:
        if int(self.offspring_counts.sum()) != self.parent_indices.shape[0]:
            raise ValueError("offspring counts do not match parent multiset")

    @property
    def n_offspring(self) -> int:
        return int(self.parent_indices.shape[0])


def multinomial_resample(
    weights: np.ndarray, n_target: int, rng: np.random.Generator
) -> ResampleOutcome:
    """Draw offspring counts as a single multinomial with ``n_target`` trials.

    Implementation is inverse-CDF over the cumulative weight vector with one
    sorted batch of uniforms: O(n log n) and deterministic given the stream.
    """
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    w = normalize_weights(weights)
    cum = np.cumsum(w)
    cum[-1] = 1.0  # guard fp round-off at the top of the CDF
    u = np.sort(rng.random(n_target))
    idx = np.searchsorted(cum, u, side="right")
    counts = np.bincount(idx, minlength=w.size)
    parents = np.repeat(np.arange(w.size), counts)
    return ResampleOutcome(offspring_counts=counts, parent_indices=parents)


@dataclass
class BranchingStats:
    """Empirical branching statistics over repeated resampling draws, with
    the three conformance verdicts (particle conservation, mean
    proportionality, covariance quadratic-form bound)."""

    empirical_mean_counts: np.ndarray
    empirical_covariance: np.ndarray
    trials: int
    conserves_number: bool
    mean_within_tolerance: bool
    covariance_bound_ok: bool
    max_mean_deviation_sigmas: float
    max_quadratic_form_ratio: float

    @property
    def passed(self) -> bool:
        return (
            self.conserves_number
            and self.mean_within_tolerance
            and self.covariance_bound_ok
        )


def validate_branching(
    weights: np.ndarray,
    n_target: int,
    trials: int,
    rng: np.random.Generator,
    resampler: Callable[[np.ndarray, int, np.random.Generator], ResampleOutcome]
    | None = None,
    n_probe_vectors: int = 100,
) -> BranchingStats:
    """Empirically check a resampler against the multinomial branching
    conditions.

    (a) every draw conserves particle number exactly;
    (b) empirical mean counts match n*G within 4 standard errors;
    (c) q^T A q <= n * (1 + 5/sqrt(trials)) for random probe vectors q with
        entries in (-1, 1), A being the empirical covariance about n*G.

    The covariance slack reflects that the unit bound only holds in
    expectation; the verdict is carried in the returned stats, never raised.
    """
    if trials < 10_000:
        raise ValueError("need at least 1e4 trials for stable verdicts")
    resampler = multinomial_resample if resampler is None else resampler
    w = normalize_weights(weights)
    n_cat = w.size

    counts = np.empty((trials, n_cat), dtype=float)
    conserves = True
    for t in range(trials):
        out = resampler(w, n_target, rng)
        if out.offspring_counts.sum() != n_target:
            conserves = False
        counts[t] = out.offspring_counts

    target_mean = n_target * w
    mean_counts = counts.mean(axis=0)
    se = np.sqrt(n_target * w * (1.0 - w) / trials)
    dev = np.abs(mean_counts - target_mean)
    # zero-variance categories (G in {0, 1}) must match exactly
    sigmas = np.where(se > 0.0, dev / np.where(se > 0.0, se, 1.0), np.where(dev > 0, np.inf, 0.0))
    mean_ok = bool(np.all(sigmas <= 4.0))

    centered = counts - target_mean
    cov = centered.T @ centered / trials

    bound = n_target * (1.0 + 5.0 / np.sqrt(trials))
    probes = rng.uniform(-1.0, 1.0, size=(n_probe_vectors, n_cat))
    qforms = np.einsum("ki,ij,kj->k", probes, cov, probes)
    cov_ok = bool(np.all(qforms <= bound))

    return BranchingStats(
        empirical_mean_counts=mean_counts,
        empirical_covariance=cov,
        trials=trials,
        conserves_number=conserves,
        mean_within_tolerance=mean_ok,
        covariance_bound_ok=cov_ok,
        max_mean_deviation_sigmas=float(sigmas.max()),
        max_quadratic_form_ratio=float(qforms.max() / bound),
    )


def grid_bayes_oracle(
    prior: np.ndarray,
    likelihood_per_cell: Callable[[int], np.ndarray],
    observations: Sequence[int],
) -> np.ndarray:
    """Exact discrete Bayes recursion on a fixed 1-D grid (static state).

    ``likelihood_per_cell(y)`` must return the per-cell likelihood vector of
    outcome ``y``; callers close over their grid of cell values. Used as
    ground truth for particle-filter convergence tests, so the grid is kept
    small (<= 1e4 cells).
    """
    post = np.array(prior, dtype=float, copy=True)
    if post.ndim != 1 or post.size < 1:
        raise ConfigError("prior must be a non-empty 1-D probability vector")
    if post.size > 10_000:
        raise ConfigError("grid larger than 1e4 cells")
    if abs(post.sum() - 1.0) > 1e-9:
        raise ConfigError("prior must sum to 1")
    for step, y in enumerate(observations):
        lik = np.asarray(likelihood_per_cell(int(y)), dtype=float)
        if lik.shape != post.shape:
            raise ConfigError("likelihood vector does not match the grid")
        post = post * lik
        total = post.sum()
        if total <= 0.0 or not np.isfinite(total):
            raise ImpossibleObservationError(
                f"zero likelihood mass at step {step} (outcome {y})"
            )
        post /= total
    return post


def truncated_normal(
    mean,
    std,
    lower: float,
    upper: float,
    rng: np.random.Generator,
    size=None,
):
    """Sample a Gaussian truncated to [lower, upper] by inverse CDF.

    ``mean``/``std`` broadcast against ``size``; ``std == 0`` degenerates to
    the clamped mean. Robust whenever the mean lies inside (or at) the
    bounds, which is how the filter uses it.
    """
    if upper < lower:
        raise ValueError("upper bound below lower bound")
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0.0):
        raise ValueError("std must be non-negative")
    if size is None:
        size = np.broadcast_shapes(mean.shape, std.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo_q = ndtr(np.where(std > 0, (lower - mean) / np.where(std > 0, std, 1.0), -np.inf))
        hi_q = ndtr(np.where(std > 0, (upper - mean) / np.where(std > 0, std, 1.0), np.inf))
    u = rng.random(size)
    q = lo_q + u * (hi_q - lo_q)
    with np.errstate(divide="ignore", invalid="ignore"):
        draws = mean + std * ndtri(q)
    clamped = np.clip(mean, lower, upper)
    out = np.where((std > 0) & (hi_q > lo_q), np.clip(draws, lower, upper), clamped)
    if np.ndim(out) == 0:
        return float(out)
    return out
