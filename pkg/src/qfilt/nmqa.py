"""Adaptive two-layer particle filter with neighborhood information sharing.

Each map particle carries a full hypothesis [f, r]: a phase value and a
sharing radius per qubit. On every iteration one qubit is measured; a layer
of radius subparticles is drawn at that site, every (particle, subparticle)
pair is scored by the physical-readout likelihood times a neighborhood
consistency score, and two multinomial resampling stages collapse the pair
population back to the particle population. The spread of surviving radius
candidates (a Fano factor) schedules the next measurement, and simulated
readouts of the smeared posterior map are broadcast to the measured site's
neighbors as data messages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erf

from .core import (
    ConfigError,
    DegenerateWeightsError,
    multinomial_resample,
    normalize_weights,
    truncated_normal,
)
from .measurement import (
    MeasurementModel,
    RAMSEY_SIGNAL,
    SignalMap,
    likelihood,
    sample_outcome,
)
from .simworld import Geometry


class BetaStrategy(str, Enum):
    """How the radius subparticle layer is regenerated each iteration."""

    UNIFORM = "uniform"
    TRUNC_GAUSS = "trunc_gauss"


@dataclass(frozen=True)
class NmqaConfig:
    """Filter parameters.

    ``n_beta`` defaults to round(2/3 * n_alpha). ``r_bounds`` defaults to
    (minimum pairwise qubit separation, r_max_multiple * maximum pairwise
    separation), derived from the geometry at filter construction.
    """

    lambda1: float
    lambda2: float
    sigma_v: float
    sigma_f: float
    n_alpha: int
    n_beta: int | None = None
    mu_f: float = 0.0
    k0: float = 1.0
    beta_strategy: BetaStrategy = BetaStrategy.TRUNC_GAUSS
    r_bounds: tuple[float, float] | None = None
    r_max_multiple: float = 3.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.lambda1 <= 1.0 and 0.0 <= self.lambda2 <= 1.0):
            raise ConfigError("lambda1 and lambda2 must lie in [0, 1]")
        if self.sigma_v < 0.0:
            raise ConfigError("sigma_v must be non-negative")
        if self.sigma_f <= 0.0:
            raise ConfigError("sigma_f must be positive")
        if self.n_alpha < 1:
            raise ConfigError("need at least one map particle")
        if self.n_beta is not None and self.n_beta < 1:
            raise ConfigError("need at least one radius subparticle")
        if self.k0 < 1.0:
            raise ConfigError("k0 must be >= 1")
        if self.r_bounds is not None and self.r_bounds[1] < self.r_bounds[0]:
            raise ConfigError("empty radius interval")
        object.__setattr__(self, "beta_strategy", BetaStrategy(self.beta_strategy))

    @property
    def effective_n_beta(self) -> int:
        if self.n_beta is not None:
            return self.n_beta
        return max(1, round(2.0 * self.n_alpha / 3.0))


@dataclass
class SharedDataState:
    """Per-site counters and per-(particle, site) running statistics.

    ``tau``/``phi`` count physical measurements / received data messages per
    site. ``kappa``/``gamma`` (shape (n_alpha, d)) hold the running means of
    those bit streams; before any data arrives at a site they hold the
    initial per-particle statistic (a simulated readout of the particle's
    prior map value).
    """

    tau: np.ndarray
    phi: np.ndarray
    kappa: np.ndarray
    gamma: np.ndarray

    def copy(self) -> "SharedDataState":
        return SharedDataState(
            tau=self.tau.copy(),
            phi=self.phi.copy(),
            kappa=self.kappa.copy(),
            gamma=self.gamma.copy(),
        )

    def select_particles(self, parents: np.ndarray) -> "SharedDataState":
        return SharedDataState(
            tau=self.tau.copy(),
            phi=self.phi.copy(),
            kappa=self.kappa[parents],
            gamma=self.gamma[parents],
        )


def init_shared_state(
    f0: np.ndarray, signal: SignalMap, rng: np.random.Generator
) -> SharedDataState:
    """Zero counts everywhere; per-particle statistics seeded with one
    simulated readout of each particle's prior map value."""
    f0 = np.atleast_2d(np.asarray(f0, dtype=float))
    prob = 0.5 + signal.forward(f0)
    kappa0 = (rng.random(f0.shape) < prob).astype(float)
    d = f0.shape[1]
    return SharedDataState(
        tau=np.zeros(d, dtype=int),
        phi=np.zeros(d, dtype=int),
        kappa=kappa0,
        gamma=kappa0.copy(),
    )


def update_counts_and_stats(
    shared: SharedDataState, location: int, bit: int, message: bool
) -> SharedDataState:
    """Fold one event into the statistics: a physical measurement
    (``message=False``, updates tau/kappa at the site) or a received data
    message (``message=True``, updates phi/gamma). The running means carry
    uniform weights, i.e. they are plain empirical means of the bits seen at
    that site; the first bit replaces the initial per-particle statistic.
    """
    out = shared.copy()
    counts = out.phi if message else out.tau
    stats = out.gamma if message else out.kappa
    counts[location] += 1
    c = counts[location]
    if c == 1:
        stats[:, location] = float(bit)
    else:
        stats[:, location] += (float(bit) - stats[:, location]) / c
    return out


def record_measurement(shared: SharedDataState, j: int, y: int) -> SharedDataState:
    return update_counts_and_stats(shared, j, y, message=False)


def record_message(shared: SharedDataState, q: int, y_hat: int) -> SharedDataState:
    return update_counts_and_stats(shared, q, y_hat, message=True)


def neighborhood(j: int, radius: float, geometry: Geometry, k0: float = 1.0) -> np.ndarray:
    """Indices q != j strictly within distance k0 * radius of site j."""
    if radius <= 0.0:
        return np.empty(0, dtype=int)
    dist = geometry.pairwise_distances[j]
    mask = dist < k0 * radius
    mask[j] = False
    return np.flatnonzero(mask)


def _smear(nu, radius):
    """Gaussian distance decay exp(-nu^2 / (2 r^2)); a zero radius collapses
    to an indicator at nu == 0."""
    nu = np.asarray(nu, dtype=float)
    radius = np.asarray(radius, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            radius > 0.0,
            np.exp(-0.5 * (nu / np.where(radius > 0.0, radius, 1.0)) ** 2),
            np.where(nu == 0.0, 1.0, 0.0),
        )
    return out


def chi(f_q, f_j, r_candidate, nu, lambda2: float, tau_q):
    """Field estimate at a neighbor: a convex blend of the standing estimate
    there with the measured site's estimate decayed over the separation.

    The blend weight lambda2**tau_q fades as the neighbor accumulates its own
    measurements (0**0 == 1, so a site with no data takes the full shared
    term).
    """
    w = np.power(float(lambda2), np.asarray(tau_q, dtype=float))
    out = (1.0 - w) * np.asarray(f_q, dtype=float) + w * np.asarray(f_j, dtype=float) * _smear(
        nu, r_candidate
    )
    return float(out) if np.ndim(out) == 0 else out


def data_association_H(lambda1: float, tau, phi, kappa, gamma):
    """Blended data statistic in [0, 1].

    Sites with both data kinds blend kappa and gamma with message weight
    lambda1**tau / 2; sites with only one kind use that one; silent sites
    fall back to the initial per-particle statistic stored in kappa.
    """
    tau = np.asarray(tau)
    phi = np.asarray(phi)
    kappa = np.asarray(kappa, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    blend = 0.5 * np.power(float(lambda1), tau.astype(float))
    both = (1.0 - blend) * kappa + blend * gamma
    out = np.where(tau > 0, np.where(phi > 0, both, kappa), np.where(phi > 0, gamma, kappa))
    return float(out) if np.ndim(out) == 0 else out


def map_estimate_h(H_value, signal: SignalMap = RAMSEY_SIGNAL):
    """Map value implied by a data statistic: the inverse signal map applied
    to H - 1/2 (for the Ramsey map, arccos(2H - 1)); out-of-range statistics
    are clamped by the inverse map."""
    return signal.inverse(np.asarray(H_value, dtype=float) - 0.5)


def compute_k1(mu_f: float, sigma_f: float, f_max: float = math.pi) -> float:
    """Normalization constant of the neighborhood consistency factor:
    (erf((f_max + mu)/sqrt(2*S)) + erf((f_max - mu)/sqrt(2*S))) / 2."""
    if sigma_f <= 0.0:
        raise ConfigError("sigma_f must be positive")
    root = math.sqrt(2.0 * sigma_f)
    return 0.5 * float(erf((f_max + mu_f) / root) + erf((f_max - mu_f) / root))


def score_g1(outcome: int, h_value, model: MeasurementModel, signal: SignalMap = RAMSEY_SIGNAL):
    """Particle weight from the physical readout: the quantized likelihood
    evaluated at the particle's current map estimate for the measured site."""
    return likelihood(outcome, signal.forward(h_value), model)


def score_g2(
    h_j: float,
    h_neighbors: np.ndarray,
    nu_neighbors: np.ndarray,
    tau_neighbors: np.ndarray,
    r_candidate: float,
    lambda2: float,
    mu_f: float,
    sigma_f: float,
    k1: float | None = None,
) -> float:
    """Neighborhood consistency score of one radius candidate: the product
    over the candidate's neighbors of truncated-Gaussian factors comparing
    each neighbor's standing estimate with the blended/smeared estimate.

    An empty neighborhood scores exactly 1 (empty product).
    """
    h_neighbors = np.asarray(h_neighbors, dtype=float)
    if h_neighbors.size == 0:
        return 1.0
    if k1 is None:
        k1 = compute_k1(mu_f, sigma_f)
    chi_q = chi(h_neighbors, h_j, r_candidate, nu_neighbors, lambda2, tau_neighbors)
    resid = h_neighbors - chi_q - mu_f
    with np.errstate(under="ignore"):
        factors = np.exp(-0.5 * resid**2 / sigma_f) / k1
    return float(np.prod(factors))


@dataclass(frozen=True, eq=False)
class BetaLayer:
    """Radius candidates at the measured site: shape (..., n_beta), one row
    of samples per parent particle."""

    samples: np.ndarray


def generate_beta(
    strategy: BetaStrategy,
    r_bar,
    c_prev: float | None,
    r_bounds: tuple[float, float],
    n_beta: int,
    rng: np.random.Generator,
) -> BetaLayer:
    """Draw the radius subparticle layer.

    UNIFORM resets candidates to the prior (i.i.d. uniform over the radius
    interval) regardless of history. TRUNC_GAUSS draws from a Gaussian at
    the parent's propagated radius with variance r_bar * c_prev, truncated
    to the interval; when no Fano record exists yet (``c_prev`` None/NaN) it
    falls back to the uniform draw.
    """
    lo, hi = r_bounds
    if hi < lo:
        raise ConfigError("empty radius interval")
    strategy = BetaStrategy(strategy)
    r_bar = np.asarray(r_bar, dtype=float)
    shape = r_bar.shape + (n_beta,) if r_bar.ndim else (n_beta,)
    no_fano = c_prev is None or (isinstance(c_prev, float) and math.isnan(c_prev))
    if strategy is BetaStrategy.UNIFORM or no_fano:
        return BetaLayer(samples=rng.uniform(lo, hi, size=shape))
    c_prev = float(c_prev)
    if c_prev < 0.0:
        raise ConfigError("Fano record must be non-negative")
    mean = np.clip(r_bar, lo, hi)[..., None] if r_bar.ndim else np.clip(r_bar, lo, hi)
    std = np.sqrt(np.maximum(mean * c_prev, 0.0))
    samples = truncated_normal(mean, std, lo, hi, rng, size=shape)
    return BetaLayer(samples=np.asarray(samples, dtype=float).reshape(shape))


@dataclass(frozen=True, eq=False)
class TwoStageOutcome:
    """Both resampling stages of one iteration: pair offspring counts,
    regrouped parent weights, and the final parent selection."""

    beta_counts: np.ndarray
    omega: np.ndarray
    alpha_counts: np.ndarray
    alpha_parents: np.ndarray
    degenerate: bool


def two_stage_resample(
    pair_weights: np.ndarray, rng: np.random.Generator
) -> TwoStageOutcome:
    """Resample the (particle, subparticle) pair population, regroup the
    surviving counts into per-parent weights, then resample parents.

    Stage one draws N1 = n_alpha*n_beta offspring over the pairs (the pair
    population is conserved so the survivor statistics stay well defined);
    stage two draws N2 = n_alpha parents with weights
    omega_a = (survivors of parent a) / N1. Degenerate all-zero weights fall
    back to a uniform stage-one draw and set the flag.
    """
    W = np.asarray(pair_weights, dtype=float)
    if W.ndim != 2:
        raise ValueError("pair weights must have shape (n_alpha, n_beta)")
    n_alpha, n_beta = W.shape
    n1 = n_alpha * n_beta
    degenerate = False
    try:
        flat = normalize_weights(W.reshape(-1))
    except DegenerateWeightsError:
        flat = np.full(n1, 1.0 / n1)
        degenerate = True
    stage1 = multinomial_resample(flat, n1, rng)
    beta_counts = stage1.offspring_counts.reshape(n_alpha, n_beta)
    eta = beta_counts.sum(axis=1)
    omega = eta / n1
    stage2 = multinomial_resample(omega, n_alpha, rng)
    return TwoStageOutcome(
        beta_counts=beta_counts,
        omega=omega,
        alpha_counts=stage2.offspring_counts,
        alpha_parents=stage2.parent_indices,
        degenerate=degenerate,
    )


def survivor_stats(
    beta_samples: np.ndarray, beta_counts: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Count-weighted survivor mean and population variance per parent.

    Parents whose subparticles all died return NaN stats and False in the
    alive mask; they carry zero weight into stage two, so their entries are
    never consumed.
    """
    samples = np.asarray(beta_samples, dtype=float)
    counts = np.asarray(beta_counts, dtype=float)
    eta = counts.sum(axis=1)
    alive = eta > 0
    safe = np.where(alive, eta, 1.0)
    mean = (counts * samples).sum(axis=1) / safe
    ex2 = (counts * samples**2).sum(axis=1) / safe
    var = np.maximum(ex2 - mean**2, 0.0)
    mean = np.where(alive, mean, np.nan)
    var = np.where(alive, var, np.nan)
    return mean, var, alive


def location_fano(means: np.ndarray, variances: np.ndarray, alive: np.ndarray) -> float:
    """Expected Fano factor at the measured site: the plain mean over
    surviving parents of (survivor variance) / (survivor mean)."""
    if not np.any(alive):
        return float("nan")
    return float(np.mean(variances[alive] / means[alive]))


@dataclass(frozen=True, eq=False)
class ControlRecord:
    """Per-site Fano record and the scheduled next measurement site."""

    fano: np.ndarray
    next_location: int


def choose_next_location(fano_values: np.ndarray) -> int:
    """Argmax of the Fano record; sites never measured (NaN) take infinite
    priority, and ties break to the lowest index."""
    priority = np.where(np.isnan(fano_values), np.inf, fano_values)
    return int(np.argmax(priority))


def fano_and_control(
    fano_values: np.ndarray,
    j: int,
    beta_samples: np.ndarray,
    beta_counts: np.ndarray,
) -> ControlRecord:
    """Fold the measured site's new Fano factor into the record and schedule
    the next measurement."""
    means, variances, alive = survivor_stats(beta_samples, beta_counts)
    fano = np.array(fano_values, dtype=float, copy=True)
    fano[j] = location_fano(means, variances, alive)
    return ControlRecord(fano=fano, next_location=choose_next_location(fano))


def emit_data_messages(
    f_mean: np.ndarray,
    r_mean_j: float,
    j: int,
    geometry: Geometry,
    tau: np.ndarray,
    lambda2: float,
    k0: float,
    signal: SignalMap,
    rng: np.random.Generator,
) -> list[tuple[int, int]]:
    """Simulated readouts of the smeared posterior-mean map, one per site in
    the posterior neighborhood of the measured site."""
    messages: list[tuple[int, int]] = []
    for q in neighborhood(j, r_mean_j, geometry, k0):
        x = chi(
            f_mean[q],
            f_mean[j],
            r_mean_j,
            geometry.pairwise_distances[j, q],
            lambda2,
            tau[q],
        )
        p = min(max(signal.forward(x) + 0.5, 0.0), 1.0)
        messages.append((int(q), sample_outcome(p, rng)))
    return messages


class NmqaFilter:
    """One adaptive filter trajectory over a fixed qubit geometry.

    A trajectory is strictly sequential (the Fano-driven control step closes
    a feedback loop); independent trajectories run in parallel with isolated
    RNG streams. The harness drives it as::

        filt = NmqaFilter(config, geometry, rng)
        j = filt.next_location
        filt.step(outcome_at_j, j)
    """

    def __init__(
        self,
        config: NmqaConfig,
        geometry: Geometry,
        rng: np.random.Generator,
        signal: SignalMap = RAMSEY_SIGNAL,
        model: MeasurementModel | None = None,
    ) -> None:
        self.config = config
        self.geometry = geometry
        self.signal = signal
        self.model = MeasurementModel(sigma_v=config.sigma_v) if model is None else model
        self.rng = rng
        self.n_alpha = config.n_alpha
        self.n_beta = config.effective_n_beta
        if config.r_bounds is not None:
            self.r_bounds = (float(config.r_bounds[0]), float(config.r_bounds[1]))
        else:
            self.r_bounds = (
                geometry.min_separation(),
                config.r_max_multiple * geometry.max_separation(),
            )
        if not (0.0 < self.r_bounds[0] <= self.r_bounds[1]):
            raise ConfigError(f"bad radius interval {self.r_bounds}")
        self.k1 = compute_k1(config.mu_f, config.sigma_f, f_max=signal.domain[1])

        d = geometry.d
        f_lo, f_hi = signal.domain
        self.f = rng.uniform(f_lo, f_hi, size=(self.n_alpha, d))
        self.r = rng.uniform(self.r_bounds[0], self.r_bounds[1], size=(self.n_alpha, d))
        self.shared = init_shared_state(self.f, signal, rng)
        self.fano = np.full(d, np.nan)
        self.next_location = choose_next_location(self.fano)
        self.t = 0
        self.last_location: int | None = None
        self.degenerate_steps = 0

    # -- derived quantities -------------------------------------------------

    def h_matrix(self) -> np.ndarray:
        """Current per-particle map estimates h for every site,
        shape (n_alpha, d)."""
        H = data_association_H(
            self.config.lambda1,
            self.shared.tau[None, :],
            self.shared.phi[None, :],
            self.shared.kappa,
            self.shared.gamma,
        )
        return map_estimate_h(H, self.signal)

    @property
    def posterior_f_mean(self) -> np.ndarray:
        return self.f.mean(axis=0)

    @property
    def posterior_r_mean(self) -> np.ndarray:
        return self.r.mean(axis=0)

    def _refresh_f(self, k: int) -> None:
        # the particle's map entry tracks the data statistic once a site
        # holds any data
        H = data_association_H(
            self.config.lambda1,
            self.shared.tau[k],
            self.shared.phi[k],
            self.shared.kappa[:, k],
            self.shared.gamma[:, k],
        )
        self.f[:, k] = map_estimate_h(H, self.signal)

    def _pair_scores(self, h_all: np.ndarray, beta: np.ndarray, j: int) -> np.ndarray:
        """Vectorized neighborhood consistency scores for every
        (particle, subparticle) pair; one column per candidate.

        Scores are absolute consistency likelihoods in linear space. Under a
        tightly tuned consistency spread an entire generation can score
        zero; that is the documented degenerate-weights regime, resolved by
        the uniform-resample fallback (not by rescaling), so that candidate
        selection only acts when some candidate is genuinely consistent.
        """
        cfg = self.config
        nu = self.geometry.pairwise_distances[j]
        mask = nu[None, None, :] < cfg.k0 * beta[:, :, None]
        mask[:, :, j] = False
        w2 = np.power(cfg.lambda2, self.shared.tau.astype(float))
        smear = _smear(nu[None, None, :], beta[:, :, None])
        resid = w2[None, None, :] * (h_all[:, None, :] - h_all[:, j, None, None] * smear)
        resid = resid - cfg.mu_f
        with np.errstate(under="ignore"):
            factors = np.exp(-0.5 * resid**2 / cfg.sigma_f) / self.k1
        return np.prod(np.where(mask, factors, 1.0), axis=2)

    # -- one iteration ------------------------------------------------------

    def step(self, outcome: int, location: int | None = None) -> "NmqaFilter":
        """Advance the trajectory by one physical measurement.

        ``location`` defaults to the scheduled site. Order: fold the
        measurement into the statistics, regenerate the radius layer, score
        all pairs, run both resampling stages, collapse the subparticle
        layer into radius estimates and the Fano record, schedule the next
        site, then broadcast data messages to the posterior neighborhood.
        """
        cfg = self.config
        j = self.next_location if location is None else int(location)
        if not 0 <= j < self.geometry.d:
            raise ConfigError(f"location {j} outside the array")

        self.shared = record_measurement(self.shared, j, outcome)
        self._refresh_f(j)

        c_prev = float(self.fano[j])
        beta = generate_beta(
            cfg.beta_strategy,
            self.r[:, j],
            None if math.isnan(c_prev) else c_prev,
            self.r_bounds,
            self.n_beta,
            self.rng,
        ).samples

        h_all = self.h_matrix()
        g1 = score_g1(outcome, h_all[:, j], self.model, self.signal)
        pair_weights = np.asarray(g1)[:, None] * self._pair_scores(h_all, beta, j)

        outcome_draw = two_stage_resample(pair_weights, self.rng)
        if outcome_draw.degenerate:
            self.degenerate_steps += 1

        means, variances, alive = survivor_stats(beta, outcome_draw.beta_counts)
        self.r[alive, j] = np.clip(means[alive], self.r_bounds[0], self.r_bounds[1])
        self.fano = self.fano.copy()
        self.fano[j] = location_fano(means, variances, alive)

        parents = outcome_draw.alpha_parents
        self.f = self.f[parents]
        self.r = self.r[parents]
        self.shared = self.shared.select_particles(parents)

        self.next_location = choose_next_location(self.fano)

        f_mean = self.posterior_f_mean
        r_mean_j = float(self.r[:, j].mean())
        for q, y_hat in emit_data_messages(
            f_mean,
            r_mean_j,
            j,
            self.geometry,
            self.shared.tau,
            cfg.lambda2,
            cfg.k0,
            self.signal,
            self.rng,
        ):
            self.shared = record_message(self.shared, q, y_hat)
            self._refresh_f(q)

        self.t += 1
        self.last_location = j
        return self
