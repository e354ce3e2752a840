"""Amplitude-quantized projective readout: the likelihood contrast rho0, the
two-outcome likelihood, single-shot Bernoulli sampling, and the Ramsey signal
map with its inverse.

A single-shot readout observes a continuous Born probability through a 1-bit
quantizer. Modeling the induced uncertainty as a zero-mean Gaussian convolved
with a uniform window of half-width b, integrated over the window, collapses
the whole effect into one scalar rho0 that simply rescales the ideal
likelihood.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import erf

from .core import ConfigError


class InvalidModelError(ConfigError):
    """Measurement-model parameters outside their valid domain."""


class ModelFailureWarning(UserWarning):
    """Quantization noise so large (b <= 3*sigma_v) that the readout discards
    most of the amplitude information; inference may fail."""


class SignalRangeWarning(UserWarning):
    """A value handed to the inverse signal map lies outside [-1/2, 1/2]
    beyond tolerance; it was clamped."""


def compute_rho0(bound_b: float, sigma_v: float) -> float:
    """Likelihood contrast of the quantized readout.

    Closed form: erf(u) + (exp(-u^2) - 1) / (u * sqrt(pi)) with
    u = 2b / sqrt(2*sigma_v). The zero-noise limit is exactly 1 (ideal
    single-shot Born statistics); the infinite-noise limit is 0 (no
    inference possible).
    """
    if bound_b <= 0.0:
        raise InvalidModelError("quantization bound must be positive")
    if sigma_v < 0.0:
        raise InvalidModelError("noise variance must be non-negative")
    if sigma_v == 0.0:
        return 1.0
    u = 2.0 * bound_b / math.sqrt(2.0 * sigma_v)
    return float(erf(u) + (math.exp(-u * u) - 1.0) / (u * math.sqrt(math.pi)))


def rho0_reference_quadrature(bound_b: float, sigma_v: float) -> float:
    """rho0 by adaptive quadrature, with no special functions on the route.

    The Gaussian(0, sigma_v) * Uniform(-b, b) convolution integrated over the
    quantizer window [-b, b] reduces, by the substitution z = (v - w)/sigma,
    to the integral of phi(z) * max(0, 1 - sigma*|z|/(2b)) over the real
    line. That 1-D integrand is evaluated numerically; this is the oracle
    the closed form is validated against.
    """
    if bound_b <= 0.0:
        raise InvalidModelError("quantization bound must be positive")
    if sigma_v < 0.0:
        raise InvalidModelError("noise variance must be non-negative")
    if sigma_v == 0.0:
        return 1.0
    sigma = math.sqrt(sigma_v)

    def integrand(z: float) -> float:
        overlap = 1.0 - sigma * z / (2.0 * bound_b)
        if overlap <= 0.0:
            return 0.0
        return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) * overlap

    z_top = min(2.0 * bound_b / sigma, 40.0)
    value, _ = integrate.quad(integrand, 0.0, z_top, epsabs=1e-13, epsrel=1e-13, limit=200)
    return 2.0 * value


@dataclass(frozen=True)
class MeasurementModel:
    """Quantized-readout model: noise variance, symmetric bound, cached rho0.

    Asymmetric windows are rejected at construction; only the symmetric case
    is supported.
    """

    sigma_v: float
    bound_b: float = 0.5
    bound_a: float | None = None
    rho0: float = field(init=False)

    def __post_init__(self) -> None:
        if self.bound_a is not None and not math.isclose(
            self.bound_a, self.bound_b, rel_tol=1e-12, abs_tol=1e-15
        ):
            raise InvalidModelError("asymmetric quantization bounds are not supported")
        rho0 = compute_rho0(self.bound_b, self.sigma_v)
        if self.bound_b <= 3.0 * self.sigma_v:
            warnings.warn(
                f"quantization bound b={self.bound_b} <= 3*sigma_v={3.0 * self.sigma_v}: "
                "amplitude information is being discarded",
                ModelFailureWarning,
                stacklevel=2,
            )
        object.__setattr__(self, "rho0", rho0)


def likelihood(outcome: int, s_value, model: MeasurementModel):
    """Two-outcome likelihood g(y | s) = rho0/2 + rho0*s for y=1 and
    rho0/2 - rho0*s for y=0.

    The two branches sum to rho0 identically, and g(1, s) increases in s
    with slope exactly rho0. Accepts scalar or array s in [-1/2, 1/2].
    """
    if outcome not in (0, 1):
        raise ValueError("outcome must be the bit 0 or 1")
    s = np.asarray(s_value, dtype=float)
    if np.any(np.abs(s) > 0.5 + 1e-9):
        raise ValueError("signal value outside [-1/2, 1/2]")
    sign = 1.0 if outcome == 1 else -1.0
    g = 0.5 * model.rho0 + sign * model.rho0 * s
    return float(g) if np.ndim(g) == 0 else g


def sample_outcome(born_probability: float, rng: np.random.Generator) -> int:
    """One projective shot: a Bernoulli bit at the given probability
    (clamped into [0, 1])."""
    p = min(max(float(born_probability), 0.0), 1.0)
    return int(rng.random() < p)


def ramsey_forward(f):
    """Signal of a relative-phase Ramsey readout: s(F) = cos(F)/2."""
    s = 0.5 * np.cos(np.asarray(f, dtype=float))
    return float(s) if np.ndim(s) == 0 else s


def ramsey_inverse(z):
    """Invert the Ramsey signal: arccos(2z), clamping the argument to
    [-1, 1]. Inputs beyond [-1/2, 1/2] by more than 1e-9 raise a
    SignalRangeWarning before clamping."""
    arr = np.asarray(z, dtype=float)
    if np.any(np.abs(arr) > 0.5 + 1e-9):
        warnings.warn(
            "inverse signal input outside [-1/2, 1/2]; clamping",
            SignalRangeWarning,
            stacklevel=2,
        )
    f = np.arccos(np.clip(2.0 * arr, -1.0, 1.0))
    return float(f) if np.ndim(f) == 0 else f


@dataclass(frozen=True)
class SignalMap:
    """A bounded signal map F -> s(F) in [-1/2, 1/2] with its inverse and
    closed domain."""

    forward: Callable
    inverse: Callable
    domain: tuple[float, float]


RAMSEY_SIGNAL = SignalMap(forward=ramsey_forward, inverse=ramsey_inverse, domain=(0.0, math.pi))
