"""Simulation ground truth: qubit lattices, the built-in dephasing-field
families, and the oracle that converts a true field into single-shot
outcomes.

Fields are static over a run (the filters assume a static transition kernel)
and span phase values between 0.25*pi and 0.75*pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError
from .measurement import MeasurementModel, sample_outcome

FIELD_LOW = 0.25 * math.pi
FIELD_HIGH = 0.75 * math.pi

GEOMETRY_KINDS = ("chain_1d", "grid_2d")
FIELD_KINDS = ("linear_1d", "square_2d", "gaussian_2d")


@dataclass(frozen=True, eq=False)
class Geometry:
    """Qubit coordinates (embedded in the plane) and pairwise distances."""

    kind: str
    coordinates: np.ndarray
    spacing: float
    pairwise_distances: np.ndarray

    @property
    def d(self) -> int:
        return self.coordinates.shape[0]

    def min_separation(self) -> float:
        if self.d < 2:
            return self.spacing
        off = self.pairwise_distances[~np.eye(self.d, dtype=bool)]
        return float(off.min())

    def max_separation(self) -> float:
        if self.d < 2:
            return self.spacing
        return float(self.pairwise_distances.max())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "spacing": self.spacing,
            "coordinates": self.coordinates.tolist(),
        }


@dataclass(frozen=True, eq=False)
class TrueField:
    """Ground-truth phase value per qubit, in radians."""

    kind: str
    values: np.ndarray

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "values": self.values.tolist()}


def make_geometry(kind: str, d: int, spacing: float = 1.0) -> Geometry:
    """Regular lattice of ``d`` qubits: a 1-D chain or a square 2-D grid
    (``d`` must then be a perfect square)."""
    if d < 1:
        raise ConfigError("need at least one qubit")
    if spacing <= 0:
        raise ConfigError("spacing must be positive")
    if kind == "chain_1d":
        coords = np.column_stack([np.arange(d) * spacing, np.zeros(d)])
    elif kind == "grid_2d":
        m = math.isqrt(d)
        if m * m != d:
            raise ConfigError(f"grid_2d needs a perfect-square qubit count, got {d}")
        rows, cols = np.divmod(np.arange(d), m)
        coords = np.column_stack([cols * spacing, rows * spacing])
    else:
        raise ConfigError(f"unknown geometry kind {kind!r}")
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    return Geometry(kind=kind, coordinates=coords, spacing=spacing, pairwise_distances=dist)


def make_field(kind: str, geometry: Geometry) -> TrueField:
    """One of the built-in field families over the given lattice.

    linear_1d: ramp from 0.25*pi to 0.75*pi along a chain.
    square_2d: centered high block (side ceil(m/2)) on a low background.
    gaussian_2d: radial bump peaking at 0.75*pi over a 0.25*pi floor, width
    set to half the array half-width.
    """
    d = geometry.d
    if kind == "linear_1d":
        if geometry.kind != "chain_1d":
            raise ConfigError("linear_1d requires a chain_1d geometry")
        values = np.linspace(FIELD_LOW, FIELD_HIGH, d)
    elif kind == "square_2d":
        if geometry.kind != "grid_2d":
            raise ConfigError("square_2d requires a grid_2d geometry")
        m = math.isqrt(d)
        side = math.ceil(m / 2)
        start = (m - side) // 2
        rows, cols = np.divmod(np.arange(d), m)
        inside = (
            (rows >= start) & (rows < start + side) & (cols >= start) & (cols < start + side)
        )
        values = np.where(inside, FIELD_HIGH, FIELD_LOW)
    elif kind == "gaussian_2d":
        if geometry.kind != "grid_2d":
            raise ConfigError("gaussian_2d requires a grid_2d geometry")
        center = geometry.coordinates.mean(axis=0)
        r2 = ((geometry.coordinates - center) ** 2).sum(axis=1)
        m = math.isqrt(d)
        width = (m - 1) * geometry.spacing / 4.0
        if width <= 0:
            values = np.full(d, FIELD_HIGH)
        else:
            values = FIELD_LOW + (FIELD_HIGH - FIELD_LOW) * np.exp(-0.5 * r2 / width**2)
    else:
        raise ConfigError(f"unknown field kind {kind!r}")
    return TrueField(kind=kind, values=values.astype(float))


def oracle_measure(
    field: TrueField,
    j: int,
    model: MeasurementModel,
    noise_on: bool,
    rng: np.random.Generator,
) -> int:
    """Single-shot outcome at qubit ``j``: Bernoulli at cos(F*_j)/2 + v + 1/2.

    Truth-side noise v is a Gaussian(0, sigma_v) draw truncated to the
    quantizer window when ``noise_on``, else exactly zero (the model's
    sigma_v is then purely a filter parameter).
    """
    if not 0 <= j < field.d:
        raise ConfigError(f"location {j} outside 0..{field.d - 1}")
    v = 0.0
    if noise_on and model.sigma_v > 0.0:
        from .core import truncated_normal

        v = truncated_normal(
            0.0, math.sqrt(model.sigma_v), -model.bound_b, model.bound_b, rng
        )
    p = 0.5 * math.cos(field.values[j]) + v + 0.5
    return sample_outcome(p, rng)
