"""Quantized-readout model: rho0 closed form vs quadrature, likelihood
identities, sampling, and the Ramsey signal map."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from qfilt.core import SeededRng
from qfilt.measurement import (
    InvalidModelError,
    MeasurementModel,
    ModelFailureWarning,
    RAMSEY_SIGNAL,
    SignalRangeWarning,
    compute_rho0,
    likelihood,
    ramsey_forward,
    ramsey_inverse,
    rho0_reference_quadrature,
    sample_outcome,
)


class TestComputeRho0:
    def test_zero_noise_is_exactly_one(self):
        assert compute_rho0(0.5, 0.0) == 1.0

    def test_vanishing_noise_limit(self):
        assert compute_rho0(0.5, 1e-12) > 1.0 - 1e-5

    def test_infinite_noise_limit(self):
        assert compute_rho0(0.5, 1e4) < 1e-2

    def test_monotone_decreasing_in_noise(self):
        vals = [compute_rho0(0.5, sv) for sv in (1e-6, 1e-3, 1e-1, 1.0, 10.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_matches_quadrature_oracle(self):
        assert abs(compute_rho0(0.5, 0.01) - rho0_reference_quadrature(0.5, 0.01)) <= 1e-8

    def test_quadrature_agreement_over_random_models(self):
        rng = SeededRng(100).generator()
        for _ in range(10):
            b = rng.uniform(0.1, 2.0)
            sv = 10 ** rng.uniform(-9, 0)
            assert abs(compute_rho0(b, sv) - rho0_reference_quadrature(b, sv)) <= 1e-8

    def test_matches_direct_double_quadrature(self):
        # independent cross-check of the window-truncation reading: integrate
        # the Gaussian*uniform convolution density over the window directly
        b, sv = 0.5, 0.02
        sigma = math.sqrt(sv)

        def density(v):
            inner, _ = integrate.quad(
                lambda w: math.exp(-0.5 * ((v - w) / sigma) ** 2)
                / (sigma * math.sqrt(2 * math.pi))
                / (2 * b),
                -b,
                b,
                epsabs=1e-12,
                limit=200,
            )
            return inner

        outer, _ = integrate.quad(density, -b, b, epsabs=1e-10, limit=200)
        assert abs(compute_rho0(b, sv) - outer) <= 1e-6

    def test_invalid_bounds_rejected(self):
        with pytest.raises(InvalidModelError):
            compute_rho0(0.0, 0.1)
        with pytest.raises(InvalidModelError):
            compute_rho0(-1.0, 0.1)
        with pytest.raises(InvalidModelError):
            compute_rho0(0.5, -0.1)


class TestMeasurementModel:
    def test_rho0_cached(self):
        m = MeasurementModel(sigma_v=0.01)
        assert m.rho0 == pytest.approx(compute_rho0(0.5, 0.01), abs=1e-12)

    def test_asymmetric_bounds_rejected(self):
        with pytest.raises(InvalidModelError):
            MeasurementModel(sigma_v=0.01, bound_b=0.5, bound_a=0.4)

    def test_symmetric_bound_a_accepted(self):
        m = MeasurementModel(sigma_v=0.01, bound_b=0.5, bound_a=0.5)
        assert 0.0 <= m.rho0 <= 1.0

    def test_model_failure_regime_warns(self):
        with pytest.warns(ModelFailureWarning):
            MeasurementModel(sigma_v=0.5, bound_b=0.5)

    def test_quiet_in_good_regime(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            MeasurementModel(sigma_v=1e-8, bound_b=0.5)


class TestLikelihood:
    def test_maximally_mixed_state(self):
        m = MeasurementModel(sigma_v=0.0)
        assert likelihood(1, 0.0, m) == pytest.approx(0.5)

    def test_pure_state_extremes(self):
        m = MeasurementModel(sigma_v=0.0)
        assert likelihood(1, 0.5, m) == pytest.approx(1.0)
        assert likelihood(0, 0.5, m) == pytest.approx(0.0)

    @given(s=st.floats(-0.5, 0.5), sv=st.floats(0.0, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_total_mass_identity(self, s, sv):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ModelFailureWarning)
            m = MeasurementModel(sigma_v=sv)
        total = likelihood(0, s, m) + likelihood(1, s, m)
        assert abs(total - m.rho0) <= 1e-14

    def test_monotone_increasing_in_s(self):
        m = MeasurementModel(sigma_v=0.001)
        s = np.linspace(-0.5, 0.5, 101)
        g = likelihood(1, s, m)
        assert np.all(np.diff(g) > 0)

    def test_lipschitz_slope_is_rho0(self):
        m = MeasurementModel(sigma_v=0.01)
        h = 1e-7
        for s in (-0.3, 0.0, 0.25):
            slope = (likelihood(1, s + h, m) - likelihood(1, s - h, m)) / (2 * h)
            assert abs(slope - m.rho0) <= 1e-6

    def test_out_of_range_signal_rejected(self):
        m = MeasurementModel(sigma_v=0.0)
        with pytest.raises(ValueError):
            likelihood(1, 0.51, m)

    def test_bad_outcome_rejected(self):
        m = MeasurementModel(sigma_v=0.0)
        with pytest.raises(ValueError):
            likelihood(2, 0.0, m)


class TestSampleOutcome:
    def test_deterministic_extremes(self):
        rng = SeededRng(200).generator()
        assert all(sample_outcome(0.0, rng) == 0 for _ in range(50))
        assert all(sample_outcome(1.0, rng) == 1 for _ in range(50))

    def test_fair_coin_frequency(self):
        rng = SeededRng(201).generator()
        n = 100_000
        mean = np.mean([sample_outcome(0.5, rng) for _ in range(n)])
        assert abs(mean - 0.5) <= 4 * 0.5 / np.sqrt(n)

    def test_born_probability_frequency(self):
        # Born probability at a known phase: cos(pi/3)/2 + 1/2 = 0.75
        rng = SeededRng(202).generator()
        p = 0.5 * math.cos(math.pi / 3) + 0.5
        n = 50_000
        mean = np.mean([sample_outcome(p, rng) for _ in range(n)])
        assert abs(mean - 0.75) <= 4 * math.sqrt(p * (1 - p) / n)


class TestRamseySignal:
    def test_endpoints(self):
        assert ramsey_forward(0.0) == pytest.approx(0.5)
        assert ramsey_forward(math.pi) == pytest.approx(-0.5)
        assert ramsey_forward(math.pi / 2) == pytest.approx(0.0, abs=1e-15)

    def test_inverse_of_zero(self):
        assert ramsey_inverse(0.0) == pytest.approx(math.pi / 2)

    def test_round_trip(self):
        f = 1.234
        assert ramsey_inverse(ramsey_forward(f)) == pytest.approx(f, abs=1e-10)

    @given(f=st.floats(1e-6, math.pi - 1e-6))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_interior(self, f):
        assert abs(ramsey_inverse(ramsey_forward(f)) - f) <= 1e-10

    def test_bounded_on_domain(self):
        f = np.linspace(0.0, math.pi, 1001)
        assert np.all(np.abs(ramsey_forward(f)) <= 0.5)

    def test_out_of_range_warns_and_clamps(self):
        with pytest.warns(SignalRangeWarning):
            val = ramsey_inverse(0.6)
        assert val == pytest.approx(0.0)

    def test_tolerated_drift_is_silent(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert ramsey_inverse(0.5 + 5e-10) == pytest.approx(0.0)

    def test_signal_map_bundle(self):
        assert RAMSEY_SIGNAL.domain == (0.0, math.pi)
        assert RAMSEY_SIGNAL.inverse(RAMSEY_SIGNAL.forward(0.7)) == pytest.approx(0.7)
