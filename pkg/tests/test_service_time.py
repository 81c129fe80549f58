#!/usr/bin/env python3
"""
Tests for service-time distributions: moments, transforms and sampling
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from models.errors import ConfigError, DomainError, UnsupportedOrderError
from models.service_time import ServiceDistribution, ServiceKind, lst, moment, sample

FAMILIES = [
    ServiceDistribution.deterministic(1.5),
    ServiceDistribution.exponential(1.0),
    ServiceDistribution.erlang(3, 2.0),
    ServiceDistribution.hyperexp2(0.3, 0.5, 4.0),
]


class TestMoments:
    """Closed-form raw moments"""

    def test_exponential_second_moment(self):
        assert moment(ServiceDistribution.exponential(1.0), 2) == pytest.approx(2.0)

    def test_deterministic_third_moment(self):
        assert moment(ServiceDistribution.deterministic(1.0), 3) == 1.0

    def test_erlang_second_moment(self):
        assert moment(ServiceDistribution.erlang(2, 1.0), 2) == pytest.approx(1.5)

    def test_hyperexponential_moments(self):
        d = ServiceDistribution.hyperexp2(0.5, 1.0, 2.0)
        assert d.m1 == pytest.approx(1.5)
        assert d.m2 == pytest.approx(2 * (0.5 * 1 + 0.5 * 4))
        assert d.m3 == pytest.approx(6 * (0.5 * 1 + 0.5 * 8))

    def test_exponential_third_moment_default(self):
        assert ServiceDistribution.exponential(1.0).m3 == pytest.approx(6.0)

    @pytest.mark.parametrize("k", [0, 4, -1])
    def test_unsupported_order(self, k):
        with pytest.raises(UnsupportedOrderError):
            moment(ServiceDistribution.exponential(1.0), k)

    @pytest.mark.parametrize("d", FAMILIES, ids=lambda d: d.kind.value)
    def test_variance_nonnegative(self, d):
        assert d.variance >= -1e-12
        assert d.m3 > 0

    def test_squared_coefficient_of_variation(self):
        assert ServiceDistribution.exponential(3.0).scv == pytest.approx(1.0)
        assert ServiceDistribution.deterministic(3.0).scv == pytest.approx(0.0)
        assert ServiceDistribution.erlang(4, 1.0).scv == pytest.approx(0.25)


class TestTransform:
    """Laplace-Stieltjes transform"""

    def test_exponential(self):
        assert lst(ServiceDistribution.exponential(1.0), 1.0) == pytest.approx(0.5)

    def test_identity_at_zero(self):
        assert lst(ServiceDistribution.deterministic(2.0), 0.0) == 1.0

    def test_hyperexponential(self):
        d = ServiceDistribution.hyperexp2(0.5, 1.0, 2.0)
        assert lst(d, 1.0) == pytest.approx(0.25 + 0.5 / 3, rel=1e-12)

    def test_negative_argument(self):
        with pytest.raises(DomainError):
            lst(ServiceDistribution.exponential(1.0), -0.1)

    @pytest.mark.parametrize("d", FAMILIES, ids=lambda d: d.kind.value)
    def test_bounded_and_monotone(self, d):
        values = [d.lst(s) for s in (0.0, 0.1, 1.0, 10.0)]
        assert values[0] == 1.0
        assert all(0 < v <= 1 for v in values)
        assert all(a >= b for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("d", FAMILIES, ids=lambda d: d.kind.value)
    def test_derivative_at_zero_is_mean(self, d):
        h = 1e-6
        assert (1.0 - d.lst(h)) / h == pytest.approx(d.m1, rel=1e-4)


class TestSampling:
    """Random draws"""

    def test_deterministic_is_constant(self):
        d = ServiceDistribution.deterministic(1.0)
        draws = d.sample_many(np.random.default_rng(0), 100)
        assert np.all(draws == 1.0)

    def test_same_seed_same_sequence(self):
        d = ServiceDistribution.exponential(1.0)
        first = d.sample_many(np.random.default_rng(7), 50)
        second = d.sample_many(np.random.default_rng(7), 50)
        np.testing.assert_array_equal(first, second)
        assert sample(d, 11) == sample(d, 11)

    def test_erlang_mean(self):
        d = ServiceDistribution.erlang(2, 1.0)
        draws = d.sample_many(np.random.default_rng(123), 10**6)
        se = math.sqrt(d.variance / len(draws))
        assert abs(draws.mean() - d.m1) < 4 * se

    @pytest.mark.parametrize("d", FAMILIES[1:], ids=lambda d: d.kind.value)
    def test_first_two_moments(self, d):
        draws = d.sample_many(np.random.default_rng(2024), 10**6)
        assert np.all(draws > 0)
        se1 = math.sqrt(d.variance / len(draws))
        assert abs(draws.mean() - d.m1) < 4 * se1
        se2 = (draws**2).std() / math.sqrt(len(draws))
        assert abs((draws**2).mean() - d.m2) < 4 * se2


class TestConstruction:
    """Validation and config round trip"""

    def test_from_config(self):
        d = ServiceDistribution.from_config({"kind": "erlang", "k": 2, "mean": 1.0})
        assert d.kind == ServiceKind.ERLANG
        assert d.k == 2
        assert ServiceDistribution.from_config(d.to_dict()) == d

    def test_from_config_deterministic_value(self):
        d = ServiceDistribution.from_config({"kind": "deterministic", "value": 2})
        assert d.m1 == 2.0

    def test_missing_field_is_named(self):
        with pytest.raises(ConfigError, match="service.mean"):
            ServiceDistribution.from_config({"kind": "exponential"})

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            ServiceDistribution.from_config({"kind": "pareto", "mean": 1.0})

    @pytest.mark.parametrize(
        "build",
        [
            lambda: ServiceDistribution.exponential(0.0),
            lambda: ServiceDistribution.erlang(0, 1.0),
            lambda: ServiceDistribution.hyperexp2(1.5, 1.0, 2.0),
            lambda: ServiceDistribution.hyperexp2(0.5, 1.0, -2.0),
        ],
    )
    def test_invalid_parameters(self, build):
        with pytest.raises(ConfigError):
            build()
