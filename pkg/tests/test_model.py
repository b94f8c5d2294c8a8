import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from peakpower.errors import MeanShapeError, ParameterError
from peakpower.model import (NEG_INF, CovarianceModel, DomainSpec, GridSpec,
                             MeanModel, PowerQuery, eta, quadratic_approx)

from conftest import central_diff2


def rho_of_squared_distance(nu):
    """Correlation as a function of squared distance for bandwidth nu."""
    return lambda d: math.exp(-d / (2.0 * nu * nu))


class TestCovarianceModel:
    def test_from_bandwidth_nu5_matches_finite_differences(self):
        cov = CovarianceModel.from_kernel_bandwidth(5.0)
        assert cov.rho_prime == pytest.approx(-0.02, abs=1e-15)
        assert cov.rho_double_prime == pytest.approx(0.0004, abs=1e-15)
        assert cov.kappa == pytest.approx(1.0, abs=1e-12)
        # independent check: differentiate rho numerically at 0
        rho = rho_of_squared_distance(5.0)
        h = 1e-4
        d1 = (rho(h) - rho(0.0)) / h  # one-sided; rho defined for d >= 0
        d2 = central_diff2(rho, 2 * h, h)
        assert d1 == pytest.approx(cov.rho_prime, rel=1e-3)
        assert d2 == pytest.approx(cov.rho_double_prime, rel=1e-3)

    def test_from_bandwidth_nu1(self):
        cov = CovarianceModel.from_kernel_bandwidth(1.0)
        assert cov.rho_prime == pytest.approx(-0.5, abs=1e-15)
        assert cov.rho_double_prime == pytest.approx(0.25, abs=1e-15)
        assert cov.kappa == pytest.approx(1.0, abs=1e-12)

    def test_nonpositive_bandwidth_rejected(self):
        with pytest.raises(ParameterError):
            CovarianceModel.from_kernel_bandwidth(0.0)
        with pytest.raises(ParameterError):
            CovarianceModel.from_kernel_bandwidth(-2.0)

    @given(st.floats(min_value=1e-3, max_value=1e3))
    def test_kappa_identity_for_any_bandwidth(self, nu):
        assert abs(CovarianceModel.from_kernel_bandwidth(nu).kappa - 1.0) < 1e-12

    def test_convolution_kernel_correlation_bandwidth(self):
        # white noise smoothed by an sd-nu kernel has correlation
        # exp(-d/(4 nu^2)), i.e. bandwidth sqrt(2)*nu
        cov = CovarianceModel.from_convolution_kernel(5.0)
        assert cov.rho_prime == pytest.approx(-0.01, abs=1e-15)
        assert cov.kernel_bandwidth == pytest.approx(5.0 * math.sqrt(2.0))

    def test_sign_validation(self):
        with pytest.raises(ParameterError):
            CovarianceModel(rho_prime=0.1, rho_double_prime=0.2)
        with pytest.raises(ParameterError):
            CovarianceModel(rho_prime=-0.1, rho_double_prime=-0.2)

    def test_goi_feasibility_flag(self):
        cov = CovarianceModel(rho_prime=-1.0, rho_double_prime=0.4)  # kappa ~ 1.58
        assert cov.kappa == pytest.approx(1.0 / math.sqrt(0.4))
        assert cov.goi_feasible(1)
        assert not cov.goi_feasible(3)
        with pytest.raises(ParameterError):
            cov.validate_for_dim(3)


class TestEta:
    def test_table_defaults_value(self):
        # nu=5 noise with a 1/xi^2-curvature paraboloid, xi=7
        cov = CovarianceModel.from_kernel_bandwidth(5.0)
        mean = MeanModel.paraboloid(3.0, -1.0 / 49.0)
        assert eta(mean, cov) == pytest.approx(-25.0 / 49.0, rel=1e-12)

    def test_matches_finite_differences_of_shape_functions(self):
        nu, xi = 5.0, 7.0
        rho = rho_of_squared_distance(nu)
        theta = lambda s: 3.0 - s * s / (2.0 * xi * xi)
        h = 1e-4
        theta_pp = central_diff2(theta, 0.0, h)
        # second-order one-sided stencil (rho lives on d >= 0)
        rho_p = (4.0 * rho(h) - rho(2.0 * h) - 3.0 * rho(0.0)) / (2.0 * h)
        expected = theta_pp / (-2.0 * rho_p)
        cov = CovarianceModel.from_kernel_bandwidth(nu)
        mean = MeanModel.paraboloid(3.0, -1.0 / (xi * xi))
        assert eta(mean, cov) == pytest.approx(expected, rel=1e-6)

    def test_flat_paraboloid_gives_zero(self):
        cov = CovarianceModel.from_kernel_bandwidth(5.0)
        assert eta(MeanModel.paraboloid(3.0, 0.0), cov) == 0.0

    def test_constant_mean_rejected(self):
        cov = CovarianceModel.from_kernel_bandwidth(5.0)
        with pytest.raises(MeanShapeError):
            eta(MeanModel.constant(3.0), cov)

    @given(st.floats(min_value=0.1, max_value=10.0))
    def test_invariant_under_isotropic_rescaling(self, c):
        # s -> c*s sends theta'' -> theta''/c^2 and rho' -> rho'/c^2
        cov = CovarianceModel(rho_prime=-0.02, rho_double_prime=4e-4)
        cov_scaled = CovarianceModel(rho_prime=-0.02 / c**2,
                                     rho_double_prime=4e-4 / c**4)
        mean = MeanModel.paraboloid(3.0, -0.04)
        mean_scaled = MeanModel.paraboloid(3.0, -0.04 / c**2)
        assert eta(mean, cov) == pytest.approx(eta(mean_scaled, cov_scaled),
                                               rel=1e-12)


class TestQuadraticApprox:
    def test_matches_bump_derivatives_at_center(self):
        theta0, xi = 3.0, 7.0
        bump = MeanModel.gaussian_bump(theta0, xi)
        par = quadratic_approx(bump)
        assert par.theta0 == theta0
        assert par.theta_pp == pytest.approx(-3.0 / 49.0, rel=1e-13)
        # finite differences of the bump profile
        f = lambda s: theta0 * math.exp(-s * s / (2 * xi * xi))
        h = 1e-3
        assert par.theta_pp == pytest.approx(central_diff2(f, 0.0, h), abs=1e-6)
        assert par.value(0.0) == pytest.approx(f(0.0), abs=1e-12)
        # gradient at the center is zero for both shapes by symmetry
        assert (f(h) - f(-h)) / (2 * h) == pytest.approx(0.0, abs=1e-9)

    def test_zero_height_bump_is_flat(self):
        par = quadratic_approx(MeanModel.gaussian_bump(0.0, 2.0))
        assert par.theta_pp == 0.0

    def test_paraboloid_input_rejected(self):
        with pytest.raises(MeanShapeError):
            quadratic_approx(MeanModel.paraboloid(3.0, -0.1))


class TestDomainSpec:
    def test_ball_volumes(self):
        assert DomainSpec(dim=1, radius=2.0).volume == pytest.approx(4.0)
        assert DomainSpec(dim=2, radius=2.0).volume == pytest.approx(math.pi * 4.0)
        assert DomainSpec(dim=3, radius=2.0).volume == pytest.approx(
            4.0 * math.pi * 8.0 / 3.0)

    def test_validation(self):
        with pytest.raises(ParameterError):
            DomainSpec(dim=4, radius=1.0)
        with pytest.raises(ParameterError):
            DomainSpec(dim=2, radius=0.0)
        with pytest.raises(ParameterError):
            DomainSpec(dim=2, radius=1.0, grid=GridSpec(dims=(8, 8, 8)))


class TestGridSpec:
    def test_validation(self):
        with pytest.raises(ParameterError):
            GridSpec(dims=(2, 5))
        with pytest.raises(ParameterError):
            GridSpec(dims=(5, 5, 5, 5))
        with pytest.raises(ParameterError):
            GridSpec(dims=(5,), spacing=0.0)


class TestJsonRoundTrips:
    def test_all_types_round_trip(self):
        cov = CovarianceModel.from_kernel_bandwidth(5.0)
        mean = MeanModel.paraboloid(3.0, -1 / 49, center=(25.0, 25.0))
        dom = DomainSpec(dim=2, radius=10.0, grid=GridSpec(dims=(50, 50)))
        q = PowerQuery(u=3.0, cov=cov, mean=mean, domain=dom)
        for obj, cls in [(cov, CovarianceModel), (mean, MeanModel),
                         (dom, DomainSpec), (q, PowerQuery)]:
            blob = json.dumps(obj.to_dict())
            assert cls.from_dict(json.loads(blob)) == obj

    def test_negative_infinity_threshold_sentinel(self):
        cov = CovarianceModel.from_kernel_bandwidth(5.0)
        q = PowerQuery(u=NEG_INF, cov=cov, mean=MeanModel.constant(0.0),
                       domain=DomainSpec(dim=1, radius=1.0))
        blob = json.dumps(q.to_dict())
        assert '"-inf"' in blob
        assert PowerQuery.from_dict(json.loads(blob)).u == NEG_INF

    def test_plus_infinity_rejected(self):
        cov = CovarianceModel.from_kernel_bandwidth(5.0)
        with pytest.raises(ParameterError):
            PowerQuery(u=float("inf"), cov=cov, mean=MeanModel.constant(0.0),
                       domain=DomainSpec(dim=1, radius=1.0))

    def test_off_center_domain_rejected(self):
        # a mean center of the wrong dimension is the only way to decenter
        cov = CovarianceModel.from_kernel_bandwidth(5.0)
        with pytest.raises(ParameterError):
            PowerQuery(u=1.0, cov=cov,
                       mean=MeanModel.paraboloid(3.0, -0.1, center=(1.0, 2.0, 3.0)),
                       domain=DomainSpec(dim=2, radius=5.0))
