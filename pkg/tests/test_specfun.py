import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from peakpower.errors import ParameterError, QuadratureError
from peakpower.specfun import BivariateCov, Phi, adaptive_quad, bvn_cdf, phi, psi


class TestPhiPhi:
    def test_density_at_zero(self):
        assert phi(0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-14)
        assert phi(0.0) == pytest.approx(0.3989422804, abs=1e-10)

    def test_cdf_at_zero(self):
        assert Phi(0.0) == 0.5

    def test_cdf_symmetry(self):
        assert Phi(-1.7) + Phi(1.7) == pytest.approx(1.0, abs=1e-14)

    def test_against_scipy(self):
        from scipy.stats import norm
        xs = np.linspace(-8, 8, 41)
        for x in xs:
            assert Phi(x) == pytest.approx(norm.cdf(x), abs=1e-14)
            assert phi(x) == pytest.approx(norm.pdf(x), abs=1e-14)


class TestPsi:
    def test_at_zero(self):
        assert psi(0.0) == pytest.approx(0.3989422804, abs=1e-10)

    def test_value_against_integral_oracle(self):
        # oracle: psi(x) = int_-inf^x Phi(y) dy, frozen from quadrature
        assert psi(0.70711) == pytest.approx(0.8482768946787291, abs=1e-12)

    @given(st.floats(min_value=-20, max_value=20))
    def test_shift_identity(self, x):
        # Phi(x) + Phi(-x) = 1 integrates to psi(x) - psi(-x) = x
        assert psi(x) - psi(-x) == pytest.approx(x, abs=1e-12)

    def test_asymptotics(self):
        assert psi(10.0) / 10.0 == pytest.approx(1.0, abs=1e-6)
        assert psi(-10.0) == pytest.approx(0.0, abs=1e-6)
        assert psi(-10.0) >= 0.0

    def test_nondecreasing(self):
        xs = np.linspace(-12, 12, 200)
        vals = [psi(x) for x in xs]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


class TestBvnCdf:
    def test_independent_orthant(self):
        sig = BivariateCov(1.0, 0.0, 1.0)
        assert bvn_cdf(sig, 0.0, 0.0) == pytest.approx(0.25, abs=1e-14)

    def test_marginal_via_infinite_limit(self):
        sig = BivariateCov(1.0, 0.0, 1.0)
        assert bvn_cdf(sig, math.inf, 0.0) == pytest.approx(0.5, abs=1e-14)
        assert bvn_cdf(sig, 0.7, math.inf) == pytest.approx(Phi(0.7), abs=1e-14)

    def test_arcsine_law_for_zero_thresholds(self):
        # P(X<=0, Y<=0) = 1/4 + arcsin(r)/(2 pi)
        for r in (-0.95, -0.5, 0.3, 0.8):
            sig = BivariateCov(2.0, r * 2.0 * 1.5, 4.5)
            want = 0.25 + math.asin(sig.correlation) / (2 * math.pi)
            assert bvn_cdf(sig, 0.0, 0.0) == pytest.approx(want, abs=1e-13)

    def test_sigma1_value_vs_monte_carlo(self):
        # covariance (1.5, -1; -1, 1) at (0, 0), 1e7 draws
        rng = np.random.default_rng(71)
        cov = np.array([[1.5, -1.0], [-1.0, 1.0]])
        chol = np.linalg.cholesky(cov)
        z = rng.standard_normal((10_000_000, 2)) @ chol.T
        hits = np.logical_and(z[:, 0] <= 0.0, z[:, 1] <= 0.0)
        p_hat = hits.mean()
        se = math.sqrt(p_hat * (1 - p_hat) / len(hits))
        got = bvn_cdf(BivariateCov(1.5, -1.0, 1.0), 0.0, 0.0)
        assert abs(got - p_hat) <= 3 * se

    def test_high_correlation_branch_against_quadrature(self):
        # dblquad oracle for |r| > 0.925
        for r, b1, b2 in [(0.97, 0.3, -0.4), (-0.96, 1.1, 0.2)]:
            sig = BivariateCov(1.0, r, 1.0)
            det = 1 - r * r

            def dens(y, x):
                return math.exp(-(x * x - 2 * r * x * y + y * y) / (2 * det)) \
                    / (2 * math.pi * math.sqrt(det))

            want, _ = integrate.dblquad(dens, -9, b1, -9, b2,
                                        epsabs=1e-11, epsrel=1e-10)
            assert bvn_cdf(sig, b1, b2) == pytest.approx(want, abs=1e-7)

    def test_monotone_in_both_limits(self):
        sig = BivariateCov(1.5, -1.0, 1.0)
        bs = np.linspace(-3, 3, 25)
        col = [bvn_cdf(sig, b, 0.5) for b in bs]
        row = [bvn_cdf(sig, 0.5, b) for b in bs]
        assert all(y >= x - 1e-12 for x, y in zip(col, col[1:]))
        assert all(y >= x - 1e-12 for x, y in zip(row, row[1:]))

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-0.99, 0.99))
    @settings(max_examples=200)
    def test_bounded_by_marginals(self, b1, b2, r):
        sig = BivariateCov(1.0, r, 1.0)
        p = bvn_cdf(sig, b1, b2)
        assert p <= min(Phi(b1), Phi(b2)) + 1e-12
        assert p >= -1e-15

    def test_non_pd_rejected(self):
        with pytest.raises(ParameterError):
            BivariateCov(1.0, 1.5, 1.0)
        with pytest.raises(ParameterError):
            BivariateCov(-1.0, 0.0, 1.0)


class TestAdaptiveQuad:
    def test_polynomial(self):
        val, err = adaptive_quad(lambda x: x * x, 0.0, 1.0, 1e-12, 1e-12)
        assert val == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_gaussian_normalization_infinite_range(self):
        val, err = adaptive_quad(phi, -np.inf, np.inf, 1e-12, 1e-10)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_gaussian_moments(self):
        for k, want in [(0, 1.0), (2, 1.0), (4, 3.0)]:
            val, _ = adaptive_quad(lambda x: x**k * phi(x), -np.inf, np.inf,
                                   1e-12, 1e-10)
            assert val == pytest.approx(want, abs=1e-9)

    def test_phi_psi_tail_vs_monte_carlo(self):
        # int_0^inf phi(x) psi(x) dx against 1e7-draw importance sampling:
        # draw half-normal x, average psi(x)/2
        val, _ = adaptive_quad(lambda x: phi(x) * psi(x), 0.0, np.inf, 1e-12, 1e-10)
        rng = np.random.default_rng(17)
        x = np.abs(rng.standard_normal(10_000_000))
        from scipy.stats import norm
        samples = 0.5 * (norm.pdf(x) + x * norm.cdf(x))
        mc = samples.mean()
        se = samples.std(ddof=1) / math.sqrt(len(samples))
        assert abs(val - mc) <= 3 * se

    def test_bad_tolerances_rejected(self):
        with pytest.raises(ParameterError):
            adaptive_quad(lambda x: x, 0, 1, abs_tol=0.0)

    def test_nonconvergence_carries_partial_result(self):
        # an integrable singularity with a one-interval budget cannot converge
        with pytest.raises(QuadratureError) as info:
            adaptive_quad(lambda x: abs(x - 0.123456) ** -0.9, 0.0, 1.0,
                          1e-12, 1e-12, limit=1)
        assert info.value.value is not None
        assert info.value.err_estimate > 0
