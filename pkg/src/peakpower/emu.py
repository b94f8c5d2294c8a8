"""Closed-form peak-count densities and the expected-peak integrals.

The central quantity is E[M_u], the expected number of local maxima of
X(s) = Z(s) + theta(s) above a threshold u inside a ball around the signal
peak.  For isotropic unit-variance noise it reduces to

    E[M_u] = (2 rho''/(-pi rho'))^(N/2)
             * int_D exp(theta''^2 ||s-s0||^2 / (4 rho'))
                     int_{utilde(s)}^inf phi(xt + eta) H_N(xt) dxt ds

with utilde(s) = u - theta(s) - eta and eta = theta''/(-2 rho').  H_N is the
GOI-eigenvalue expectation E[prod_j |lambda_j - b| 1{lambda_max < b}] at
b = kappa*xt/sqrt(2), for which h_1d/h_2d/h_3d give exact closed forms
(cross-checked against Monte Carlo GOI sampling in the test suite).

Because the integrand depends on s only through r = ||s-s0||, the spatial
integral is a radial one; swapping the order of the radial and height
integrals turns the radial factor into a closed-form Gaussian primitive,
leaving a single adaptive quadrature in the height variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConsistencyError, ParameterError, SolverError
from .model import (CONSTANT, GAUSSIAN_BUMP, NEG_INF, PARABOLOID,
                    CovarianceModel, DomainSpec, MeanModel, PowerQuery, eta)
from .specfun import BivariateCov, Phi, adaptive_quad, bvn_cdf, phi, psi

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# admissible kappa upper bounds: where the formula denominators vanish,
# coinciding with the GOI feasibility bound c >= -1/N
_KAPPA_SUP = {1: math.sqrt(3.0), 2: math.sqrt(2.0), 3: math.sqrt(5.0 / 3.0)}

INNER_ABS_TOL = 1e-12
INNER_REL_TOL = 1e-10
OUTER_ABS_TOL = 1e-10
OUTER_REL_TOL = 1e-8


def _check_kappa(kappa: float, dim: int) -> None:
    sup = _KAPPA_SUP[dim]
    if not (0.0 < kappa < sup):
        raise ParameterError(
            f"kappa must lie in (0, {sup:.6g}) for dimension {dim}, got {kappa}")


def h_1d(x_tilde: float, kappa: float) -> float:
    """GOI determinant factor for N=1."""
    _check_kappa(kappa, 1)
    s = 3.0 - kappa * kappa
    return math.sqrt(s / 2.0) * psi(kappa * x_tilde / math.sqrt(s))


def h_2d(x_tilde: float, kappa: float) -> float:
    """GOI determinant factor for N=2."""
    _check_kappa(kappa, 2)
    k2 = kappa * kappa
    s3, s2 = 3.0 - k2, 2.0 - k2
    t1 = _SQRT_2PI / math.sqrt(s3) * phi(kappa * x_tilde / math.sqrt(s3)) \
        * Phi(kappa * x_tilde / math.sqrt(s2 * s3))
    t2 = 0.5 * k2 * (x_tilde * x_tilde - 1.0) * Phi(kappa * x_tilde / math.sqrt(s2))
    t3 = 0.5 * kappa * math.sqrt(s2) * x_tilde * phi(kappa * x_tilde / math.sqrt(s2))
    # the exact expectation is nonnegative; far-tail cancellation can leave
    # |junk| ~ 1e-200
    return max(t1 + t2 + t3, 0.0)


def h_3d(x_tilde: float, kappa: float) -> float:
    """GOI determinant factor for N=3.

    Four groups in the shifted variable b = kappa*x_tilde/sqrt(2), the last
    one through bivariate normal orthant terms with
    Sigma1 = (3/2, -1; -1, (3-kappa^2)/2) and
    Sigma2 = (3/2, -1/2; -1/2, (2-kappa^2)/2).
    """
    _check_kappa(kappa, 3)
    a = 1.0 - kappa * kappa
    b = kappa * x_tilde / _SQRT2
    b2 = b * b
    a1, a2, a3 = a + 1.0, a + 2.0, 3.0 * a + 2.0  # 2-k^2, 3-k^2, 5-3k^2
    t1 = ((a**3 + 6.0 * a * a + 12.0 * a + 24.0) / (2.0 * a2 * a2) * b2
          + (2.0 * a**3 + 3.0 * a * a + 6.0 * a) / (4.0 * a2) + 1.5) \
        / math.sqrt(math.pi * a2) * math.exp(-b2 / a2) \
        * Phi(2.0 * _SQRT2 * b / math.sqrt(a2 * a3))
    t2 = (0.5 * a1 * b2 + 0.5 * (a * a - a) - 1.0) \
        / math.sqrt(math.pi * a1) * math.exp(-b2 / a1) \
        * Phi(_SQRT2 * b / math.sqrt(a1 * a3))
    t3 = (a + 6.0 + (3.0 * a**3 + 12.0 * a * a + 28.0 * a) / (2.0 * a2)) \
        * b / (2.0 * math.pi * a2 * math.sqrt(a3)) * math.exp(-3.0 * b2 / a3)
    sigma1 = BivariateCov(1.5, -1.0, 0.5 * a2)
    sigma2 = BivariateCov(1.5, -0.5, 0.5 * a1)
    t4 = b * (b2 + 1.5 * (a - 1.0)) * (bvn_cdf(sigma1, 0.0, b)
                                       + bvn_cdf(sigma2, 0.0, b))
    return max(t1 + t2 + t3 + t4, 0.0)


_H = {1: h_1d, 2: h_2d, 3: h_3d}


def h_nd(x_tilde: float, kappa: float, dim: int) -> float:
    """Dispatch to the closed form for the given dimension."""
    if dim not in _H:
        raise ParameterError(f"dimension must be 1, 2 or 3, got {dim}")
    return _H[dim](x_tilde, kappa)


def _radial_gauss(dim: int, c: float, a: float) -> float:
    """int_0^a r^(dim-1) exp(-c r^2) dr for c >= 0."""
    if a <= 0.0:
        return 0.0
    if c == 0.0:
        return a**dim / dim
    if dim == 1:
        return math.sqrt(math.pi / (4.0 * c)) * math.erf(math.sqrt(c) * a)
    if dim == 2:
        return -math.expm1(-c * a * a) / (2.0 * c)
    return (math.sqrt(math.pi) / (4.0 * c**1.5) * math.erf(math.sqrt(c) * a)
            - a * math.exp(-c * a * a) / (2.0 * c))


def _height_cutoffs(eta_: float, lo_anchor: float, hi_anchor: float) -> tuple[float, float]:
    # phi(x+eta) times a polynomial of degree <= 3 drops below 1e-14 of its
    # peak well inside |x+eta| <= 42; pad by the anchors actually in play
    lo = min(lo_anchor, -42.0 - abs(eta_))
    hi = max(hi_anchor, 42.0 + abs(eta_))
    return lo, hi


def expected_peaks(q: PowerQuery) -> tuple[float, float]:
    """E[M_u] over the ball domain, with a quadrature error bound.

    Supports constant and paraboloid means; route gaussian bumps through
    ``model.quadratic_approx`` first (or use the exact 1D general-mean path).
    u = -inf counts all local maxima.
    """
    mean, cov, dom = q.mean, q.cov, q.domain
    if mean.variant == GAUSSIAN_BUMP:
        raise ParameterError(
            "expected_peaks handles constant or paraboloid means; apply "
            "quadratic_approx to a gaussian bump first")
    dim = dom.dim
    kappa = cov.kappa
    _check_kappa(kappa, dim)
    h = _H[dim]
    pref = (2.0 * cov.rho_double_prime / (-math.pi * cov.rho_prime)) ** (dim / 2.0)
    surf = dom.surface_constant
    R = dom.radius

    if mean.variant == CONSTANT:
        eta_ = 0.0
        theta_pp = 0.0
    else:
        eta_ = eta(mean, cov)
        theta_pp = mean.theta_pp

    def f_tail(x):
        return phi(x + eta_) * h(x, kappa)

    if q.u == NEG_INF or theta_pp == 0.0:
        # the inner integral does not depend on r: outer integral is the
        # ball volume (theta_pp=0) or the full Gaussian radial mass (u=-inf)
        c = theta_pp * theta_pp / (-4.0 * cov.rho_prime)
        gr = _radial_gauss(dim, c, R)
        if q.u == NEG_INF:
            lo, hi = _height_cutoffs(eta_, 0.0, 0.0)
        else:
            lo = q.u - mean.theta0 - eta_
            _, hi = _height_cutoffs(eta_, lo, lo)
        val, err = adaptive_quad(f_tail, lo, hi, INNER_ABS_TOL, INNER_REL_TOL,
                                 limit=300)
        return pref * surf * gr * val, pref * surf * gr * err

    # paraboloid with finite u: swap the height and radial integrals; the
    # radial part has the closed form _radial_gauss and the height integrand
    # has a single kink where the admissible radius saturates at R
    c = theta_pp * theta_pp / (-4.0 * cov.rho_prime)
    gr = _radial_gauss(dim, c, R)
    u0 = q.u - mean.theta0 - eta_          # utilde at the center
    uR = u0 - theta_pp * R * R / 2.0       # utilde at the boundary

    def f_mid(x):
        rmax = math.sqrt(2.0 * (x - u0) / (-theta_pp))
        return phi(x + eta_) * h(x, kappa) * _radial_gauss(dim, c, min(rmax, R))

    _, hi = _height_cutoffs(eta_, uR, uR)
    v1, e1 = adaptive_quad(f_mid, u0, uR, INNER_ABS_TOL, INNER_REL_TOL, limit=300)
    v2, e2 = adaptive_quad(f_tail, uR, hi, INNER_ABS_TOL, INNER_REL_TOL, limit=300)
    return pref * surf * (v1 + gr * v2), pref * surf * (e1 + gr * e2)


def expected_peaks_1d_general(cov: CovarianceModel, theta, theta_prime,
                              theta_double_prime, interval: tuple[float, float],
                              u: float) -> tuple[float, float]:
    """E[M_u] on an interval for an arbitrary smooth 1D mean.

    ``theta``, ``theta_prime`` and ``theta_double_prime`` are callables of
    the scalar position.  This is the stationary-process Kac-Rice form; for
    quadratic means it agrees with :func:`expected_peaks`.
    """
    kappa = cov.kappa
    _check_kappa(kappa, 1)
    a, b = interval
    if not (math.isfinite(a) and math.isfinite(b) and a < b):
        raise ParameterError(f"invalid interval {interval}")
    m2 = -2.0 * cov.rho_prime          # Var of the field derivative
    s3 = math.sqrt(3.0 - kappa * kappa)
    outer_coeff = math.sqrt(m2 * (3.0 - kappa * kappa)) / kappa

    def density(s):
        th, eta_s = theta(s), theta_double_prime(s) / m2

        def inner(x):
            return phi(x - th) * psi(kappa * (x - th - eta_s) / s3)

        lo = u if math.isfinite(u) else th - 42.0 - abs(eta_s)
        hi = max(lo, th + abs(eta_s)) + 42.0
        val, err = adaptive_quad(inner, lo, hi, INNER_ABS_TOL, INNER_REL_TOL,
                                 limit=300)
        return phi(theta_prime(s) / math.sqrt(m2)) * val

    val, err = adaptive_quad(density, a, b, OUTER_ABS_TOL, OUTER_REL_TOL, limit=300)
    return outer_coeff * val, outer_coeff * err


def adjusted_expected_peaks(e_mu: float, e_m_total: float) -> float:
    """Conservative estimator e_mu / max(1, e_m_total), always in [0, 1]."""
    slack = 1e-9 * max(1.0, abs(e_m_total))
    if not (-slack <= e_mu <= e_m_total + slack):
        raise ConsistencyError(
            f"need 0 <= e_mu <= e_m_total, got e_mu={e_mu}, e_m_total={e_m_total}")
    return min(e_mu, e_m_total) / max(1.0, e_m_total)


def sharp_signal_approx(theta0: float, u: float) -> float:
    """Gaussian power limit Phi(theta0 - u) for sharp signals."""
    if u == NEG_INF:
        return 1.0
    return Phi(theta0 - u)


def null_height_integral(cov: CovarianceModel, dim: int, lo: float) -> tuple[float, float]:
    """int_lo^inf phi(x) H_dim(x) dx for the zero-mean field."""
    kappa = cov.kappa
    _check_kappa(kappa, dim)
    h = _H[dim]
    if lo == NEG_INF:
        lo = -42.0
    hi = max(lo, 0.0) + 42.0
    return adaptive_quad(lambda x: phi(x) * h(x, kappa), lo, hi,
                         INNER_ABS_TOL, INNER_REL_TOL, limit=300)


def null_overshoot_survival(cov: CovarianceModel, dim: int, u: float) -> float:
    """P(peak height > u) under the null: E[M_u]/E[M_-inf] with theta = 0.

    The domain factor cancels algebraically, so no spatial integral is
    evaluated.
    """
    if u == NEG_INF:
        return 1.0
    total, _ = null_height_integral(cov, dim, NEG_INF)
    upper, _ = null_height_integral(cov, dim, u)
    return min(1.0, max(0.0, upper / total))


def threshold_for_alpha(cov: CovarianceModel, dim: int, alpha: float,
                        residual_tol: float = 1e-8, max_iter: int = 200) -> float:
    """Threshold u with null_overshoot_survival(u) = alpha.

    Expanding bracket plus bisection on the monotone survival function.
    """
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must be in (0, 1), got {alpha}")
    total, _ = null_height_integral(cov, dim, NEG_INF)

    def g(u):
        upper, _ = null_height_integral(cov, dim, u)
        return upper / total - alpha

    lo, hi = -2.0, 2.0
    for _ in range(60):
        if g(lo) > 0.0:
            break
        lo -= 2.0
    else:
        raise SolverError("failed to bracket threshold from below")
    for _ in range(60):
        if g(hi) < 0.0:
            break
        hi += 2.0
    else:
        raise SolverError("failed to bracket threshold from above")

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) <= residual_tol and hi - lo <= 1e-10:
            return mid
        if gm > 0.0:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    if abs(g(mid)) <= residual_tol:
        return mid
    raise SolverError(f"bisection did not reach residual {residual_tol}")


@dataclass(frozen=True)
class PowerResult:
    """E[M_u] curve over a threshold grid, with the derived estimators."""

    u_grid: tuple[float, ...]
    e_mu: tuple[float, ...]
    e_mu_adj: tuple[float, ...]
    e_m_total: float
    sharp_approx: tuple[float, ...] | None
    quadrature_err: tuple[float, ...]
    quadratic_approximation: bool = False

    def __post_init__(self):
        n = len(self.u_grid)
        if not (len(self.e_mu) == len(self.e_mu_adj) == len(self.quadrature_err) == n):
            raise ConsistencyError("PowerResult columns must have equal length")

    def to_dict(self) -> dict:
        return {
            "u_grid": list(self.u_grid),
            "e_mu": list(self.e_mu),
            "e_mu_adj": list(self.e_mu_adj),
            "e_m_total": self.e_m_total,
            "sharp_approx": None if self.sharp_approx is None else list(self.sharp_approx),
            "quadrature_err": list(self.quadrature_err),
            "quadratic_approximation": self.quadratic_approximation,
        }


def power_curve(cov: CovarianceModel, mean: MeanModel, domain: DomainSpec,
                u_grid) -> PowerResult:
    """Evaluate E[M_u], its adjusted version and the sharp-signal limit.

    Gaussian bumps are reduced through their quadratic approximation and the
    result is flagged accordingly.
    """
    from .model import quadratic_approx

    approximated = False
    if mean.variant == GAUSSIAN_BUMP:
        mean = quadratic_approx(mean)
        approximated = True
    total, _ = expected_peaks(PowerQuery(u=NEG_INF, cov=cov, mean=mean, domain=domain))
    e_mu, errs, adj = [], [], []
    for u in u_grid:
        v, e = expected_peaks(PowerQuery(u=float(u), cov=cov, mean=mean, domain=domain))
        e_mu.append(v)
        errs.append(e)
        adj.append(adjusted_expected_peaks(min(v, total), total))
    sharp = None
    if mean.variant != CONSTANT:
        sharp = tuple(sharp_signal_approx(mean.theta0, float(u)) for u in u_grid)
    return PowerResult(u_grid=tuple(float(u) for u in u_grid),
                       e_mu=tuple(e_mu), e_mu_adj=tuple(adj), e_m_total=total,
                       sharp_approx=sharp, quadrature_err=tuple(errs),
                       quadratic_approximation=approximated)
