"""Scalar special functions and the 1D adaptive quadrature.

Everything here is a pure function and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ParameterError, QuadratureError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def phi(x: float) -> float:
    """Standard normal density."""
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def Phi(x: float) -> float:
    """Standard normal CDF, accurate to ~1e-16 via erfc."""
    return 0.5 * math.erfc(-x / _SQRT2)


def psi(x: float) -> float:
    """Integrated normal CDF: psi(x) = int_-inf^x Phi = phi(x) + x*Phi(x)."""
    return phi(x) + x * Phi(x)


# Gauss-Legendre nodes/weights used by the bivariate normal routine
# (Drezner & Wesolowsky 1989; Genz 2004, as in his bvn.m).
_GL_X = (
    (-0.9324695142031522, -0.6612093864662647, -0.2386191860831970),
    (-0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
     -0.5873179542866171, -0.3678314989981802, -0.1252334085114692),
    (-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
     -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
     -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
     -0.07652652113349733),
)
_GL_W = (
    (0.1713244923791705, 0.3607615730481384, 0.4679139345726904),
    (0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
     0.2031674267230659, 0.2334925365383547, 0.2491470458134029),
    (0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
     0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
     0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
     0.1527533871307259),
)


def _bvnu(h: float, k: float, r: float) -> float:
    """P(X > h, Y > k) for standard bivariate normal with correlation r."""
    if h == math.inf or k == math.inf:
        return 0.0
    if h == -math.inf:
        return Phi(-k)
    if k == -math.inf:
        return Phi(-h)
    if abs(r) < 0.3:
        ng = 0
    elif abs(r) < 0.75:
        ng = 1
    else:
        ng = 2
    x, w = _GL_X[ng], _GL_W[ng]
    hk = h * k
    bvn = 0.0
    if abs(r) < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        for xi, wi in zip(x, w):
            for sgn in (1.0, -1.0):
                sn = math.sin(asr * (sgn * xi + 1.0) / 2.0)
                bvn += wi * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        return bvn * asr / (4.0 * math.pi) + Phi(-h) * Phi(-k)
    # high-correlation branch
    if r < 0.0:
        k = -k
        hk = -hk
    if abs(r) < 1.0:
        ass = (1.0 - r) * (1.0 + r)
        a = math.sqrt(ass)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        asr0 = -(bs / ass + hk) / 2.0
        if asr0 > -100.0:
            bvn = a * math.exp(asr0) * (
                1.0 - c * (bs - ass) * (1.0 - d * bs / 5.0) / 3.0
                + c * d * ass * ass / 5.0)
        if -hk < 100.0:
            b = math.sqrt(bs)
            bvn -= math.exp(-hk / 2.0) * math.sqrt(2.0 * math.pi) * Phi(-b / a) * b \
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
        a /= 2.0
        for xi, wi in zip(x, w):
            for sgn in (1.0, -1.0):
                xs = (a * (sgn * xi + 1.0)) ** 2
                rs = math.sqrt(1.0 - xs)
                asr1 = -(bs / xs + hk) / 2.0
                if asr1 > -100.0:
                    bvn += a * wi * math.exp(asr1) * (
                        math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                        - (1.0 + c * xs * (1.0 + d * xs)))
        bvn = -bvn / (2.0 * math.pi)
    if r > 0.0:
        return bvn + Phi(-max(h, k))
    bvn = -bvn
    if k > h:
        bvn += Phi(k) - Phi(h)
    return bvn


@dataclass(frozen=True)
class BivariateCov:
    """2x2 symmetric positive-definite covariance (a11, a12, a22)."""

    a11: float
    a12: float
    a22: float

    def __post_init__(self):
        if not (self.a11 > 0 and self.a22 > 0
                and self.a11 * self.a22 - self.a12**2 > 0):
            raise ParameterError(
                f"covariance ({self.a11}, {self.a12}; {self.a12}, {self.a22}) "
                "is not positive definite")

    @property
    def correlation(self) -> float:
        return self.a12 / math.sqrt(self.a11 * self.a22)


def bvn_cdf(sigma: BivariateCov, b1: float, b2: float) -> float:
    """P(X1 <= b1, X2 <= b2) for a centered bivariate normal with covariance sigma.

    Deterministic Genz/Drezner-Wesolowsky quadrature; absolute error below
    5e-15 for |correlation| < 1.  +inf limits reduce to the marginal CDF.
    """
    h = b1 if math.isinf(b1) else b1 / math.sqrt(sigma.a11)
    k = b2 if math.isinf(b2) else b2 / math.sqrt(sigma.a22)
    # P(X<=h, Y<=k) = P(-X > -h, -Y > -k), and (-X,-Y) has the same correlation
    p = _bvnu(-h, -k, sigma.correlation)
    return min(1.0, max(0.0, p))


def adaptive_quad(f, a: float, b: float, abs_tol: float = 1e-10,
                  rel_tol: float = 1e-8, limit: int = 200) -> tuple[float, float]:
    """Adaptive quadrature of f over [a, b], b may be +inf (and a -inf).

    Returns (value, err_estimate) with err_estimate <= max(abs_tol,
    rel_tol*|value|) on success.  Semi-infinite ranges go through QUADPACK's
    variable transformation (QAGI), which is equivalent to truncating where
    the transformed integrand underflows.  Raises QuadratureError carrying
    the partial result when the subdivision limit is exhausted without
    reaching tolerance.
    """
    if not (abs_tol > 0 and rel_tol > 0):
        raise ParameterError("tolerances must be positive")
    out = integrate.quad(f, a, b, epsabs=abs_tol, epsrel=rel_tol,
                         limit=limit, full_output=True)
    value, err = out[0], out[1]
    if len(out) > 3:  # warning message present
        if err > max(abs_tol, rel_tol * abs(value)):
            raise QuadratureError(
                f"quadrature did not converge on [{a}, {b}]: {out[3]}",
                value=value, err_estimate=err)
    return value, err
