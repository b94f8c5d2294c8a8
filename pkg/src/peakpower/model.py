"""Domain parameter types shared by the theoretical and simulation engines.

All types are immutable value objects; they can be shared freely across
threads.  Every type serializes to a plain JSON dict with stable field names
(see ``to_dict``/``from_dict``); ``-inf`` thresholds are encoded as the
string ``"-inf"`` because JSON has no infinity literal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import MeanShapeError, ParameterError

NEG_INF = float("-inf")

CONSTANT = "constant"
PARABOLOID = "paraboloid"
GAUSSIAN_BUMP = "gaussian_bump"

_VARIANTS = (CONSTANT, PARABOLOID, GAUSSIAN_BUMP)


@dataclass(frozen=True)
class GridSpec:
    """Regular lattice used for simulation and estimation masking."""

    dims: tuple[int, ...]
    spacing: float = 1.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not 1 <= len(dims) <= 3:
            raise ParameterError(f"grid dimension must be 1..3, got {len(dims)}")
        if any(d < 3 for d in dims):
            raise ParameterError(f"all grid dims must be >= 3, got {dims}")
        if not self.spacing > 0:
            raise ParameterError(f"grid spacing must be positive, got {self.spacing}")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_points(self) -> int:
        return math.prod(self.dims)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "spacing": self.spacing}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(dims=tuple(d["dims"]), spacing=float(d.get("spacing", 1.0)))


@dataclass(frozen=True)
class CovarianceModel:
    """Isotropic noise covariance, written rho(||s-t||^2).

    Parameterized by the first two derivatives of rho at 0.  ``kappa`` is the
    derived shape invariant -rho'/sqrt(rho''); it equals 1 exactly for
    squared-exponential correlation.

    ``kernel_bandwidth`` records, when known, the bandwidth nu of the
    generating squared-exponential correlation rho(d) = exp(-d/(2 nu^2)).
    Note that convolving white noise with a Gaussian kernel of spatial sd nu
    produces correlation exp(-d/(4 nu^2)), i.e. correlation bandwidth
    sqrt(2)*nu; use :meth:`from_convolution_kernel` for that case.
    """

    rho_prime: float
    rho_double_prime: float
    kernel_bandwidth: float | None = None
    kappa: float = field(init=False)

    def __post_init__(self):
        if not (self.rho_prime < 0 and math.isfinite(self.rho_prime)):
            raise ParameterError(f"rho_prime must be negative, got {self.rho_prime}")
        if not (self.rho_double_prime > 0 and math.isfinite(self.rho_double_prime)):
            raise ParameterError(
                f"rho_double_prime must be positive, got {self.rho_double_prime}")
        object.__setattr__(
            self, "kappa", -self.rho_prime / math.sqrt(self.rho_double_prime))

    @classmethod
    def from_kernel_bandwidth(cls, nu: float) -> "CovarianceModel":
        """Squared-exponential correlation rho(d)=exp(-d/(2 nu^2)); kappa=1."""
        if not (isinstance(nu, (int, float)) and nu > 0 and math.isfinite(nu)):
            raise ParameterError(f"kernel bandwidth must be positive, got {nu}")
        nu = float(nu)
        return cls(rho_prime=-1.0 / (2 * nu * nu),
                   rho_double_prime=1.0 / (4 * nu**4),
                   kernel_bandwidth=nu)

    @classmethod
    def from_convolution_kernel(cls, kernel_sd: float) -> "CovarianceModel":
        """Covariance of white noise convolved with a Gaussian kernel of sd nu.

        The kernel autocorrelation is exp(-d/(4 nu^2)), so the correlation
        bandwidth is sqrt(2)*nu.
        """
        if not (isinstance(kernel_sd, (int, float)) and kernel_sd > 0
                and math.isfinite(kernel_sd)):
            raise ParameterError(f"kernel sd must be positive, got {kernel_sd}")
        return cls.from_kernel_bandwidth(math.sqrt(2.0) * float(kernel_sd))

    @property
    def goi_c(self) -> float:
        """Covariance parameter c of the associated GOI matrix ensemble."""
        return (1.0 - self.kappa**2) / 2.0

    def goi_feasible(self, dim: int) -> bool:
        """Whether c >= -1/N, the GOI sampling feasibility bound for dim N."""
        return self.goi_c >= -1.0 / dim

    def validate_for_dim(self, dim: int) -> None:
        if dim not in (1, 2, 3):
            raise ParameterError(f"dimension must be 1, 2 or 3, got {dim}")
        if not self.goi_feasible(dim):
            raise ParameterError(
                f"kappa={self.kappa:.6g} infeasible in dimension {dim}: "
                f"GOI parameter c={self.goi_c:.6g} < -1/{dim}")

    def to_dict(self) -> dict:
        return {
            "rho_prime": self.rho_prime,
            "rho_double_prime": self.rho_double_prime,
            "kernel_bandwidth": self.kernel_bandwidth,
            "kappa": self.kappa,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceModel":
        return cls(rho_prime=float(d["rho_prime"]),
                   rho_double_prime=float(d["rho_double_prime"]),
                   kernel_bandwidth=(None if d.get("kernel_bandwidth") is None
                                     else float(d["kernel_bandwidth"])))


@dataclass(frozen=True)
class MeanModel:
    """Signal shape in noise-SD units.

    constant:      theta(s) = theta0
    paraboloid:    theta(s) = theta0 + theta_pp*||s-center||^2/2, theta_pp < 0
    gaussian_bump: theta(s) = theta0*exp(-||s-center||^2/(2 xi^2))
    """

    variant: str
    theta0: float
    theta_pp: float | None = None
    xi: float | None = None
    center: tuple[float, ...] = ()

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ParameterError(f"unknown mean variant {self.variant!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not math.isfinite(self.theta0):
            raise ParameterError("theta0 must be finite")
        if self.variant == PARABOLOID:
            if self.theta_pp is None or not math.isfinite(self.theta_pp):
                raise ParameterError("paraboloid mean requires finite theta_pp")
            if self.theta_pp > 0:
                raise ParameterError(
                    f"paraboloid curvature must be <= 0, got {self.theta_pp}")
        if self.variant == GAUSSIAN_BUMP:
            if self.xi is None or not (self.xi > 0 and math.isfinite(self.xi)):
                raise ParameterError("gaussian bump requires bandwidth xi > 0")

    @classmethod
    def constant(cls, theta0: float) -> "MeanModel":
        return cls(variant=CONSTANT, theta0=theta0)

    @classmethod
    def paraboloid(cls, theta0: float, theta_pp: float,
                   center: tuple[float, ...] = ()) -> "MeanModel":
        return cls(variant=PARABOLOID, theta0=theta0, theta_pp=theta_pp, center=center)

    @classmethod
    def gaussian_bump(cls, theta0: float, xi: float,
                      center: tuple[float, ...] = ()) -> "MeanModel":
        return cls(variant=GAUSSIAN_BUMP, theta0=theta0, xi=xi, center=center)

    def center_for_dim(self, dim: int) -> tuple[float, ...]:
        if not self.center:
            return (0.0,) * dim
        if len(self.center) != dim:
            raise ParameterError(
                f"mean center has dimension {len(self.center)}, expected {dim}")
        return self.center

    def value(self, r2: float) -> float:
        """theta at squared distance r2 from the center."""
        if self.variant == CONSTANT:
            return self.theta0
        if self.variant == PARABOLOID:
            return self.theta0 + self.theta_pp * r2 / 2.0
        return self.theta0 * math.exp(-r2 / (2.0 * self.xi**2))

    def curvature_at_peak(self) -> float:
        """Second radial derivative of theta at the center."""
        if self.variant == CONSTANT:
            raise MeanShapeError("a constant mean has no peak curvature")
        if self.variant == PARABOLOID:
            return self.theta_pp
        return -self.theta0 / self.xi**2

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "theta0": self.theta0,
            "theta_pp": self.theta_pp,
            "xi": self.xi,
            "center": list(self.center),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MeanModel":
        return cls(variant=d["variant"],
                   theta0=float(d["theta0"]),
                   theta_pp=(None if d.get("theta_pp") is None else float(d["theta_pp"])),
                   xi=(None if d.get("xi") is None else float(d["xi"])),
                   center=tuple(d.get("center", ())))


def quadratic_approx(mean: MeanModel) -> MeanModel:
    """Second-order expansion of a Gaussian bump at its center.

    Returns a paraboloid with the same height and center and curvature
    -theta0/xi^2.
    """
    if mean.variant != GAUSSIAN_BUMP:
        raise MeanShapeError(
            f"quadratic_approx expects a gaussian bump, got {mean.variant!r}")
    return MeanModel.paraboloid(theta0=mean.theta0,
                                theta_pp=-mean.theta0 / mean.xi**2,
                                center=mean.center)


def eta(mean: MeanModel, cov: CovarianceModel) -> float:
    """Relative sharpness theta''/(-2 rho') of the signal peak.

    Defined for peaked means; a Gaussian bump is reduced through its
    quadratic approximation first.
    """
    if mean.variant == CONSTANT:
        raise MeanShapeError("eta is undefined for a constant mean")
    if mean.variant == GAUSSIAN_BUMP:
        mean = quadratic_approx(mean)
    return mean.theta_pp / (-2.0 * cov.rho_prime)


_SURFACE_CONSTANT = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


@dataclass(frozen=True)
class DomainSpec:
    """Search region: a ball of given radius centered at the mean's peak."""

    dim: int
    radius: float
    grid: GridSpec | None = None

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ParameterError(f"domain dimension must be 1, 2 or 3, got {self.dim}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ParameterError(f"domain radius must be positive, got {self.radius}")
        if self.grid is not None and self.grid.ndim != self.dim:
            raise ParameterError(
                f"grid dimension {self.grid.ndim} does not match domain dim {self.dim}")

    @property
    def surface_constant(self) -> float:
        """Angular measure of the unit sphere: 2, 2*pi, 4*pi for N=1,2,3."""
        return _SURFACE_CONSTANT[self.dim]

    @property
    def volume(self) -> float:
        return self.surface_constant * self.radius**self.dim / self.dim

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "radius": self.radius,
            "grid": None if self.grid is None else self.grid.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        return cls(dim=int(d["dim"]), radius=float(d["radius"]),
                   grid=(None if d.get("grid") is None
                         else GridSpec.from_dict(d["grid"])))


def _encode_u(u: float):
    if u == NEG_INF:
        return "-inf"
    if not math.isfinite(u):
        raise ParameterError(f"threshold must be finite or -inf, got {u}")
    return u


def _decode_u(v) -> float:
    if isinstance(v, str):
        if v == "-inf":
            return NEG_INF
        raise ParameterError(f"unrecognized threshold encoding {v!r}")
    return float(v)


@dataclass(frozen=True)
class PowerQuery:
    """One threshold evaluation request for the theoretical engine."""

    u: float
    cov: CovarianceModel
    mean: MeanModel
    domain: DomainSpec

    def __post_init__(self):
        _encode_u(self.u)  # validates
        # the ball is centered at the mean's peak by construction; a center
        # of mismatched dimension is the only way to go off-center
        self.mean.center_for_dim(self.domain.dim)

    def to_dict(self) -> dict:
        return {
            "u": _encode_u(self.u),
            "cov": self.cov.to_dict(),
            "mean": self.mean.to_dict(),
            "domain": self.domain.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PowerQuery":
        return cls(u=_decode_u(d["u"]),
                   cov=CovarianceModel.from_dict(d["cov"]),
                   mean=MeanModel.from_dict(d["mean"]),
                   domain=DomainSpec.from_dict(d["domain"]))
