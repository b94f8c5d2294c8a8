"""Parameter estimation from multi-subject image stacks.

The pipeline mirrors a group analysis: standardize the subject stack into a
unit-noise field, recover the smoothing kernel from empirical lag
correlations around the peak via a Fourier square root, and fit a
rotationally symmetric paraboloid to the mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, ParameterError
from .model import CovarianceModel, GridSpec


@dataclass(frozen=True)
class SubjectStack:
    """Multi-subject data on a common grid, indexed (voxel, subject)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ParameterError("values must be a (n_voxels, n_subjects) array")
        if self.values.shape[0] != self.grid.n_points:
            raise ParameterError(
                f"{self.values.shape[0]} voxels but grid has {self.grid.n_points}")
        if self.n_subjects < 2:
            raise EstimationError(
                f"standardization needs at least 2 subjects, got {self.n_subjects}")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("subject stack contains non-finite values")

    @property
    def n_subjects(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_volumes(cls, volumes: np.ndarray, spacing: float = 1.0) -> "SubjectStack":
        """Build from an array shaped (n_subjects, *dims)."""
        volumes = np.asarray(volumes, dtype=float)
        grid = GridSpec(dims=volumes.shape[1:], spacing=spacing)
        flat = volumes.reshape(volumes.shape[0], -1).T
        return cls(grid=grid, values=np.ascontiguousarray(flat))

    def spatial(self) -> np.ndarray:
        """View shaped (*dims, n_subjects)."""
        return self.values.reshape(*self.grid.dims, self.n_subjects)


def zero_variance_voxels(stack: SubjectStack) -> np.ndarray:
    """Lattice indices of voxels whose across-subject sd is zero."""
    sd = stack.values.std(axis=1, ddof=1)
    flat = np.flatnonzero(sd == 0.0)
    return np.stack(np.unravel_index(flat, stack.grid.dims), axis=1) if flat.size \
        else np.empty((0, stack.grid.ndim), dtype=int)


def standardize(stack: SubjectStack, mask: np.ndarray | None = None) -> np.ndarray:
    """Unit-noise field: mean(Y)/(sd(Y)/sqrt(n)), sd with n-1 denominator.

    Raises if any zero-variance voxel lies inside the mask (default: the
    whole grid); zero-variance voxels outside the mask come out as NaN.
    """
    n = stack.n_subjects
    mean = stack.values.mean(axis=1)
    sd = stack.values.std(axis=1, ddof=1)
    bad = sd == 0.0
    if bad.any():
        bad_grid = bad.reshape(stack.grid.dims)
        in_mask = bad_grid if mask is None else (bad_grid & mask)
        if in_mask.any():
            voxels = np.argwhere(in_mask)[:20].tolist()
            raise EstimationError(
                f"zero-variance voxels inside the region of interest: {voxels}")
    with np.errstate(divide="ignore", invalid="ignore"):
        x = mean / (sd / math.sqrt(n))
    x[bad] = np.nan
    return x.reshape(stack.grid.dims)


@dataclass(frozen=True)
class KernelEstimate:
    """Kernel recovered from empirical lag correlations.

    ``radial_profile`` holds the L2-normalized kernel at lags -w..w,
    ``implied_correlation`` its circular autocorrelation (1 at lag 0), and
    ``clamped_fraction`` the spectral mass removed by clamping.
    """

    radial_profile: np.ndarray
    implied_correlation: np.ndarray
    subdomain: GridSpec
    clamped_fraction: float
    empirical_correlation: np.ndarray

    @property
    def half_width(self) -> int:
        return (len(self.radial_profile) - 1) // 2

    def to_dict(self) -> dict:
        return {
            "radial_profile": self.radial_profile.tolist(),
            "implied_correlation": self.implied_correlation.tolist(),
            "empirical_correlation": self.empirical_correlation.tolist(),
            "subdomain": self.subdomain.to_dict(),
            "clamped_fraction": self.clamped_fraction,
        }


def _axis_correlation(resid: np.ndarray, s0: tuple[int, ...], axis: int,
                      w: int) -> np.ndarray:
    """Across-subject correlation between the anchor voxel and axis lags."""
    anchor = resid[tuple(s0)]
    out = np.empty(2 * w + 1)
    for lag in range(-w, w + 1):
        pos = list(s0)
        pos[axis] += lag
        other = resid[tuple(pos)]
        num = float(np.dot(anchor - anchor.mean(), other - other.mean()))
        den = math.sqrt(float(((anchor - anchor.mean())**2).sum()
                              * ((other - other.mean())**2).sum()))
        out[lag + w] = num / den if den > 0 else 0.0
    return out


def estimate_kernel(stack: SubjectStack, s0: tuple[int, ...], half_width: int = 7,
                    spectral_floor: float = 3.0) -> KernelEstimate:
    """Recover the smoothing kernel around the peak.

    Per axis: across-subject correlation of the standardized residuals
    between s0 and lattice points at lags -w..w, flip-averaged so the vector
    is exactly symmetric; axes averaged.  The Fourier coefficients of the
    correlation are clamped to be nonnegative (and, with spectral_floor > 0,
    coefficients below floor*robust-sigma of the high-frequency half are
    zeroed; sampling noise there otherwise dominates the square root), then
    the kernel is the inverse transform of the square root, L2-normalized.
    """
    grid = stack.grid
    w = int(half_width)
    if w < 3:
        raise ParameterError("kernel estimation needs half-width >= 3")
    s0 = tuple(int(c) for c in s0)
    if len(s0) != grid.ndim:
        raise ParameterError("peak location dimension mismatch")
    for c, d in zip(s0, grid.dims):
        if c - w < 0 or c + w >= d:
            raise ParameterError(
                f"subdomain of half-width {w} around {s0} exceeds grid {grid.dims}")

    vals = stack.spatial()
    mean = vals.mean(axis=-1, keepdims=True)
    sd = vals.std(axis=-1, ddof=1, keepdims=True)
    if np.any(sd == 0.0):
        raise EstimationError("zero-variance voxel inside the estimation subdomain")
    resid = (vals - mean) / sd

    corr = np.zeros(2 * w + 1)
    for axis in range(grid.ndim):
        v = _axis_correlation(resid, s0, axis, w)
        corr += 0.5 * (v + v[::-1]) / grid.ndim

    spec = np.fft.fft(np.fft.ifftshift(corr)).real
    total_mass = float(np.abs(spec).sum())
    keep = spec > 0.0
    if spectral_floor > 0.0:
        m = len(spec)
        hi = np.abs(spec[m // 4: 3 * m // 4 + 1])
        sigma = 1.4826 * float(np.median(np.abs(hi - np.median(hi))))
        keep &= spec >= spectral_floor * max(sigma, 1e-300)
    clamped = np.where(keep, spec, 0.0)
    frac = 1.0 - float(clamped.sum()) / total_mass if total_mass > 0 else 0.0
    if frac > 0.20:
        raise EstimationError(
            f"{frac:.0%} of the spectral mass is invalid; the empirical "
            "correlation is too far from positive definite")

    kernel = np.fft.fftshift(np.fft.ifft(np.sqrt(clamped)).real)
    norm = math.sqrt(float((kernel**2).sum()))
    if norm == 0.0:
        raise EstimationError("estimated kernel is identically zero")
    kernel /= norm

    acf = np.fft.fftshift(np.fft.ifft(clamped).real)
    acf /= acf[w]
    return KernelEstimate(radial_profile=kernel, implied_correlation=acf,
                          subdomain=GridSpec(dims=(2 * w + 1,) * grid.ndim,
                                             spacing=grid.spacing),
                          clamped_fraction=frac,
                          empirical_correlation=corr)


@dataclass(frozen=True)
class QuadraticMeanFit:
    """OLS fit of a rotationally symmetric paraboloid beta0 + beta1*||s||^2 + b.s."""

    beta: tuple[float, ...]
    center_hat: tuple[float, ...]
    theta0: float
    theta_pp: float
    residual_rmse: float

    def to_dict(self) -> dict:
        return {
            "beta": list(self.beta),
            "center_hat": list(self.center_hat),
            "theta0": self.theta0,
            "theta_pp": self.theta_pp,
            "residual_rmse": self.residual_rmse,
        }

    @classmethod
    def from_beta(cls, beta, residual_rmse: float = 0.0) -> "QuadraticMeanFit":
        beta = tuple(float(b) for b in beta)
        b0, b1 = beta[0], beta[1]
        bvec = np.asarray(beta[2:])
        if b1 >= 0.0:
            raise EstimationError(
                f"quadratic coefficient must be negative for a peak, got {b1}")
        center = -bvec / (2.0 * b1)
        theta0 = b0 + b1 * float(center @ center) + float(bvec @ center)
        return cls(beta=beta, center_hat=tuple(center.tolist()), theta0=theta0,
                   theta_pp=2.0 * b1, residual_rmse=residual_rmse)

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticMeanFit":
        return cls.from_beta(d["beta"], residual_rmse=float(d.get("residual_rmse", 0.0)))


def fit_quadratic_mean(x: np.ndarray, center: tuple[int, ...], half_width: int,
                       spacing: float = 1.0) -> QuadraticMeanFit:
    """Least squares of the field on [1, ||s||^2, s] over a centered box.

    Coordinates are absolute lattice positions times the spacing, so the fit
    is translation-equivariant: shifting the box shifts center_hat and
    leaves theta0 and theta_pp unchanged.
    """
    ndim = x.ndim
    w = int(half_width)
    center = tuple(int(c) for c in center)
    if len(center) != ndim:
        raise ParameterError("box center dimension mismatch")
    for c, d in zip(center, x.shape):
        if c - w < 0 or c + w >= d:
            raise ParameterError(f"box of half-width {w} around {center} "
                                 f"exceeds field shape {x.shape}")
    if (2 * w + 1) ** ndim < ndim + 2:
        raise ParameterError("box too small for the quadratic design")

    sel = [np.arange(c - w, c + w + 1) for c in center]
    grids = np.meshgrid(*sel, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1).astype(float) * spacing
    y = x[tuple(g.ravel() for g in grids)]
    if not np.all(np.isfinite(y)):
        raise EstimationError("non-finite field values inside the fit box")
    design = np.column_stack([np.ones(len(y)), (pts**2).sum(axis=1), pts])
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise EstimationError("rank-deficient quadratic design")
    resid = y - design @ beta
    rmse = math.sqrt(float((resid**2).mean()))
    return QuadraticMeanFit.from_beta(beta, residual_rmse=rmse)


def covariance_from_kernel_estimate(est: KernelEstimate,
                                    gaussian_tol: float = 0.05) -> CovarianceModel:
    """Covariance scalars implied by an estimated kernel.

    If the implied correlation is within ``gaussian_tol`` relative L2
    distance of its best-fit squared exponential, the field is treated as
    squared-exponential (kappa = 1) with the fitted bandwidth.  Otherwise
    rho' and rho'' come from fourth-order central differences of the
    implied correlation at lag 0.
    """
    w = est.half_width
    h = est.subdomain.spacing
    corr = est.implied_correlation
    lags = np.arange(-w, w + 1, dtype=float) * h

    usable = (corr > 0.05) & (lags != 0.0)
    if usable.sum() >= 2:
        r2 = lags[usable] ** 2
        beta = -float(np.sum(r2 * np.log(corr[usable])) / np.sum(r2 * r2))
        if beta > 0:
            nu_c = 1.0 / math.sqrt(2.0 * beta)
            gauss = np.exp(-lags**2 / (2.0 * nu_c * nu_c))
            dist = float(np.linalg.norm(corr - gauss) / np.linalg.norm(corr))
            if dist < gaussian_tol:
                return CovarianceModel.from_kernel_bandwidth(nu_c)

    if w < 3:
        raise EstimationError("need half-width >= 3 for finite-difference fallback")
    c = corr[w: w + 4]  # c[k] = correlation at lag k*h
    d2 = (-c[2] + 16.0 * c[1] - 30.0 * c[0] + 16.0 * c[1] - c[2]) / (12.0 * h * h)
    d4 = (-c[3] + 12.0 * c[2] - 39.0 * c[1] + 56.0 * c[0]
          - 39.0 * c[1] + 12.0 * c[2] - c[3]) / (6.0 * h**4)
    rho_p = d2 / 2.0
    rho_pp = d4 / 12.0
    if not (rho_p < 0.0 and rho_pp > 0.0):
        raise EstimationError(
            f"implied correlation is not smooth-peaked: rho'={rho_p}, rho''={rho_pp}")
    return CovarianceModel(rho_prime=rho_p, rho_double_prime=rho_pp)
