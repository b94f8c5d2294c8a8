"""Monte Carlo engine: field synthesis, peak counting, GOI sampling.

Fields are built by convolving white Gaussian noise with an L2-normalized
Gaussian kernel, so the result has unit variance exactly.  The noise lattice
is padded by the kernel half-width on every side and the convolution taken
in 'valid' mode, so every retained pixel sees the full kernel and the
statistics are stationary across the grid.

Replicates draw from counter-based Philox substreams keyed by
(master_seed, replicate_index): embarrassingly parallel and independent of
worker count.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .errors import ParameterError
from .model import NEG_INF, DomainSpec, GridSpec, MeanModel

__all__ = [
    "FieldSample", "PeakSet", "MCSummary", "substream", "gaussian_kernel",
    "synthesize_field", "domain_mask", "find_local_maxima", "mc_power_and_emu",
    "sample_goi", "mc_H", "write_mc_csv",
]

# per-axis size at or above which synthesis convolves via FFT
FFT_CROSSOVER = 64


@dataclass(frozen=True)
class FieldSample:
    """One synthesized realization X = noise*kernel + theta on a grid."""

    grid: GridSpec
    values: np.ndarray
    seed: int
    replicate_index: int

    def __post_init__(self):
        if self.values.shape != self.grid.dims:
            raise ParameterError(
                f"field shape {self.values.shape} does not match grid {self.grid.dims}")


@dataclass(frozen=True)
class PeakSet:
    """Strict Moore-neighborhood maxima above a threshold."""

    locations: np.ndarray  # (n_peaks, ndim) int lattice indices
    heights: np.ndarray    # (n_peaks,)

    def __len__(self):
        return len(self.heights)


@dataclass(frozen=True)
class MCSummary:
    """Empirical power and expected peak count at one threshold."""

    u: float
    B: int
    power_hat: float
    se_power: float
    e_mu_hat: float
    se_e_mu: float

    def __post_init__(self):
        if not 0.0 <= self.power_hat <= 1.0:
            raise ParameterError(f"power_hat out of [0,1]: {self.power_hat}")
        if self.power_hat > self.e_mu_hat + 1e-12:
            raise ParameterError("power_hat cannot exceed e_mu_hat")


def _check_seed(master_seed: int) -> int:
    if not isinstance(master_seed, (int, np.integer)):
        raise ParameterError(f"seed must be an integer, got {master_seed!r}")
    if not 0 <= master_seed < 2**64:
        raise ParameterError(f"seed must fit in 64 bits, got {master_seed}")
    return int(master_seed)


def substream(master_seed: int, replicate_index: int) -> np.random.Generator:
    """Counter-based Philox stream for one replicate.

    The replicate index is placed in a high counter word, giving every
    replicate 2^128 blocks of non-overlapping stream.
    """
    master_seed = _check_seed(master_seed)
    if replicate_index < 0 or replicate_index >= 2**64:
        raise ParameterError(f"replicate index out of range: {replicate_index}")
    counter = np.array([0, 0, replicate_index, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=master_seed, counter=counter))


def gaussian_kernel(nu: float, trunc_radius: float, grid: GridSpec) -> np.ndarray:
    """Rotationally symmetric Gaussian kernel of spatial sd nu, L2-normalized.

    Sampled on the grid lattice and truncated at trunc_radius (>= 4 nu), so
    white noise convolved with it has unit variance exactly.  The implied
    field correlation at lag r is exp(-r^2/(4 nu^2)) up to truncation terms.
    """
    if not nu > 0:
        raise ParameterError(f"kernel sd must be positive, got {nu}")
    if trunc_radius < 4.0 * nu:
        raise ParameterError(
            f"truncation radius {trunc_radius} too small; need >= 4*nu = {4*nu}")
    half = int(math.floor(trunc_radius / grid.spacing))
    ax = np.arange(-half, half + 1, dtype=float) * grid.spacing
    grids = np.meshgrid(*([ax] * grid.ndim), indexing="ij")
    r2 = sum(g * g for g in grids)
    kernel = np.exp(-r2 / (2.0 * nu * nu))
    kernel /= math.sqrt(float((kernel**2).sum()))
    return kernel


def _lattice_r2(grid: GridSpec, center: tuple[float, ...]) -> np.ndarray:
    coords = np.meshgrid(*[np.arange(d, dtype=float) * grid.spacing
                           for d in grid.dims], indexing="ij")
    return sum((c - c0) ** 2 for c, c0 in zip(coords, center))


def _mean_lattice(grid: GridSpec, mean: MeanModel) -> np.ndarray:
    center = mean.center_for_dim(grid.ndim)
    r2 = _lattice_r2(grid, center)
    if mean.variant == "constant":
        return np.full(grid.dims, mean.theta0)
    if mean.variant == "paraboloid":
        return mean.theta0 + mean.theta_pp * r2 / 2.0
    return mean.theta0 * np.exp(-r2 / (2.0 * mean.xi**2))


def synthesize_noise(grid: GridSpec, kernel: np.ndarray,
                     rng: np.random.Generator,
                     empirical_normalization: bool = False) -> np.ndarray:
    """Unit-variance noise field: padded white noise convolved with the kernel."""
    if kernel.ndim != grid.ndim:
        raise ParameterError(
            f"kernel dimension {kernel.ndim} does not match grid {grid.ndim}")
    half = tuple((s - 1) // 2 for s in kernel.shape)
    noise_shape = tuple(d + 2 * h for d, h in zip(grid.dims, half))
    white = rng.standard_normal(noise_shape)
    method = "fft" if all(s >= FFT_CROSSOVER for s in noise_shape) else "direct"
    z = signal.convolve(white, kernel, mode="valid", method=method)
    if empirical_normalization:
        z = (z - z.mean()) / z.std(ddof=0)
    return z


def synthesize_field(grid: GridSpec, kernel: np.ndarray, mean: MeanModel,
                     master_seed: int, replicate_index: int,
                     empirical_normalization: bool = False) -> FieldSample:
    """Deterministic replicate: X = (white noise * kernel) + theta."""
    rng = substream(master_seed, replicate_index)
    z = synthesize_noise(grid, kernel, rng, empirical_normalization)
    values = z + _mean_lattice(grid, mean)
    return FieldSample(grid=grid, values=values, seed=int(master_seed),
                       replicate_index=replicate_index)


def domain_mask(grid: GridSpec, domain: DomainSpec, center: tuple[float, ...]) -> np.ndarray:
    """Lattice points inside the ball of the domain around the given center."""
    if grid.ndim != domain.dim:
        raise ParameterError("grid and domain dimensions disagree")
    return _lattice_r2(grid, center) <= domain.radius**2


def _moore_footprint(ndim: int) -> np.ndarray:
    fp = np.ones((3,) * ndim, dtype=bool)
    fp[(1,) * ndim] = False
    return fp


def find_local_maxima(field: FieldSample, domain_mask: np.ndarray,
                      u: float = NEG_INF) -> PeakSet:
    """Grid points strictly above all Moore neighbors, in the mask interior.

    Plateau points are never peaks (strict inequality); border pixels are
    excluded because their neighborhood is incomplete.
    """
    values = field.values
    if domain_mask.shape != values.shape:
        raise ParameterError("mask shape does not match field")
    if not domain_mask.any():
        raise ParameterError("empty domain mask")
    neigh = ndimage.maximum_filter(values, footprint=_moore_footprint(values.ndim),
                                   mode="constant", cval=-np.inf)
    is_peak = values > neigh
    interior = np.zeros_like(is_peak)
    interior[(slice(1, -1),) * values.ndim] = True
    is_peak &= interior & domain_mask
    if u != NEG_INF:
        is_peak &= values > u
    locations = np.argwhere(is_peak)
    return PeakSet(locations=locations, heights=values[is_peak])


def _replicate_counts(b: int, grid: GridSpec, kernel: np.ndarray, mean: MeanModel,
                      mask: np.ndarray, u_grid: np.ndarray, master_seed: int,
                      empirical_normalization: bool) -> np.ndarray:
    field = synthesize_field(grid, kernel, mean, master_seed, b,
                             empirical_normalization)
    peaks = find_local_maxima(field, mask)
    heights = np.sort(peaks.heights)
    return heights.size - np.searchsorted(heights, u_grid, side="right")


def mc_power_and_emu(B: int, u_grid, grid: GridSpec, kernel: np.ndarray,
                     mean: MeanModel, domain: DomainSpec, master_seed: int,
                     threads: int | None = None,
                     empirical_normalization: bool = False) -> list[MCSummary]:
    """Empirical power and E[M_u] over a threshold grid, one pass over replicates.

    Results are independent of the worker count: every replicate owns a
    counter-based substream and counts land in a slot indexed by replicate,
    so the reduction order is fixed.
    """
    if B < 1:
        raise ParameterError(f"need at least one replicate, got B={B}")
    master_seed = _check_seed(master_seed)
    u_arr = np.asarray(list(u_grid), dtype=float)
    center = mean.center_for_dim(grid.ndim)
    mask = domain_mask(grid, domain, center)
    counts = np.zeros((B, u_arr.size))

    def run(b):
        counts[b] = _replicate_counts(b, grid, kernel, mean, mask, u_arr,
                                      master_seed, empirical_normalization)

    if threads is None or threads <= 1:
        for b in range(B):
            run(b)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(B)))

    summaries = []
    for j, u in enumerate(u_arr):
        col = counts[:, j]
        p_hat = float((col >= 1).mean())
        e_hat = float(col.mean())
        summaries.append(MCSummary(
            u=float(u), B=B, power_hat=p_hat,
            se_power=math.sqrt(p_hat * (1.0 - p_hat) / B),
            e_mu_hat=e_hat, se_e_mu=float(col.std(ddof=0)) / math.sqrt(B)))
    return summaries


def sample_goi(N: int, c: float, rng: np.random.Generator,
               size: int = 1) -> np.ndarray:
    """Symmetric Gaussian matrices with entry covariance
    (delta_ik delta_jl + delta_il delta_jk)/2 + c delta_ij delta_kl.

    Off-diagonals are independent N(0, 1/2); the diagonal is multivariate
    normal with covariance I + c*J, realized as z + alpha*(sum z) with
    alpha = (sqrt(1 + N c) - 1)/N.  Requires c >= -1/N.
    """
    if N < 1:
        raise ParameterError(f"matrix dimension must be >= 1, got {N}")
    if c < -1.0 / N:
        raise ParameterError(f"GOI parameter c={c} infeasible: need c >= -1/{N}")
    a = rng.standard_normal((size, N, N))
    g = (a + np.transpose(a, (0, 2, 1))) / 2.0  # off-diag var 1/2
    z = rng.standard_normal((size, N))
    alpha = (math.sqrt(1.0 + N * c) - 1.0) / N
    diag = z + alpha * z.sum(axis=1, keepdims=True)
    idx = np.arange(N)
    g[:, idx, idx] = diag
    return g


_EIG_CHUNK = 250_000


def mc_H_many(x_tildes, kappa: float, N: int, n_samples: int,
              master_seed: int) -> list[tuple[float, float]]:
    """Monte Carlo estimates of the GOI determinant factor, one per x_tilde.

    All thresholds share the same eigenvalue sample, so estimates are
    correlated across x_tilde but each carries its own standard error.
    """
    if n_samples < 2:
        raise ParameterError(f"need at least 2 samples, got {n_samples}")
    c = (1.0 - kappa * kappa) / 2.0
    if c < -1.0 / N:
        raise ParameterError(f"kappa={kappa} infeasible for N={N}")
    rng = substream(_check_seed(master_seed), 0)
    bs = [kappa * float(x) / math.sqrt(2.0) for x in x_tildes]
    sums = np.zeros(len(bs))
    sq_sums = np.zeros(len(bs))
    done = 0
    while done < n_samples:
        m = min(_EIG_CHUNK, n_samples - done)
        g = sample_goi(N, c, rng, size=m)
        if N == 1:
            lam = g.reshape(m, 1)
        else:
            lam = np.linalg.eigvalsh(g)
        for j, b in enumerate(bs):
            vals = np.prod(np.abs(lam - b), axis=1)
            vals *= lam[:, -1] < b
            sums[j] += vals.sum()
            sq_sums[j] += (vals * vals).sum()
        done += m
    out = []
    for j in range(len(bs)):
        mean = sums[j] / n_samples
        var = max(sq_sums[j] / n_samples - mean * mean, 0.0)
        out.append((float(mean), math.sqrt(var / n_samples)))
    return out


def mc_H(x_tilde: float, kappa: float, N: int, n_samples: int,
         master_seed: int) -> tuple[float, float]:
    """Monte Carlo estimate (value, se) of the GOI determinant factor."""
    return mc_H_many([x_tilde], kappa, N, n_samples, master_seed)[0]


_MC_CSV_COLUMNS = ("u", "B", "power_hat", "se_power", "e_mu_hat", "se_e_mu",
                   "master_seed")


def write_mc_csv(summaries: list[MCSummary], master_seed: int, fh: io.TextIOBase,
                 extra_columns: dict[str, list[float]] | None = None) -> None:
    """Write MCSummary records as CSV with 17-significant-digit floats."""
    cols = list(_MC_CSV_COLUMNS)
    extra = extra_columns or {}
    cols.extend(extra.keys())
    fh.write(",".join(cols) + "\n")
    for i, s in enumerate(summaries):
        row = [f"{s.u:.17g}", str(s.B), f"{s.power_hat:.17g}", f"{s.se_power:.17g}",
               f"{s.e_mu_hat:.17g}", f"{s.se_e_mu:.17g}", str(master_seed)]
        row.extend(f"{extra[k][i]:.17g}" for k in extra)
        fh.write(",".join(row) + "\n")
