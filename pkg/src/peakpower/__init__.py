"""Peak detection power for smooth isotropic Gaussian random fields.

The expected number of local maxima above a threshold approximates the
power of a peak detection test; this package evaluates it in closed form
for 1D/2D/3D isotropic fields, validates it by Monte Carlo field
simulation, and estimates the required model parameters from multi-subject
image stacks.
"""

from .emu import (PowerResult, adjusted_expected_peaks, expected_peaks,
                  expected_peaks_1d_general, h_1d, h_2d, h_3d,
                  null_overshoot_survival, power_curve, sharp_signal_approx,
                  threshold_for_alpha)
from .errors import (BundleFormatError, ConfigError, ConsistencyError,
                     EstimationError, MeanShapeError, ParameterError,
                     PeakPowerError, QuadratureError, SolverError)
from .estimate import (KernelEstimate, QuadraticMeanFit, SubjectStack,
                       covariance_from_kernel_estimate, estimate_kernel,
                       fit_quadratic_mean, standardize)
from .model import (NEG_INF, CovarianceModel, DomainSpec, GridSpec, MeanModel,
                    PowerQuery, eta, quadratic_approx)
from .randfield import (FieldSample, MCSummary, PeakSet, find_local_maxima,
                        gaussian_kernel, mc_H, mc_power_and_emu, sample_goi,
                        synthesize_field)

__version__ = "0.1.0"
