"""Desk-scale toolkit for time-correlated photon-counting decay analysis.

Simulates photon-count histograms, either from first-principles survival
probabilities of a spectral line shape or from phenomenological decay
models, fits them with Poisson-weighted chi-square minimization, and
combines per-channel lifetime estimates.
"""

from .combine import (Estimate, WeightedEstimate, check_consistency,
                      inverse_variance_mean)
from .errors import (DegenerateDataError, EvaluationError, QuadratureError,
                     RankDeficiencyError, SchemaError)
from .fitter import FitOptions, FitResult, chi_squared, fit, initial_guess
from .models import (DecayModel, ModelKind, NonExpParams, TwoExpParams,
                     non_exp, two_exp)
from .spectral import (DistributionKind, EnergyDistribution, intensity,
                       survival_amplitude, survival_probability)
from .synth import (AcquisitionConfig, Histogram, expected_counts,
                    expected_histogram, from_spectral, read_histogram,
                    simulate_histogram, write_histogram)

__version__ = "0.1.0"
