"""Convolutional approximate message passing and baselines for compressed sensing."""

from camp.denoise import Denoiser, divergence_mean, soft_threshold, soft_threshold_derivative
from camp.model import (
    Measurement,
    SignalPrior,
    geometric_singular_values,
    measure,
    sample_iid_gaussian,
    sample_partial_hadamard,
    sample_signal,
)
from camp.solvers import SolverConfig, SolverTrajectory, amp_run, camp_run, oamp_vamp_run
from camp.spectral import (
    SpectralProfile,
    TapTable,
    asymptotic_moments_geometric,
    empirical_moments,
    marchenko_pastur_moments,
    tap_recursion,
    taps_geometric_closed_form,
    verify_theorem2,
)

__version__ = "0.1.0"
