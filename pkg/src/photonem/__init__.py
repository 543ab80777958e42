"""
photonem
========

Reconstruction of photon-number distributions from random-phase homodyne
statistics by maximum-likelihood EM iteration, with the Monte Carlo and
response-matrix machinery needed to test it.

Modules
-------
quadrature   Fock quadrature densities, loss model, binned response matrix
states       photon-number distributions and benchmark states
simulate     homodyne event samplers and histograms
estimation   likelihood, EM iteration, stationarity check, baselines
cli          command-line pipeline
"""

from .errors import DomainError, InfeasibleError, NumericalError, PhotonEMError, ValidationError
from .estimation import (
    EMConfig,
    ReconstructionResult,
    bootstrap_errors,
    em_reconstruct,
    em_step,
    forward_probabilities,
    kkt_residual,
    likelihood_gradient,
    linear_baseline,
    log_likelihood,
)
from .quadrature import (
    STANDARD_GRID,
    BinGrid,
    ResponseMatrix,
    bernoulli_loss_matrix,
    fock_density,
    fock_loss_density,
    fock_wavefunction,
    fock_wavefunctions,
    response_matrix,
    response_matrix_convolution_oracle,
)
from .simulate import EventBatch, Histogram, bin_events, sample_fock_route, sample_gaussian_route
from .states import (
    PhotonDistribution,
    coherent_distribution,
    distribution_from_file,
    mean_photon_number,
    squeezed_vacuum_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "bernoulli_loss_matrix",
    "bin_events",
    "BinGrid",
    "bootstrap_errors",
    "coherent_distribution",
    "distribution_from_file",
    "DomainError",
    "em_reconstruct",
    "em_step",
    "EMConfig",
    "EventBatch",
    "fock_density",
    "fock_loss_density",
    "fock_wavefunction",
    "fock_wavefunctions",
    "forward_probabilities",
    "Histogram",
    "InfeasibleError",
    "kkt_residual",
    "likelihood_gradient",
    "linear_baseline",
    "log_likelihood",
    "mean_photon_number",
    "NumericalError",
    "PhotonDistribution",
    "PhotonEMError",
    "ReconstructionResult",
    "response_matrix",
    "response_matrix_convolution_oracle",
    "ResponseMatrix",
    "sample_fock_route",
    "sample_gaussian_route",
    "squeezed_vacuum_distribution",
    "STANDARD_GRID",
    "ValidationError",
]
