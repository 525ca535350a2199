"""Iterative phase estimation of many eigenvalues with one ancilla qubit."""

from .analysis import (
    DistributionTable,
    EstimationResult,
    OutcomeHistogram,
    adaptive_pdf,
    estimate_adaptive,
    estimate_repetitive,
    fejer,
    hoeffding_samples,
    repetitive_pdf,
    scaling_fit,
    scheme_samples,
    separation_m,
)
from .channel import (
    KrausPair,
    RimSettings,
    build_evolution,
    build_rim_kraus,
    channel_spectrum,
    compose_sequence,
    natural_rep,
    natural_rep_closed_form,
    noisy_rim_superop,
)
from .errors import IterQPEError
from .model import NoiseSpec, SpectralOperator, SpinStarParams, build_spin_star
from .sampler import (
    AdaptivePlan,
    InitialState,
    RepetitiveScheme,
    enumerate_trajectories,
    sample_adaptive,
    sample_repetitive,
)

__version__ = "0.1.0"
