"""Koopman spectral Wasserstein gradient descent.

Particles follow a deterministic flow driven by a truncated inverse of the
Langevin generator, estimated from snapshot pairs with (kernel) EDMD.
"""

__version__ = "0.1.0"

from .dictionary import (
    GaussianKernel,
    KernelFeatures,
    MonomialDictionary,
    PolynomialKernel,
    RBFDictionary,
    eval_dictionary,
    eval_dictionary_grad,
    gram,
    median_heuristic,
)
from .engine import (
    ParticleEnsemble,
    Probes,
    RunRecord,
    StopRule,
    kswgd_step,
    movement_rate,
    run_kswgd,
    well_coverage,
)
from .errors import KSWGDError
from .koopman import (
    KoopmanEstimate,
    SpectralModel,
    eval_eigenfunction_grads,
    eval_eigenfunctions,
    fit_edmd,
    fit_kernel_edmd,
    generator_spectrum,
    kernel_grad1,
    kernel_value,
    projection_residual,
)
from .latent import fit_koopman_latent, fit_latent_map, lift_polynomial, predict_latent
from .metrics import GaussianOracle, circular_uniformity, decay_fit, gaussian_kl_proxy
from .pairs import SnapshotPairs
from .score import ScoreEstimate, fit_kde_score, score_at, synthesize_pairs_static
from .systems import (
    PotentialSpec,
    Trajectory,
    make_pairs_timeseries,
    make_rng,
    potential_grad,
    simulate_langevin,
    simulate_sphere_langevin,
)
