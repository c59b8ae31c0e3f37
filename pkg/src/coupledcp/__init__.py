"""Joint CP decompositions of coupled tensors with flexible stochastic
couplings: ALS and multiplicative-update solvers, joint compression,
Bayesian/hybrid Cramer-Rao bounds, and a Monte-Carlo experiment harness.
"""

__version__ = "0.1.0"

from .tensor import (
    CpModel,
    DegenerateColumnError,
    cp_to_tensor,
    dense_svd,
    khatri_rao,
    normalize_columns,
    randomized_svd,
    refold,
    unfold,
)
from .coupling import (
    CauchyCoupling,
    CoupledProblem,
    GaussianNoise,
    HardCoupling,
    HybridGaussian,
    LaplaceCoupling,
    TweedieCoupling,
    TweedieNoise,
    beta_divergence,
    coupling_cost,
    dirichlet_interpolation_matrix,
    total_objective,
)
from .als import (
    AlsConfig,
    SolveTrace,
    align_components,
    coupled_als,
    sylvester_solve,
    uncoupled_als,
    update_coupled_factors_joint,
    update_coupled_factors_sequential,
)
from .mu import MuConfig, coupled_mu, mu_gradient_parts, mu_step, uncoupled_mu
from .compress import (
    CompressionBases,
    compress_coupled_problem,
    decompress_model,
    joint_mode3_basis,
    truncated_hosvd,
)
from .crb import (
    BoundResult,
    CrbScenario,
    bound,
    expected_fisher_bayesian,
    expected_fisher_hybrid,
    fisher_blocks,
    prior_matrix,
)
from .metrics import (
    align_to_truth,
    gauge_fix,
    reconstruct_continuous_error,
    sigma_for_snr,
    snr_db,
    total_mse,
)
from .config import ExperimentConfig, default_config, load_config, reconstruction_defaults
from .scenarios import ResultRow, compute_scenario_hcrb, run_and_write, run_scenario
