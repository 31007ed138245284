"""Robustness-infidelity statistics and controller search for XX spin chains."""

from ._version import __version__
from .errors import (
    BudgetExhausted,
    DegenerateTauError,
    NumericalError,
    QRobustError,
    SchemaVersionError,
    ValidationError,
)
from .quantum_core import (
    EigenSystem,
    HermitianOperator,
    basis_state,
    eig_hermitian,
    fidelity_gradient,
    propagate,
    propagator,
    transfer_fidelities,
    transfer_fidelity,
)
from .rng import RngStream
from .spin_model import (
    ChainSpec,
    ControlBounds,
    Controller,
    build_hamiltonian,
    controller_fidelity,
    controller_from_record,
    controller_to_record,
    resolve_target,
)
from .perturbation import NoiseDraw, NoiseModel, perturbed_hamiltonian, sample_fidelities, sample_noise
from .rim_stats import (
    ArimEstimate,
    FidelitySampleSet,
    RimEstimate,
    arim,
    bootstrap_ci,
    ecdf_with_dkw,
    rim,
    rim_error_bound,
    rim_order_relations,
    rim_via_quantile,
    rim2_identity_check,
    spearman,
    worst_case_fidelity,
    yield_fraction,
)
from .consistency import BinnedRankVector, RankVector, TauResult, bin_ranks, tau_b, tau_curve
from .optimizers import (
    Budget,
    FunctionObjective,
    ObjectiveSpec,
    OptimRun,
    evaluate,
    latin_hypercube_init,
    lbfgs,
    nelder_mead,
    run_campaign_search,
)
