"""Lyapunov exponents and log-norm variances of SL(2,R) random matrix
products, computed from the spectral problem of the transfer operator and
cross-validated by direct Monte Carlo simulation."""

from .sl2core import (
    INFINITY,
    IwasawaParams,
    JacobianKind,
    PoleAtZ,
    RotationVariant,
    SlMatrix,
    Subgroup,
    cocycle,
    compose_iwasawa,
    jacobian,
    lie_residual,
    mobius_apply,
)
from .ensembles import (
    CompoundPoisson,
    GaussianWhiteNoise,
    MatrixEnsemble,
    ParameterLaw,
    an_subgroup_ensemble,
    ensemble_from_config,
    frisch_lloyd_ensemble,
    identity_ensemble,
    ktilde_a_ensemble,
    ktilde_subgroup_ensemble,
    levy_exponent,
    sample_matrix,
    weight_laplace,
)
from .spectral import (
    SolverOptions,
    SpectralReport,
    SpectralSolution,
    fhat_small_s_check,
    gamma1,
    gamma2,
    gamma2_laplace,
    idos,
    lambda2,
    lambda2_laplace,
    solve_recessive,
    solve_recessive_laplace,
    spectral_report,
)
from .mellin import MellinSolution, invariant_mellin, lyapunov_mellin
from .montecarlo import (
    CumulantEstimate,
    DensityHistogram,
    furstenberg_lyapunov,
    gle_direct,
    invariant_density,
    ou_selftest,
    process_cumulants,
    product_cumulants,
)
from .closedform import (
    ContinuumSpec,
    an_gle,
    an_invariant_density,
    concentrated_regime,
    continuum_coefficients,
    halperin_asymptotic,
    ktilde_gle,
    phase_formalism_estimate,
    sps_diagnostics,
    weak_disorder_fl,
)

__version__ = "0.1.0"
