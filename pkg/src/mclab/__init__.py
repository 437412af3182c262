"""Memory capacity of linear echo state networks."""

from .errors import (
    ConfigError,
    EchoStatePropertyError,
    ImaginaryResidualError,
    MclabError,
    NonRescalableError,
    NotDiagonalizableError,
    PreconditionError,
    SingularMatrixError,
    StandardizationError,
)
from .exact import (
    Autocovariance,
    EigenData,
    MemoryCurve,
    eigen_data,
    fischer_curve,
    gram_eigenbasis,
    mc_naive,
    mc_neutral,
    mc_oracle_cyclic,
    mc_oracle_delay,
    mc_stationary,
)
from .krylov import (
    KrylovBundle,
    build_krylov,
    kappa_approx,
    qr_diag,
    theta_norms_arnoldi,
    theta_norms_svd,
    vandermonde_factor,
)
from .montecarlo import SampleMC, Trajectory, mc_sample, sample_cov, simulate, theoretical_bias
from .reservoir import (
    GeneratorSpec,
    GramSpec,
    LinearESN,
    MaskSpec,
    generate,
    gram_exact,
    kalman_rank,
    spectral_rescale,
    standardize,
)
from .subspace import OsmResult, mc_osm, mc_osm_plus, monotonicity_report

__version__ = "0.1.0"
