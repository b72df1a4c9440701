__name__ = "bkfilter"
__package__ = "bkfilter"
__version__ = '0.1.0'
__author__ = "bkfilter contributors"

from .exceptions import (
    BKFError,
    UsageError,
    DataError,
    NumericalError,
    InvalidFlag,
    InvalidAlpha,
    InvalidParameter,
    ParseError,
    InvalidSpec,
    DimensionMismatch,
    DegenerateColumn,
    NonFiniteInput,
    EmptyTrace,
    IndexOutOfRange,
    EmptyInterval,
    NotPositiveDefinite,
    SingularGram,
    RegularizationFailed,
    SeparationWarning,
)
from .gaussian import (
    RngStream,
    stable_seed,
    CholeskyFactor,
    cholesky,
    is_positive_definite,
    regularize_to_pd,
    sample_mvn,
    sample_inverse_gamma,
    sample_truncated_normal,
    sample_truncated_normal_many,
)
from .dataset import (
    ResponseKind,
    Dataset,
    load_dataset,
)
from .knockoff import (
    MomentEstimate,
    KnockoffJointModel,
    known_moments,
    estimate_moments,
    construct_s_equicorrelated,
    build_joint_model,
    true_model,
    fit_joint_model,
    sample_knockoffs_marginal,
    delta_statistic,
)
from .gibbs import (
    ChainConfig,
    KnockoffUpdate,
    Trace,
    LinearTrace,
    ProbitTrace,
    read_trace,
    GibbsSampler,
)
from .gibbs_linear import (
    FlatPrior,
    SpikeSlabPrior,
    make_prior,
    spikeslab_weights,
    LinearGibbsSampler,
    run_chain_linear,
)
from .gibbs_probit import (
    ProbitGibbsSampler,
    run_chain_probit,
)
from .selection import (
    FeatureStatisticKind,
    NullBounds,
    SelectionResult,
    feature_statistics,
    estimate_null_bounds,
    bfdr,
    greedy_select,
    select_from_trace,
)
from .diagnostics import (
    DeltaCheck,
    check_delta,
)
from .experiments import (
    CovarianceCase,
    BetaLaw,
    ExperimentSpec,
    ExperimentGrid,
    ExperimentResult,
    GridResult,
    PRESETS,
    load_spec,
    covariance_matrix,
    generate_dataset,
    score,
    run_experiment,
    run_grid,
)
