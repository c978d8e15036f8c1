"""Semi-Markov impulse processes and their jump-diffusion limits.

A numpy/scipy toolkit that simulates small-impulse recurrent processes with
semi-Markov switching, computes the limit process characteristics (drift,
diffusion coefficient, jump kernel) from finite-state averages, simulates the
limit, and statistically verifies the convergence of the scaled scheme.
"""

from .errors import (
    BadSojourn,
    BalanceViolated,
    CholeskyFailure,
    ConfigError,
    CrossRefError,
    DegeneratePair,
    EmptySample,
    EpsTooLarge,
    InsufficientGrid,
    NegativeSigma,
    NoisePSDViolated,
    NonStochasticRow,
    ParseError,
    ReducibleChain,
    SchemaError,
    SingularSystem,
    SmlevyError,
    UnboundedSpec,
)
from .switching import (
    Deterministic,
    ErgodicSummary,
    Exponential,
    Gamma,
    SemiMarkovModel,
    SemiMarkovPath,
    Uniform,
    ergodic_summary,
    sample_path,
    stationary_embedded,
    validate_model,
)
from .impulse import (
    C3_CATALOG,
    Const,
    ImpulseFamily,
    JumpKernel,
    MatrixField,
    ScalarField,
    Sine,
    Tanh,
    VectorField,
    const_matrix,
    const_vector,
    moments,
    recenter_a1,
    sample_impulse,
    second_moment_residue,
    test_function_integral,
    validate_family,
)
from .prelimit import (
    EnsembleStats,
    PathSample,
    PrelimitConfig,
    ensemble,
    increment_moment_check,
    simulate_prelimit,
    sup_moment_check,
)
from .limits import (
    DEFAULT_SIGMA_READING,
    LevyCharacteristics,
    LimitConfig,
    SigmaReading,
    TestFunction,
    apply_generator,
    averaged_characteristics,
    diffusion_coefficient,
    gaussian_bump,
    simulate_limit,
    simulate_limit_ensemble,
    tapered_monomial,
)
from .harness import (
    convergence_experiment,
    generator_consistency,
    ks_distance,
    reference_family,
    reference_model,
    remark_suites,
    sigma_arbitration,
    wasserstein1,
)
from .config import ExperimentConfig, RunConfig, parse_config
from .rng import derive_stream, subseed

__version__ = "0.1.0"
