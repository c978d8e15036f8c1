"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures with 3, failed experiment verdicts with 1.
"""


class SmlevyError(Exception):
    """Base class for all package errors."""

    exit_code = 3


# -- switching-model validation ------------------------------------------

class ModelError(SmlevyError):
    exit_code = 2


class NonStochasticRow(ModelError):
    """A row of the embedded transition matrix does not sum to one."""


class ReducibleChain(ModelError):
    """The support graph of the embedded chain is not strongly connected."""


class BadSojourn(ModelError):
    """A sojourn distribution has a non-positive or non-finite mean."""


class SingularSystem(SmlevyError):
    """A linear solve failed; usually signals near-reducibility."""


# -- impulse-family validation -------------------------------------------

class FamilyError(SmlevyError):
    exit_code = 2


class BalanceViolated(FamilyError):
    """The first-order drift does not average to zero under rho."""


class NoisePSDViolated(FamilyError):
    """c - c0 - a1 a1* has a negative eigenvalue; the sampler cannot exist."""


class UnboundedSpec(FamilyError):
    """Catalog misuse: non-finite parameters, bad modulation bounds, etc."""


class EpsTooLarge(SmlevyError):
    """eps^2 * lambda(u;x) >= 1, the mixture probability leaves [0, 1)."""


# -- limit characteristics -----------------------------------------------

class NegativeSigma(SmlevyError):
    """sigma^2(u) has an eigenvalue below -tol; model/reading inconsistency."""


class CholeskyFailure(SmlevyError):
    """sigma^2 was not positive semidefinite at a point visited by the solver."""


# -- statistics helpers ----------------------------------------------------

class EmptySample(SmlevyError):
    exit_code = 2


class DegeneratePair(SmlevyError):
    """An increment pair has t == s."""

    exit_code = 2


class InsufficientGrid(SmlevyError):
    """A diagnostic over multiple eps values got fewer than two of them."""

    exit_code = 2


# -- configuration ----------------------------------------------------------

class ConfigError(SmlevyError):
    exit_code = 2


class ParseError(ConfigError):
    """The config file is not valid TOML/JSON."""


class SchemaError(ConfigError):
    """The parsed config violates the published schema."""


class CrossRefError(ConfigError):
    """Blocks of the config reference states inconsistently."""
