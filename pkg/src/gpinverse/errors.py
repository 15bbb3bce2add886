"""Exception hierarchy.

Each class carries a short ``category`` used by the CLI for its
machine-parsable error line and exit status.
"""


class GPInverseError(Exception):
    category = "error"
    exit_code = 3


class DimensionMismatch(GPInverseError, ValueError):
    category = "dimension_mismatch"
    exit_code = 2


class SingularCovariance(GPInverseError, ArithmeticError):
    category = "singular_covariance"


class SingularKernel(SingularCovariance):
    category = "singular_kernel"


class RankDeficientBasis(GPInverseError, ArithmeticError):
    category = "rank_deficient_basis"


class DuplicateDesignPoint(GPInverseError, ValueError):
    category = "duplicate_design_point"


class InsufficientDegreesOfFreedom(GPInverseError, ValueError):
    category = "insufficient_dof"
    exit_code = 2


class UnsupportedErrorModel(GPInverseError, NotImplementedError):
    category = "unsupported_error_model"
    exit_code = 2


class InvalidInit(GPInverseError, ValueError):
    category = "invalid_init"
    exit_code = 4


class EmptyChain(GPInverseError, ValueError):
    category = "empty_chain"


class TooFewSamples(GPInverseError, ValueError):
    category = "too_few_samples"


class NonPositiveRadius(GPInverseError, ValueError):
    category = "non_positive_radius"


class AllMinusInfinity(GPInverseError, ArithmeticError):
    category = "all_minus_infinity"


class QuadratureNonConvergence(GPInverseError, ArithmeticError):
    category = "quadrature_nonconvergence"


class ParseError(GPInverseError, ValueError):
    category = "parse_error"
    exit_code = 2

    def __init__(self, path, line, column, message):
        self.path, self.line, self.column = path, line, column
        super().__init__(f"{path}:{line}:{column}: {message}")


class ConfigError(GPInverseError, ValueError):
    category = "config_error"
    exit_code = 2


class BoundsViolation(UserWarning):
    """A design vector lies outside the declared prior box (not fatal)."""
