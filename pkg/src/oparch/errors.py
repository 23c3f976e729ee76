"""Exception hierarchy.

Every domain failure derives from :class:`OparchError` so the CLI can map it
to exit code 1 with a single machine-parsable line.
"""


class OparchError(Exception):
    """Base class for all domain errors raised by oparch."""

    code = "error"

    def one_line(self) -> str:
        msg = " ".join(str(self).split())
        return f"{self.code}: {msg}"


class GridMismatch(OparchError):
    code = "grid_mismatch"


class NonConvergence(OparchError):
    code = "non_convergence"


class DegenerateKernel(OparchError):
    code = "degenerate_kernel"


class CholeskyFailure(OparchError):
    code = "cholesky_failure"


class InvalidParams(OparchError):
    code = "invalid_params"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NonStationaryMean(OparchError):
    code = "non_stationary_mean"


class FourthMomentDiverges(OparchError):
    code = "fourth_moment_diverges"


class NumericalBlowup(OparchError):
    code = "numerical_blowup"

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"volatility exceeded 1e300 at step {step}")


class DegenerateSample(OparchError):
    code = "degenerate_sample"


class SingularCd(OparchError):
    code = "singular_cd"


class RankDeficient(OparchError):
    code = "rank_deficient"


class InsufficientBasis(OparchError):
    code = "insufficient_basis"


class ZeroNorm(OparchError):
    code = "zero_norm"


class ZeroDeviation(OparchError):
    code = "zero_deviation"


class NonPositivePrice(OparchError):
    code = "non_positive_price"


class NonPositiveSigma(OparchError):
    code = "non_positive_sigma"


class FormatError(OparchError):
    code = "format_error"
