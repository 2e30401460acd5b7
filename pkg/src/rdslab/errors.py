"""Exception types shared across the package.

The CLI maps these to exit codes: ConfigError -> 1, HypothesisFailureError
and DegenerateVarianceError -> 2, CrossCheckError -> 3.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad schema, failed expansion certificate,
    or coefficient budgets beyond the configured caps."""


class HypothesisFailureError(RuntimeError):
    """A quantity the theory requires failed to materialize numerically
    (non-decaying cocycle norms, non-converging pullback)."""


class CrossCheckError(RuntimeError):
    """Two independent evaluations of the same quantity disagree beyond
    their combined error budget."""


class DegenerateVarianceError(RuntimeError):
    """The asymptotic variance is numerically zero, so no CLT comparison
    is meaningful for this observable."""
