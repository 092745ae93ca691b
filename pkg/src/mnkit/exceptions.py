"""Exception types shared across the toolkit.

Two broad classes matter to callers: bad inputs (wrong shapes, malformed
files, contract violations) and numerical failures (singular factors,
non-PD intermediates, diverged fits). The CLI maps them to exit codes 3
and 4 respectively.
"""


class InputError(ValueError):
    """Invalid argument, shape mismatch, or malformed input file."""


class ContractError(InputError):
    """A caller obligation was violated (e.g. mismatched shared covariances)."""


class NumericalError(RuntimeError):
    """Numerical failure during factorization or fitting."""


class SingularFactorError(NumericalError):
    """A triangular factor has a non-positive diagonal entry."""


class ConditioningError(NumericalError):
    """A matrix required to be positive definite failed to factorize."""


class InitializationError(NumericalError):
    """Objective not finite at the optimizer's starting point."""


class FitError(NumericalError):
    """A model fit failed to produce a usable result."""
