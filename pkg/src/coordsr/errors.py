"""Exception taxonomy shared across the package.

ConfigurationError: shapes, dtypes, or settings that can never work.
DomainError: a value outside the documented input domain.
UsageError: an API called out of sequence or against its contract.
NonFiniteError: NaN/Inf surfaced where all values must be finite.
"""


class ConfigurationError(ValueError):
    pass


class DomainError(ValueError):
    pass


class UsageError(RuntimeError):
    pass


class NonFiniteError(ArithmeticError):
    pass
