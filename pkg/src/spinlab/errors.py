"""Exception hierarchy shared by all modules."""


class SpinlabError(Exception):
    """Base class for every error raised by spinlab."""


class ConfigError(SpinlabError, ValueError):
    """Invalid model specification or experiment configuration."""


class DomainError(SpinlabError, ValueError):
    """Parameter outside the regime where a formula is defined (e.g. beta >= 1)."""


class ResourceError(SpinlabError):
    """Requested enumeration exceeds a hard size cap."""


class NumericError(SpinlabError, ArithmeticError):
    """Quadrature failure, density underflow or other numerical breakdown."""


class ModelError(SpinlabError, ValueError):
    """Inputs inconsistent with the multigraph model (multiplicity too large, missing moment)."""


class ContractError(SpinlabError, ValueError):
    """Argument violates an operation precondition."""


class StatisticsError(SpinlabError, ValueError):
    """Sample unusable for a statistical test (degenerate, too small, non-finite)."""


class MomentRangeError(SpinlabError, IndexError):
    """Moment requested beyond the tabulated degree."""
