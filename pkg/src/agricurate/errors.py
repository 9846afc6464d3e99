"""Exception types shared by all pipeline stages."""


class PipelineError(Exception):
    """Base class for every failure raised by this package."""


class ParseError(PipelineError):
    """A manifest, index, or config file could not be parsed."""


class IntegrityError(PipelineError):
    """Data violates a structural invariant (duplicate ids, bad digests, ...)."""


class ConfigError(PipelineError):
    """Stage configuration is inconsistent or incomplete."""


class DomainError(PipelineError, ValueError):
    """An operation was invoked outside its stated domain."""


class TrainingError(PipelineError):
    """Optimization failed (divergent step, non-finite loss)."""


class NumericalError(PipelineError):
    """An iterative numeric routine did not converge."""
