"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data violates a documented invariant (bad obstacle, bad params...)."""


class ConfigError(ValueError):
    """Mismatched configuration, e.g. model input size vs lattice encoding size."""


class ModelParseError(ValueError):
    """A model file could not be parsed or carries an unknown version tag."""


class SearchContractError(RuntimeError):
    """A search operation was called outside its contract (e.g. expanding a horizon node)."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss; carries the offending epoch/batch."""
