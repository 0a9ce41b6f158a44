"""Exception hierarchy shared across the package."""


class RelMetricError(Exception):
    pass


class ShapeError(RelMetricError, ValueError):
    pass


class ContractError(RelMetricError, ValueError):
    """A caller broke a documented precondition."""


class EmptyInputError(ContractError):
    pass


class NonFiniteError(RelMetricError, FloatingPointError):
    pass


class ValidationError(RelMetricError, ValueError):
    pass


class EncodingError(RelMetricError, ValueError):
    pass


class IngestionError(RelMetricError, ValueError):
    pass


class AlignmentError(IngestionError):
    pass


class ConfigError(RelMetricError, ValueError):
    pass


class CheckpointError(RelMetricError):
    pass


class LabelSpaceError(ValidationError):
    pass
