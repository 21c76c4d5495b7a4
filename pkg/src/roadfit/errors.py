"""Exception types raised across the package."""


class RoadFitError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class DegenerateSegment(RoadFitError):
    pass


class InvalidPolygon(RoadFitError):
    pass


class EmptyLine(RoadFitError):
    pass


class EmptyInput(RoadFitError):
    pass


class EmptySamples(RoadFitError):
    pass


class InvalidEstimate(RoadFitError):
    pass


class InconsistentMatchSet(RoadFitError):
    pass


class UnknownClass(RoadFitError):
    pass


class InvalidSpec(RoadFitError):
    pass


class InvalidNetwork(RoadFitError):
    pass


class ConfigError(RoadFitError):
    pass


class NumericalFailure(RoadFitError):
    def __init__(self, message, block_kind=None, block_id=None):
        super().__init__(message)
        self.block_kind = block_kind
        self.block_id = block_id


class ParseError(RoadFitError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row
