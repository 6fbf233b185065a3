# fedtoe/core/errors.py


class FedToeError(ValueError):
    """Base class for every domain error raised by the package"""


class ParameterError(FedToeError):
    pass


class RangeViolationError(FedToeError):
    """A value lies outside the quantization range of its group"""


class PartitionError(FedToeError):
    """Group sizes do not partition the update vector"""


class LinkPreconditionError(FedToeError):
    """Bandwidth, power or rate outside the region where outage is below one"""


class InfeasibleAllocationError(FedToeError):
    def __init__(self, message: str, shortfall_hz: float | None = None):
        super().__init__(message)
        self.shortfall_hz = shortfall_hz


class DelayConstraintError(InfeasibleAllocationError):
    def __init__(self, detail: str = "", shortfall_hz: float | None = None):
        message = "delay constraint too tight"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message, shortfall_hz)


class EnumerationLimitError(FedToeError):
    pass


class BoundPreconditionError(FedToeError):
    pass


class RetransmissionCapError(FedToeError):
    def __init__(self, cap: int, round_index: int):
        super().__init__(
            f"round {round_index}: every selected upload failed {cap} times in a row; "
            f"check the outage probabilities of the plan"
        )
        self.cap = cap
        self.round_index = round_index


class AggregationError(FedToeError):
    pass
