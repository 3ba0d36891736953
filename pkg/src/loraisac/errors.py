"""Exception hierarchy shared by every loraisac module."""


class LoraIsacError(Exception):
    """Base class for all errors raised by loraisac."""


class DomainError(LoraIsacError, ValueError):
    """An argument lies outside the domain of the operation."""


class FrameAlignmentError(LoraIsacError, ValueError):
    """A buffer does not span exactly one symbol."""


class ConfigError(LoraIsacError, ValueError):
    """A configuration object violates its invariants."""


class ScheduleInfeasibleError(ConfigError):
    """A transmission schedule cannot satisfy the duty cycle or channel capacity.

    ``min_interval`` is set for duty-cycle violations, ``channel`` and
    ``demand`` for overloaded frequency channels.
    """

    def __init__(self, message, *, min_interval=None, channel=None, demand=None):
        super().__init__(message)
        self.min_interval = min_interval
        self.channel = channel
        self.demand = demand


class EstimationError(LoraIsacError):
    """Not enough usable data to form an estimate."""


class OutOfRangeError(EstimationError):
    """No phase branch maps to a physically meaningful soil permittivity."""


class SamplingRateError(LoraIsacError, ValueError):
    def __init__(self, message, *, required_rate):
        super().__init__(message)
        self.required_rate = required_rate


class CalibrationError(LoraIsacError, ValueError):
    pass


class ScenarioError(LoraIsacError):
    """Invalid scenario file. ``line`` is 1-based when known."""

    def __init__(self, message, *, path=None, line=None):
        super().__init__(message)
        self.path = path
        self.line = line

    def diagnostic(self):
        where = str(self.path) if self.path is not None else "<scenario>"
        if self.line is not None:
            where = f"{where}:{self.line}"
        return f"{where}: {self.args[0]}"
