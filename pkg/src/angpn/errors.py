"""Exception hierarchy shared by all modules."""


class AngpnError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(AngpnError, ValueError):
    pass


class DataError(AngpnError, ValueError):
    pass


class ParameterError(AngpnError, ValueError):
    pass


class GraphError(AngpnError, ValueError):
    """A graph violates its contract (e.g. rows not summing to one)."""


class NumericError(AngpnError, ArithmeticError):
    pass


class ContractError(AngpnError, ValueError):
    """A caller violated a precondition of an API."""


class OracleError(AngpnError, ArithmeticError):
    pass


class TrainingError(AngpnError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch
