"""Exception types raised across the package."""


class SymplugError(Exception):
    """Base class."""


class InvalidParameterError(SymplugError, ValueError):
    pass


class ConstructionError(SymplugError, ValueError):
    def __init__(self, message, attained=None):
        super().__init__(message)
        self.attained = attained


class IntegrationError(SymplugError, RuntimeError):
    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class ChartExtentError(SymplugError, ValueError):
    pass


class AssemblyError(SymplugError, ValueError):
    pass


class DomainError(SymplugError, ValueError):
    pass


class SingularLevelError(SymplugError, RuntimeError):
    pass


class InfeasibleTargetError(SymplugError, ValueError):
    def __init__(self, message, floor=None):
        super().__init__(message)
        self.floor = floor


class TransportError(SymplugError, RuntimeError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ExactnessError(SymplugError, RuntimeError):
    pass


class RefinementRequired(SymplugError, RuntimeError):
    pass


class ConfigError(SymplugError, ValueError):
    pass
