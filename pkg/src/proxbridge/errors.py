"""Exception hierarchy shared by the estimation stack and the CLI."""


class ProxBridgeError(ValueError):
    """Base class for all recoverable errors raised by proxbridge."""

    code = "error"


class PositivityError(ProxBridgeError):
    code = "positivity"


class NoBridgeError(ProxBridgeError):
    """The bridge integral equation has no solution for this law."""

    code = "no_bridge"


class DimensionError(ProxBridgeError):
    code = "dimension"


class BasisError(ProxBridgeError):
    code = "basis"


class ProjectionError(ProxBridgeError):
    code = "projection"


class SelectionError(ProxBridgeError):
    code = "selection"


class ConfigError(ProxBridgeError):
    code = "config"


class DataError(ProxBridgeError):
    code = "data"


class SimulationError(ProxBridgeError):
    code = "simulation"
