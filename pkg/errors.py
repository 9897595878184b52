class SimulationError(Exception):
    """Base class for everything the simulator raises on purpose."""


class InvalidArgumentError(SimulationError, ValueError):
    pass


class InvalidStateError(SimulationError, RuntimeError):
    pass


class ScanError(SimulationError):
    """A delay scan aborted at a specific scan point."""

    def __init__(self, index, delta_l, reason):
        self.index = index
        self.delta_l = delta_l
        self.reason = reason
        super().__init__(f"scan point {index} (delta_l={delta_l * 1e6:.6g} um): {reason}")


class ConfigError(SimulationError):
    """A run configuration could not be parsed or violates a constraint."""

    def __init__(self, key, constraint):
        self.key = key
        self.constraint = constraint
        super().__init__(f"{key}: {constraint}" if key else constraint)
