"""Exception types shared across the package."""


class PQGError(Exception):
    """Base class for all package errors."""


class DomainError(PQGError, ValueError):
    """Argument outside the range where a closed-form relation is valid."""


class ConfigError(PQGError, ValueError):
    """Invalid run configuration or background profile.

    ``key`` names the offending configuration path when known.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key:
            message = f"{key}: {message}"
        super().__init__(message)


class NumericalError(PQGError, RuntimeError):
    """Base class for solver, integrator and step-size failures."""


class IntegrationError(NumericalError):
    pass


class RainColumnError(NumericalError):
    def __init__(self, message, level):
        self.level = level
        super().__init__(f"{message} (level {level})")


class SolverError(NumericalError):
    pass


class InversionNotConverged(SolverError):
    """Active-set iteration for the free-boundary inversion did not settle."""

    def __init__(self, message, oscillating_cells, iterations):
        self.oscillating_cells = oscillating_cells
        self.iterations = iterations
        super().__init__(f"{message}: {oscillating_cells} oscillating cells after {iterations} iterations")


class CFLError(NumericalError):
    def __init__(self, courant, limit):
        self.courant = courant
        self.limit = limit
        super().__init__(f"advective Courant number {courant:.3g} exceeds {limit}")


class FrameFormatError(PQGError, ValueError):
    pass
