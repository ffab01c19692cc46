"""Exception taxonomy shared across the toolkit."""


class PhysweaveError(Exception):
    """Base class for all toolkit errors."""


class MeshFormatError(PhysweaveError):
    """Raised for unreadable or malformed mesh files."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:" if line is None else f"{path}:{line}: "
        super().__init__(prefix + message)


class GeometryError(PhysweaveError):
    """Raised for degenerate geometric inputs (empty meshes, zero area, ...)."""


class PlaneEstimationError(PhysweaveError):
    """Raised when ground-plane estimation exhausts every retry.

    Carries the best fit that was rejected so callers can inspect or
    override it.
    """

    def __init__(self, message, best_rejected=None, attempts=None):
        self.best_rejected = best_rejected
        self.attempts = attempts or []
        super().__init__(message)


class ConfigError(PhysweaveError):
    """Raised when a scene configuration cannot be parsed or is empty."""


class SimulationDiverged(PhysweaveError):
    """Raised when a solver produces NaN/Inf state."""

    def __init__(self, solver, frame):
        self.solver = solver
        self.frame = frame
        super().__init__(f"{solver} solver diverged (NaN/Inf) at frame {frame}")
