"""Exception types raised by the library."""


class RecfnoError(Exception):
    """Base class for all recfno errors."""


class ShapeError(RecfnoError):
    """Tensor extents do not satisfy an operation's contract."""


class SymmetryError(RecfnoError):
    """A spectrum violates Hermitian symmetry beyond tolerance."""


class ModeError(RecfnoError):
    """Requested Fourier mode counts exceed what the grid supports."""


class ContractError(RecfnoError):
    """An operation precondition was violated (e.g. non-scalar loss)."""


class ConfigError(RecfnoError):
    """Inconsistent embedding/model/run configuration."""


class SensorError(RecfnoError):
    """Sensor placement problem: out of extent, or two sensors in one cell."""


class SolverError(RecfnoError):
    """A PDE solver failed to converge."""


class DataFormatError(RecfnoError):
    """Dataset or checkpoint file is malformed or of the wrong version."""


class NoiseScaleError(RecfnoError):
    """Noise scale is undefined (all-zero signal)."""


class TrainingDiverged(RecfnoError):
    """Training produced NaN loss or gradients; last good state preserved."""


class ResolutionError(RecfnoError):
    """Model cannot evaluate at the requested resolution (POD is grid-bound)."""
