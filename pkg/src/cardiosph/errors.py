"""Exception hierarchy shared across the package."""


class CardioSPHError(Exception):
    """Base class for all package errors."""


class DecompositionError(CardioSPHError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, message, particle=None):
        if particle is not None:
            message = f"particle {particle}: {message}"
        super().__init__(message)
        self.particle = particle


class SingularMatrixError(CardioSPHError):
    """A matrix that must be inverted is singular."""


class SingularMomentError(CardioSPHError):
    """Kernel moment matrix of a particle is not invertible."""

    def __init__(self, particle, detail=""):
        msg = f"singular kernel moment matrix at particle {particle}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.particle = particle


class InvertedElementError(CardioSPHError):
    """det(F) <= 0 at some particle."""

    def __init__(self, particle, det):
        super().__init__(f"inverted deformation at particle {particle}: det(F) = {det:.6g}")
        self.particle = particle
        self.det = det


class ModelDomainError(CardioSPHError):
    """Ionic model evaluated at a pole of its rate function."""


class NumericalFailure(CardioSPHError):
    """Simulation diverged (NaN/inf detected)."""

    def __init__(self, message, step=None, field=None):
        super().__init__(message)
        self.step = step
        self.field = field


class STLParseError(CardioSPHError):
    """Malformed STL input."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(CardioSPHError):
    """Scene validation failed; ``errors`` holds (path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{path}: {msg}" for path, msg in self.errors]
        super().__init__("invalid scene:\n  " + "\n  ".join(lines))
