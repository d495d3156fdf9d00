"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-supplied configuration (bad mesh size, missing key, ...)."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class AssemblyError(RuntimeError):
    """Finite element assembly failed (degenerate element etc.)."""


class VariantMismatchError(ValueError):
    """Control variant and assimilation data are inconsistent."""


class SingularSystemError(RuntimeError):
    """A linear system factorization or solve failed."""


class NonConvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap.

    Carries the preconditioned residual history for diagnostics.
    """

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])
