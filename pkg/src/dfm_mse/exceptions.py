"""Exception hierarchy shared by all modules."""


class DfmError(Exception):
    """Base class for errors raised by this package."""


class NonStationary(DfmError):
    """Factor AR matrix admits no unit-covariance stationary law."""


class NotPositiveDefinite(DfmError):
    """A covariance matrix failed its Cholesky factorization."""


class SingularNormalEquations(DfmError):
    """The r x r system Lambda' W Lambda is numerically singular."""


class NonPsdPropagation(DfmError):
    """A Kalman MSE matrix lost positive semidefiniteness."""


class NoConvergence(DfmError):
    """The Riccati iteration did not reach tolerance within the horizon."""

    def __init__(self, horizon, residual):
        self.horizon = horizon
        self.residual = residual
        super().__init__(
            f"Riccati iteration did not converge in {horizon} steps "
            f"(residual {residual:.3e})"
        )


class NotIdentified(DfmError):
    """Lambda' Sigma^-1 Lambda is not diagonal with decreasing entries."""


class ConfigError(DfmError, ValueError):
    """Invalid or unparseable experiment configuration."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        super().__init__(message)
