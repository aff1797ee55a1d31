"""Exception types raised by the toolkit."""


class ViscoShellError(Exception):
    """Base class for all toolkit errors."""


class DegenerateChart(ViscoShellError):
    """The tangent vectors of the chart are (numerically) parallel."""


class EpsilonTooLarge(ViscoShellError):
    """The thickness parameter makes det(g_1, g_2, g_3) non-positive."""


class ElasticCaseUnsupported(ViscoShellError, ValueError):
    """The first viscosity coefficient vanishes (purely elastic limit)."""


class IndefiniteSystem(ViscoShellError):
    """The assembled time-step matrix failed the positive-definiteness probe.

    Usually fixed by reducing the time step (TimeStepTooLarge remedy) or
    increasing the first viscosity.
    """


class SolverFailure(ViscoShellError):
    """Sparse factorization broke down."""


class ZeroField(ViscoShellError, ValueError):
    pass


class InadmissibleField(ViscoShellError, ValueError):
    """A field violates the clamping condition on the Dirichlet boundary."""


class MeshMismatch(ViscoShellError):
    pass


class ConfigError(ViscoShellError, ValueError):
    """Bad or missing configuration key."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
