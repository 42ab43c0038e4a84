"""Exception types shared across the package."""


class MlhsError(Exception):
    """Base class for all package-specific failures."""


class FactorizationError(MlhsError):
    """An eigenvalue/SVD iteration failed to converge."""


class DegenerateBasisError(MlhsError):
    """A basis matrix is rank deficient where full column rank is required."""


class SolverError(MlhsError):
    """An iterative linear solve did not reach its tolerance."""


class BlowUpError(MlhsError):
    """A simulation produced NaN/Inf or exceeded the norm ceiling.

    Carries the index of the last finite step and the states computed so far.
    """

    def __init__(self, last_finite_step, states=None):
        super().__init__(f"simulation blew up after step {last_finite_step}")
        self.last_finite_step = last_finite_step
        self.states = states


class GateError(MlhsError):
    """Autoencoder training did not reach the reconstruction-quality gate."""

    def __init__(self, achieved_loss, gate):
        super().__init__(
            f"autoencoder loss {achieved_loss:.3e} above gate {gate:.1e}; "
            "retrain with more capacity/epochs or pass force=True"
        )
        self.achieved_loss = achieved_loss
        self.gate = gate


class ConfigError(MlhsError):
    """Invalid experiment configuration."""


class DependencyError(MlhsError):
    """A required artifact (dataset, checkpoint) is missing."""
