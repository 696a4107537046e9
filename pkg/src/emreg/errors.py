"""Exception types shared across the registration engine."""


class RegistrationError(RuntimeError):
    """A registration run could not proceed."""


class CorrespondenceCollapseError(RegistrationError):
    """All posterior mass fell on the outlier component; no correspondences left."""


class EigenConvergenceError(RuntimeError):
    """Iterative eigensolver failed to converge within its iteration cap."""

    def __init__(self, message: str, converged: int = 0):
        super().__init__(message)
        self.converged = converged
