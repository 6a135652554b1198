"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ZeroDifferenceError(ValueError):
    """A second-order difference is exactly zero, so its ratio is undefined."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(
            f"second difference d_{index} is exactly zero; input is degenerate "
            "(repeated or affine values) and cannot come from fBm"
        )


class SimulationError(RuntimeError):
    """A generator could not produce an exact sample."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class ConditionError(ValueError):
    """An h-function violates an admissibility condition of the estimator."""
