"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class PreconditionError(ValueError):
    """Structural precondition violated (grids, shapes, metadata)."""


class SamplerError(RuntimeError):
    """A rejection sampler exceeded its retry cap."""


class DivergenceError(RuntimeError):
    """A solved path left the overflow guard region."""

    def __init__(self, step: int, t: float, msg: str = ""):
        self.step = step
        self.t = t
        super().__init__(msg or f"state became non-finite at step {step} (t={t:.6g})")


class BudgetError(ValueError):
    """Problem size exceeds a solver budget; subsample the input."""


class ConfigError(ValueError):
    """Experiment configuration failed schema validation."""
