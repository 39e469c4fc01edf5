"""Exception types shared across the package."""


class CtistaError(Exception):
    """Base class for errors raised by this package."""


class RankDeficientMatrixError(CtistaError, ValueError):
    """Gram matrix is numerically singular; no reliable pseudo-inverse."""


class DivergenceError(CtistaError, RuntimeError):
    """An iterate became non-finite.  Carries the 1-based iteration index."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class ConfigError(CtistaError, ValueError):
    """Malformed or inconsistent scenario / experiment configuration."""
