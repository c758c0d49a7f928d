from __future__ import annotations

from typing import Any


class SoftPvtolException(Exception):
    pass


class InvalidParameters(SoftPvtolException):
    pass


class ConfigError(InvalidParameters):
    pass


class IllConditioned(SoftPvtolException):
    pass


class InfeasibleCommand(SoftPvtolException):
    pass


class NonConvergence(SoftPvtolException):
    """Allocation solve gave up, the last iterate is kept for the caller"""

    def __init__(self, message: str, last_iterate: Any = None, residual_norm: float = float("inf")) -> None:
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm


class IntegrationFailure(SoftPvtolException):
    pass
