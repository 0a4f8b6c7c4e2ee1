# src/utils/errors.py
from __future__ import annotations
from typing import Optional


class TurnpikeLabError(Exception):
    """Base class for every failure raised by the lab."""


class DimensionError(TurnpikeLabError, ValueError):
    pass


class SingularityError(TurnpikeLabError, ArithmeticError):
    """Dynamics evaluated outside their domain (e.g. Kepler radius s <= 0)."""


class DivergedRolloutError(TurnpikeLabError):
    def __init__(self, interval: int, message: str = ""):
        self.interval = interval
        super().__init__(message or f"rollout produced a non-finite state in interval {interval}")


class SingularMatrixError(TurnpikeLabError, ArithmeticError):
    def __init__(self, message: str, condition: float = float("inf")):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class ConvergenceError(TurnpikeLabError):
    def __init__(self, message: str, residuals: Optional[dict] = None):
        self.residuals = residuals or {}
        super().__init__(message)


class EmptyFeasibleSetError(TurnpikeLabError):
    pass


class NotACriticalPointError(TurnpikeLabError, ValueError):
    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"point is not a critical point of the field (residual {residual:.3e})")


class ConfigError(TurnpikeLabError, ValueError):
    pass


class PipelineStageError(TurnpikeLabError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class HessianSymmetryError(TurnpikeLabError, ArithmeticError):
    def __init__(self, block: str, asymmetry: float):
        self.block = block
        self.asymmetry = asymmetry
        super().__init__(f"{block} is not symmetric (max asymmetry {asymmetry:.3e})")
