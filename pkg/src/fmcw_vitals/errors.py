"""Exception hierarchy shared by every processing stage."""
from __future__ import annotations


class VitalsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VitalsError, ValueError):
    """Radar configuration file is missing keys or holds invalid values."""


class CubeFormatError(VitalsError, ValueError):
    """Raw I/Q capture does not match the configured dimensions."""


class NoTargetError(VitalsError):
    """Range map carries no energy, so no target bin can be selected."""


class DegenerateFitError(VitalsError):
    """I/Q constellation cannot define a circle (e.g. all points identical)."""


class ConvergenceError(VitalsError):
    """Iterative solver hit its iteration cap.

    The last objective value is kept on ``final_objective``.
    """

    def __init__(self, message: str, final_objective: float, iterations: int):
        super().__init__(message)
        self.final_objective = final_objective
        self.iterations = iterations


class EstimationError(VitalsError):
    """A rate estimator could not produce a frequency for its input."""


class PipelineError(VitalsError):
    """Failure inside the processing chain, tagged with stage and window."""

    def __init__(self, stage: str, window_index: int | None, cause: Exception):
        where = f"window {window_index}" if window_index is not None else "input"
        super().__init__(f"stage {stage} failed on {where}: {cause}")
        self.stage = stage
        self.window_index = window_index
        self.cause = cause
