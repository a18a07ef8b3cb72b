"""Exception hierarchy. Every error carries a stable machine-readable ``code``."""

from __future__ import annotations


class LipNNMError(Exception):
    code = "error"


class InvalidArgumentError(LipNNMError, ValueError):
    code = "invalid_argument"


class SingularMatrixError(LipNNMError, ArithmeticError):
    code = "singular_matrix"


class EstimatorSingularError(SingularMatrixError):
    code = "estimator_singular"


class NonConvergenceError(LipNNMError):
    code = "non_convergence"

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ContinuationStalledError(LipNNMError):
    code = "continuation_stalled"

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = list(partial or [])


class InvalidModeError(InvalidArgumentError):
    code = "invalid_mode"


class BlowUpError(LipNNMError, FloatingPointError):
    code = "blow_up"


class NonContractionError(NonConvergenceError):
    code = "non_contraction"


class DegenerateAmplitudeError(LipNNMError):
    code = "degenerate_amplitude"


class EstimatorSolveError(NonConvergenceError):
    code = "estimator_solve"


class ResonanceError(LipNNMError):
    code = "resonance"

    def __init__(self, message, modes=()):
        super().__init__(message)
        self.modes = tuple(modes)
