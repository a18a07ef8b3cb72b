"""Static and periodic solutions of spring-mass models with unilateral springs.

Static equilibria are found with a quasi-Newton iteration built on a linear
strict estimator of the nonsmooth internal force; periodic solutions close
to a linear normal mode are found in strained coordinates with the
estimator iteration ``H(p, y_{k+1}) = -E(p, y_k)``.
"""

from .densela import LUFactor, ModalSystem, generalized_modes, jacobi_eigh, lu_factor, lu_solve, norm2
from .errors import (
    BlowUpError,
    ContinuationStalledError,
    DegenerateAmplitudeError,
    EstimatorSingularError,
    EstimatorSolveError,
    InvalidArgumentError,
    InvalidModeError,
    LipNNMError,
    NonContractionError,
    NonConvergenceError,
    ResonanceError,
    SingularMatrixError,
)
from .model import (
    EstimatorConfig,
    NonlinearLaw,
    StructureModel,
    broken_supports_model,
    chain_model,
    estimator_force,
    internal_force,
    lipschitz_gap_bound,
    oscillator_1dof,
)
from .periodic import (
    PeriodicSolution,
    check_nonresonance,
    continuation_periodic,
    eta0,
    exact_period_piecewise_1dof,
    find_periodic_1dof_fixed_point,
    find_periodic_estimator,
    physical_return_defect,
)
from .shooting import (
    ModalOde,
    ShootingParams,
    Trajectory,
    build_modal_ode,
    estimator_H,
    gap_E,
    integrate,
    law_ode,
    periodicity_F,
)
from .static_solver import (
    IterationReport,
    continuation_solve,
    contraction_bound,
    natural_iteration,
    quasi_newton_solve,
)

__version__ = "0.1.0"
