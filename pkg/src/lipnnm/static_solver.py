"""Static equilibrium ``f(u) = Y`` for models with unilateral springs.

The quasi-Newton iteration keeps the linear estimator ``h`` fixed and moves
the nonsmooth remainder ``e = f - h`` to the right-hand side::

    h(x_{k+1}) = Y - e(x_k)

so only ``K_eps = K + eps B^T E' Lambda B`` is ever factorized. The natural
iteration ``K u_{k+1} = Y - eps B^T E' (B u_k + d)_-`` is kept for comparison:
it needs ``K`` itself to be invertible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .densela import LUFactor, lu_factor, norm2
from .errors import (
    ContinuationStalledError,
    EstimatorSingularError,
    InvalidArgumentError,
    NonConvergenceError,
    SingularMatrixError,
)
from .model import (
    EstimatorConfig,
    StructureModel,
    estimator_matrix,
    estimator_offset,
    gap_force,
    internal_force,
    neg,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


@dataclass
class IterationReport:
    """Step norms of a fixed-point iteration and derived contraction data."""

    iterates: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    converged: bool = False
    residual: float = float("nan")
    measured_contraction: float = float("nan")
    condition: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.iterates)

    def record(self, step: float) -> None:
        if self.iterates:
            prev = self.iterates[-1]
            self.ratios.append(step / prev if prev > 0.0 else 0.0)
        self.iterates.append(step)

    def finish(self, converged: bool, residual: float, floor: float = 0.0) -> None:
        """Freeze the report. Ratios whose denominator is at the noise floor are
        ignored when measuring the contraction."""
        self.converged = converged
        self.residual = float(residual)
        useful = [
            r
            for k, r in enumerate(self.ratios)
            if k >= 1 and self.iterates[k] > floor and self.iterates[k + 1] > floor
        ]
        if not useful:
            useful = [r for k, r in enumerate(self.ratios) if self.iterates[k] > floor]
        self.measured_contraction = max(useful) if useful else 0.0

    def average_rate(self, floor: float = 0.0) -> float:
        """Geometric-mean step ratio ``(s_K / s_1)^(1/(K-1))``, skipping the first step
        and any step at or below ``floor``."""
        steps = [s for s in self.iterates[1:] if s > floor]
        if len(steps) < 2:
            return 0.0
        return float((steps[-1] / steps[0]) ** (1.0 / (len(steps) - 1)))

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "iterates": list(self.iterates),
            "ratios": list(self.ratios),
            "converged": self.converged,
            "residual": self.residual,
            "measured_contraction": self.measured_contraction,
        }


def _noise_floor(x) -> float:
    return 1e3 * np.finfo(float).eps * (1.0 + float(np.linalg.norm(x)))


def default_start(model: StructureModel, Y) -> np.ndarray:
    """Linear (eps = 0) solution when ``K`` is invertible, else zero."""
    try:
        return lu_factor(model.stiffness).solve(np.asarray(Y, dtype=float))
    except SingularMatrixError:
        return np.zeros(model.n_dof)


def _check_inputs(model, Y, x0):
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (model.n_dof,):
        raise InvalidArgumentError(f"force vector must have {model.n_dof} entries")
    x = default_start(model, Y) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (model.n_dof,):
        raise InvalidArgumentError(f"start vector must have {model.n_dof} entries")
    return Y, x


def _iterate(step_fn, x, model, Y, tol, max_iter, report):
    for _ in range(max_iter):
        x_new = step_fn(x)
        if not np.all(np.isfinite(x_new)):
            break
        step = float(np.linalg.norm(x_new - x))
        report.record(step)
        x = x_new
        if step <= tol:
            res = float(np.linalg.norm(internal_force(model, x) - Y))
            report.finish(True, res, _noise_floor(x))
            return x
    res = float(np.linalg.norm(internal_force(model, x) - Y)) if np.all(np.isfinite(x)) else np.inf
    report.finish(False, res, _noise_floor(x))
    raise NonConvergenceError(
        f"no convergence after {report.iterations} iterations (last step "
        f"{report.iterates[-1] if report.iterates else float('nan'):.3e})",
        report,
    )


def quasi_newton_solve(
    model: StructureModel,
    cfg: EstimatorConfig | None = None,
    Y=None,
    x0=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
):
    """Solve ``f(x) = Y`` with the strict-estimator iteration.

    Returns ``(x, report)``. ``report.condition`` holds the 1-norm condition
    estimate of ``K_eps``.
    """
    cfg = cfg or EstimatorConfig()
    Y, x = _check_inputs(model, Y, x0)
    K_eps = estimator_matrix(model, cfg)
    try:
        lu: LUFactor = lu_factor(K_eps)
    except SingularMatrixError as exc:
        raise EstimatorSingularError(f"estimator matrix K_eps is singular: {exc}") from exc
    rhs0 = Y - estimator_offset(model, cfg)
    report = IterationReport(condition=float(np.linalg.cond(K_eps, 1)))

    def step(x):
        return lu.solve(rhs0 - gap_force(model, cfg, x))

    x = _iterate(step, x, model, Y, tol, max_iter, report)
    return x, report


def natural_iteration(
    model: StructureModel,
    Y=None,
    x0=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
):
    """``K u_{k+1} = Y - eps B^T E' (B u_k + d)_-``; raises SingularMatrixError for singular ``K``."""
    Y, x = _check_inputs(model, Y, x0)
    K = model.stiffness
    lu = lu_factor(K)
    report = IterationReport(condition=float(np.linalg.cond(K, 1)))
    B, Ep, d = model.incidence, model.unilateral_stiffness, model.gaps

    def step(u):
        return lu.solve(Y - model.epsilon * B.T @ (Ep * neg(B @ u + d)))

    x = _iterate(step, x, model, Y, tol, max_iter, report)
    return x, report


def contraction_bound(model: StructureModel, cfg: EstimatorConfig) -> float:
    """Rigorous bound ``||K_eps^{-1}||_2 * eps * max E' * max(lam, 1-lam) * ||B||^2``
    on the quasi-Newton contraction factor."""
    from .model import force_gap_bound

    K_eps = estimator_matrix(model, cfg)
    inv_norm = 1.0 / float(np.linalg.svd(K_eps, compute_uv=False)[-1])
    return inv_norm * force_gap_bound(model, cfg)


def continuation_solve(
    model: StructureModel,
    cfg: EstimatorConfig | None,
    Y,
    eps_schedule,
    x0=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    max_halvings: int = 6,
):
    """Warm-started quasi-Newton solves along an increasing epsilon schedule.

    A failed stage is retried with the epsilon increment halved (at most
    ``max_halvings`` times); the intermediate stages are kept in the result.
    Returns a list of ``(eps, x, report)``.
    """
    cfg = cfg or EstimatorConfig()
    schedule = [float(e) for e in eps_schedule]
    if not schedule:
        raise InvalidArgumentError("empty epsilon schedule")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise InvalidArgumentError("epsilon schedule must be strictly increasing")

    results = []
    x = x0
    eps_done = None
    for target in schedule:
        eps_from = eps_done
        delta = None if eps_from is None else target - eps_from
        halvings = 0
        while True:
            eps = target if delta is None else eps_from + delta
            if eps >= target * (1.0 - 1e-14):
                eps = target
            try:
                sol, rep = quasi_newton_solve(model.with_epsilon(eps), cfg, Y, x, tol, max_iter)
            except (NonConvergenceError, EstimatorSingularError) as exc:
                if delta is None or halvings >= max_halvings:
                    raise ContinuationStalledError(
                        f"continuation stalled at eps={eps:.6g}: {exc}", results
                    ) from exc
                halvings += 1
                delta *= 0.5
                log.info("stage eps=%.6g failed, halving step to %.3g", eps, delta)
                continue
            results.append((eps, sol, rep))
            x, eps_done = sol, eps
            if eps >= target:
                break
            eps_from = eps
            delta = min(delta, target - eps)
    return results
