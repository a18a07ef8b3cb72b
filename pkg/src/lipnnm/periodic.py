"""Periodic solutions close to a linear normal mode.

Two constructive methods are provided:

* the one-DOF fixed point on the frequency correction ``eta`` (zero initial
  velocity, even nonlinearity);
* the estimator iteration ``H(p, y_{k+1}) = -E(p, y_k)`` with ``E = F - H``,
  valid for any number of DOFs as long as the reference mode is not resonant.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._kernels import integrate_piecewise
from .densela import ModalSystem, lu_factor
from .errors import (
    ContinuationStalledError,
    DegenerateAmplitudeError,
    EstimatorSolveError,
    InvalidArgumentError,
    InvalidModeError,
    LipNNMError,
    NonContractionError,
    NonConvergenceError,
    ResonanceError,
    SingularMatrixError,
)
from .model import EstimatorConfig, NonlinearLaw, StructureModel, neg
from .shooting import (
    DEFAULT_GRID,
    RIGID_TOL,
    ModalOde,
    ShootingParams,
    Trajectory,
    _unilateral_closures,
    cos_moments,
    estimator_H,
    fd_jacobian,
    integrate,
    law_ode,
    periodicity_F,
    weighted_integral,
)
from .static_solver import IterationReport

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
RESONANCE_TOL = 1e-3
EXACT_INTEGER_TOL = 1e-9
CONDITION_FLOOR = 1e-6


@dataclass
class PeriodicSolution:
    params: ShootingParams
    omega1: float
    residual: float
    report: IterationReport
    trajectory: Trajectory = field(repr=False)
    warnings: list[str] = field(default_factory=list)

    @property
    def eta(self) -> float:
        return self.params.eta

    @property
    def omega_eps(self) -> float:
        return self.params.omega_eps(self.omega1)

    @property
    def period_physical(self) -> float:
        return 2.0 * math.pi / self.omega_eps

    def to_dict(self) -> dict:
        return {
            "a1": self.params.a1,
            "eps": self.params.eps,
            "eta": self.eta,
            "b": [float(v) for v in self.params.b],
            "a": [float(v) for v in self.params.a],
            "omega_eps": self.omega_eps,
            "period": self.period_physical,
            "residual": self.residual,
            "iterations": self.report.iterations,
            "ratios": [float(r) for r in self.report.ratios],
        }


# -- oracles and scalar helpers --------------------------------------------------


def exact_period_piecewise_1dof(omega: float, eps: float) -> float:
    """Period of ``x'' + w^2 x + eps w^2 x_- = 0``: half a cycle at ``w``, half at ``w sqrt(1+eps)``."""
    if omega <= 0.0:
        raise InvalidArgumentError("omega must be positive")
    if eps <= -1.0:
        raise InvalidArgumentError("eps must exceed -1")
    return math.pi / omega * (1.0 + 1.0 / math.sqrt(1.0 + eps))


def eta0(law_or_ode, a: float, N: int = DEFAULT_GRID) -> float:
    """Frequency correction at ``eps = 0``: ``(1/(a pi)) int cos(s) g(a cos s) ds``.

    For a modal system ``g`` is the reference-mode component of the scaled
    nonlinearity evaluated on the pure mode ``a cos(s) e_1``.
    """
    if a == 0.0:
        raise InvalidArgumentError("amplitude must be nonzero")
    ode = law_ode(law_or_ode) if isinstance(law_or_ode, NonlinearLaw) else law_or_ode
    s = np.linspace(0.0, 2.0 * math.pi, int(N) + 1)
    x = np.zeros((ode.n, s.size))
    x[0] = a * np.cos(s)
    g = ode.scale * ode.nonlinear(x)[0]
    w = np.cos(s) * g
    integral = (2.0 * math.pi / N) * (w.sum() - 0.5 * (w[0] + w[-1]))
    return float(integral / (a * math.pi))


@dataclass(frozen=True)
class NonresonanceStatus:
    ratios: np.ndarray
    errors: tuple[int, ...] = ()
    warnings: tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    @property
    def violations(self) -> tuple[int, ...]:
        return tuple(sorted(self.errors + self.warnings))


def _classify_ratios(freq_ratios, ref: int, tol_res: float) -> NonresonanceStatus:
    errors, warns = [], []
    for j, q in enumerate(freq_ratios):
        if j == ref:
            continue
        dist = abs(q - round(q))
        if dist <= EXACT_INTEGER_TOL * max(1.0, abs(q)):
            errors.append(j + 1)
        elif dist < tol_res:
            warns.append(j + 1)
    return NonresonanceStatus(np.asarray(freq_ratios), tuple(errors), tuple(warns))


def check_nonresonance(modal: ModalSystem, mode_index: int = 1,
                       tol_res: float = RESONANCE_TOL) -> NonresonanceStatus:
    """Flag modes ``j`` whose frequency ratio ``omega_j / omega_ref`` is (nearly) an integer.

    ``mode_index`` and the reported modes are 1-based.
    """
    omega = modal.omega
    k = int(mode_index) - 1
    if not 0 <= k < modal.n or omega[k] <= RIGID_TOL:
        raise InvalidModeError(f"mode {mode_index} is not an elastic mode")
    return _classify_ratios(omega / omega[k], k, tol_res)


def _ode_nonresonance(ode: ModalOde, tol_res: float) -> NonresonanceStatus:
    return _classify_ratios(np.sqrt(np.clip(ode.ratios, 0.0, None)), 0, tol_res)


def with_slopes(ode: ModalOde, lam) -> ModalOde:
    """Copy of a unilateral modal system with new estimator slopes."""
    if not ode.compiled:
        raise InvalidArgumentError("slopes can only be changed on unilateral systems")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), ode.gaps.shape).copy()
    nonlinear, estimator = _unilateral_closures(ode.proj, ode.strain, ode.gaps, lam)
    return dataclasses.replace(ode, nonlinear=nonlinear, estimator=estimator, slopes=lam)


# -- one-DOF fixed point ----------------------------------------------------------


def find_periodic_1dof_fixed_point(
    law: NonlinearLaw,
    a: float,
    eps: float,
    eta0_guess: float | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = 100,
    N: int = DEFAULT_GRID,
    omega: float = 1.0,
) -> PeriodicSolution:
    """Iterate ``eta <- (1 - eps eta) int cos g(x) / int cos x`` with ``x(0) = a, x'(0) = 0``."""
    if a == 0.0:
        raise InvalidArgumentError("amplitude must be nonzero")
    ode = law_ode(law, omega=omega)
    eta = eta0(law, a, N) if eta0_guess is None else float(eta0_guess)
    report = IterationReport()
    streak = 0
    converged = False
    for _ in range(max_iter):
        params = ShootingParams(a, eps, [eta, 0.0])
        den, num = cos_moments(ode, params, N)
        if abs(den) < 1e-12 * abs(a) * math.pi:
            raise DegenerateAmplitudeError("int cos(s) x(s) ds vanishes")
        eta_new = (1.0 - eps * eta) * num / den
        step = abs(eta_new - eta)
        report.record(step)
        eta = eta_new
        if report.ratios and report.iterates[-2] > 1e-13 and report.ratios[-1] >= 1.0:
            streak += 1
            if streak >= 3:
                report.finish(False, float("nan"))
                raise NonContractionError("eta iteration is not contracting", report)
        else:
            streak = 0
        if step <= tol:
            converged = True
            break
    params = ShootingParams(a, eps, [eta, 0.0])
    F = periodicity_F(ode, params, N)
    residual = float(np.linalg.norm(F))
    report.finish(converged, residual, 1e-13)
    if not converged:
        raise NonConvergenceError(f"eta iteration did not converge in {max_iter} steps", report)
    notes = []
    if abs(F[0]) > 1e-6:
        msg = f"F1 = {F[0]:.3e} is not zero: g(a cos s) may not be even"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    traj = integrate(ode, params, "full_f", N)
    return PeriodicSolution(params, ode.omega1, residual, report, traj, notes)


# -- estimator iteration ----------------------------------------------------------


def _inner_newton(Hf, rhs, y, J, tol, max_iter=50, max_halvings=5):
    """Solve ``H(z) = rhs`` from ``z = y`` with the fixed Jacobian ``J``."""
    try:
        lu = lu_factor(J)
    except SingularMatrixError as exc:
        raise EstimatorSolveError(f"estimator Jacobian is singular: {exc}") from exc
    z = np.array(y, dtype=float)
    r = Hf(z) - rhs
    rn = float(np.linalg.norm(r))
    noise = 1e-13 * (1.0 + float(np.linalg.norm(rhs)))
    for _ in range(max_iter):
        if rn <= noise:
            return z
        dz = -lu.solve(r)
        t = 1.0
        for _ in range(max_halvings + 1):
            z_new = z + t * dz
            r_new = Hf(z_new) - rhs
            rn_new = float(np.linalg.norm(r_new))
            if rn_new <= rn:
                break
            t *= 0.5
        else:
            if rn <= 1e3 * noise:
                return z
            raise EstimatorSolveError(f"inner Newton stalled at residual {rn:.3e}")
        z, r, rn = z_new, r_new, rn_new
        if t * float(np.linalg.norm(dz)) <= tol:
            return z
    raise EstimatorSolveError(f"inner Newton did not converge (residual {rn:.3e})")


def _conditioned(J) -> bool:
    sv = np.linalg.svd(J, compute_uv=False)
    return sv[-1] >= CONDITION_FLOOR * sv[0]


def find_periodic_estimator(
    ode: ModalOde,
    a1: float,
    eps: float,
    y0=None,
    cfg: EstimatorConfig | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = 100,
    N: int = DEFAULT_GRID,
    accept_tol: float | None = None,
    tol_res: float = RESONANCE_TOL,
    fallback_slopes=(0.25,),
) -> PeriodicSolution:
    """Solve ``F(p, y) = 0`` by the estimator iteration ``H(p, y_{k+1}) = -E(p, y_k)``.

    ``cfg`` only matters for unilateral systems, where ``cfg.lam`` replaces
    the slopes baked into ``ode``. When ``dH/dy`` at the start is numerically
    singular, the estimator slopes are replaced by each of ``fallback_slopes``
    in turn.
    """
    if a1 == 0.0:
        raise InvalidArgumentError("a1 must be nonzero")
    if ode.omega1 <= RIGID_TOL:
        raise InvalidModeError("reference mode is a rigid-body mode")
    status = _ode_nonresonance(ode, tol_res)
    if not status.ok:
        raise ResonanceError(
            f"integer frequency ratio for modes {list(status.errors)}", status.errors
        )
    notes = [f"near-resonant mode {j}" for j in status.warnings]
    if cfg is not None and cfg.lam is not None and ode.compiled:
        ode = with_slopes(ode, cfg.lam)
    accept_tol = 10.0 * tol if accept_tol is None else accept_tol
    seed = ShootingParams.seed(a1, 0.0, ode.n, eta0(ode, a1, N))
    y = seed.y.copy() if y0 is None else np.array(y0, dtype=float)
    base = ShootingParams(a1, eps, y)

    def make_H(system, params=base):
        return lambda v: estimator_H(system, params.with_y(v), N)

    # invertibility is required at eps = 0; with zero gaps a slope of 1/2
    # reproduces eta(0) exactly and the Jacobian is singular there
    if not _conditioned(fd_jacobian(make_H(ode, seed), seed.y)):
        if not ode.compiled:
            raise EstimatorSolveError("estimator Jacobian is singular at eps = 0")
        for lam in fallback_slopes:
            trial = with_slopes(ode, lam)
            if _conditioned(fd_jacobian(make_H(trial, seed), seed.y)):
                notes.append(f"estimator slopes replaced by {lam}")
                ode = trial
                break
        else:
            raise EstimatorSolveError("estimator Jacobian is singular for every slope tried")
    Hf = make_H(ode)
    J = fd_jacobian(Hf, y)

    Ff = lambda v: periodicity_F(ode, base.with_y(v), N)  # noqa: E731
    report = IterationReport()
    streak = 0
    converged = False
    for k in range(max_iter):
        if k > 0:
            J = fd_jacobian(Hf, y)
        E = Ff(y) - Hf(y)
        y_new = _inner_newton(Hf, -E, y, J, 0.1 * tol)
        step = float(np.linalg.norm(y_new - y))
        report.record(step)
        y = y_new
        if len(report.iterates) >= 2 and report.iterates[-2] > 1e-12 and report.ratios[-1] >= 1.0:
            streak += 1
            if streak >= 3:
                report.finish(False, float(np.linalg.norm(Ff(y))))
                raise NonContractionError("estimator iteration is not contracting", report)
        else:
            streak = 0
        if step <= tol:
            converged = True
            break
    params = base.with_y(y)
    residual = float(np.linalg.norm(periodicity_F(ode, params, N)))
    report.finish(converged, residual, 1e-12)
    if not converged:
        raise NonConvergenceError(f"estimator iteration did not converge in {max_iter} steps", report)
    if residual > accept_tol:
        raise NonConvergenceError(
            f"iteration stalled with |F| = {residual:.3e} > {accept_tol:.1e}", report
        )
    if 1.0 - eps * params.eta <= 0.0:
        raise NonConvergenceError("converged to 1 - eps*eta <= 0", report)
    traj = integrate(ode, params, "full_f", N)
    return PeriodicSolution(params, ode.omega1, residual, report, traj, notes)


def continuation_periodic(
    ode: ModalOde,
    eps_schedule,
    a1: float,
    cfg: EstimatorConfig | None = None,
    tol: float = DEFAULT_TOL,
    N: int = DEFAULT_GRID,
    max_halvings: int = 6,
    **kwargs,
) -> list[PeriodicSolution]:
    """Estimator iteration along increasing ``eps``, warm-starting ``y`` from the previous stage."""
    schedule = [float(e) for e in eps_schedule]
    if not schedule:
        raise InvalidArgumentError("empty epsilon schedule")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise InvalidArgumentError("epsilon schedule must be strictly increasing")
    results: list[PeriodicSolution] = []
    y = None
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
                sol = find_periodic_estimator(ode, a1, eps, y, cfg, tol=tol, N=N, **kwargs)
            except (NonConvergenceError, EstimatorSolveError) as exc:
                if delta is None or halvings >= max_halvings:
                    raise ContinuationStalledError(
                        f"continuation stalled at eps={eps:.6g}: {exc}", results
                    ) from exc
                halvings += 1
                delta *= 0.5
                log.info("stage eps=%.6g failed, halving step to %.3g", eps, delta)
                continue
            results.append(sol)
            y, eps_done = sol.params.y.copy(), eps
            if eps == target:
                break
            eps_from = eps
            delta = min(delta, target - eps)
    return results


# -- physical-time check --------------------------------------------------------------


def physical_return_defect(sol: PeriodicSolution, model: StructureModel | None = None,
                           ode: ModalOde | None = None, law: NonlinearLaw | None = None,
                           N: int | None = None):
    """Integrate the original (unscaled, physical-coordinate) equations over one period.

    For a model, ``M u'' + K u + eps B^T E' (B u + d)_- = 0`` starts from
    ``u(0) = Phi a``, ``u'(0) = omega_eps Phi b``; for a one-DOF law,
    ``x'' + w^2 x + eps w^2 g(x) = 0`` starts from ``(a, omega_eps b)``.
    The end state is mapped back to the same variables as the start and
    compared. Returns ``(defect, state_norm)``.
    """
    N = sol.trajectory.grid.size - 1 if N is None else int(N)
    p = sol.params
    w_eps = sol.omega_eps
    T = sol.period_physical
    if model is not None:
        if ode is None or ode.phi is None:
            raise InvalidArgumentError("a model-based check needs the modal system")
        phi = ode.phi
        u0 = phi @ p.a
        v0 = w_eps * (phi @ p.b)
        minv = 1.0 / model.masses
        A = minv[:, None] * model.stiffness
        C = minv[:, None] * model.incidence.T * model.unilateral_stiffness[None, :]
        out = np.empty((N + 1, 2 * model.n_dof))
        B = np.array(model.incidence)
        integrate_piecewise(A, C, B, np.array(model.gaps), np.zeros(B.shape[0]), False,
                            p.eps, 0.0, 0.0, u0, v0, T, N, out, np.zeros(2))
        back = phi.T * model.masses[None, :]
        xT = back @ out[-1, : model.n_dof]
        vT = back @ out[-1, model.n_dof :] / w_eps
    elif law is not None:
        w = sol.omega1
        x0, v0 = np.array([p.a1]), np.array([w_eps * p.b[0]])
        if law.kind == "unilateral":
            out = np.empty((N + 1, 2))
            integrate_piecewise(np.array([[w * w]]), np.array([[w * w * law.stiffness]]),
                                np.array([[1.0]]), np.array([law.gap]), np.zeros(1), False,
                                p.eps, 0.0, 0.0, x0, v0, T, N, out, np.zeros(2))
            xT, vT = out[-1, :1], out[-1, 1:] / w_eps
        else:
            h = T / N
            acc = lambda x: -w * w * (x + p.eps * np.asarray(law(x), dtype=float))  # noqa: E731
            x, v = x0, v0
            for _ in range(N):
                k1 = acc(x)
                k2 = acc(x + 0.5 * h * v)
                k3 = acc(x + 0.5 * h * v + 0.25 * h * h * k1)
                k4 = acc(x + h * v + 0.5 * h * h * k2)
                x = x + h * v + h * h / 6.0 * (k1 + k2 + k3)
                v = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            xT, vT = x, v / w_eps
    else:
        raise InvalidArgumentError("pass either a model (with its modal system) or a law")
    start = np.concatenate((p.a, p.b))
    end = np.concatenate((xT, vT))
    return float(np.linalg.norm(end - start)), float(np.linalg.norm(start))
