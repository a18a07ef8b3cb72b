"""Shooting in strained coordinates.

With ``theta = omega_eps t`` and ``1/omega_eps^2 = (1 - eps eta)/omega_1^2`` the
modal equations become

    x_j'' + r_j x_j + eps * phi_j(x, eta, eps) = 0,   r_j = (omega_j/omega_1)^2,

where ``phi`` is either the full nonsmooth term ``f`` or its linear estimator
``h``. Both are integrated over ``[0, 2 pi]`` by fixed-step RK4, and the
periodicity residual ``F`` (resp. ``H`` on the estimator system) is assembled
from two Fourier projections of ``phi_1`` plus the return conditions of the
remaining modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .densela import ModalSystem
from .errors import BlowUpError, InvalidArgumentError, InvalidModeError
from ._kernels import integrate_piecewise
from .model import EstimatorConfig, NonlinearLaw, StructureModel, neg

DEFAULT_GRID = 2048
MIN_GRID = 256
RIGID_TOL = 1e-8
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ShootingParams:
    """``p = (a1, eps)`` and ``y = (eta, b1, a2, b2, ..., an, bn)``."""

    a1: float
    eps: float
    y: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        if y.size < 2 or y.size % 2:
            raise InvalidArgumentError("y must have an even length 2n >= 2")
        if self.eps < 0.0:
            raise InvalidArgumentError("eps must be nonnegative")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a1", float(self.a1))
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def n(self) -> int:
        return self.y.size // 2

    @property
    def eta(self) -> float:
        return float(self.y[0])

    @property
    def a(self) -> np.ndarray:
        """Initial modal displacements ``(a1, a2, ..., an)``."""
        return np.concatenate(([self.a1], self.y[2::2]))

    @property
    def b(self) -> np.ndarray:
        """Initial modal velocities ``x'(0) = (b1, ..., bn)``."""
        return self.y[1::2].copy()

    def with_y(self, y) -> "ShootingParams":
        return ShootingParams(self.a1, self.eps, y)

    def omega_eps(self, omega1: float) -> float:
        denom = 1.0 - self.eps * self.eta
        if denom <= 0.0:
            raise InvalidArgumentError("1 - eps*eta must be positive")
        return omega1 / math.sqrt(denom)

    @classmethod
    def seed(cls, a1: float, eps: float, n: int, eta: float) -> "ShootingParams":
        y = np.zeros(2 * n)
        y[0] = eta
        return cls(a1, eps, y)


@dataclass(frozen=True)
class Trajectory:
    grid: np.ndarray
    states: np.ndarray  # (N+1, 2n): positions then velocities
    step: float
    # (int sin phi_1, int cos phi_1) accumulated with the integrator stages
    fourier: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2

    @property
    def x(self) -> np.ndarray:
        return self.states[:, : self.n]

    @property
    def v(self) -> np.ndarray:
        return self.states[:, self.n :]

    def to_csv(self, path=None) -> str:
        n = self.n
        header = ",".join(["theta"] + [f"x{j + 1}" for j in range(n)] + [f"v{j + 1}" for j in range(n)])
        lines = [header]
        for t, row in zip(self.grid, self.states):
            lines.append(",".join(f"{val:.17g}" for val in (t, *row)))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass(frozen=True)
class ModalOde:
    """Strained-coordinate modal system around one linear mode.

    ``nonlinear(x)`` and ``estimator(x)`` return the modal forces of the full
    and estimated nonlinearity for ``x`` of shape ``(n,)`` or ``(n, m)``; they
    enter ``phi`` multiplied by ``(1 - eps eta) * scale``.
    """

    ratios: np.ndarray
    omega1: float
    scale: float
    nonlinear: Callable = field(compare=False)
    estimator: Callable = field(compare=False)
    lipschitz: float = 1.0
    phi: np.ndarray | None = None
    mode_order: np.ndarray | None = None
    # dense description of the unilateral term, enables the compiled integrator
    proj: np.ndarray | None = None  # W = Phi^T B^T diag(E'), (n, springs)
    strain: np.ndarray | None = None  # P = B Phi, (springs, n)
    gaps: np.ndarray | None = None
    slopes: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.ratios.size

    @property
    def compiled(self) -> bool:
        return self.proj is not None

    def f_eval(self, x, eta: float, eps: float) -> np.ndarray:
        r = self.ratios if np.ndim(x) == 1 else self.ratios[:, None]
        return -eta * r * x + (1.0 - eps * eta) * self.scale * self.nonlinear(x)

    def h_eval(self, x, eta: float, eps: float) -> np.ndarray:
        r = self.ratios if np.ndim(x) == 1 else self.ratios[:, None]
        return -eta * r * x + (1.0 - eps * eta) * self.scale * self.estimator(x)

    def phi_eval(self, which: str, x, eta, eps):
        if which == "full_f":
            return self.f_eval(x, eta, eps)
        if which == "estimator_h":
            return self.h_eval(x, eta, eps)
        raise InvalidArgumentError(f"unknown system {which!r}")


def _unilateral_closures(W, P, d, lam):
    def nonlinear(x):
        s = P @ x + (d if np.ndim(x) == 1 else d[:, None])
        return W @ neg(s)

    def estimator(x):
        s = P @ x + (d if np.ndim(x) == 1 else d[:, None])
        return W @ ((lam if np.ndim(x) == 1 else lam[:, None]) * s)

    return nonlinear, estimator


def select_mode(modal: ModalSystem, mode_index: int | None = None) -> int:
    """Zero-based index of the reference mode. ``mode_index`` is 1-based;
    None picks the lowest mode with nonzero frequency."""
    omega = modal.omega
    if mode_index is None:
        nz = np.flatnonzero(omega > RIGID_TOL)
        if nz.size == 0:
            raise InvalidModeError("model has no elastic mode")
        return int(nz[0])
    k = int(mode_index) - 1
    if not 0 <= k < modal.n:
        raise InvalidModeError(f"mode index {mode_index} out of range 1..{modal.n}")
    if omega[k] <= RIGID_TOL:
        raise InvalidModeError(f"mode {mode_index} is a rigid-body mode (omega={omega[k]:.3g})")
    return k


def build_modal_ode(
    model: StructureModel,
    modal: ModalSystem,
    cfg: EstimatorConfig | None = None,
    mode_index: int | None = None,
    law: NonlinearLaw | None = None,
    default_lambda: float = 0.5,
) -> ModalOde:
    """Project a model onto its modes, reference mode first.

    Without ``law`` the nonlinearity is the model's unilateral term
    ``Phi^T B^T E' (B Phi x + d)_-`` with estimator ``Lambda (B Phi x + d)``.
    A custom ``law`` acts on physical displacements, ``G(Phi x)``, and is
    estimated by ``slope * Phi x``.
    """
    cfg = cfg or EstimatorConfig()
    k = select_mode(modal, mode_index)
    order = np.array([k] + [j for j in range(modal.n) if j != k], dtype=int)
    phi = modal.phi[:, order]
    w2 = modal.omega2[order]
    omega1 = math.sqrt(w2[0])
    ratios = w2 / w2[0]
    if law is not None and law.kind == "custom":
        slope = cfg.alpha if law.slope is None else law.slope

        def nonlinear(x):
            return phi.T @ np.asarray(law(phi @ x), dtype=float)

        def estimator(x):
            return slope * (phi.T @ (phi @ x))

        return ModalOde(ratios, omega1, 1.0 / w2[0], nonlinear, estimator,
                        lipschitz=float(law.lipschitz), phi=phi, mode_order=order)
    B = model.incidence
    W = phi.T @ B.T * model.unilateral_stiffness[None, :]
    P = B @ phi
    d = np.array(model.gaps, dtype=float)
    lam = cfg.slopes(model, default=default_lambda)
    nonlinear, estimator = _unilateral_closures(W, P, d, lam)
    lip = float(np.linalg.norm(W, 2) * np.linalg.norm(P, 2) / w2[0])
    return ModalOde(ratios, omega1, 1.0 / w2[0], nonlinear, estimator, lipschitz=lip,
                    phi=phi, mode_order=order, proj=W, strain=P, gaps=d, slopes=lam)


def law_ode(law: NonlinearLaw, cfg: EstimatorConfig | None = None, omega: float = 1.0) -> ModalOde:
    """One-DOF system ``x'' + x + eps(-eta x + (1 - eps eta) g(x)) = 0``.

    The estimator replaces ``g(x)`` by ``alpha x`` (``law.slope`` if set).
    """
    cfg = cfg or EstimatorConfig()
    alpha = cfg.alpha if law.slope is None else law.slope
    ratios = np.array([1.0])
    if law.kind == "unilateral":
        W = np.array([[law.stiffness]])
        P = np.array([[1.0]])
        d = np.array([law.gap])
        lam = np.array([alpha / law.stiffness if law.stiffness else alpha])
        nonlinear, estimator = _unilateral_closures(W, P, d, lam)
        return ModalOde(ratios, float(omega), 1.0, nonlinear, estimator,
                        lipschitz=float(law.lipschitz), proj=W, strain=P, gaps=d, slopes=lam)

    def nonlinear(x):
        return np.asarray(law(x), dtype=float)

    def estimator(x):
        return alpha * np.asarray(x, dtype=float)

    return ModalOde(ratios, float(omega), 1.0, nonlinear, estimator, lipschitz=float(law.lipschitz))


# -- integration --------------------------------------------------------------


def _rk4_generic(ode: ModalOde, which, eta, eps, x0, v0, N):
    # Same RK4 stages as the compiled kernel, without splitting at kinks.
    h = TWO_PI / N
    out = np.empty((N + 1, 2 * ode.n))
    x, v = x0.copy(), v0.copy()
    out[0] = np.concatenate((x, v))
    r = ode.ratios
    quad = np.zeros(2)

    def stage(x, t):
        phi = ode.phi_eval(which, x, eta, eps)
        return -r * x - eps * phi, phi[0] * np.array([math.sin(t), math.cos(t)])

    for i in range(N):
        t = i * h
        k1, q1 = stage(x, t)
        k2, q2 = stage(x + 0.5 * h * v, t + 0.5 * h)
        k3, q3 = stage(x + 0.5 * h * v + 0.25 * h * h * k1, t + 0.5 * h)
        k4, q4 = stage(x + h * v + 0.5 * h * h * k2, t + h)
        x = x + h * v + h * h / 6.0 * (k1 + k2 + k3)
        v = v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        quad += h / 6.0 * (q1 + 2.0 * q2 + 2.0 * q3 + q4)
        out[i + 1, : ode.n] = x
        out[i + 1, ode.n :] = v
    return out, quad


def _check_grid(N: int) -> int:
    N = int(N)
    if N < MIN_GRID or N & (N - 1):
        raise InvalidArgumentError(f"grid size must be a power of two >= {MIN_GRID}, got {N}")
    return N


def integrate(ode: ModalOde, params: ShootingParams, which: str = "full_f",
              N: int = DEFAULT_GRID, compiled: bool | None = None) -> Trajectory:
    """RK4 over ``[0, 2 pi]`` with ``x(0) = a``, ``x'(0) = b`` on ``N`` uniform steps."""
    N = _check_grid(N)
    if params.n != ode.n:
        raise InvalidArgumentError(f"params describe {params.n} modes, system has {ode.n}")
    if which not in ("full_f", "estimator_h"):
        raise InvalidArgumentError(f"unknown system {which!r}")
    x0, v0 = params.a, params.b
    eta, eps = params.eta, params.eps
    use_compiled = ode.compiled if compiled is None else (compiled and ode.compiled)
    if use_compiled:
        out = np.empty((N + 1, 2 * ode.n))
        quad = np.zeros(2)
        c = (1.0 - eps * eta) * ode.scale
        D = np.diag(ode.ratios * (1.0 - eps * eta))
        integrate_piecewise(D, ode.proj, ode.strain, ode.gaps, ode.slopes,
                            which == "estimator_h", eps * c, eta * ode.ratios[0], c,
                            x0, v0, TWO_PI, N, out, quad)
    else:
        out, quad = _rk4_generic(ode, which, eta, eps, x0, v0, N)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("trajectory is not finite")
    grid = np.linspace(0.0, TWO_PI, N + 1)
    return Trajectory(grid=grid, states=out, step=TWO_PI / N, fourier=quad)


def weighted_integral(traj: Trajectory, weight: str, values) -> float:
    """Trapezoid approximation of ``int_0^{2pi} w(s) v(s) ds`` on the trajectory grid."""
    if weight == "sin":
        w = np.sin(traj.grid)
    elif weight == "cos":
        w = np.cos(traj.grid)
    else:
        raise InvalidArgumentError(f"weight must be 'sin' or 'cos', got {weight!r}")
    values = np.asarray(values, dtype=float)
    if values.shape != traj.grid.shape:
        raise InvalidArgumentError("values must be sampled on the trajectory grid")
    g = w * values
    return float(traj.step * (g.sum() - 0.5 * (g[0] + g[-1])))


def cos_moments(ode: ModalOde, params: ShootingParams, N: int = DEFAULT_GRID):
    """``(int cos x_1, int cos g_1(x))`` along the full trajectory.

    ``g_1`` is the unscaled reference-mode nonlinearity. The unilateral path
    reuses the kink-aware stage quadrature; other laws fall back to the
    trapezoid rule on the grid.
    """
    N = _check_grid(N)
    if not ode.compiled:
        traj = integrate(ode, params, "full_f", N)
        g1 = ode.nonlinear(traj.x.T)[0]
        return (weighted_integral(traj, "cos", traj.x[:, 0]),
                weighted_integral(traj, "cos", g1))
    eta, eps = params.eta, params.eps
    D = np.diag(ode.ratios * (1.0 - eps * eta))
    kappa = eps * (1.0 - eps * eta) * ode.scale
    out = np.empty((N + 1, 2 * ode.n))
    moments = []
    for qa, qc in ((-1.0, 0.0), (0.0, 1.0)):
        quad = np.zeros(2)
        integrate_piecewise(D, ode.proj, ode.strain, ode.gaps, ode.slopes, False, kappa,
                            qa, qc, params.a, params.b, TWO_PI, N, out, quad)
        moments.append(float(quad[1]))
    return moments[0], moments[1]


def _residual(ode, params, which, N):
    traj = integrate(ode, params, which, N)
    out = np.empty(2 * ode.n)
    out[0], out[1] = traj.fourier
    end = traj.states[-1]
    n = ode.n
    a, b = params.a, params.b
    for j in range(1, n):
        out[2 * j] = end[j] - a[j]
        out[2 * j + 1] = end[n + j] - b[j]
    return out, traj


def periodicity_F(ode: ModalOde, params: ShootingParams, N: int = DEFAULT_GRID) -> np.ndarray:
    return _residual(ode, params, "full_f", N)[0]


def estimator_H(ode: ModalOde, params: ShootingParams, N: int = DEFAULT_GRID) -> np.ndarray:
    return _residual(ode, params, "estimator_h", N)[0]


def gap_E(ode: ModalOde, params: ShootingParams, N: int = DEFAULT_GRID) -> np.ndarray:
    return periodicity_F(ode, params, N) - estimator_H(ode, params, N)


def fd_jacobian(func: Callable, y, rel_step: float = 1e-6) -> np.ndarray:
    """Central differences with step ``rel_step * max(1, ||y||)``."""
    y = np.asarray(y, dtype=float)
    h = rel_step * max(1.0, float(np.linalg.norm(y)))
    cols = []
    for k in range(y.size):
        e = np.zeros_like(y)
        e[k] = h
        cols.append((func(y + e) - func(y - e)) / (2.0 * h))
    return np.column_stack(cols)
