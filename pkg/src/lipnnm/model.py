"""Spring-mass models with unilateral (compression-only) springs.

A model is described by an incidence matrix ``B`` (springs x DOFs), per-spring
linear stiffness ``E``, per-spring unilateral stiffness ``E'``, per-spring gaps
``d`` and the scale ``epsilon`` of the nonsmooth term. The internal force is

    f(u) = B^T E B u + epsilon B^T E' (B u + d)_-

and the linear strict estimator replaces ``(.)_-`` by ``Lambda (.)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .densela import norm2
from .errors import InvalidArgumentError

BOUNDARIES = ("fixed_left", "broken_both_ends")


def neg(x):
    """Negative part ``(x)_- = (x - |x|) / 2``, elementwise."""
    return np.minimum(x, 0.0)


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StructureModel:
    masses: np.ndarray
    incidence: np.ndarray
    linear_stiffness: np.ndarray
    unilateral_stiffness: np.ndarray
    gaps: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self):
        masses = np.atleast_1d(np.asarray(self.masses, dtype=float))
        B = np.atleast_2d(np.asarray(self.incidence, dtype=float))
        n_springs, n_dof = B.shape
        if masses.shape != (n_dof,):
            raise InvalidArgumentError(
                f"{masses.shape[0]} masses given for {n_dof} degrees of freedom"
            )
        if np.any(masses <= 0.0):
            raise InvalidArgumentError("masses must be strictly positive")
        if not np.all(np.isin(B, (-1.0, 0.0, 1.0))):
            raise InvalidArgumentError("incidence entries must be -1, 0 or 1")
        for j, row in enumerate(B):
            nz = row[row != 0.0]
            if nz.size > 2 or (nz.size == 2 and nz[0] == nz[1]):
                raise InvalidArgumentError(
                    f"spring {j}: at most two incidence entries, of opposite sign"
                )

        def per_spring(v, name, default=None):
            if v is None:
                v = default
            v = np.asarray(v, dtype=float)
            if v.ndim == 0:
                v = np.full(n_springs, float(v))
            if v.shape != (n_springs,):
                raise InvalidArgumentError(f"{name} must have one entry per spring")
            return v

        E = per_spring(self.linear_stiffness, "linear_stiffness")
        Ep = per_spring(self.unilateral_stiffness, "unilateral_stiffness")
        d = per_spring(self.gaps, "gaps", 0.0)
        if np.any(E < 0.0) or np.any(Ep < 0.0):
            raise InvalidArgumentError("stiffnesses must be nonnegative")
        if not np.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise InvalidArgumentError("epsilon must be a nonnegative number")
        object.__setattr__(self, "masses", _frozen(masses))
        object.__setattr__(self, "incidence", _frozen(B))
        object.__setattr__(self, "linear_stiffness", _frozen(E))
        object.__setattr__(self, "unilateral_stiffness", _frozen(Ep))
        object.__setattr__(self, "gaps", _frozen(d))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        K = self.stiffness
        w = np.linalg.eigvalsh(K)
        if w.size and w[0] < -1e-12 * max(np.linalg.norm(K, 2), 1.0):
            raise InvalidArgumentError("stiffness matrix is not positive semidefinite")

    @property
    def n_dof(self) -> int:
        return self.incidence.shape[1]

    @property
    def n_springs(self) -> int:
        return self.incidence.shape[0]

    @property
    def stiffness(self) -> np.ndarray:
        """Linear stiffness ``K = B^T E B``."""
        B = self.incidence
        return B.T @ (self.linear_stiffness[:, None] * B)

    @property
    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.masses)

    def with_epsilon(self, epsilon: float) -> "StructureModel":
        return StructureModel(
            self.masses,
            self.incidence,
            self.linear_stiffness,
            self.unilateral_stiffness,
            self.gaps,
            epsilon,
        )

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        springs = []
        for j, row in enumerate(self.incidence):
            cols = [int(c) for c in np.flatnonzero(row)]
            spring = {"dofs": cols}
            if len(cols) == 1:
                spring["sign"] = int(row[cols[0]])
            elif len(cols) == 2:
                spring["signs"] = [int(row[cols[0]]), int(row[cols[1]])]
            spring["E"] = float(self.linear_stiffness[j])
            spring["Eprime"] = float(self.unilateral_stiffness[j])
            spring["d"] = float(self.gaps[j])
            springs.append(spring)
        return {
            "n_dof": self.n_dof,
            "masses": [float(m) for m in self.masses],
            "springs": springs,
            "epsilon": self.epsilon,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "StructureModel":
        try:
            n = int(data["n_dof"])
            masses = data["masses"]
            springs = data["springs"]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"malformed model: {exc}") from exc
        if n < 1:
            raise InvalidArgumentError("n_dof must be positive")
        B = np.zeros((len(springs), n))
        E = np.zeros(len(springs))
        Ep = np.zeros(len(springs))
        d = np.zeros(len(springs))
        for j, s in enumerate(springs):
            dofs = [int(i) for i in s["dofs"]]
            if not 1 <= len(dofs) <= 2 or any(not 0 <= i < n for i in dofs):
                raise InvalidArgumentError(f"spring {j}: bad dofs {dofs}")
            if len(dofs) == 1:
                signs = [s.get("sign", 1)]
            else:
                signs = s.get("signs", [1, -1])
                if len(dofs) == 2 and dofs[0] == dofs[1]:
                    raise InvalidArgumentError(f"spring {j}: repeated dof")
            for i, sg in zip(dofs, signs):
                B[j, i] = float(sg)
            E[j] = float(s.get("E", 0.0))
            Ep[j] = float(s.get("Eprime", 0.0))
            d[j] = float(s.get("d", 0.0))
        return cls(masses, B, E, Ep, d, float(data.get("epsilon", 0.0)))

    @classmethod
    def from_json(cls, text: str) -> "StructureModel":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"model file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "StructureModel":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


@dataclass(frozen=True)
class EstimatorConfig:
    """Slopes of the linear strict estimator.

    ``lam`` holds one slope per spring (a scalar is broadcast); when it is
    None the default depends on the model size, see :meth:`slopes`.
    ``alpha`` is the scalar slope used for one-DOF laws.
    """

    lam: np.ndarray | float | None = None
    alpha: float = 0.25
    default_lambda: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError("alpha must lie in (0, 1)")
        if self.alpha == 0.5:
            raise InvalidArgumentError("alpha = 1/2 makes the estimator Jacobian singular")
        if not 0.0 < self.default_lambda < 1.0:
            raise InvalidArgumentError("default_lambda must lie in (0, 1)")
        if self.lam is not None:
            lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
            if np.any(lam <= 0.0) or np.any(lam >= 1.0):
                raise InvalidArgumentError("every lambda_j must lie in (0, 1)")
            object.__setattr__(self, "lam", _frozen(lam))

    def slopes(self, model: StructureModel, default: float | None = None) -> np.ndarray:
        """Per-spring slopes; ``default`` overrides ``default_lambda`` when ``lam`` is unset."""
        if self.lam is None:
            if model.n_dof == 1:
                value = self.alpha
            else:
                value = self.default_lambda if default is None else default
            return np.full(model.n_springs, value)
        if self.lam.shape == (1,):
            return np.full(model.n_springs, float(self.lam[0]))
        if self.lam.shape != (model.n_springs,):
            raise InvalidArgumentError("lambda must have one entry per spring")
        return np.array(self.lam)


@dataclass(frozen=True)
class NonlinearLaw:
    """Scalar (or vector) nonlinearity ``g`` with a declared Lipschitz constant.

    For ``kind="unilateral"`` the law is ``stiffness * (x + gap)_-``. A custom
    law wraps any callable; ``slope`` is the estimator slope used in place of
    ``g`` (defaults to the estimator's ``alpha``).
    """

    kind: str = "unilateral"
    stiffness: float = 1.0
    gap: float = 0.0
    func: Callable | None = field(default=None, compare=False)
    lipschitz: float | None = None
    slope: float | None = None

    def __post_init__(self):
        if self.kind not in ("unilateral", "custom"):
            raise InvalidArgumentError(f"unknown law kind {self.kind!r}")
        if self.kind == "custom":
            if self.func is None or self.lipschitz is None:
                raise InvalidArgumentError("a custom law needs func and lipschitz")
        elif self.lipschitz is None:
            object.__setattr__(self, "lipschitz", abs(float(self.stiffness)))

    @classmethod
    def unilateral(cls, stiffness: float = 1.0, gap: float = 0.0) -> "NonlinearLaw":
        return cls("unilateral", stiffness=stiffness, gap=gap)

    @classmethod
    def custom(cls, func, lipschitz: float, slope: float | None = None) -> "NonlinearLaw":
        return cls("custom", func=func, lipschitz=lipschitz, slope=slope)

    def __call__(self, x):
        if self.kind == "unilateral":
            return self.stiffness * neg(np.asarray(x, dtype=float) + self.gap)
        return self.func(x)

    def observed_lipschitz(self, lo=-10.0, hi=10.0, n_pairs=2000, seed=0) -> float:
        rng = np.random.default_rng(seed)
        x1 = rng.uniform(lo, hi, n_pairs)
        x2 = rng.uniform(lo, hi, n_pairs)
        keep = x1 != x2
        g1 = np.asarray(self(x1[keep]), dtype=float)
        g2 = np.asarray(self(x2[keep]), dtype=float)
        return float(np.max(np.abs(g2 - g1) / np.abs(x2[keep] - x1[keep])))


# -- construction helpers ----------------------------------------------------


def chain_incidence(n: int, boundary: str = "fixed_left") -> np.ndarray:
    """Incidence matrix of a straight chain of ``n`` masses.

    ``fixed_left``: mass 0 is clamped, ``gamma_1 = -u_1``, ``gamma_j = u_{j-1} - u_j``.
    ``broken_both_ends``: ``n + 1`` springs, ``gamma_1 = u_1``,
    ``gamma_j = u_j - u_{j-1}``, ``gamma_{n+1} = -u_n``.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidArgumentError(f"chain needs at least one mass, got {n!r}")
    n = int(n)
    if boundary == "fixed_left":
        B = np.zeros((n, n))
        B[0, 0] = -1.0
        for j in range(1, n):
            B[j, j - 1] = 1.0
            B[j, j] = -1.0
        return B
    if boundary == "broken_both_ends":
        B = np.zeros((n + 1, n))
        B[0, 0] = 1.0
        for j in range(1, n):
            B[j, j - 1] = -1.0
            B[j, j] = 1.0
        B[n, n - 1] = -1.0
        return B
    raise InvalidArgumentError(f"unknown boundary {boundary!r}; expected one of {BOUNDARIES}")


def chain_model(
    n: int,
    boundary: str = "fixed_left",
    masses: Sequence[float] | float = 1.0,
    E: Sequence[float] | float = 1.0,
    Eprime: Sequence[float] | float = 0.0,
    gaps: Sequence[float] | float = 0.0,
    epsilon: float = 0.0,
) -> StructureModel:
    B = chain_incidence(n, boundary)
    m = np.broadcast_to(np.asarray(masses, dtype=float), (n,))
    return StructureModel(m, B, E, Eprime, gaps, epsilon)


def broken_supports_model(
    n: int = 5, E: float = 1.0, Eprime: float = 1.0, epsilon: float = 0.1, masses=1.0
) -> StructureModel:
    """Chain whose two end springs are purely unilateral and interior springs linear."""
    m = n + 1
    Ev = np.full(m, float(E))
    Ev[[0, -1]] = 0.0
    Epv = np.zeros(m)
    Epv[[0, -1]] = Eprime
    return chain_model(n, "broken_both_ends", masses, Ev, Epv, 0.0, epsilon)


def oscillator_1dof(
    mass: float = 1.0, k: float = 1.0, epsilon: float = 0.0, gap: float = 0.0
) -> StructureModel:
    """``m x'' + k x + eps k (x + gap)_- = 0`` as a one-spring model."""
    return StructureModel([mass], [[1.0]], [k], [k], [gap], epsilon)


# -- forces ---------------------------------------------------------------------


def _check_u(model: StructureModel, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[0] != model.n_dof:
        raise InvalidArgumentError(
            f"displacement has {u.shape[0]} entries, model has {model.n_dof} DOFs"
        )
    return u


def _strain(model, u):
    g = model.incidence @ u
    return g + (model.gaps if g.ndim == 1 else model.gaps[:, None])


def internal_force(model: StructureModel, u) -> np.ndarray:
    """``K u + eps B^T E' (B u + d)_-``; ``u`` may be a vector or an (n, batch) array."""
    u = _check_u(model, u)
    Ep = model.unilateral_stiffness if u.ndim == 1 else model.unilateral_stiffness[:, None]
    return model.stiffness @ u + model.epsilon * (
        model.incidence.T @ (Ep * neg(_strain(model, u)))
    )


def estimator_matrix(model: StructureModel, cfg: EstimatorConfig) -> np.ndarray:
    """``K_eps = K + eps B^T E' Lambda B``."""
    B = model.incidence
    w = model.unilateral_stiffness * cfg.slopes(model)
    return model.stiffness + model.epsilon * B.T @ (w[:, None] * B)


def estimator_offset(model: StructureModel, cfg: EstimatorConfig) -> np.ndarray:
    """Constant part ``eps B^T E' Lambda d`` of the estimator."""
    w = model.unilateral_stiffness * cfg.slopes(model)
    return model.epsilon * model.incidence.T @ (w * model.gaps)


def estimator_force(model: StructureModel, cfg: EstimatorConfig, u) -> np.ndarray:
    """``K u + eps B^T E' Lambda (B u + d)``."""
    u = _check_u(model, u)
    w = model.unilateral_stiffness * cfg.slopes(model)
    if u.ndim > 1:
        w = w[:, None]
    return model.stiffness @ u + model.epsilon * (model.incidence.T @ (w * _strain(model, u)))


def gap_force(model: StructureModel, cfg: EstimatorConfig, u) -> np.ndarray:
    """``e(u) = f(u) - h(u) = eps B^T E' [(Bu + d)_- - Lambda (Bu + d)]``."""
    u = _check_u(model, u)
    s = _strain(model, u)
    lam = cfg.slopes(model)
    w = model.unilateral_stiffness
    if u.ndim > 1:
        lam, w = lam[:, None], w[:, None]
    return model.epsilon * model.incidence.T @ (w * (neg(s) - lam * s))


def strain_gap(model: StructureModel, cfg: EstimatorConfig, u) -> np.ndarray:
    """Strain-space gap ``eps E' [(Bu + d)_- - Lambda (Bu + d)]`` (before ``B^T``)."""
    u = _check_u(model, u)
    s = _strain(model, u)
    lam = cfg.slopes(model)
    w = model.unilateral_stiffness
    if u.ndim > 1:
        lam, w = lam[:, None], w[:, None]
    return model.epsilon * w * (neg(s) - lam * s)


def lipschitz_gap_bound(model: StructureModel, cfg: EstimatorConfig) -> float:
    """``eps * max_j max(lam_j, 1 - lam_j) * ||B||_2 * max_j E'_j``.

    This bounds the Lipschitz modulus of :func:`strain_gap`. The force-space
    gap :func:`gap_force` carries one more factor ``||B||_2``, see
    :func:`force_gap_bound`.
    """
    lam = cfg.slopes(model)
    Ep = model.unilateral_stiffness
    active = Ep > 0.0
    if not np.any(active) or model.epsilon == 0.0:
        return 0.0
    worst = float(np.max(np.maximum(lam[active], 1.0 - lam[active])))
    return model.epsilon * worst * norm2(model.incidence) * float(np.max(Ep))


def force_gap_bound(model: StructureModel, cfg: EstimatorConfig) -> float:
    return lipschitz_gap_bound(model, cfg) * norm2(model.incidence)
