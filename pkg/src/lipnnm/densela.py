"""Small dense linear algebra kernels.

LU with partial pivoting (with an explicit singularity test that the static
solver relies on), the induced 2-norm by power iteration, and the generalized
symmetric eigenproblem ``K phi = w2 M phi`` for diagonal ``M`` by cyclic Jacobi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingularMatrixError

PIVOT_RTOL = 1e-14


def _as_square(A) -> np.ndarray:
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {A.shape}")
    return A


@dataclass(frozen=True)
class LUFactor:
    """Packed ``PA = LU`` factors; ``perm[i]`` is the source row of row ``i``."""

    lu: np.ndarray
    perm: np.ndarray
    scale: float

    @property
    def n(self) -> int:
        return self.lu.shape[0]

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise InvalidArgumentError(
                f"right-hand side has {b.shape[0]} rows, matrix is {self.n}x{self.n}"
            )
        y = b[self.perm].copy()
        lu = self.lu
        for i in range(self.n):
            y[i] -= lu[i, :i] @ y[:i]
        for i in range(self.n - 1, -1, -1):
            y[i] = (y[i] - lu[i, i + 1 :] @ y[i + 1 :]) / lu[i, i]
        return y

    def min_pivot(self) -> float:
        return float(np.min(np.abs(np.diag(self.lu)))) if self.n else 0.0


def lu_factor(A) -> LUFactor:
    """Factor ``A`` with partial pivoting.

    Raises SingularMatrixError when a pivot falls below ``1e-14 * ||A||_inf``.
    """
    A = _as_square(A)
    n = A.shape[0]
    lu = A.copy()
    perm = np.arange(n)
    scale = float(np.max(np.sum(np.abs(A), axis=1))) if n else 0.0
    threshold = PIVOT_RTOL * scale
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= threshold or lu[p, k] == 0.0:
            raise SingularMatrixError(
                f"singular matrix: pivot {abs(lu[p, k]):.3e} at column {k} "
                f"below {threshold:.3e}"
            )
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return LUFactor(lu=lu, perm=perm, scale=scale)


def lu_solve(A, b) -> np.ndarray:
    A = _as_square(A)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise InvalidArgumentError(
            f"dimension mismatch: A is {A.shape}, b has {b.shape[0]} entries"
        )
    return lu_factor(A).solve(b)


def norm2(A, tol: float = 1e-12, max_iter: int = 500) -> float:
    """Induced 2-norm from power iteration on ``A^T A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0 or not np.any(A):
        return 0.0
    AtA = A.T @ A
    # deterministic start that is not orthogonal to the dominant vector in practice
    v = np.linspace(1.0, 2.0, AtA.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = AtA @ v
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


@dataclass(frozen=True)
class ModalSystem:
    """Generalized eigenpairs: ``K @ phi = M @ phi @ diag(omega2)``, ``phi.T M phi = I``."""

    omega2: np.ndarray
    phi: np.ndarray

    @property
    def omega(self) -> np.ndarray:
        return np.sqrt(np.clip(self.omega2, 0.0, None))

    @property
    def n(self) -> int:
        return self.omega2.shape[0]


def jacobi_eigh(A, rtol: float = 1e-13, max_sweeps: int = 100):
    """Cyclic Jacobi for a symmetric matrix. Returns (eigenvalues, eigenvectors)."""
    A = _as_square(A)
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), V
    target = rtol * scale
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
    return np.diag(A).copy(), V


def generalized_modes(K, M) -> ModalSystem:
    """Solve ``K phi = w2 M phi`` for symmetric ``K`` and diagonal positive ``M``.

    ``M`` may be given as a diagonal matrix or as the vector of its diagonal.
    Eigenvalues come back ascending; each mode is signed so that its largest
    entry (in absolute value) is positive.
    """
    K = _as_square(K)
    M = np.asarray(M, dtype=float)
    m = np.diag(M).copy() if M.ndim == 2 else M.copy()
    if m.shape[0] != K.shape[0]:
        raise InvalidArgumentError("mass and stiffness dimensions differ")
    if np.any(m <= 0.0):
        raise InvalidArgumentError("masses must be strictly positive")
    s = 1.0 / np.sqrt(m)
    A = K * s[:, None] * s[None, :]
    w2, V = jacobi_eigh(A)
    order = np.argsort(w2, kind="stable")
    w2 = w2[order]
    phi = s[:, None] * V[:, order]
    for k in range(phi.shape[1]):
        col = phi[:, k]
        if col[np.argmax(np.abs(col))] < 0.0:
            phi[:, k] = -col
    return ModalSystem(omega2=w2, phi=phi)
