"""Dense symmetric kernels: paired matrix/inverse maintenance, Householder
tridiagonalization, shifted tridiagonal solves and factorization-based oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

SYMMETRY_TOL = 1e-10
ZERO_GRAD_TOL = 1e-14


class NumericalFailure(ArithmeticError):
    """A factorization or solve met a singular or indefinite system."""


@dataclass(frozen=True)
class PdPairState:
    """A symmetric positive-definite matrix ``A`` and its inverse ``V``.

    ``V`` is carried along by Sherman-Morrison updates. If ``refresh_every`` is
    set, ``V`` is re-derived from ``A`` every that many updates.
    """

    A: np.ndarray
    V: np.ndarray
    update_count: int = 0
    epsilon: float = 1.0
    refresh_every: int | None = field(default=None, compare=False)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def inverse_drift(self) -> float:
        """Frobenius norm of ``V @ A - I``."""
        return float(np.linalg.norm(self.V @ self.A - np.eye(self.dim)))


def pd_pair_init(dim: int, epsilon: float, refresh_every: int | None = None) -> PdPairState:
    """``A = epsilon * I`` together with ``V = I / epsilon``."""
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    if refresh_every is not None and refresh_every < 1:
        raise ValueError("refresh_every must be a positive integer")
    dim = int(dim)
    eye = np.eye(dim)
    return PdPairState(epsilon * eye, eye / epsilon, 0, float(epsilon), refresh_every)


def rank_one_update(state: PdPairState, g: np.ndarray) -> PdPairState:
    """Return the pair for ``A + g g^T``.

    The inverse follows ``V - (V g)(V g)^T / (1 + g^T V g)``. Gradients with
    norm below 1e-14 leave the state untouched.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (state.dim,):
        raise ValueError(f"expected a vector of length {state.dim}, got shape {g.shape}")
    if np.linalg.norm(g) < ZERO_GRAD_TOL:
        return state
    Vg = state.V @ g
    A = state.A + np.outer(g, g)
    V = state.V - np.outer(Vg, Vg) / (1.0 + g @ Vg)
    count = state.update_count + 1
    if state.refresh_every is not None and count % state.refresh_every == 0:
        V = dense_inverse(A)
    return PdPairState(A, V, count, state.epsilon, state.refresh_every)


def _cholesky(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    try:
        return scipy.linalg.cholesky(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("matrix is not positive definite") from exc


def dense_inverse(A: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix from its Cholesky factor."""
    L = _cholesky(A)
    M = scipy.linalg.cho_solve((L, True), np.eye(L.shape[0]))
    return 0.5 * (M + M.T)


def log_det(A: np.ndarray) -> float:
    """``log det A`` for SPD ``A`` via Cholesky."""
    L = _cholesky(A)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


@dataclass(frozen=True)
class TridiagFactorization:
    """``A = Q C Q^T`` with ``Q`` orthogonal and ``C`` symmetric tridiagonal.

    ``diag`` holds the d diagonal entries of ``C`` and ``offdiag`` the d-1
    sub/super-diagonal entries.
    """

    Q: np.ndarray
    diag: np.ndarray
    offdiag: np.ndarray

    @property
    def C(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    @property
    def dim(self) -> int:
        return self.diag.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """``C @ v`` in O(d)."""
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out


def tridiagonalize(A: np.ndarray) -> TridiagFactorization:
    """Householder reduction of a symmetric matrix to tridiagonal form."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if np.max(np.abs(A - A.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(A))):
        raise ValueError("matrix is not symmetric")
    d = A.shape[0]
    Q = np.eye(d)
    for j in range(d - 2):
        x = A[j + 1 :, j]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(norm_x, x[0])
        v /= np.linalg.norm(v)
        # H = I - 2 v v^T acting on trailing rows/columns
        A[j + 1 :, :] -= 2.0 * np.outer(v, v @ A[j + 1 :, :])
        A[:, j + 1 :] -= 2.0 * np.outer(A[:, j + 1 :] @ v, v)
        Q[:, j + 1 :] -= 2.0 * np.outer(Q[:, j + 1 :] @ v, v)
    diag = np.diag(A).copy()
    offdiag = np.diag(A, -1).copy()
    return TridiagFactorization(Q, diag, offdiag)


def tridiag_shifted_solve(
    diag: np.ndarray, offdiag: np.ndarray, mu: float, q: np.ndarray
) -> np.ndarray:
    """Solve ``(C + mu I) z = q`` for symmetric tridiagonal ``C`` (Thomas algorithm).

    No pivoting; a non-positive pivot means ``C + mu I`` is not positive
    definite and raises :class:`NumericalFailure`.
    """
    b = [float(x) + mu for x in diag]
    c = [float(x) for x in offdiag]
    r = [float(x) for x in q]
    n = len(b)
    if len(r) != n or len(c) != max(n - 1, 0):
        raise ValueError("inconsistent tridiagonal system sizes")
    cp = [0.0] * n
    rp = [0.0] * n
    piv = b[0]
    if not piv > 0.0:
        raise NumericalFailure("shifted tridiagonal system is not positive definite")
    cp[0] = c[0] / piv if n > 1 else 0.0
    rp[0] = r[0] / piv
    for i in range(1, n):
        piv = b[i] - c[i - 1] * cp[i - 1]
        if not piv > 0.0:
            raise NumericalFailure("shifted tridiagonal system is not positive definite")
        if i < n - 1:
            cp[i] = c[i] / piv
        rp[i] = (r[i] - c[i - 1] * rp[i - 1]) / piv
    z = [0.0] * n
    z[-1] = rp[-1]
    for i in range(n - 2, -1, -1):
        z[i] = rp[i] - cp[i] * z[i + 1]
    return np.array(z)
