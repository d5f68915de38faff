"""Euclidean projections onto simple domains and Mahalanobis projection onto a
Euclidean ball, both the certified bisection (FastProj) and an exact oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg
import scipy.optimize

from .linalg import (
    NumericalFailure,
    PdPairState,
    TridiagFactorization,
    tridiag_shifted_solve,
    tridiagonalize,
)

Backend = Literal["dense", "tridiagonal"]
BACKENDS: tuple[str, ...] = ("dense", "tridiagonal")


class ConvexDomain:
    """A compact convex set given by a membership test and a Euclidean projector."""

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        raise NotImplementedError

    def project(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def enclosing_radius(self) -> float:
        """Radius of the smallest origin-centered ball containing the set."""
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(ConvexDomain):
    """Euclidean ball of the given radius centered at the origin."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius!r}")

    def contains(self, x, tol=1e-12):
        return bool(np.linalg.norm(x) <= self.radius + tol)

    def project(self, y):
        y = np.asarray(y, dtype=float)
        norm = np.linalg.norm(y)
        if norm <= self.radius:
            return y.copy()
        return _rescale(y, self.radius)

    @property
    def diameter(self):
        return 2.0 * self.radius

    @property
    def enclosing_radius(self):
        return self.radius


@dataclass(frozen=True)
class Box(ConvexDomain):
    """Axis-aligned box ``lower <= x <= upper``; must contain the origin."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise ValueError("box bounds must have equal shapes with lower <= upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, d: int, half_width: float) -> Box:
        return cls(-half_width * np.ones(d), half_width * np.ones(d))

    def contains(self, x, tol=1e-12):
        x = np.asarray(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def project(self, y):
        return np.clip(np.asarray(y, dtype=float), self.lower, self.upper)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def enclosing_radius(self):
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))


def _rescale(v: np.ndarray, radius: float) -> np.ndarray:
    """``(radius / |v|) v``, nudged inward if rounding left it outside the ball."""
    out = (radius / np.linalg.norm(v)) * v
    while np.linalg.norm(out) > radius:
        out *= 1.0 - np.finfo(float).eps
    return out


def euclidean_project(domain: ConvexDomain, y: np.ndarray) -> np.ndarray:
    return domain.project(y)


@dataclass(frozen=True)
class ProjectionRequest:
    """Inputs of an approximate projection of ``u`` onto ``Ball(radius)`` under ``metric``.

    ``metric`` may be a dense SPD matrix, a :class:`PdPairState` or a
    :class:`TridiagFactorization`. ``lam_lo``/``lam_hi`` must bracket the
    metric's spectrum; they are trusted, not checked.
    """

    metric: np.ndarray | PdPairState | TridiagFactorization
    u: np.ndarray
    radius: float
    zeta: float
    lam_lo: float
    lam_hi: float

    def dense_metric(self) -> np.ndarray:
        m = self.metric
        if isinstance(m, PdPairState):
            return m.A
        if isinstance(m, TridiagFactorization):
            return m.Q @ m.C @ m.Q.T
        return np.asarray(m, dtype=float)


class _Rho:
    """``rho(mu) = ||(A + mu I)^{-1} A u||^2 - R^2`` with a cached backend."""

    def __init__(self, request: ProjectionRequest, backend: Backend):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
        self.backend = backend
        self.R2 = request.radius**2
        u = np.asarray(request.u, dtype=float)
        if backend == "dense":
            self.A = request.dense_metric()
            self.p = self.A @ u
            self.eye = np.eye(len(u))
        else:
            m = request.metric
            tri = m if isinstance(m, TridiagFactorization) else tridiagonalize(request.dense_metric())
            self.tri = tri
            self.q = tri.matvec(tri.Q.T @ u)

    def solve(self, mu: float) -> np.ndarray:
        """``(A + mu I)^{-1} A u`` expressed in the original basis."""
        if self.backend == "dense":
            return _spd_solve(self.A + mu * self.eye, self.p)
        return self.tri.Q @ tridiag_shifted_solve(self.tri.diag, self.tri.offdiag, mu, self.q)

    def __call__(self, mu: float) -> float:
        if self.backend == "dense":
            z = _spd_solve(self.A + mu * self.eye, self.p)
        else:
            z = tridiag_shifted_solve(self.tri.diag, self.tri.offdiag, mu, self.q)
        return float(z @ z) - self.R2


def _spd_solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.solve(M, b, assume_a="pos", check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("shifted metric is not positive definite") from exc


def rho_eval(request: ProjectionRequest, mu: float, backend: Backend = "dense") -> float:
    """Evaluate the dual root function of the ball projection at ``mu >= 0``."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    return _Rho(request, backend)(mu)


def bisection_steps(request: ProjectionRequest) -> int:
    """Number of bisection steps FastProj spends on ``request`` (clamped at 0)."""
    norm_u = float(np.linalg.norm(request.u))
    ratio = request.lam_hi / request.lam_lo - 1.0
    arg = ratio * norm_u * (norm_u / request.radius - 1.0) / request.zeta
    if not arg > 1.0:
        return 0
    return max(0, math.ceil(math.log2(arg)))


def _check_request(request: ProjectionRequest) -> float:
    norm_u = float(np.linalg.norm(request.u))
    if not norm_u > request.radius:
        raise ValueError("point already inside the ball; no projection needed")
    if not request.lam_lo > 0:
        raise ValueError("lower eigenvalue bound must be positive")
    if request.lam_hi < request.lam_lo:
        raise ValueError("eigenvalue bounds must satisfy lam_lo <= lam_hi")
    if not request.zeta > 0:
        raise ValueError("tolerance zeta must be positive")
    if not request.radius > 0:
        raise ValueError("radius must be positive")
    return norm_u


def fast_proj(request: ProjectionRequest, backend: Backend = "tridiagonal") -> np.ndarray:
    """Approximate ``argmin_{||v|| <= R} ||v - u||_A`` to Euclidean accuracy ``zeta``.

    Bisects the dual root on ``[(|u|/R - 1) lam_lo, (|u|/R - 1) lam_hi]`` and
    rescales the primal point onto the sphere, so the result is always
    feasible. ``backend="dense"`` re-solves a d x d system per step;
    ``"tridiagonal"`` reduces once and solves in O(d) per step.
    """
    norm_u = _check_request(request)
    rho = _Rho(request, backend)
    scale = norm_u / request.radius - 1.0
    a, b = scale * request.lam_lo, scale * request.lam_hi
    for _ in range(bisection_steps(request)):
        mid = 0.5 * (a + b)
        if rho(mid) >= 0.0:
            a = mid
        else:
            b = mid
    return _rescale(rho.solve(0.5 * (a + b)), request.radius)


def exact_ellipsoid_project_oracle(A: np.ndarray, u: np.ndarray, R: float) -> np.ndarray:
    """Mahalanobis projection onto ``Ball(R)`` through a full eigendecomposition.

    The dual root is located by bisection to relative width 1e-14. Slow;
    meant as a reference.
    """
    u = np.asarray(u, dtype=float)
    norm_u = float(np.linalg.norm(u))
    if norm_u <= R:
        return u.copy()
    lam, Q = np.linalg.eigh(np.asarray(A, dtype=float))
    if lam[0] <= 0:
        raise NumericalFailure("metric is not positive definite")
    w = Q.T @ u
    w2 = w * w

    def rho(mu):
        return float(np.sum(w2 / (1.0 + mu / lam) ** 2)) - R * R

    scale = norm_u / R - 1.0
    a, b = scale * lam[0], scale * lam[-1]
    for _ in range(400):
        if b - a <= 1e-14 * b:
            break
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if rho(mid) >= 0.0:
            a = mid
        else:
            b = mid
    mu = 0.5 * (a + b)
    return Q @ (w * lam / (lam + mu))


def mahalanobis_project(domain: ConvexDomain, A: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact ``argmin_{x in domain} (x - y)^T A (x - y)`` for ball or box domains.

    Balls go through :func:`exact_ellipsoid_project_oracle`; boxes through a
    bound-constrained quasi-Newton solve of the quadratic program.
    """
    y = np.asarray(y, dtype=float)
    if domain.contains(y, tol=0.0):
        return y.copy()
    if isinstance(domain, Ball):
        return exact_ellipsoid_project_oracle(A, y, domain.radius)
    if isinstance(domain, Box):
        if y.shape == (1,):
            return domain.project(y)

        def objective(x):
            r = x - y
            Ar = A @ r
            return float(r @ Ar), 2.0 * Ar

        res = scipy.optimize.minimize(
            objective,
            domain.project(y),
            jac=True,
            method="L-BFGS-B",
            bounds=list(zip(domain.lower, domain.upper)),
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000},
        )
        return domain.project(res.x)
    raise TypeError(f"no Mahalanobis projector for {type(domain).__name__}")
