"""LightONS with a frequent-directions sketch in place of the d x d preconditioner.

The preconditioner is ``A~ = eps I + S^T S`` with ``S`` of shape (2 d', d);
its inverse is applied as ``(I - S^T R S) / eps`` where
``R = (eps I + S S^T)^{-1}`` is 2d' x 2d'. Between projection events the
working set is O(d' d).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .conversion import surrogate_gradient
from .learners import (
    LearnerConfig,
    LearnerState,
    RoundRecord,
    _check_grad,
    zeta_schedule,
)
from .linalg import ZERO_GRAD_TOL
from .projection import Ball, ProjectionRequest, fast_proj


@dataclass(frozen=True)
class SketchState:
    """Frequent-directions sketch ``S`` with the low-dimensional inverse ``R``.

    ``sigma1_sq_bound`` upper-bounds the top eigenvalue of ``S^T S``: exact
    after each SVD, then grown by the squared norm of every inserted row.
    """

    S: np.ndarray
    R: np.ndarray
    epsilon: float
    next_zero_row: int = 0
    delta_accum: float = 0.0
    last_delta: float = 0.0
    sigma1_sq_bound: float = 0.0
    svd_events: int = 0
    update_count: int = 0

    @property
    def d(self) -> int:
        return self.S.shape[1]

    @property
    def d_prime(self) -> int:
        return self.S.shape[0] // 2

    def dense(self) -> np.ndarray:
        """``eps I + S^T S`` (allocates d x d)."""
        return self.epsilon * np.eye(self.d) + self.S.T @ self.S

    def inverse_drift(self) -> float:
        """Frobenius norm of ``R (eps I + S S^T) - I``."""
        m = self.S.shape[0]
        return float(np.linalg.norm(self.R @ (self.epsilon * np.eye(m) + self.S @ self.S.T) - np.eye(m)))


def sketch_init(d: int, d_prime: int, epsilon: float) -> SketchState:
    if not 1 <= d_prime or 2 * d_prime > d:
        raise ValueError(f"sketch size needs 1 <= d_prime <= d/2, got d_prime={d_prime}, d={d}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    m = 2 * d_prime
    return SketchState(np.zeros((m, d)), np.eye(m) / epsilon, float(epsilon))


def fast_fd_update(state: SketchState, g: np.ndarray) -> SketchState:
    """Insert ``g`` as the first all-zero row of ``S``.

    While zero rows remain, ``R`` follows two Sherman-Morrison corrections.
    When the last row fills, ``S`` is shrunk to its top ``d'`` directions
    with squared singular values reduced by ``sigma_{d'}^2``, and the
    sketching error ``2 d' sigma_{d'}^2 / eps`` is accumulated.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (state.d,):
        raise ValueError(f"expected a vector of length {state.d}, got shape {g.shape}")
    gg = float(g @ g)
    if math.sqrt(gg) < ZERO_GRAD_TOL:
        return state
    m, i = state.S.shape[0], state.next_zero_row
    a = state.S @ g
    S = state.S.copy()
    S[i] = g
    count = state.update_count + 1
    if i + 1 < m:
        # eps I + S S^T gains e_i a^T + (a + |g|^2 e_i) e_i^T
        R = state.R
        Re = R[:, i]
        R = R - np.outer(Re, a @ R) / (1.0 + a @ Re)
        b = a.copy()
        b[i] += gg
        Rb = R @ b
        R = R - np.outer(Rb, R[i]) / (1.0 + Rb[i])
        R = 0.5 * (R + R.T)
        return dataclasses.replace(
            state,
            S=S,
            R=R,
            next_zero_row=i + 1,
            last_delta=0.0,
            sigma1_sq_bound=state.sigma1_sq_bound + gg,
            update_count=count,
        )

    _, s, Vt = np.linalg.svd(S, full_matrices=False)
    s = np.where(s > s[0] * max(S.shape) * np.finfo(float).eps, s, 0.0)
    dp = m // 2
    shift = s[dp - 1] ** 2
    shrunk = np.sqrt(np.maximum(s[:dp] ** 2 - shift, 0.0))
    S = np.zeros_like(S)
    S[:dp] = shrunk[:, None] * Vt[:dp]
    r_diag = np.full(m, 1.0 / state.epsilon)
    r_diag[:dp] = 1.0 / (state.epsilon + shrunk**2)
    delta = 2.0 * dp / state.epsilon * shift
    return dataclasses.replace(
        state,
        S=S,
        R=np.diag(r_diag),
        next_zero_row=int(np.count_nonzero(shrunk)),
        delta_accum=state.delta_accum + delta,
        last_delta=delta,
        sigma1_sq_bound=float(shrunk[0] ** 2),
        svd_events=state.svd_events + 1,
        update_count=count,
    )


def sketched_inverse_apply(state: SketchState, v: np.ndarray) -> np.ndarray:
    """``(eps I + S^T S)^{-1} v`` in O(d' d) without forming a d x d matrix."""
    v = np.asarray(v, dtype=float)
    return (v - state.S.T @ (state.R @ (state.S @ v))) / state.epsilon


def fd_error_bound(spectrum: np.ndarray, d_prime: int, epsilon: float) -> float:
    """``min_j 2 d' / ((d' - j + 1) eps) * sum_{i >= j} lambda_i`` over ``j = 1..d'``.

    ``spectrum`` holds the eigenvalues of ``sum_t g_t g_t^T``.
    """
    lam = np.clip(np.sort(np.asarray(spectrum, dtype=float))[::-1], 0.0, None)
    tails = np.cumsum(lam[::-1])[::-1]
    best = math.inf
    for j in range(1, d_prime + 1):
        tail = tails[j - 1] if j - 1 < len(tails) else 0.0
        best = min(best, 2.0 * d_prime / ((d_prime - j + 1) * epsilon) * tail)
    return float(best)


def sketch_regret_bound(config: LearnerConfig, gamma: float, T: int, delta_total: float) -> float:
    """``d'/gamma log(1 + c_g^2 G^2 T / (2 d' eps)) + gamma eps D^2 / 8 + Delta / (2 gamma)``."""
    dp, eps = config.d_prime, config.epsilon
    return (
        dp / gamma * math.log1p((config.c_g * config.G) ** 2 * T / (2.0 * dp * eps))
        + gamma * eps * config.D**2 / 8.0
        + delta_total / (2.0 * gamma)
    )


def lightons_sketch_step(state: LearnerState, grad_f: np.ndarray, loss: float = math.nan):
    """LightONS round with the sketched preconditioner.

    The metric is only densified when a Mahalanobis projection fires.
    """
    cfg = state.config
    if cfg.variant != "sketch":
        raise ValueError("lightons_sketch_step needs a 'sketch' learner")
    grad_f, warned = _check_grad(state, grad_f)
    t = state.t + 1
    grad_g = surrogate_gradient(grad_f, state.x, state.y)
    sk = fast_fd_update(state.pd, grad_g)
    y = state.y
    projected, zeta, projections = "none", 0.0, state.mahalanobis_projections
    if sk is not state.pd:
        y_hat = y - sketched_inverse_apply(sk, grad_g) / state.gamma
        if np.linalg.norm(y_hat) > cfg.k * cfg.D / 2.0:
            zeta = zeta_schedule(t, state.gamma, cfg.k, cfg.D, cfg.G, cfg.epsilon, cfg.c_g)
            request = ProjectionRequest(
                sk.dense(), y_hat, cfg.D / 2.0, zeta, cfg.epsilon, cfg.epsilon + sk.sigma1_sq_bound
            )
            y = fast_proj(request, cfg.backend)
            projected, projections = "mahalanobis", projections + 1
        else:
            y = y_hat
    x_new = cfg.domain.project(y)
    if projected == "none" and not np.array_equal(x_new, y):
        projected = "euclidean_only"
    record = RoundRecord(t, state.x, float(np.linalg.norm(y)), grad_f, grad_g, loss, projected, zeta)
    if state.trace is not None:
        state.trace.append(record)
    new_state = dataclasses.replace(
        state,
        pd=sk,
        y=y,
        x=x_new,
        t=t,
        mahalanobis_projections=projections,
        update_events=state.update_events + (sk is not state.pd),
        warned=warned,
    )
    return new_state, record
