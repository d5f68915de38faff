"""Online learners: ONS, LightONS.Core and LightONS, with their curvature
parameters, truncation schedule and audit formulas.

Each learner is a :class:`LearnerState`; a step function takes the state and
the gradient observed at the emitted decision ``state.x`` and returns the next
state plus a :class:`RoundRecord`.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .conversion import surrogate_gradient
from .linalg import PdPairState, pd_pair_init, rank_one_update
from .projection import (
    Ball,
    ConvexDomain,
    ProjectionRequest,
    fast_proj,
    mahalanobis_project,
)

logger = logging.getLogger(__name__)

Variant = Literal["ons", "core", "full", "sketch"]
VARIANTS: tuple[str, ...] = ("ons", "core", "full", "sketch")

# Slack added to the regret bound in audits: the truncated projections add at
# most sum 1/t^2 <= pi^2/6 to the regret decomposition.
REGRET_SLACK = 2.0


def _positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value!r}")


def gamma_ons(D: float, G: float, alpha: float) -> float:
    """``1/2 * min(1/(D G), alpha)``."""
    _positive(D=D, G=G, alpha=alpha)
    return 0.5 * min(1.0 / (D * G), alpha)


def gamma_core(D: float, G: float, alpha: float, k: float) -> float:
    """``1/2 * min(2/((k+1) D G), alpha)``; equals :func:`gamma_ons` as k -> 1."""
    _positive(D=D, G=G, alpha=alpha)
    if not k > 1:
        raise ValueError(f"hysteresis coefficient k must exceed 1, got {k!r}")
    return 0.5 * min(2.0 / ((k + 1.0) * D * G), alpha)


def gamma_prime(
    D: float, G: float, alpha: float, k: float, c_f: float = 1.0, c_g: float = 1.0
) -> float:
    """``1/2 * min(1/(c_f c_g D G), 4/(c_f c_g (k+1) D G), alpha)``."""
    _positive(D=D, G=G, alpha=alpha)
    if not k > 1:
        raise ValueError(f"hysteresis coefficient k must exceed 1, got {k!r}")
    if c_f < 1 or c_g < 1:
        raise ValueError("conversion constants c_f, c_g must be >= 1")
    c = c_f * c_g
    return 0.5 * min(1.0 / (c * D * G), 4.0 / (c * (k + 1.0) * D * G), alpha)


def zeta_schedule(
    t: int, gamma: float, k: float, D: float, G: float, epsilon: float, c_g: float = 1.0
) -> float:
    """Projection tolerance at round ``t`` so truncation costs O(1/t^2) regret."""
    lam_hi = c_g**2 * G**2 * t + epsilon
    return min(
        gamma / (2.0 * k * D * lam_hi * t**2),
        math.sqrt(gamma / (2.0 * lam_hi * t)) / t,
    )


@dataclass(frozen=True)
class LearnerConfig:
    """Problem constants and algorithm choice.

    ``domain`` defaults to ``Ball(D/2)``. ``k`` is ignored by ONS; ``d_prime``
    is only read by the sketched variant.
    """

    d: int
    D: float
    G: float
    alpha: float
    epsilon: float
    k: float = 2.0
    domain: ConvexDomain | None = None
    variant: Variant = "full"
    c_f: float = 1.0
    c_g: float = 1.0
    backend: str = "tridiagonal"
    d_prime: int | None = None
    refresh_every: int | None = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        _positive(D=self.D, G=self.G, alpha=self.alpha, epsilon=self.epsilon)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant != "ons" and not self.k > 1:
            raise ValueError(f"hysteresis coefficient k must exceed 1, got {self.k!r}")
        if self.c_f < 1 or self.c_g < 1:
            raise ValueError("conversion constants c_f, c_g must be >= 1")
        if self.domain is None:
            object.__setattr__(self, "domain", Ball(self.D / 2.0))
        if self.domain.enclosing_radius > self.D / 2.0 * (1 + 1e-12):
            raise ValueError(
                f"domain extends to radius {self.domain.enclosing_radius:g} but D/2 = {self.D / 2:g}"
            )
        if self.variant == "sketch":
            if self.d_prime is None or not 1 <= self.d_prime:
                raise ValueError("sketched variant needs a positive d_prime")

    @property
    def gamma(self) -> float:
        if self.variant == "ons":
            return gamma_ons(self.D, self.G, self.alpha)
        if self.variant == "core":
            return gamma_core(self.D, self.G, self.alpha, self.k)
        return gamma_prime(self.D, self.G, self.alpha, self.k, self.c_f, self.c_g)

    @property
    def grad_scale(self) -> float:
        """Bound on the norm of the gradients fed to the preconditioner."""
        return self.c_g * self.G if self.variant in ("full", "sketch") else self.G


@dataclass(frozen=True)
class RoundRecord:
    t: int
    x: np.ndarray
    y_norm: float
    grad_f: np.ndarray
    grad_g: np.ndarray
    loss: float
    projected: Literal["none", "mahalanobis", "euclidean_only"]
    zeta_t: float


@dataclass(frozen=True)
class LearnerState:
    """Decisions, preconditioner and counters of one learner.

    ``t`` counts completed rounds; ``x`` is the decision to play next and
    ``y`` the core (possibly improper) iterate, equal to ``x`` for ONS.
    """

    config: LearnerConfig
    gamma: float
    pd: PdPairState
    y: np.ndarray
    x: np.ndarray
    t: int = 0
    mahalanobis_projections: int = 0
    update_events: int = 0
    trace: list | None = field(default=None, compare=False)
    warned: bool = False


def init_learner(config: LearnerConfig, trace: bool = False) -> LearnerState:
    """Fresh state with ``x_1 = y_1 = 0`` and ``A_0 = epsilon I``."""
    if config.variant == "sketch":
        from .sketch import sketch_init

        pd = sketch_init(config.d, config.d_prime, config.epsilon)
    else:
        pd = pd_pair_init(config.d, config.epsilon, config.refresh_every)
    zero = np.zeros(config.d)
    return LearnerState(config, config.gamma, pd, zero, zero.copy(), trace=[] if trace else None)


def step(state: LearnerState, grad_f: np.ndarray, loss: float = math.nan):
    """Dispatch to the step function of ``state.config.variant``."""
    variant = state.config.variant
    if variant == "ons":
        return ons_step(state, grad_f, loss)
    if variant == "core":
        return lightons_core_step(state, grad_f, loss)
    if variant == "full":
        return lightons_step(state, grad_f, loss)
    from .sketch import lightons_sketch_step

    return lightons_sketch_step(state, grad_f, loss)


def _check_grad(state: LearnerState, grad: np.ndarray) -> tuple[np.ndarray, bool]:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != (state.config.d,):
        raise ValueError(f"expected a gradient of length {state.config.d}, got shape {grad.shape}")
    warned = state.warned
    if not warned and np.linalg.norm(grad) > state.config.G * (1 + 1e-9):
        logger.warning(
            "gradient norm %.4g exceeds G = %.4g; projection certificates no longer hold",
            np.linalg.norm(grad),
            state.config.G,
        )
        warned = True
    return grad, warned


def _metric_projection(
    state: LearnerState, pd: PdPairState, point: np.ndarray, domain: ConvexDomain, t: int, k: float
) -> tuple[np.ndarray, float]:
    """Mahalanobis projection of ``point`` onto ``domain`` under ``pd.A``.

    Balls use FastProj at tolerance ``zeta_t``; other domains use the exact
    solver (baseline only).
    """
    cfg = state.config
    if not isinstance(domain, Ball):
        return mahalanobis_project(domain, pd.A, point), 0.0
    c_g = cfg.c_g if cfg.variant in ("full", "sketch") else 1.0
    zeta = zeta_schedule(t, state.gamma, k, cfg.D, cfg.G, cfg.epsilon, c_g)
    request = ProjectionRequest(
        pd.A, point, domain.radius, zeta, cfg.epsilon, cfg.epsilon + (c_g * cfg.G) ** 2 * t
    )
    return fast_proj(request, cfg.backend), zeta


def _newton_step(state: LearnerState, grad: np.ndarray, loss: float, trigger_radius: float | None):
    """Shared body of ONS and LightONS.Core (they differ only in the trigger)."""
    cfg = state.config
    grad, warned = _check_grad(state, grad)
    t = state.t + 1
    pd = rank_one_update(state.pd, grad)
    x = state.x
    projected, zeta, projections = "none", 0.0, state.mahalanobis_projections
    if pd is not state.pd:
        x_hat = x - (pd.V @ grad) / state.gamma
        if trigger_radius is None:
            outside = not cfg.domain.contains(x_hat, tol=0.0)
        else:
            outside = np.linalg.norm(x_hat) > trigger_radius
        if outside:
            k = 1.0 if trigger_radius is None else cfg.k
            x_new, zeta = _metric_projection(state, pd, x_hat, cfg.domain, t, k)
            projected, projections = "mahalanobis", projections + 1
        else:
            x_new = x_hat
    else:
        x_new = x
    record = RoundRecord(t, x, float(np.linalg.norm(x_new)), grad, grad, loss, projected, zeta)
    if state.trace is not None:
        state.trace.append(record)
    new_state = dataclasses.replace(
        state,
        pd=pd,
        x=x_new,
        y=x_new,
        t=t,
        mahalanobis_projections=projections,
        update_events=state.update_events + (pd is not state.pd),
        warned=warned,
    )
    return new_state, record


def ons_step(state: LearnerState, grad: np.ndarray, loss: float = math.nan):
    """One round of Online Newton Step: project whenever the step leaves the domain."""
    if state.config.variant != "ons":
        raise ValueError("ons_step needs an 'ons' learner")
    return _newton_step(state, grad, loss, None)


def lightons_core_step(state: LearnerState, grad: np.ndarray, loss: float = math.nan):
    """ONS step that only projects once the iterate leaves ``Ball(k D / 2)``."""
    if state.config.variant != "core":
        raise ValueError("lightons_core_step needs a 'core' learner")
    cfg = state.config
    return _newton_step(state, grad, loss, cfg.k * cfg.D / 2.0)


def lightons_step(state: LearnerState, grad_f: np.ndarray, loss: float = math.nan):
    """One round of LightONS.

    The core iterate ``y`` takes a Newton step on the surrogate gradient, is
    pulled back onto ``Ball(D/2)`` in the ``A_t`` metric only if it left
    ``Ball(k D / 2)``, and the played decision is its Euclidean projection.
    """
    cfg = state.config
    if cfg.variant != "full":
        raise ValueError("lightons_step needs a 'full' learner")
    grad_f, warned = _check_grad(state, grad_f)
    t = state.t + 1
    grad_g = surrogate_gradient(grad_f, state.x, state.y)
    pd = rank_one_update(state.pd, grad_g)
    y = state.y
    projected, zeta, projections = "none", 0.0, state.mahalanobis_projections
    if pd is not state.pd:
        y_hat = y - (pd.V @ grad_g) / state.gamma
        if np.linalg.norm(y_hat) > cfg.k * cfg.D / 2.0:
            y, zeta = _metric_projection(state, pd, y_hat, Ball(cfg.D / 2.0), t, cfg.k)
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
        pd=pd,
        y=y,
        x=x_new,
        t=t,
        mahalanobis_projections=projections,
        update_events=state.update_events + (pd is not state.pd),
        warned=warned,
    )
    return new_state, record


def projection_budget(config: LearnerConfig, gamma: float, T: int) -> int:
    """Certified ceiling on Mahalanobis projections over ``T`` rounds."""
    if T <= 0 or math.isinf(config.k):
        return 0
    if not config.k > 1:
        raise ValueError("projection budget needs k > 1")
    value = 2.0 / ((config.k - 1.0) * config.D * gamma) * math.sqrt(config.d * T / config.epsilon)
    return math.floor(value)


def projection_budget_without_k(config: LearnerConfig, gamma: float, T: int) -> int:
    """The same ceiling without the ``1/(k-1)`` factor."""
    if T <= 0:
        return 0
    return math.floor(2.0 / (config.D * gamma) * math.sqrt(config.d * T / config.epsilon))


def regret_upper_bound(config: LearnerConfig, gamma: float, T: int) -> float:
    """``d/(2 gamma) log(1 + c_g^2 G^2 T / (d eps)) + gamma eps D^2 / 8``."""
    c_g = config.c_g if config.variant in ("full", "sketch") else 1.0
    d, eps = config.d, config.epsilon
    return d / (2.0 * gamma) * math.log1p((c_g * config.G) ** 2 * T / (d * eps)) + (
        gamma * eps * config.D**2 / 8.0
    )


def gradient_norm_regret_bound(config: LearnerConfig, gamma: float, grad_sq_sum: float) -> float:
    """Regret bound in terms of ``G_T = sum_t ||grad f_t(x_t)||^2`` instead of ``G^2 T``."""
    d, eps = config.d, config.epsilon
    return d / (2.0 * gamma) * math.log1p(grad_sq_sum / (d * eps)) + gamma * eps * config.D**2 / 8.0


def default_epsilon(d: int, T: int) -> float:
    """``d log T``, the preconditioner coefficient for a known horizon."""
    if T < 2:
        raise ValueError("default epsilon d*log(T) needs T >= 2")
    return d * math.log(T)
