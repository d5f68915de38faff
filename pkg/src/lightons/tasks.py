"""Regression tasks on folded-Gaussian streams.

Two losses are supported: squared loss ``1/2 (x^T w + y)^2`` and the
label-free logistic loss ``log(1 + exp(x^T w))``. Streams are drawn from
|N(0, I)|, scaled so that every gradient over the domain stays below ``G``
and the loss stays ``alpha``-exp-concave; the rare sample that would break
either property is shrunk onto the boundary and counted as clipped.

Random streams come from numpy's PCG64. Run ``i`` of base seed ``s`` uses
``SeedSequence(s, spawn_key=(i, purpose))`` where ``purpose`` is 0 for the
online stream and 1 for the held-out sample, so any run can be regenerated
on its own.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, Sequence

import numpy as np
import scipy.optimize
import scipy.special

from .projection import Ball, ConvexDomain

logger = logging.getLogger(__name__)

Task = Literal["linear", "logistic"]
TASKS: tuple[str, ...] = ("linear", "logistic")

ONLINE, HELDOUT = 0, 1

# Calibrated scales leave this fraction of raw samples above the limits.
TARGET_CLIP_RATE = 5e-4
# Clipped samples land this far inside the limits so rounding cannot push them out.
_CLIP_MARGIN = 1.0 - 1e-12
_CALIBRATION_SAMPLES = 400_000


@dataclass(frozen=True)
class LossSample:
    x: np.ndarray
    y: float | None = None


def linear_loss(w: np.ndarray, sample: LossSample) -> tuple[float, np.ndarray]:
    """``1/2 (x^T w + y)^2`` and its gradient ``(x^T w + y) x``."""
    r = float(sample.x @ w) + sample.y
    return 0.5 * r * r, r * sample.x


def logistic_loss(w: np.ndarray, sample: LossSample) -> tuple[float, np.ndarray]:
    """``log(1 + exp(x^T w))`` and its gradient ``sigmoid(x^T w) x``, overflow-safe."""
    z = float(sample.x @ w)
    return float(np.logaddexp(0.0, z)), float(scipy.special.expit(z)) * sample.x


LOSSES = {"linear": linear_loss, "logistic": logistic_loss}


def _check_task(task: str):
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")


def task_alpha(task: str, domain: ConvexDomain, G: float, alpha: float | None = None) -> float:
    """Exp-concavity parameter used for ``task`` on ``domain``.

    Only the unit ball with ``G = 0.1`` has built-in values (5 for linear,
    ``exp(-1/5)`` for logistic); elsewhere ``alpha`` must be passed.
    """
    _check_task(task)
    if alpha is not None:
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha!r}")
        return float(alpha)
    calibrated = (
        isinstance(domain, Ball) and math.isclose(domain.radius, 1.0) and math.isclose(G, 0.1)
    )
    if not calibrated:
        raise ValueError(
            f"no built-in alpha for task={task} on {domain!r} with G={G}; pass alpha explicitly"
        )
    return 5.0 if task == "linear" else math.exp(-0.2)


def _logistic_norm_limit(radius: float, G: float, alpha: float) -> float:
    """Largest ``|x|`` with ``sigmoid(r|x|)|x| <= G`` and ``r|x| <= log(1/alpha)``."""
    if not alpha < 1:
        raise ValueError("the logistic loss is only alpha-exp-concave for alpha < 1")
    q_alpha = -math.log(alpha) / radius
    # sigmoid(r q) q is increasing in q and below G at q = G
    q_grad = scipy.optimize.brentq(lambda q: scipy.special.expit(radius * q) * q - G, 0.0, 2.0 * G + 1.0)
    return min(q_alpha, q_grad)


def _linear_shrink(xn: np.ndarray, y: np.ndarray, radius: float, G: float, alpha: float) -> np.ndarray:
    """Per-sample factor c <= 1 so ``c^2 (r|x| + |y|)|x| <= G`` and ``c (r|x| + |y|) <= alpha^{-1/2}``."""
    reach = radius * xn + np.abs(y)
    grad = reach * xn
    c_grad = np.sqrt(np.divide(G, grad, out=np.full_like(grad, np.inf), where=grad > 0))
    c_exp = np.divide(1.0 / math.sqrt(alpha), reach, out=np.full_like(reach, np.inf), where=reach > 0)
    return np.minimum(1.0, _CLIP_MARGIN * np.minimum(c_grad, c_exp))


def _logistic_shrink(xn: np.ndarray, radius: float, G: float, alpha: float) -> np.ndarray:
    limit = _logistic_norm_limit(radius, G, alpha)
    return np.minimum(1.0, _CLIP_MARGIN * np.divide(limit, xn, out=np.full_like(xn, np.inf), where=xn > 0))


@functools.lru_cache(maxsize=64)
def calibrate_feature_scale(task: str, d: int, G: float, radius: float, alpha: float) -> float:
    """Scale leaving about ``TARGET_CLIP_RATE`` of raw samples to be clipped.

    Solved on a fixed Monte Carlo sample, so the result is deterministic.
    """
    _check_task(task)
    rng = np.random.Generator(np.random.PCG64(20240917))
    xn = np.linalg.norm(np.abs(rng.standard_normal((_CALIBRATION_SAMPLES, d))), axis=1)
    q = 1.0 - TARGET_CLIP_RATE
    if task == "linear":
        y = np.abs(rng.standard_normal(_CALIBRATION_SAMPLES))
        # both limits are monotone in the scale; take the tighter one
        s = min(
            math.sqrt(G / np.quantile((radius * xn + y) * xn, q)),
            1.0 / math.sqrt(alpha) / np.quantile(radius * xn + y, q),
        )
    else:
        s = _logistic_norm_limit(radius, G, alpha) / np.quantile(xn, q)
    return float(s)


def stream_rng(seed: int, run: int = 0, purpose: int = ONLINE) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run, purpose))))


@dataclass(frozen=True)
class StreamConfig:
    """Folded-Gaussian stream of ``T`` samples in dimension ``d``.

    ``feature_scale=None`` picks the calibrated scale for ``(task, d, G,
    radius, alpha)``; ``alpha=None`` asks :func:`task_alpha`.
    """

    task: Task
    d: int
    T: int
    seed: int
    run: int = 0
    feature_scale: float | None = None
    G: float = 0.1
    radius: float = 1.0
    alpha: float | None = None
    purpose: int = ONLINE

    def __post_init__(self):
        _check_task(self.task)
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if int(self.T) != self.T or self.T < 0:
            raise ValueError(f"T must be a nonnegative integer, got {self.T!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.feature_scale is not None and not self.feature_scale > 0:
            raise ValueError("feature_scale must be positive")
        if not self.G > 0 or not self.radius > 0:
            raise ValueError("G and radius must be positive")
        object.__setattr__(
            self, "alpha", task_alpha(self.task, Ball(self.radius), self.G, self.alpha)
        )

    @property
    def domain(self) -> Ball:
        return Ball(self.radius)

    def resolved_scale(self) -> float:
        if self.feature_scale is not None:
            return float(self.feature_scale)
        return calibrate_feature_scale(self.task, int(self.d), float(self.G), float(self.radius), float(self.alpha))


@dataclass(frozen=True)
class LossStream:
    """A realized stream: features ``X`` (T x d), targets ``y`` (linear only)."""

    task: Task
    X: np.ndarray
    y: np.ndarray | None
    feature_scale: float
    clipped: int = 0
    alpha: float = field(default=math.nan, compare=False)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def clip_rate(self) -> float:
        return self.clipped / len(self) if len(self) else 0.0

    def __getitem__(self, t: int) -> LossSample:
        return LossSample(self.X[t], None if self.y is None else float(self.y[t]))

    def __iter__(self) -> Iterator[LossSample]:
        return (self[t] for t in range(len(self)))

    def loss_grad(self, t: int, w: np.ndarray) -> tuple[float, np.ndarray]:
        return LOSSES[self.task](w, self[t])

    def losses(self, w: np.ndarray) -> np.ndarray:
        """Per-sample losses at a fixed ``w``."""
        z = self.X @ w
        if self.task == "linear":
            return 0.5 * (z + self.y) ** 2
        return np.logaddexp(0.0, z)

    def mean_loss_grad(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        z = self.X @ w
        n = len(self)
        if self.task == "linear":
            r = z + self.y
            return 0.5 * float(r @ r) / n, self.X.T @ r / n
        return float(np.mean(np.logaddexp(0.0, z))), self.X.T @ scipy.special.expit(z) / n

    def smoothness(self) -> float:
        """Lipschitz constant of the mean-loss gradient."""
        if len(self) == 0:
            return 0.0
        top = float(np.linalg.eigvalsh(self.X.T @ self.X / len(self))[-1])
        return top if self.task == "linear" else top / 4.0


def sample_stream(config: StreamConfig) -> LossStream:
    """Draw ``T`` samples; deterministic in ``(seed, run, purpose)``.

    Raw entries are |z| for standard normal z; features (and linear targets)
    are multiplied by the feature scale, then shrunk if a sample would
    violate the gradient or exp-concavity limits over the domain.
    """
    rng = stream_rng(config.seed, config.run, config.purpose)
    T, d = int(config.T), int(config.d)
    s = config.resolved_scale()
    X = s * np.abs(rng.standard_normal((T, d)))
    xn = np.linalg.norm(X, axis=1)
    if config.task == "linear":
        y = s * np.abs(rng.standard_normal(T))
        c = _linear_shrink(xn, y, config.radius, config.G, config.alpha)
        y = c * y
    else:
        y = None
        c = _logistic_shrink(xn, config.radius, config.G, config.alpha)
    clipped = int(np.count_nonzero(c < 1.0))
    X = c[:, None] * X
    if clipped:
        logger.info("clipped %d of %d samples (%.3g%%)", clipped, T, 100.0 * clipped / T)
    return LossStream(config.task, X, y, s, clipped, config.alpha)


def worst_case_grad_norm(stream: LossStream, radius: float) -> np.ndarray:
    """Per-sample ``sup_{|w| <= radius} |grad loss_t(w)|`` (features are nonnegative)."""
    xn = np.linalg.norm(stream.X, axis=1)
    if stream.task == "linear":
        return (radius * xn + np.abs(stream.y)) * xn
    return scipy.special.expit(radius * xn) * xn


@dataclass(frozen=True)
class ComparatorResult:
    u: np.ndarray
    value: float
    iterations: int
    grad_mapping_norm: float
    converged: bool


def offline_best_comparator(
    stream: LossStream,
    domain: ConvexDomain,
    iterations: int = 100_000,
    tol: float = 1e-8,
    x0: np.ndarray | None = None,
) -> ComparatorResult:
    """Minimize the mean loss of ``stream`` over ``domain`` by projected gradient descent.

    Step size is ``1/L`` with ``L`` the gradient's Lipschitz constant; stops
    when the gradient mapping ``L |w - Pi(w - grad/L)|`` drops below ``tol``
    (applied to the summed loss). On hitting the cap the best iterate found
    is returned with ``converged=False``.
    """
    d = stream.X.shape[1]
    w = np.zeros(d) if x0 is None else domain.project(np.asarray(x0, dtype=float))
    n = len(stream)
    if n == 0:
        return ComparatorResult(w, 0.0, 0, 0.0, True)
    L = stream.smoothness()
    if L <= 0:
        value, _ = stream.mean_loss_grad(w)
        return ComparatorResult(w, value, 0, 0.0, True)
    best_w, best_val = w, math.inf
    gmap = math.inf
    for it in range(1, iterations + 1):
        value, grad = stream.mean_loss_grad(w)
        if value < best_val:
            best_w, best_val = w, value
        w_next = domain.project(w - grad / L)
        gmap = n * L * float(np.linalg.norm(w - w_next))
        w = w_next
        if gmap <= tol:
            value, _ = stream.mean_loss_grad(w)
            return ComparatorResult(w, value, it, gmap, True)
    value, _ = stream.mean_loss_grad(w)
    if value < best_val:
        best_w, best_val = w, value
    logger.warning("comparator stopped after %d iterations with gradient mapping %.3g", iterations, gmap)
    return ComparatorResult(best_w, best_val, iterations, gmap, False)


@dataclass(frozen=True)
class SxoResult:
    x_bar: np.ndarray
    excess_risk: float
    T: int
    delta: float
    comparator: ComparatorResult | None = None


def average_decisions(decisions: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Uniform average of the played decisions (records or raw vectors)."""
    rows = [getattr(r, "x", r) for r in decisions]
    if not rows:
        raise ValueError("cannot average an empty trace")
    return np.mean(np.asarray(rows, dtype=float), axis=0)


def online_to_batch(
    decisions: Sequence[np.ndarray] | np.ndarray,
    heldout: LossStream | None = None,
    domain: ConvexDomain | None = None,
    delta: float = 0.05,
    comparator: ComparatorResult | None = None,
) -> SxoResult:
    """Average the online decisions and estimate their excess risk.

    The risk is the empirical mean loss on ``heldout``; the excess is taken
    against the held-out minimizer over ``domain``. Without a held-out
    sample only the average is returned (risk is NaN).
    """
    x_bar = average_decisions(decisions)
    T = len(decisions)
    if heldout is None:
        return SxoResult(x_bar, math.nan, T, delta)
    if comparator is None:
        if domain is None:
            raise ValueError("a domain is needed to solve the held-out comparator")
        comparator = offline_best_comparator(heldout, domain)
    risk, _ = heldout.mean_loss_grad(x_bar)
    return SxoResult(x_bar, risk - comparator.value, T, delta, comparator)


def excess_risk_bound(regret: float, T: int, gamma0: float, delta: float = 0.05) -> float:
    """High-probability excess risk of the averaged iterate given its regret.

    ``(Reg + 4 sqrt(Reg log(4 log T / delta) / (2 gamma0)) + 8/gamma0 log(4 log T / delta)) / T``.
    """
    if T < 3:
        raise ValueError("the bound needs T >= 3 so that log(log T) is defined")
    L = math.log(4.0 * math.log(T) / delta)
    reg = max(regret, 0.0)
    return (reg + 4.0 * math.sqrt(reg * L / (2.0 * gamma0)) + 8.0 / gamma0 * L) / T
