"""Improper-to-proper surrogate gradients.

A learner running on an enlarged ball plays ``y``; the environment sees
``x = Pi_X[y]`` and returns ``grad_f`` at ``x``. The surrogate gradient below
satisfies, for every ``u`` in ``X``,

    ||grad_g|| <= ||grad_f||   and   grad_f^T (x - u) <= grad_g^T (y - u),

so the learner can be fed ``grad_g`` at no cost in regret.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projection import ConvexDomain

DEGENERATE_TOL = 1e-14


@dataclass(frozen=True)
class SurrogatePair:
    x: np.ndarray
    y: np.ndarray
    grad_f: np.ndarray
    grad_g: np.ndarray
    hinge_coeff: float


def surrogate_pair(grad_f: np.ndarray, x: np.ndarray, y: np.ndarray) -> SurrogatePair:
    grad_f = np.asarray(grad_f, dtype=float)
    diff = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    dist2 = float(diff @ diff)
    if dist2 < DEGENERATE_TOL**2:
        return SurrogatePair(x, y, grad_f, grad_f, 0.0)
    coeff = max(0.0, -float(grad_f @ diff)) / dist2
    return SurrogatePair(x, y, grad_f, grad_f + coeff * diff, coeff)


def surrogate_gradient(grad_f: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``grad_f + [-grad_f^T (y - x)]_+ / ||y - x||^2 * (y - x)``; ``grad_f`` when ``y == x``."""
    return surrogate_pair(grad_f, x, y).grad_g


def surrogate_value(
    grad_f: np.ndarray, x: np.ndarray, y: np.ndarray, domain: ConvexDomain, point: np.ndarray
) -> float:
    """Surrogate loss built at ``(x, y)``, evaluated at ``point``.

    ``grad_f^T point + [-grad_f^T (y - x)]_+ / ||y - x|| * dist(point, domain)``.
    """
    grad_f = np.asarray(grad_f, dtype=float)
    point = np.asarray(point, dtype=float)
    diff = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    dist = float(np.linalg.norm(diff))
    value = float(grad_f @ point)
    if dist < DEGENERATE_TOL:
        return value
    hinge = max(0.0, -float(grad_f @ diff))
    return value + hinge / dist * float(np.linalg.norm(point - domain.project(point)))
