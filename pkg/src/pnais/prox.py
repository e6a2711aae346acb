"""Proximity operators, projections, and the metric prox via dual iterations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .core import SpdMatrix

__all__ = [
    "ProxFn",
    "ProxConvergenceWarning",
    "soft_threshold",
    "project_simplex",
    "project_l2_ball",
    "prox_in_metric",
]


@dataclass(frozen=True)
class ProxFn:
    """A convex function paired with its proximity operator.

    ``g_eval`` maps a point to a value in R union {+inf}; ``g_prox(x, gamma)``
    returns argmin_u g(u) + ||u - x||^2 / (2 gamma).
    """

    g_eval: Callable[[np.ndarray], float]
    g_prox: Callable[[np.ndarray, float], np.ndarray]


class ProxConvergenceWarning(UserWarning):
    """Raised (as a warning) when the dual solver hits its iteration cap."""


def soft_threshold(x: np.ndarray, gamma: float, alpha: float) -> np.ndarray:
    """Componentwise shrinkage sign(x) * max(|x| - gamma * alpha, 0).

    This is the proximity operator of gamma * alpha * ||.||_1.
    """
    if not (gamma > 0.0 and alpha > 0.0):
        raise ValueError("gamma and alpha must be positive")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - gamma * alpha, 0.0)


def project_simplex(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {u >= 0, sum(u) <= 1}.

    Clips to the nonnegative orthant first; if the clipped point already
    satisfies the sum constraint it is returned, otherwise the point is
    projected onto the face {u >= 0, sum(u) = 1} by the sorted-threshold
    method.
    """
    x = np.asarray(x, dtype=float)
    clipped = np.maximum(x, 0.0)
    if clipped.sum() <= 1.0 + 4.0 * np.finfo(float).eps:
        return clipped
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.nonzero(u - css / np.arange(1, x.size + 1) > 0)[0][-1]
    return np.maximum(x - css[idx] / (idx + 1.0), 0.0)


def project_l2_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Project onto the centered l2 ball: x itself inside, radial scaling outside."""
    if not radius > 0.0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    # The few-ulp slack keeps re-projection of an already-projected point a
    # no-op: scaling onto the sphere can round the norm a hair above radius.
    if r <= radius * (1.0 + 4.0 * np.finfo(float).eps):
        return x
    return x * (radius / r)


def prox_in_metric(
    g: Union[ProxFn, Callable[[np.ndarray, float], np.ndarray]],
    A: Union[SpdMatrix, np.ndarray],
    xi: np.ndarray,
    tol: float = 1e-7,
    max_iter: int = 200,
) -> np.ndarray:
    """Prox of g at xi in the metric induced by A^{-1}, by dual iterations.

    Approximates argmin_z g(z) + (z - xi)^T A^{-1} (z - xi) / 2. With
    L = A^{1/2} (symmetric square root) and rho the largest eigenvalue of
    A, iterate from zeta_1 = L xi:

        xi_j      = L^{-1} xi - L zeta_j
        zeta'_j   = zeta_j + L xi_j / rho
        zeta_{j+1} = zeta'_j - g_prox(rho * zeta'_j, rho) / rho

    and exit once the relative norm difference of consecutive xi_j drops
    below ``tol``, returning L xi_j. Hitting ``max_iter`` first emits a
    ProxConvergenceWarning and returns the last iterate; the caller is
    expected to tolerate an inexact prox.

    Args:
        g: a ProxFn, or directly a prox callable with signature (x, gamma).
        A: the SPD metric matrix (a non-SPD array raises ValueError).
        xi: the expansion point.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    if not isinstance(A, SpdMatrix):
        A = SpdMatrix(A)
    g_prox = g.g_prox if isinstance(g, ProxFn) else g
    xi = np.asarray(xi, dtype=float)

    L = A.sqrt()
    L_inv = A.sqrt_inv()
    rho = A.max_eigenvalue()
    zeta_tilde = L_inv @ xi
    zeta = L @ xi
    xi_prev = None
    converged = False
    for _ in range(max_iter):
        xi_j = zeta_tilde - L @ zeta
        mid = zeta + (L @ xi_j) / rho
        zeta = mid - g_prox(rho * mid, rho) / rho
        if xi_prev is not None:
            if np.linalg.norm(xi_j - xi_prev) < tol * max(np.linalg.norm(xi_prev), 1e-300):
                xi_prev = xi_j
                converged = True
                break
        xi_prev = xi_j
    if not converged:
        warnings.warn(
            f"metric prox did not converge within {max_iter} iterations",
            ProxConvergenceWarning,
            stacklevel=2,
        )
    return L @ xi_prev
