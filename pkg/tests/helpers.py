"""Shared numerical oracles used across the test modules.

Everything here is deliberately independent of the package internals:
finite differences, brute-force grid minimization, and dense quadrature.
Tests compare library output against these slower re-derivations.
"""
from __future__ import annotations

from typing import Callable, Sequence, Tuple

import numpy as np


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        out[i] = (f(x + e) - f(x - e)) / (2 * step)
    return out


def fd_hessian(grad: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central differences of an analytic gradient."""
    x = np.asarray(x, dtype=float)
    d = x.size
    out = np.empty((d, d))
    for i in range(d):
        e = np.zeros_like(x)
        e[i] = step
        out[:, i] = (grad(x + e) - grad(x - e)) / (2 * step)
    return (out + out.T) / 2


def rel_err(approx: np.ndarray, exact: np.ndarray) -> float:
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    denom = max(float(np.linalg.norm(exact)), 1e-12)
    return float(np.linalg.norm(approx - exact)) / denom


def max_grad_hess_errors(
    target,
    points: Sequence[np.ndarray],
    step: float = 1e-6,
) -> Tuple[float, float]:
    """Worst-case relative finite-difference errors over the given points."""
    worst_g = 0.0
    worst_h = 0.0
    for x in points:
        worst_g = max(worst_g, rel_err(fd_gradient(target.f_eval, x, step), target.f_grad(x)))
        worst_h = max(worst_h, rel_err(fd_hessian(target.f_grad, x, step), target.f_hess(x)))
    return worst_g, worst_h


def prox_objective(g_eval, x: np.ndarray, z: np.ndarray, gamma: float) -> float:
    return float(g_eval(z)) + float(np.sum((z - x) ** 2)) / (2 * gamma)


def metric_objective(g_eval, a_inv: np.ndarray, xi: np.ndarray, z: np.ndarray) -> float:
    d = z - xi
    return float(g_eval(z)) + 0.5 * float(d @ a_inv @ d)


def grid_argmin_2d(
    objective: Callable[[np.ndarray], float],
    bounds: Tuple[float, float, float, float],
    resolution: int,
) -> Tuple[np.ndarray, float]:
    """Dense exhaustive minimization over a 2-D box. Slow by design."""
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    best = None
    best_val = np.inf
    for xv in xs:
        for yv in ys:
            z = np.array([xv, yv])
            val = objective(z)
            if val < best_val:
                best_val = val
                best = z
    return best, best_val


def random_spd(rng: np.random.Generator, dim: int, cond: float = 10.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues spread up to the given ratio."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigs = np.exp(rng.uniform(0.0, np.log(cond), dim))
    return (q * eigs) @ q.T
