"""Benchmark targets with analytic derivatives, plus ground-truth oracles.

Three targets are provided. A truncated two-component Gaussian mixture on
the unit simplex, a Gaussian with an l1 penalty, and a banana-shaped
density confined to an l2 ball. Each comes with analytic gradient and
Hessian for the smooth part and the exact proximity operator of the
non-smooth part.

Ground truth comes from two oracles: a midpoint-rule grid integrator for
2-D targets and a radial reduction for the ball-constrained banana that is
exact in the coordinates orthogonal to the curved one, valid in any
dimension.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp
from scipy.stats import chi2, norm

from .core import TargetModel
from .prox import project_l2_ball, project_simplex, soft_threshold

__all__ = [
    "GroundTruth",
    "make_example_a",
    "make_example_b",
    "make_example_c",
    "make_gaussian",
    "grid_ground_truth",
    "banana_ground_truth",
]


@dataclass(frozen=True)
class GroundTruth:
    """Reference moments and normalization constant of a target."""

    mean: np.ndarray
    second_moment: np.ndarray
    z: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        sm = np.asarray(self.second_moment, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "second_moment", sm)
        object.__setattr__(self, "z", float(self.z))
        if not self.z > 0.0:
            raise ValueError("normalization constant must be positive")
        if np.any(sm < mean**2 - 1e-12 * np.maximum(1.0, sm)):
            raise ValueError("second moment below squared mean (negative variance)")

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "second_moment": self.second_moment.tolist(),
            "z": self.z,
            "meta": self.meta,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        try:
            return cls(
                mean=np.asarray(d["mean"], dtype=float),
                second_moment=np.asarray(d["second_moment"], dtype=float),
                z=float(d["z"]),
                meta=dict(d.get("meta", {})),
            )
        except KeyError as exc:
            raise ValueError(f"ground-truth record is missing field {exc}") from exc

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_dict(json.loads(Path(path).read_text()))


def make_example_a() -> TargetModel:
    """Equal mixture of two round Gaussians truncated to the unit simplex.

    The smooth part is the negative log of the (untruncated) mixture with
    means [0.1, 0.3] and [0.7, 0.4], both covariances 0.01 * I. The
    non-smooth part is the indicator of {x >= 0, x_1 + x_2 <= 1}, whose
    prox is the simplex projection for every scale.
    """
    means = np.array([[0.1, 0.3], [0.7, 0.4]])
    var = 0.01
    log_comp = np.log(0.5) - np.log(2.0 * np.pi * var)

    def f_batch(X):
        q = ((X[:, None, :] - means) ** 2).sum(-1) / (2.0 * var)
        return -logsumexp(log_comp - q, axis=1)

    def f_eval(x):
        return float(f_batch(np.asarray(x, dtype=float)[None])[0])

    def f_grad(x):
        d = (x - means) / var
        q = (d * (x - means)).sum(1) / 2.0
        lw = log_comp - q
        r = np.exp(lw - logsumexp(lw))
        return r @ d

    def f_hess(x):
        d = (x - means) / var
        q = (d * (x - means)).sum(1) / 2.0
        lw = log_comp - q
        r = np.exp(lw - logsumexp(lw))
        gbar = r @ d
        H = np.zeros((2, 2))
        for c in range(2):
            H += r[c] * (np.eye(2) / var - np.outer(d[c], d[c]))
        return H + np.outer(gbar, gbar)

    def g_batch(X):
        ok = (X >= 0).all(axis=1) & (X.sum(axis=1) <= 1.0)
        return np.where(ok, 0.0, np.inf)

    def g_eval(x):
        x = np.asarray(x, dtype=float)
        return 0.0 if (x >= 0).all() and x.sum() <= 1.0 else np.inf

    def g_prox(v, gamma):
        return project_simplex(v)

    return TargetModel(
        dim=2,
        f_eval=f_eval,
        f_grad=f_grad,
        f_hess=f_hess,
        g_eval=g_eval,
        g_prox=g_prox,
        f_batch=f_batch,
        g_batch=g_batch,
        name="example-a",
    )


def make_example_b(alpha: float = 2.0) -> TargetModel:
    """Gaussian smooth part N([0.5, 0.5], 0.25 I) with an l1 penalty alpha * ||x||_1."""
    m0 = np.array([0.5, 0.5])
    var = 0.25
    c0 = np.log(2.0 * np.pi * var)

    def f_batch(X):
        return ((X - m0) ** 2).sum(axis=1) / (2.0 * var) + c0

    return TargetModel(
        dim=2,
        f_eval=lambda x: float(((np.asarray(x) - m0) ** 2).sum() / (2.0 * var) + c0),
        f_grad=lambda x: (np.asarray(x, dtype=float) - m0) / var,
        f_hess=lambda x: np.eye(2) / var,
        g_eval=lambda x: float(alpha * np.abs(np.asarray(x)).sum()),
        g_prox=lambda v, gamma: soft_threshold(v, gamma, alpha),
        f_batch=f_batch,
        g_batch=lambda X: alpha * np.abs(X).sum(axis=1),
        name="example-b",
    )


def make_example_c(
    dim: int,
    b: float = 3.0,
    eta: float = 1.0,
    radius: float = 4.0,
    rest_scale: float = 1.0,
) -> TargetModel:
    """Banana-shaped density confined to the l2 ball of the given radius.

    The smooth part is

        f(x) = x_1^2 / (2 eta^2)
             + sum_{i >= 2} (x_i + b (x_1^2 - eta^2))^2 / (2 rest_scale^2),

    so the mass rides a parabolic ridge in the first coordinate. With
    ``rest_scale=1`` this is the standard construction; smaller values
    tighten the valley around the ridge, which keeps the ridge inside the
    ball reachable in high dimension (at large ``dim`` the unit-width
    valley has essentially no mass at radius 4). The non-smooth part is
    the indicator of the ball, whose prox is radial projection.

    Args:
        dim: dimension, at least 2.
        b: ridge curvature.
        eta: scale of the first coordinate.
        radius: l2-ball constraint radius.
        rest_scale: width of the valley in coordinates 2..dim.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if not (eta > 0.0 and radius > 0.0 and rest_scale > 0.0):
        raise ValueError("eta, radius and rest_scale must be positive")
    c2 = rest_scale**2

    def f_batch(X):
        t = X[:, 1:] + b * (X[:, :1] ** 2 - eta**2)
        return X[:, 0] ** 2 / (2.0 * eta**2) + (t**2).sum(axis=1) / (2.0 * c2)

    def f_eval(x):
        return float(f_batch(np.asarray(x, dtype=float)[None])[0])

    def f_grad(x):
        x = np.asarray(x, dtype=float)
        t = x[1:] + b * (x[0] ** 2 - eta**2)
        out = np.empty_like(x)
        out[0] = x[0] / eta**2 + 2.0 * b * x[0] * t.sum() / c2
        out[1:] = t / c2
        return out

    def f_hess(x):
        x = np.asarray(x, dtype=float)
        t = x[1:] + b * (x[0] ** 2 - eta**2)
        H = np.eye(dim) / c2
        H[0, 0] = 1.0 / eta**2 + (2.0 * b * t.sum() + 4.0 * b**2 * x[0] ** 2 * (dim - 1)) / c2
        H[0, 1:] = H[1:, 0] = 2.0 * b * x[0] / c2
        return H

    def g_batch(X):
        return np.where((X**2).sum(axis=1) <= radius**2, 0.0, np.inf)

    def g_eval(x):
        x = np.asarray(x, dtype=float)
        return 0.0 if (x**2).sum() <= radius**2 else np.inf

    def g_prox(v, gamma):
        return project_l2_ball(v, radius)

    return TargetModel(
        dim=dim,
        f_eval=f_eval,
        f_grad=f_grad,
        f_hess=f_hess,
        g_eval=g_eval,
        g_prox=g_prox,
        f_batch=f_batch,
        g_batch=g_batch,
        name="example-c",
    )


def make_gaussian(mean, var: float = 1.0) -> TargetModel:
    """Untruncated Gaussian with g identically zero; its true Z is 1.

    The smooth part is the full negative log density (constant included),
    which makes this the calibration target for estimator sanity checks.
    """
    m0 = np.asarray(mean, dtype=float)
    dim = m0.shape[0]
    if not var > 0.0:
        raise ValueError("var must be positive")
    c0 = 0.5 * dim * np.log(2.0 * np.pi * var)

    return TargetModel(
        dim=dim,
        f_eval=lambda x: float(((np.asarray(x) - m0) ** 2).sum() / (2.0 * var) + c0),
        f_grad=lambda x: (np.asarray(x, dtype=float) - m0) / var,
        f_hess=lambda x: np.eye(dim) / var,
        g_eval=lambda x: 0.0,
        g_prox=lambda v, gamma: np.asarray(v, dtype=float),
        f_batch=lambda X: ((X - m0) ** 2).sum(axis=1) / (2.0 * var) + c0,
        g_batch=lambda X: np.zeros(X.shape[0]),
        name="gaussian",
    )


def _normalize_bounds(bounds):
    b = np.asarray(bounds, dtype=float)
    if b.shape == (2,):
        b = np.stack([b, b])
    if b.shape != (2, 2) or not (b[:, 1] > b[:, 0]).all():
        raise ValueError("bounds must be (lo, hi) or ((lo1, hi1), (lo2, hi2)) with hi > lo")
    return b


def grid_ground_truth(t: TargetModel, bounds, resolution: int) -> GroundTruth:
    """Midpoint-rule moments and normalization constant on a 2-D grid.

    Args:
        t: a 2-D target (other dimensions raise ValueError).
        bounds: (lo, hi) for both axes, or one (lo, hi) pair per axis.
        resolution: cells per axis.

    Returns:
        GroundTruth with Riemann-sum estimates of Z, E[X] and E[X^2].
    """
    if t.dim != 2:
        raise ValueError("grid integration is implemented for 2-D targets only")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    b = _normalize_bounds(bounds)
    h1 = (b[0, 1] - b[0, 0]) / resolution
    h2 = (b[1, 1] - b[1, 0]) / resolution
    c1 = b[0, 0] + h1 * (np.arange(resolution) + 0.5)
    c2 = b[1, 0] + h2 * (np.arange(resolution) + 0.5)

    z_sum = 0.0
    m_sum = np.zeros(2)
    s_sum = np.zeros(2)
    # One grid row of points per chunk keeps memory flat at high resolution.
    chunk = max(1, int(2**22 // max(resolution, 1)))
    for i0 in range(0, resolution, chunk):
        x1 = c1[i0 : i0 + chunk]
        X1, X2 = np.meshgrid(x1, c2, indexing="ij")
        pts = np.column_stack([X1.ravel(), X2.ravel()])
        p = np.exp(t.log_pi_batch(pts))
        z_sum += p.sum()
        m_sum += p @ pts
        s_sum += p @ pts**2
    cell = h1 * h2
    z = z_sum * cell
    if not z > 0.0:
        raise ValueError("target has no mass inside the integration box")
    return GroundTruth(
        mean=m_sum / z_sum,
        second_moment=s_sum / z_sum,
        z=z,
        meta={
            "target": t.name,
            "method": "grid",
            "bounds": b.tolist(),
            "resolution": int(resolution),
        },
    )


def banana_ground_truth(
    dim: int,
    b: float = 3.0,
    eta: float = 1.0,
    radius: float = 4.0,
    rest_scale: float = 1.0,
    resolution: int = 1601,
) -> GroundTruth:
    """Reference moments for the ball-constrained banana in any dimension.

    Exploits the rotational symmetry of coordinates 2..dim around the
    ridge direction: conditioned on x_1 and on the projection u of the
    rest onto the all-ones direction, the squared norm of the orthogonal
    part is rest_scale^2 times a chi-square with dim - 2 degrees of
    freedom, so its truncated moments have closed forms. What remains is
    a 2-D trapezoid integration over (x_1, u), which is cheap at any
    dimension and agrees with dense-grid quadrature at dim = 2 and with
    large-sample rejection sampling at dim = 10.

    Returns:
        GroundTruth over all ``dim`` coordinates. The first-coordinate mean
        is exactly zero by symmetry.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    c = float(rest_scale)
    x1max = min(radius, 8.0 * eta)
    x1 = np.linspace(-x1max, x1max, resolution)
    u = np.linspace(-radius, radius, resolution)[None, :]
    X1 = x1[:, None]

    # Mean of the rest block, projected on the all-ones unit direction.
    proj_mean = -b * (X1**2 - eta**2) * np.sqrt(dim - 1)
    base = norm.pdf(X1 / eta) / eta * norm.pdf((u - proj_mean) / c) / c
    s2max = radius**2 - X1**2 - u**2
    pos = s2max > 0
    s2c = np.maximum(s2max, 0.0) / c**2
    if dim == 2:
        ind = np.where(pos, 1.0, 0.0)
        es2 = np.zeros_like(ind)
    else:
        k = dim - 2
        ind = np.where(pos, chi2(k).cdf(s2c), 0.0)
        es2 = np.where(pos, c**2 * k * chi2(k + 2).cdf(s2c), 0.0)

    hx = x1[1] - x1[0]
    hu = u[0, 1] - u[0, 0]

    def integ(W):
        return np.trapezoid(np.trapezoid(W, dx=hu, axis=1), dx=hx)

    e1 = integ(base * ind)
    if not e1 > 0.0:
        raise ValueError("ball carries no mass for these parameters")
    eu = integ(base * u * ind)
    eu2 = integ(base * u**2 * ind)
    es2t = integ(base * es2)
    ex1sq = integ(base * X1**2 * ind)

    z = (2.0 * np.pi) ** (dim / 2.0) * eta * c ** (dim - 1) * e1
    mean = np.full(dim, eu / np.sqrt(dim - 1) / e1)
    mean[0] = 0.0
    sm = np.full(dim, (eu2 + es2t) / (dim - 1) / e1)
    sm[0] = ex1sq / e1
    return GroundTruth(
        mean=mean,
        second_moment=sm,
        z=z,
        meta={
            "target": "example-c",
            "method": "radial",
            "dim": int(dim),
            "b": float(b),
            "eta": float(eta),
            "radius": float(radius),
            "rest_scale": float(rest_scale),
            "resolution": int(resolution),
        },
    )
