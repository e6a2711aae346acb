"""Shared data model: targets, proposals, samples, configuration, RNG streams.

Everything here is an immutable value after construction. Factorization
caches on ``SpdMatrix`` populate idempotently, so instances are safe to
share between threads (concurrent recomputation of the same factor is
benign duplicated work).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cholesky as _cholesky
from scipy.linalg import eigh as _eigh
from scipy.linalg import solve_triangular

__all__ = [
    "STREAM_INIT",
    "STREAM_SAMPLING",
    "STREAM_RESAMPLING",
    "substream",
    "is_positive_definite",
    "SpdMatrix",
    "Proposal",
    "TargetModel",
    "WeightedSample",
    "ResamplingMode",
    "AdaptationMode",
    "CovarianceMode",
    "SamplerConfig",
    "RunResult",
    "gaussian_log_density",
    "gaussian_sample",
]

_MASK64 = (1 << 64) - 1

# Substream tags (second word of the Philox key). Each (tag, t, n, k)
# tuple addresses an independent stream of randomness.
STREAM_INIT = 0
STREAM_SAMPLING = 1
STREAM_RESAMPLING = 2

# An SpdMatrix must have all eigenvalues above this fraction of its
# largest diagonal entry to count as positive definite.
PD_THRESHOLD_SCALE = 1e-10


def substream(seed: int, tag: int, t: int = 0, n: int = 0, k: int = 0) -> np.random.Generator:
    """Return the random stream addressed by (tag, t, n, k) for a root seed.

    Counter-based (Philox), so the stream a coordinate sees depends only on
    the coordinate itself and never on how many draws other streams have
    consumed. Identical seeds therefore reproduce identical randomness
    under any evaluation order or parallel schedule.
    """
    key = np.array([seed & _MASK64, tag], dtype=np.uint64)
    counter = np.array([0, k, n, t], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def is_positive_definite(mat: np.ndarray) -> bool:
    """Cholesky-based SPD test with a relative eigenvalue floor.

    A matrix passes when the Cholesky factorization of
    ``mat - threshold * I`` succeeds, with ``threshold`` equal to
    ``PD_THRESHOLD_SCALE`` times the largest diagonal entry. Matrices with
    a non-positive diagonal maximum (or non-finite entries) fail outright.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return False
    if not np.isfinite(mat).all():
        return False
    dmax = float(np.diag(mat).max())
    if dmax <= 0.0:
        return False
    shift = PD_THRESHOLD_SCALE * dmax
    try:
        _cholesky(mat - shift * np.eye(mat.shape[0]), lower=True)
    except np.linalg.LinAlgError:
        return False
    return True


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class SpdMatrix:
    """Symmetric positive definite matrix with cached factorizations.

    The Cholesky factor, eigendecomposition, symmetric square root and
    inverse are computed on first use and cached. ``scaled(c)`` returns the
    matrix ``c * A`` sharing the eigenvector cache, which keeps repeated
    rescaling (as done during backtracking) cheap and bit-stable.
    """

    __slots__ = ("mat", "_chol", "_eig", "_sqrt", "_sqrt_inv", "_inv")

    def __init__(self, mat, _eig=None):
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("SpdMatrix expects a square 2-D array")
        if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(mat).max())):
            raise ValueError("SpdMatrix expects a symmetric matrix")
        mat = (mat + mat.T) / 2.0
        if not is_positive_definite(mat):
            raise ValueError("matrix is not positive definite")
        self.mat = _readonly(mat)
        self._chol = None
        self._eig = _eig
        self._sqrt = None
        self._sqrt_inv = None
        self._inv = None

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def cholesky(self) -> np.ndarray:
        """Lower-triangular Cholesky factor L with A = L L^T."""
        if self._chol is None:
            self._chol = _readonly(_cholesky(self.mat, lower=True))
        return self._chol

    def eig(self):
        """Eigenvalues (ascending) and orthonormal eigenvectors of A."""
        if self._eig is None:
            w, v = _eigh(self.mat)
            self._eig = (_readonly(w), _readonly(v))
        return self._eig

    def sqrt(self) -> np.ndarray:
        """Symmetric square root A^{1/2}."""
        if self._sqrt is None:
            w, v = self.eig()
            self._sqrt = _readonly((v * np.sqrt(w)) @ v.T)
        return self._sqrt

    def sqrt_inv(self) -> np.ndarray:
        """Inverse of the symmetric square root, A^{-1/2}."""
        if self._sqrt_inv is None:
            w, v = self.eig()
            self._sqrt_inv = _readonly((v / np.sqrt(w)) @ v.T)
        return self._sqrt_inv

    def inv(self) -> np.ndarray:
        if self._inv is None:
            w, v = self.eig()
            self._inv = _readonly((v / w) @ v.T)
        return self._inv

    def max_eigenvalue(self) -> float:
        w, _ = self.eig()
        return float(w[-1])

    def scaled(self, c: float) -> "SpdMatrix":
        """Return c * A (c > 0), sharing the eigenvector cache."""
        if not c > 0.0:
            raise ValueError("scale factor must be positive")
        eig = None
        if self._eig is not None:
            w, v = self._eig
            eig = (_readonly(c * w), v)
        return SpdMatrix(c * self.mat, _eig=eig)

    def __repr__(self) -> str:
        return f"SpdMatrix(dim={self.dim})"


@dataclass(frozen=True)
class Proposal:
    """One mixture component: location ``mu``, SPD scale ``sigma``.

    ``nu`` is an opaque record of static parameters. The Gaussian family
    used throughout has none, so it is carried but never interpreted.
    """

    mu: np.ndarray
    sigma: SpdMatrix
    nu: Any = None

    def __post_init__(self):
        object.__setattr__(self, "mu", _readonly(self.mu))
        if self.mu.ndim != 1 or self.mu.shape[0] != self.sigma.dim:
            raise ValueError("proposal mean and scale dimensions disagree")


@dataclass(frozen=True)
class TargetModel:
    """Target density pi(x) proportional to exp(-f(x) - g(x)).

    ``f`` is the smooth part with analytic gradient and Hessian; ``g`` is
    convex and possibly +inf outside its domain, accessed through its value
    and its proximity operator ``g_prox(x, gamma) = argmin_u g(u) +
    ||u - x||^2 / (2 gamma)``.

    ``f_batch``/``g_batch`` are optional vectorized evaluators over an
    (M, dim) array of rows; when absent they fall back to a Python loop
    over the pointwise maps.
    """

    dim: int
    f_eval: Callable[[np.ndarray], float]
    f_grad: Callable[[np.ndarray], np.ndarray]
    f_hess: Callable[[np.ndarray], np.ndarray]
    g_eval: Callable[[np.ndarray], float]
    g_prox: Callable[[np.ndarray, float], np.ndarray]
    f_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    g_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "target"

    def log_pi_unnorm(self, x: np.ndarray) -> float:
        """log of the unnormalized target, -f(x) - g(x); -inf outside dom g."""
        gx = self.g_eval(np.asarray(x, dtype=float))
        if not np.isfinite(gx):
            return -np.inf
        return float(-self.f_eval(np.asarray(x, dtype=float)) - gx)

    def log_pi_batch(self, X: np.ndarray) -> np.ndarray:
        """Vectorized ``log_pi_unnorm`` over the rows of an (M, dim) array."""
        X = np.asarray(X, dtype=float)
        gv = self._g_rows(X)
        out = np.full(X.shape[0], -np.inf)
        finite = np.isfinite(gv)
        if finite.any():
            out[finite] = -self._f_rows(X[finite]) - gv[finite]
        return out

    def _f_rows(self, X: np.ndarray) -> np.ndarray:
        if self.f_batch is not None:
            return np.asarray(self.f_batch(X), dtype=float)
        return np.array([self.f_eval(x) for x in X], dtype=float)

    def _g_rows(self, X: np.ndarray) -> np.ndarray:
        if self.g_batch is not None:
            return np.asarray(self.g_batch(X), dtype=float)
        return np.array([self.g_eval(x) for x in X], dtype=float)


@dataclass(frozen=True)
class WeightedSample:
    """A draw with its mixture importance weight and provenance indices."""

    x: np.ndarray
    weight: float
    proposal_index: int
    iteration: int

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(self.x))
        w = float(self.weight)
        if not np.isfinite(w) or w < 0.0:
            raise ValueError(f"weight must be finite and nonnegative, got {self.weight!r}")
        object.__setattr__(self, "weight", w)


class ResamplingMode(str, enum.Enum):
    GLOBAL = "global"
    LOCAL = "local"
    GLOCAL = "glocal"


class AdaptationMode(str, enum.Enum):
    """Proposal adaptation scheme; NONE keeps every proposal static."""

    NONE = "none"
    PROX_GRAD = "prox_grad"
    PROX_NEWTON = "prox_newton"


class CovarianceMode(str, enum.Enum):
    FIXED = "fixed"
    ROBUST = "robust"
    NEWTON = "newton"


@dataclass(frozen=True)
class SamplerConfig:
    """Full configuration of one sampler run.

    Attributes:
        n_proposals: number of proposals N.
        samples_per_proposal: draws K per proposal per iteration.
        n_iterations: adaptation iterations T.
        init_sigma: initial scale; every proposal starts at sigma^2 * I.
        glr_period: period (in iterations) of the global resampling step
            when ``resampling_mode`` is GLOCAL.
        backtracking_tau: step shrink factor in (0, 1).
        backtracking_max_steps: attempts before the step is abandoned.
        dfb_tolerance: relative exit tolerance of the inner prox solver.
        dfb_max_iterations: iteration cap of the inner prox solver.
        init_box: initial means are drawn i.i.d. uniform on init_box^dim.
    """

    n_proposals: int = 50
    samples_per_proposal: int = 20
    n_iterations: int = 20
    init_sigma: float = 1.0
    glr_period: int = 5
    resampling_mode: ResamplingMode = ResamplingMode.GLOCAL
    adaptation_mode: AdaptationMode = AdaptationMode.PROX_NEWTON
    covariance_mode: CovarianceMode = CovarianceMode.NEWTON
    backtracking_tau: float = 0.5
    backtracking_max_steps: int = 20
    dfb_tolerance: float = 1e-7
    dfb_max_iterations: int = 200
    seed: int = 0
    init_box: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "resampling_mode", ResamplingMode(self.resampling_mode))
        object.__setattr__(self, "adaptation_mode", AdaptationMode(self.adaptation_mode))
        object.__setattr__(self, "covariance_mode", CovarianceMode(self.covariance_mode))
        object.__setattr__(self, "init_box", (float(self.init_box[0]), float(self.init_box[1])))
        for name in (
            "n_proposals",
            "samples_per_proposal",
            "n_iterations",
            "glr_period",
            "backtracking_max_steps",
            "dfb_max_iterations",
        ):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not self.init_sigma > 0.0:
            raise ValueError("init_sigma must be positive")
        if not 0.0 < self.backtracking_tau < 1.0:
            raise ValueError("backtracking_tau must lie in (0, 1)")
        if not self.dfb_tolerance > 0.0:
            raise ValueError("dfb_tolerance must be positive")
        if int(self.seed) < 0:
            raise ValueError("seed must be a nonnegative integer")
        if not self.init_box[1] >= self.init_box[0]:
            raise ValueError("init_box must be an ordered pair")

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(d)
        if "init_box" in kwargs:
            kwargs["init_box"] = tuple(kwargs["init_box"])
        return cls(**kwargs)


@dataclass
class RunResult:
    """Output of one sampler run: all draws, their weights, and estimators.

    ``samples`` has shape (T, N, K, dim) and ``weights`` (T, N, K); both
    cover every iteration including degenerate ones (whose weights are all
    zero). Estimates are NaN when no sample ever received positive weight.
    """

    config: SamplerConfig
    mean_estimate: np.ndarray
    second_moment_estimate: np.ndarray
    z_estimate: float
    n_samples: int
    wall_time_s: float
    degenerate_iterations: int
    samples: np.ndarray
    weights: np.ndarray

    def weighted_samples(self) -> list:
        """All KNT draws as WeightedSample records (iteration is 1-based)."""
        T, N, K, _ = self.samples.shape
        out = []
        for t in range(T):
            for n in range(N):
                for k in range(K):
                    out.append(
                        WeightedSample(
                            x=self.samples[t, n, k],
                            weight=float(self.weights[t, n, k]),
                            proposal_index=n + 1,
                            iteration=t + 1,
                        )
                    )
        return out

    def summary_dict(self, include_timing: bool = True) -> dict:
        d = {
            "config": self.config.to_dict(),
            "mean_estimate": np.asarray(self.mean_estimate, dtype=float).tolist(),
            "second_moment_estimate": np.asarray(self.second_moment_estimate, dtype=float).tolist(),
            "z_estimate": float(self.z_estimate),
            "n_samples": int(self.n_samples),
            "degenerate_iterations": int(self.degenerate_iterations),
        }
        if include_timing:
            d["wall_time_s"] = float(self.wall_time_s)
        return d

    def to_json(self, include_timing: bool = True) -> str:
        """Serialize the result summary (config echo, estimates, diagnostics).

        Raw samples are not part of the JSON form; they stay on the object.
        """
        return json.dumps(self.summary_dict(include_timing=include_timing), indent=2, sort_keys=True)


def gaussian_log_density(x: np.ndarray, p: Proposal) -> float:
    """Normalized Gaussian log density log N(x; p.mu, p.sigma).

    The normalization constant is included: mixture weights combine
    proposals with unequal covariances, so relative densities alone would
    be wrong.
    """
    x = np.asarray(x, dtype=float)
    if not np.isfinite(x).all():
        raise ValueError("non-finite point passed to gaussian_log_density")
    L = p.sigma.cholesky()
    dv = solve_triangular(L, x - p.mu, lower=True)
    half_logdet = float(np.log(np.diag(L)).sum())
    d = p.sigma.dim
    return float(-0.5 * d * np.log(2.0 * np.pi) - half_logdet - 0.5 * (dv**2).sum())


def gaussian_sample(p: Proposal, rng: np.random.Generator) -> np.ndarray:
    """Draw mu + L z with z standard normal and L the Cholesky factor."""
    z = rng.standard_normal(p.sigma.dim)
    return p.mu + p.sigma.cholesky() @ z
