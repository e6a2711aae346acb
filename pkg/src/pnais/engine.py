"""The adaptive importance sampling engine.

One iteration draws K points from each of N Gaussian proposals, weights
every draw against the equal-weight mixture of all N proposal densities,
resamples candidate locations from the weighted pool, and moves each
proposal through a damped proximal step on the target (a Newton-metric
step by default, a plain proximal gradient step in the ablated variant).
Covariances follow the accepted step metric, a robust weighted empirical
estimate, or stay fixed, depending on the configured ablation.

Estimators are built from the full set of K*N*T weighted samples:
self-normalized means and second moments, and the normalization constant
as the plain average of the unnormalized weights.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .core import (
    STREAM_INIT,
    STREAM_RESAMPLING,
    STREAM_SAMPLING,
    AdaptationMode,
    CovarianceMode,
    Proposal,
    ResamplingMode,
    RunResult,
    SamplerConfig,
    SpdMatrix,
    TargetModel,
    WeightedSample,
    is_positive_definite,
    substream,
)
from .prox import prox_in_metric

__all__ = [
    "DegenerateIterationError",
    "AdaptState",
    "ResampledSet",
    "weight_samples",
    "resample_global",
    "resample_local",
    "resample_glocal",
    "newton_scaling",
    "backtrack_theta",
    "adapt_proposal_newton",
    "adapt_proposal_grad",
    "run_sampler",
    "estimate",
    "estimate_z",
    "relative_mse",
    "relative_mse_pooled",
]

# Regularizer added to the robust weighted empirical covariance.
ROBUST_COV_RIDGE = 1e-6


class DegenerateIterationError(RuntimeError):
    """Every weight in the relevant pool is zero."""


@dataclass
class AdaptState:
    """Mutable per-run state: current proposals plus the sample archive."""

    proposals: List[Proposal]
    iteration: int
    samples: np.ndarray  # (T, N, K, dim), filled as iterations complete
    weights: np.ndarray  # (T, N, K)
    seed: int


@dataclass(frozen=True)
class ResampledSet:
    """Locations and scales selected by a resampling step.

    ``means[n]`` is a sample drawn this iteration; ``sigmas[n]`` is the
    covariance it inherits (its originating proposal's under global
    resampling, proposal n's own under local resampling).
    """

    means: np.ndarray
    sigmas: tuple


def _log_mixture_density(points: np.ndarray, proposals: Sequence[Proposal]) -> np.ndarray:
    """log of the equal-weight mixture of proposal densities at each row."""
    n_prop = len(proposals)
    dim = points.shape[1]
    log_q = np.empty((n_prop, points.shape[0]))
    cst = -0.5 * dim * np.log(2.0 * np.pi)
    for n, p in enumerate(proposals):
        L = p.sigma.cholesky()
        dv = solve_triangular(L, (points - p.mu).T, lower=True)
        log_q[n] = cst - np.log(np.diag(L)).sum() - 0.5 * (dv**2).sum(axis=0)
    return logsumexp(log_q, axis=0) - np.log(n_prop)


def _weight_matrix(samples: np.ndarray, proposals: Sequence[Proposal], target: TargetModel) -> np.ndarray:
    flat = samples.reshape(-1, samples.shape[-1])
    log_pi = target.log_pi_batch(flat)
    log_mix = _log_mixture_density(flat, proposals)
    w = np.where(np.isfinite(log_pi), np.exp(log_pi - log_mix), 0.0)
    return w.reshape(samples.shape[:-1])


def weight_samples(samples: np.ndarray, proposals: Sequence[Proposal], target: TargetModel) -> np.ndarray:
    """Mixture importance weights for an (N, K, dim) block of draws.

    Each weight is pi(x) divided by the equal-weight mixture of the N
    proposal densities at x, evaluated with full normalization constants.
    Points outside the domain of g get weight exactly zero.

    Raises:
        DegenerateIterationError: if every weight is zero.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3:
        raise ValueError("expected samples with shape (n_proposals, samples_per_proposal, dim)")
    w = _weight_matrix(samples, proposals, target)
    if not (w > 0).any():
        raise DegenerateIterationError("all importance weights are zero")
    return w


def resample_global(
    samples: np.ndarray,
    weights: np.ndarray,
    proposals: Sequence[Proposal],
    rng: np.random.Generator,
) -> ResampledSet:
    """Draw N locations with replacement from the pooled N*K samples.

    Selection probabilities are the weights normalized over the whole
    pool; each selected sample carries the covariance of the proposal
    that generated it.
    """
    samples = np.asarray(samples, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n_prop, per_prop, dim = samples.shape
    flat_w = weights.ravel()
    total = flat_w.sum()
    if not total > 0:
        raise DegenerateIterationError("cannot resample from an all-zero weight pool")
    idx = rng.choice(n_prop * per_prop, size=n_prop, p=flat_w / total)
    flat_x = samples.reshape(-1, dim)
    sigmas = tuple(proposals[i // per_prop].sigma for i in idx)
    return ResampledSet(means=flat_x[idx], sigmas=sigmas)


def resample_local(
    samples: np.ndarray,
    weights: np.ndarray,
    proposals: Sequence[Proposal],
    rng: np.random.Generator,
) -> ResampledSet:
    """Draw one location per proposal from its own K samples.

    Weights are normalized within each pool, so scaling a single pool by
    any positive constant leaves its selection distribution unchanged.
    Proposal n always keeps its own covariance.

    Raises:
        DegenerateIterationError: if some pool has zero total weight.
    """
    samples = np.asarray(samples, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n_prop, per_prop, dim = samples.shape
    means = np.empty((n_prop, dim))
    for n in range(n_prop):
        wn = weights[n]
        sn = wn.sum()
        if not sn > 0:
            raise DegenerateIterationError(f"pool {n} has zero total weight")
        pick = rng.choice(per_prop, p=wn / sn)
        means[n] = samples[n, pick]
    return ResampledSet(means=means, sigmas=tuple(p.sigma for p in proposals))


def resample_glocal(
    samples: np.ndarray,
    weights: np.ndarray,
    proposals: Sequence[Proposal],
    rng: np.random.Generator,
    iteration: int,
    period: int,
) -> ResampledSet:
    """Local resampling with a global step every ``period`` iterations.

    The global step fires when ``iteration % period == 0`` (iterations are
    1-based, so with period 5 over 20 iterations it fires at 5, 10, 15, 20).
    """
    if period < 1:
        raise ValueError("period must be at least 1")
    if iteration % period == 0:
        return resample_global(samples, weights, proposals, rng)
    return resample_local(samples, weights, proposals, rng)


def _local_selection_lenient(
    samples: np.ndarray,
    weights: np.ndarray,
    proposals: Sequence[Proposal],
    rng: np.random.Generator,
) -> ResampledSet:
    """Per-pool selection where an all-zero pool keeps its own mean.

    Used by the run loop, which must survive pools that lie entirely
    outside the domain of g; the strict contract of ``resample_local``
    stays intact for direct callers.
    """
    n_prop, per_prop, dim = samples.shape
    means = np.empty((n_prop, dim))
    for n in range(n_prop):
        wn = weights[n]
        sn = wn.sum()
        if sn > 0:
            means[n] = samples[n, rng.choice(per_prop, p=wn / sn)]
        else:
            means[n] = proposals[n].mu
    return ResampledSet(means=means, sigmas=tuple(p.sigma for p in proposals))


def newton_scaling(mu_tilde: np.ndarray, sigma_tilde: SpdMatrix, target: TargetModel) -> SpdMatrix:
    """Inverse Hessian of f at mu_tilde when it is SPD, else sigma_tilde.

    Positive definiteness is decided by the thresholded Cholesky test; on
    the fallback branch the resampled covariance object is returned
    unchanged.
    """
    hess = target.f_hess(np.asarray(mu_tilde, dtype=float))
    if is_positive_definite(hess):
        return SpdMatrix(np.linalg.inv(hess))
    return sigma_tilde


def _backtrack(
    mu_tilde: np.ndarray,
    target: TargetModel,
    candidate: Callable[[float], np.ndarray],
    tau: float,
    max_steps: int,
) -> Tuple[float, np.ndarray, bool]:
    """Shrink theta from 1 by tau until the target strictly increases.

    A start point outside the domain of g (log pi = -inf) accepts any
    candidate with finite log pi. Exhausting max_steps returns the start
    point with the last (fully shrunk) theta.
    """
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    lp_ref = target.log_pi_unnorm(mu_tilde)
    theta = 1.0
    for _ in range(max_steps):
        cand = candidate(theta)
        lp_cand = target.log_pi_unnorm(cand)
        if (lp_ref == -np.inf and np.isfinite(lp_cand)) or lp_cand > lp_ref:
            return theta, cand, True
        theta *= tau
    return theta, mu_tilde, False


def backtrack_theta(
    mu_tilde: np.ndarray,
    gamma: SpdMatrix,
    target: TargetModel,
    tau: float = 0.5,
    max_steps: int = 20,
    dfb_tolerance: float = 1e-7,
    dfb_max_iterations: int = 200,
) -> Tuple[float, np.ndarray]:
    """Damped proximal step in the metric theta * gamma.

    For each trial theta (starting at 1), the candidate is the metric prox
    of g at mu_tilde - theta * gamma * grad f(mu_tilde); the first theta
    whose candidate strictly increases log pi wins. After max_steps
    failures the start point is returned together with the fully shrunk
    theta.
    """
    if not isinstance(gamma, SpdMatrix):
        gamma = SpdMatrix(gamma)
    gamma.eig()  # computed once here; every scaled copy below shares it
    grad = target.f_grad(np.asarray(mu_tilde, dtype=float))
    step_dir = gamma.mat @ grad

    def candidate(theta: float) -> np.ndarray:
        return prox_in_metric(
            target.g_prox,
            gamma.scaled(theta),
            np.asarray(mu_tilde, dtype=float) - theta * step_dir,
            tol=dfb_tolerance,
            max_iter=dfb_max_iterations,
        )

    theta, mu_new, _ = _backtrack(mu_tilde, target, candidate, tau, max_steps)
    return theta, mu_new


def _adapted_sigma(
    cfg: SamplerConfig,
    theta: float,
    gamma: SpdMatrix,
    sigma_tilde: SpdMatrix,
    pool_samples: Optional[np.ndarray],
    pool_weights: Optional[np.ndarray],
    fixed_sigma: Optional[SpdMatrix],
) -> SpdMatrix:
    mode = cfg.covariance_mode
    if mode is CovarianceMode.NEWTON:
        return gamma.scaled(theta)
    if mode is CovarianceMode.FIXED:
        if fixed_sigma is not None:
            return fixed_sigma
        return SpdMatrix(np.eye(sigma_tilde.dim) * cfg.init_sigma**2)
    # Robust: weighted empirical covariance of the proposal's own pool,
    # weights normalized within the pool, plus a small ridge.
    if pool_samples is not None and pool_weights is not None and pool_weights.sum() > 0:
        p = pool_weights / pool_weights.sum()
        loc = p @ pool_samples
        dev = pool_samples - loc
        cov = (dev.T * p) @ dev + ROBUST_COV_RIDGE * np.eye(pool_samples.shape[1])
        return SpdMatrix(cov)
    return sigma_tilde


def adapt_proposal_newton(
    mu_tilde: np.ndarray,
    sigma_tilde: SpdMatrix,
    target: TargetModel,
    cfg: SamplerConfig,
    pool_samples: Optional[np.ndarray] = None,
    pool_weights: Optional[np.ndarray] = None,
    fixed_sigma: Optional[SpdMatrix] = None,
) -> Proposal:
    """One Newton-metric proximal update of a proposal.

    The scaling matrix is the inverse Hessian at the resampled location
    (or the resampled covariance when the Hessian is not SPD); the mean
    moves through the backtracked metric prox step and the covariance
    follows the configured mode (accepted theta times the scaling matrix,
    a robust pool estimate, or the fixed initial scale).

    ``pool_samples``/``pool_weights`` are this proposal's K draws and
    weights from the current iteration; they are only consulted by the
    robust covariance mode. ``fixed_sigma`` lets a caller share one
    prebuilt sigma^2 * I instance.
    """
    gamma = newton_scaling(mu_tilde, sigma_tilde, target)
    theta, mu_new = backtrack_theta(
        mu_tilde,
        gamma,
        target,
        tau=cfg.backtracking_tau,
        max_steps=cfg.backtracking_max_steps,
        dfb_tolerance=cfg.dfb_tolerance,
        dfb_max_iterations=cfg.dfb_max_iterations,
    )
    sigma = _adapted_sigma(cfg, theta, gamma, sigma_tilde, pool_samples, pool_weights, fixed_sigma)
    return Proposal(mu=mu_new, sigma=sigma)


def adapt_proposal_grad(
    mu_tilde: np.ndarray,
    sigma_tilde: SpdMatrix,
    target: TargetModel,
    cfg: SamplerConfig,
    pool_samples: Optional[np.ndarray] = None,
    pool_weights: Optional[np.ndarray] = None,
    fixed_sigma: Optional[SpdMatrix] = None,
    _identity: Optional[SpdMatrix] = None,
) -> Proposal:
    """Identity-metric variant: a backtracked plain proximal gradient step.

    The candidate at scale theta is g_prox(mu_tilde - theta * grad f, theta),
    which coincides with the Newton update when the scaling matrix is the
    identity. Covariance modes behave as in ``adapt_proposal_newton`` with
    gamma = I.
    """
    mu_tilde = np.asarray(mu_tilde, dtype=float)
    grad = target.f_grad(mu_tilde)

    def candidate(theta: float) -> np.ndarray:
        return np.asarray(target.g_prox(mu_tilde - theta * grad, theta), dtype=float)

    theta, mu_new, _ = _backtrack(mu_tilde, target, candidate, cfg.backtracking_tau, cfg.backtracking_max_steps)
    identity = _identity if _identity is not None else SpdMatrix(np.eye(target.dim))
    sigma = _adapted_sigma(cfg, theta, identity, sigma_tilde, pool_samples, pool_weights, fixed_sigma)
    return Proposal(mu=mu_new, sigma=sigma)


def run_sampler(
    target: TargetModel,
    cfg: SamplerConfig,
    on_iteration: Optional[Callable[[int, Sequence[Proposal]], None]] = None,
) -> RunResult:
    """Run the full adaptive loop and return all weighted samples.

    Initial means are i.i.d. uniform on init_box^dim, initial covariances
    sigma^2 * I. Each iteration samples, weights, and (unless adaptation
    is NONE, which keeps every proposal untouched for the whole run)
    resamples locations and adapts every proposal. An iteration whose
    weights are all zero is recorded as degenerate and leaves the
    proposals unchanged; the run continues with fresh draws.

    Randomness is fully determined by cfg.seed through per-(t, n, k)
    counter-derived substreams, so results are bit-reproducible under any
    evaluation schedule.

    Args:
        target: the model to sample from.
        cfg: sampler settings.
        on_iteration: optional observer called after each iteration with
            (t, proposals as of the end of iteration t). Consumes no
            randomness, so passing one never changes the result.
    """
    t_start = time.perf_counter()
    dim = target.dim
    n_prop = cfg.n_proposals
    per_prop = cfg.samples_per_proposal
    n_iter = cfg.n_iterations
    seed = cfg.seed
    lo, hi = cfg.init_box

    sigma0 = SpdMatrix(np.eye(dim) * cfg.init_sigma**2)
    proposals = [
        Proposal(mu=substream(seed, STREAM_INIT, n=n).uniform(lo, hi, dim), sigma=sigma0)
        for n in range(n_prop)
    ]
    state = AdaptState(
        proposals=proposals,
        iteration=0,
        samples=np.empty((n_iter, n_prop, per_prop, dim)),
        weights=np.zeros((n_iter, n_prop, per_prop)),
        seed=seed,
    )
    identity = SpdMatrix(np.eye(dim)) if cfg.adaptation_mode is AdaptationMode.PROX_GRAD else None

    sum_w = 0.0
    sum_wx = np.zeros(dim)
    sum_wx2 = np.zeros(dim)
    degenerate = 0
    adapting = cfg.adaptation_mode is not AdaptationMode.NONE

    for t in range(1, n_iter + 1):
        state.iteration = t
        draws = np.empty((n_prop, per_prop, dim))
        for n, p in enumerate(state.proposals):
            L = p.sigma.cholesky()
            for k in range(per_prop):
                z = substream(seed, STREAM_SAMPLING, t, n, k).standard_normal(dim)
                draws[n, k] = p.mu + L @ z
        w = _weight_matrix(draws, state.proposals, target)
        state.samples[t - 1] = draws
        state.weights[t - 1] = w

        total = w.sum()
        flat = draws.reshape(-1, dim)
        flat_w = w.ravel()
        sum_w += total
        sum_wx += flat_w @ flat
        sum_wx2 += flat_w @ flat**2

        if total == 0.0:
            degenerate += 1
            if on_iteration is not None:
                on_iteration(t, state.proposals)
            continue
        if not adapting:
            if on_iteration is not None:
                on_iteration(t, state.proposals)
            continue

        rng_r = substream(seed, STREAM_RESAMPLING, t)
        if cfg.resampling_mode is ResamplingMode.GLOBAL or (
            cfg.resampling_mode is ResamplingMode.GLOCAL and t % cfg.glr_period == 0
        ):
            selected = resample_global(draws, w, state.proposals, rng_r)
        else:
            selected = _local_selection_lenient(draws, w, state.proposals, rng_r)

        new_proposals = []
        adapt = adapt_proposal_newton if cfg.adaptation_mode is AdaptationMode.PROX_NEWTON else adapt_proposal_grad
        kwargs = {} if cfg.adaptation_mode is AdaptationMode.PROX_NEWTON else {"_identity": identity}
        for n in range(n_prop):
            new_proposals.append(
                adapt(
                    selected.means[n],
                    selected.sigmas[n],
                    target,
                    cfg,
                    pool_samples=draws[n],
                    pool_weights=w[n],
                    fixed_sigma=sigma0,
                    **kwargs,
                )
            )
        state.proposals = new_proposals
        if on_iteration is not None:
            on_iteration(t, state.proposals)

    n_samples = n_iter * n_prop * per_prop
    z_hat = sum_w / n_samples
    if sum_w > 0:
        mean = sum_wx / sum_w
        second = sum_wx2 / sum_w
    else:
        mean = np.full(dim, np.nan)
        second = np.full(dim, np.nan)
    return RunResult(
        config=cfg,
        mean_estimate=mean,
        second_moment_estimate=second,
        z_estimate=float(z_hat),
        n_samples=n_samples,
        wall_time_s=time.perf_counter() - t_start,
        degenerate_iterations=degenerate,
        samples=state.samples,
        weights=state.weights,
    )


def estimate(samples: Sequence[WeightedSample], phi: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Self-normalized estimate of E_pi[phi] from weighted samples.

    Raises:
        DegenerateIterationError: if the total weight is zero.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("no samples given")
    weights = np.array([s.weight for s in samples])
    total = weights.sum()
    if not total > 0:
        raise DegenerateIterationError("total weight is zero")
    values = np.stack([np.atleast_1d(np.asarray(phi(s.x), dtype=float)) for s in samples])
    return (weights @ values) / total


def estimate_z(samples: Sequence[WeightedSample]) -> float:
    """Normalization constant estimate: the plain mean of the raw weights."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples given")
    return float(np.mean([s.weight for s in samples]))


def _as_run_matrix(estimates, truth: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 1:
        est = est[:, None]
    if est.ndim != 2 or est.shape[1] != truth.shape[0]:
        raise ValueError("estimates must be per-run rows matching the truth vector")
    return est, truth


def relative_mse(estimates, truth) -> float:
    """Mean over runs of ||estimate - truth||^2 / ||truth||^2.

    ``estimates`` holds one row per run (a plain sequence of scalars works
    for scalar quantities).
    """
    est, truth = _as_run_matrix(estimates, truth)
    denom = float((truth**2).sum())
    if denom == 0.0:
        raise ValueError("truth has zero norm")
    return float((((est - truth) ** 2).sum(axis=1) / denom).mean())


def relative_mse_pooled(estimates, truth) -> float:
    """Relative squared error of the across-runs averaged estimator."""
    est, truth = _as_run_matrix(estimates, truth)
    denom = float((truth**2).sum())
    if denom == 0.0:
        raise ValueError("truth has zero norm")
    pooled = est.mean(axis=0)
    return float(((pooled - truth) ** 2).sum() / denom)
