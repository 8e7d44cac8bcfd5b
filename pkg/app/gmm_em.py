from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .errors import DegenerateData, EmptyComponent, InsufficientSamples, InvalidSample
from .models import ClusterAssignment, GmmSpec, Responsibilities
from .schemas import EmConfig

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


@dataclass(frozen=True, eq=False)
class EmFit:
    spec: GmmSpec
    responsibilities: Responsibilities
    loglik: float
    n_iter: int
    converged: bool
    loglik_trace: Tuple[float, ...]

    @property
    def m(self) -> int:
        return self.spec.m


@dataclass(frozen=True, eq=False)
class BicPoint:
    m: int
    bic: float
    fit: Optional[EmFit] = None
    error: Optional[str] = None


def _as_samples(samples) -> np.ndarray:
    values = np.asarray(samples, dtype=float).ravel()
    if not np.all(np.isfinite(values)):
        raise InvalidSample("samples contain NaN or infinite values")
    return values


def _weighted_log_density(values: np.ndarray, spec: GmmSpec, variance_floor: float) -> np.ndarray:
    """n x m matrix of log(w_g) + log N(s_i; mu_g, sigma2_g)."""
    stds = np.sqrt(np.maximum(spec.variances, variance_floor))
    with np.errstate(divide="ignore"):
        log_weights = np.log(spec.weights)
    return log_weights[None, :] + norm.logpdf(values[:, None], loc=spec.means[None, :], scale=stds[None, :])


def _posterior(values: np.ndarray, spec: GmmSpec, variance_floor: float) -> Tuple[float, Responsibilities]:
    """Log-likelihood and responsibilities from one density evaluation."""
    log_joint = _weighted_log_density(values, spec, variance_floor)
    log_norm = logsumexp(log_joint, axis=1, keepdims=True)
    return float(log_norm.sum()), np.exp(log_joint - log_norm)


def e_step(samples, spec: GmmSpec, *, variance_floor: float = 1e-12) -> Responsibilities:
    return _posterior(_as_samples(samples), spec, variance_floor)[1]


def m_step(samples, resp: Responsibilities, *, variance_floor: float = 1e-12) -> GmmSpec:
    values = _as_samples(samples)
    resp = np.asarray(resp, dtype=float)
    if resp.ndim != 2 or resp.shape[0] != values.size:
        raise ValueError(f"responsibilities of shape {resp.shape} do not match {values.size} samples")
    counts = resp.sum(axis=0)
    if np.any(counts < 1e-300):
        empty = np.flatnonzero(counts < 1e-300).tolist()
        raise EmptyComponent(f"components {empty} received no responsibility")
    weights = counts / counts.sum()
    means = resp.T @ values / counts
    variances = np.einsum("ig,ig->g", resp, (values[:, None] - means[None, :]) ** 2) / counts
    return GmmSpec(weights, means, np.maximum(variances, variance_floor))


def log_likelihood(samples, spec: GmmSpec, *, variance_floor: float = 1e-12) -> float:
    values = _as_samples(samples)
    return float(logsumexp(_weighted_log_density(values, spec, variance_floor), axis=1).sum())


def cluster_assign(resp: Responsibilities) -> ClusterAssignment:
    """Hard memberships; ties go to the lowest component index."""
    resp = np.asarray(resp, dtype=float)
    return ClusterAssignment.from_labels(np.argmax(resp, axis=1), resp.shape[1])


def free_parameters(m: int) -> int:
    return 3 * m - 1


def bic(loglik: float, m: int, n: int) -> float:
    if n < 1:
        raise ValueError("BIC needs at least one sample")
    return free_parameters(m) * float(np.log(n)) - 2.0 * loglik


def _initial_spec(values: np.ndarray, m: int, config: EmConfig) -> GmmSpec:
    if config.init_strategy == "random":
        rng = np.random.default_rng(config.seed)
        means = rng.choice(values, size=m, replace=False)
        variance = max(float(values.var()), config.variance_floor)
        return GmmSpec(np.full(m, 1.0 / m), means, np.full(m, variance))
    # quantile split: equal-count bins of the sorted sample
    bins = np.array_split(np.sort(values), m)
    weights = np.array([chunk.size for chunk in bins], dtype=float) / values.size
    means = np.array([chunk.mean() for chunk in bins])
    variances = np.array([max(float(chunk.var()), config.variance_floor) for chunk in bins])
    return GmmSpec(weights / weights.sum(), means, variances)


def em_fit(
    samples,
    m: int,
    config: Optional[EmConfig] = None,
    *,
    init: Optional[GmmSpec] = None,
) -> EmFit:
    """Maximum-likelihood scalar GMM by EM.

    Components of the returned spec are ordered by increasing mean, and the
    responsibility columns follow the same order. ``init`` warm-starts the
    iteration from an existing spec with the same number of components.
    """
    config = config or EmConfig()
    values = _as_samples(samples)
    if m < 1:
        raise ValueError("m must be at least 1")
    if values.size < m:
        raise InsufficientSamples(f"need at least {m} samples for {m} components, got {values.size}")
    if m > 1 and float(np.ptp(values)) ** 2 <= config.variance_floor:
        raise DegenerateData(f"samples are constant to within the variance floor; cannot separate {m} components")
    if init is not None and init.m != m:
        raise ValueError(f"warm-start spec has {init.m} components, expected {m}")

    floor = config.variance_floor
    spec = init.floored(floor) if init is not None else _initial_spec(values, m, config)
    previous, resp = _posterior(values, spec, floor)
    trace: List[float] = [previous]
    converged = False
    n_iter = 0
    for n_iter in range(1, config.max_iter + 1):
        spec = m_step(values, resp, variance_floor=floor)
        current, resp = _posterior(values, spec, floor)
        trace.append(current)
        if abs(current - previous) < config.tol:
            converged = True
            break
        previous = current
    if not converged:
        logger.warning("EM with m=%d stopped after %d iterations without convergence", m, n_iter)
    logger.debug("EM m=%d: %d iterations, loglik=%.6g", m, n_iter, trace[-1])

    spec, order = spec.sorted_by_mean()
    resp = resp[:, order]
    return EmFit(
        spec=spec,
        responsibilities=resp,
        loglik=trace[-1],
        n_iter=n_iter,
        converged=converged,
        loglik_trace=tuple(trace),
    )


# Paired noise model of an errors-in-variables residual -----------------------


@dataclass(frozen=True, eq=False)
class PairedFit:
    """Current-noise and regressor-noise mixtures that share component weights."""

    noise_c: GmmSpec
    noise_D: GmmSpec
    responsibilities: Responsibilities
    loglik: float
    n_iter: int
    converged: bool

    @property
    def m(self) -> int:
        return self.noise_c.m


def net_spec(noise_c: GmmSpec, noise_D: GmmSpec, x) -> GmmSpec:
    """Mixture of the residual c - D x: mu_c - mu_D sum(x), s2_c + s2_D ||x||^2."""
    x = np.asarray(x, dtype=float)
    return GmmSpec(
        noise_c.weights,
        noise_c.means - noise_D.means * float(x.sum()),
        noise_c.variances + noise_D.variances * float(x @ x),
    )


def _centered(noise_c: GmmSpec, noise_D: GmmSpec, x: np.ndarray) -> GmmSpec:
    """Current-noise means moved so that the residual mixture has zero mean.

    Component g moves in proportion to its net variance, the weighted
    least-squares projection onto the constraint.
    """
    net = net_spec(noise_c, noise_D, x)
    offset = net.mixture_mean() / float(net.weights @ net.variances)
    return GmmSpec(noise_c.weights, noise_c.means - net.variances * offset, noise_c.variances)


def _paired_m_step(
    residual: np.ndarray,
    x: np.ndarray,
    resp: Responsibilities,
    noise_c: GmmSpec,
    noise_D: GmmSpec,
    variance_floor: float,
    hold_location: bool = False,
) -> Tuple[GmmSpec, GmmSpec]:
    counts = resp.sum(axis=0)
    if np.any(counts < 1e-300):
        empty = np.flatnonzero(counts < 1e-300).tolist()
        raise EmptyComponent(f"components {empty} received no responsibility")
    p = x.size
    total, norm2 = float(x.sum()), float(x @ x)
    net = net_spec(noise_c, noise_D, x)
    lam = (residual[:, None] - net.means[None, :]) / net.variances[None, :]
    mean_lam = (resp * lam).sum(axis=0) / counts
    mean_lam2 = (resp * lam**2).sum(axis=0) / counts
    var_c, var_D = noise_c.variances, noise_D.variances
    weights = counts / counts.sum()

    # c_e | r, g ~ N(mu_c + s2_c lam, s2_c - s2_c^2 / v)
    mean_c = noise_c.means + var_c * mean_lam
    # De_ij | r, g ~ N(mu_D - s2_D x_j lam, s2_D - s2_D^2 x_j^2 / v), pooled over j
    shift = var_D * (total / p) * mean_lam
    mean_D = noise_D.means - shift
    mu_c, mu_D = mean_c, mean_D
    if hold_location:
        # closest means, in the metric of the current variances, with sum_g w_g (mu_c - mu_D sum(x)) = 0
        spread = var_c + var_D * total**2 / p
        nu = float(weights @ (mean_c - mean_D * total)) / float(weights @ spread)
        mu_c = mean_c - nu * var_c
        mu_D = mean_D + nu * var_D * total / p

    new_var_c = var_c**2 * (mean_lam2 - mean_lam**2) + var_c - var_c**2 / net.variances + (mu_c - mean_c) ** 2
    new_var_D = (
        var_D**2 * (norm2 / p) * mean_lam2 - shift**2 + var_D - var_D**2 * norm2 / (p * net.variances)
        + (mu_D - mean_D) ** 2
    )
    return (
        GmmSpec(weights, mu_c, np.maximum(new_var_c, variance_floor)),
        GmmSpec(weights, mu_D, np.maximum(new_var_D, variance_floor)),
    )


def _reordered(spec: GmmSpec, order: np.ndarray) -> GmmSpec:
    return GmmSpec(spec.weights[order], spec.means[order], spec.variances[order])


def em_fit_paired(
    residual,
    x,
    noise_c: GmmSpec,
    noise_D: GmmSpec,
    config: Optional[EmConfig] = None,
    *,
    hold_location: bool = False,
) -> PairedFit:
    """EM for paired noise components given the regression residual at x.

    The M-step uses the conditional moments of c_e and of each D_e entry
    given the residual, posterior variances included, so the regressor noise
    keeps its share of the residual variance from one refit to the next.
    ``hold_location`` keeps the residual mixture at zero mean. Components are
    returned ordered by their net residual mean.
    """
    config = config or EmConfig()
    values = _as_samples(residual)
    x = np.asarray(x, dtype=float)
    if noise_c.m != noise_D.m:
        raise ValueError("paired noise specs need the same number of components")
    if values.size < noise_c.m:
        raise InsufficientSamples(f"need at least {noise_c.m} samples, got {values.size}")

    floor = config.variance_floor
    noise_c = noise_c.floored(floor)
    noise_D = GmmSpec(noise_c.weights, noise_D.means, noise_D.variances).floored(floor)
    if hold_location:
        noise_c = _centered(noise_c, noise_D, x)
    previous, resp = _posterior(values, net_spec(noise_c, noise_D, x), floor)
    converged = False
    n_iter = 0
    for n_iter in range(1, config.max_iter + 1):
        noise_c, noise_D = _paired_m_step(values, x, resp, noise_c, noise_D, floor, hold_location)
        current, resp = _posterior(values, net_spec(noise_c, noise_D, x), floor)
        if abs(current - previous) < config.tol:
            converged = True
            previous = current
            break
        previous = current
    if not converged:
        logger.warning("paired EM with m=%d stopped after %d iterations without convergence", noise_c.m, n_iter)
    logger.debug("paired EM m=%d: %d iterations, loglik=%.6g", noise_c.m, n_iter, previous)

    order = np.argsort(net_spec(noise_c, noise_D, x).means, kind="stable")
    return PairedFit(
        noise_c=_reordered(noise_c, order),
        noise_D=_reordered(noise_D, order),
        responsibilities=resp[:, order],
        loglik=previous,
        n_iter=n_iter,
        converged=converged,
    )


def paired_free_parameters(m: int, *, hold_location: bool = False) -> int:
    return 5 * m - 1 - int(hold_location)


def paired_bic(loglik: float, m: int, n: int, *, hold_location: bool = False) -> float:
    """BIC of the residual mixture implied by paired components over n rows."""
    if n < 1:
        raise ValueError("BIC needs at least one sample")
    return paired_free_parameters(m, hold_location=hold_location) * float(np.log(n)) - 2.0 * loglik


def gmm_sample(spec: GmmSpec, n: int, seed: SeedLike = None) -> np.ndarray:
    """Draw ``n`` samples: a component per weights, then a Gaussian draw."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    components = rng.choice(spec.m, size=n, p=spec.weights)
    return spec.means[components] + spec.stds[components] * rng.standard_normal(n)


def _best_fit(values: np.ndarray, m: int, config: EmConfig, restarts: int) -> EmFit:
    """Quantile-split fit plus ``restarts`` random-seeded fits; highest likelihood wins."""
    best = em_fit(values, m, config)
    for restart in range(restarts):
        candidate_config = config.model_copy(update={"init_strategy": "random", "seed": config.seed + restart})
        try:
            candidate = em_fit(values, m, candidate_config)
        except EmptyComponent:
            continue
        if candidate.loglik > best.loglik:
            best = candidate
    return best


def bic_sweep(
    samples,
    m_values: Sequence[int],
    config: Optional[EmConfig] = None,
    *,
    restarts: int = 0,
) -> List[BicPoint]:
    """Fit each m; an m that cannot be fitted scores +inf."""
    config = config or EmConfig()
    values = _as_samples(samples)
    points: List[BicPoint] = []
    for m in m_values:
        try:
            fit = _best_fit(values, m, config, restarts if m > 1 else 0)
        except (DegenerateData, InsufficientSamples, EmptyComponent) as exc:
            logger.warning("BIC sweep: m=%d failed: %s", m, exc)
            points.append(BicPoint(m=m, bic=float("inf"), error=str(exc)))
            continue
        points.append(BicPoint(m=m, bic=bic(fit.loglik, m, values.size), fit=fit))
    return points


def select_order(points: Sequence[BicPoint]) -> int:
    """m with the lowest BIC, lowest m on ties."""
    if not points:
        raise ValueError("empty BIC sweep")
    best = min(points, key=lambda point: (point.bic, point.m))
    return best.m
