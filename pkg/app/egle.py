from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import gmm_em
from .errors import EstimationError
from .estimators import eiv_newton_solve, eiv_residual, gmm_dep_estimate, ls_estimate, recover_noise
from .models import ClusteredSystem, GmmSpec, NoiseEstimates, RegressionSystem
from .schemas import EgleConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MResult:
    """Outcome of the joint estimation at one component count."""

    m: int
    bic: float
    x: Optional[np.ndarray] = None
    noise_c: Optional[GmmSpec] = None
    noise_D: Optional[GmmSpec] = None
    noise_estimates: Optional[NoiseEstimates] = None
    converged: bool = False
    outer_iterations: int = 0
    newton_iterations: int = 0
    trace: Tuple[np.ndarray, ...] = field(default_factory=tuple)
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.x is None

    def to_dict(self) -> Dict:
        return {
            "m": self.m,
            "bic": None if not np.isfinite(self.bic) else float(self.bic),
            "x": None if self.x is None else self.x.tolist(),
            "converged": self.converged,
            "outer_iterations": self.outer_iterations,
            "newton_iterations": self.newton_iterations,
            "trace": [step.tolist() for step in self.trace],
            "noise_c": None if self.noise_c is None else self.noise_c.to_dict(),
            "noise_D": None if self.noise_D is None else self.noise_D.to_dict(),
            "error": self.error,
        }


@dataclass(frozen=True, eq=False)
class EstimationReport:
    variant: str
    x_hat: np.ndarray
    m_star: int
    bic_trace: Tuple[Tuple[int, float], ...]
    per_m: Tuple[MResult, ...]
    noise_c: GmmSpec
    noise_D: Optional[GmmSpec]
    noise_estimates: Optional[NoiseEstimates]
    converged: bool
    outer_iterations: int
    timing_s: float

    @property
    def per_m_estimates(self) -> Dict[int, Optional[np.ndarray]]:
        return {result.m: result.x for result in self.per_m}

    @property
    def selected(self) -> MResult:
        return next(result for result in self.per_m if result.m == self.m_star)

    def to_dict(self) -> Dict:
        return {
            "variant": self.variant,
            "x_hat": self.x_hat.tolist(),
            "m_star": self.m_star,
            "bic_trace": [(m, None if not np.isfinite(value) else float(value)) for m, value in self.bic_trace],
            "per_m": [result.to_dict() for result in self.per_m],
            "noise_c": self.noise_c.to_dict(),
            "noise_D": None if self.noise_D is None else self.noise_D.to_dict(),
            "converged": self.converged,
            "outer_iterations": self.outer_iterations,
            "timing_s": self.timing_s,
        }


def _resolve_x0(system: RegressionSystem, config: EgleConfig, x0) -> np.ndarray:
    if x0 is None and config.x0 is not None:
        x0 = config.x0
    if x0 is None:
        return ls_estimate(system, cond_cap=config.cond_cap)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.p,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"x0 must be a finite vector of length {system.p}")
    return x0


def _residual_variance(system: RegressionSystem, x0: np.ndarray, floor: float) -> float:
    return max(float(np.var(system.residual(x0))), floor)


def _fits_location(config: EgleConfig, default: bool) -> bool:
    return default if config.fit_location is None else config.fit_location


def _dependent_for_m(system: RegressionSystem, m: int, x0: np.ndarray, config: EgleConfig) -> MResult:
    em_config = config.em
    fit_location = _fits_location(config, True)
    variance = _residual_variance(system, x0, em_config.variance_floor)
    # zero-mean Gaussian guess for the current noise: the first pass is plain LS
    clustered = ClusteredSystem.single_cluster(system, GmmSpec.single(0.0, variance))
    x = gmm_dep_estimate(clustered, cond_cap=config.cond_cap)
    trace = [x0.copy(), x]
    fit = gmm_em.em_fit(system.residual(x), m, em_config)
    converged = False
    iteration = 0
    for iteration in range(1, config.i_max + 1):
        # rows weighted by responsibilities: each pass is an EM step for (x, theta)
        clustered = ClusteredSystem.from_responsibilities(system, fit.responsibilities, fit.spec)
        x_next = gmm_dep_estimate(clustered, cond_cap=config.cond_cap, profile_means=fit_location)
        residual = system.residual(x_next)
        init: Optional[GmmSpec] = None
        if config.warm_start:
            init = fit.spec
            if fit_location:
                resp = fit.responsibilities
                init = GmmSpec(init.weights, resp.T @ residual / resp.sum(axis=0), init.variances)
        fit = gmm_em.em_fit(residual, m, em_config, init=init)
        trace.append(x_next)
        change = float(np.linalg.norm(x_next - x))
        x = x_next
        logger.debug("dependent EGLE m=%d iteration %d: |dx|=%.3e", m, iteration, change)
        if change < config.eps1:
            converged = True
            break
    if not converged:
        logger.warning("dependent EGLE m=%d did not converge in %d iterations", m, config.i_max)

    noise = NoiseEstimates(c_e_hat=system.residual(x), D_e_hat=np.zeros_like(system.D), lambdas=())
    return MResult(
        m=m,
        bic=gmm_em.bic(fit.loglik, m, system.n),
        x=x,
        noise_c=fit.spec,
        noise_estimates=noise,
        converged=converged,
        outer_iterations=iteration,
        trace=tuple(trace),
    )


def _split_residual_spec(net: GmmSpec, x: np.ndarray, share_c: float) -> Tuple[GmmSpec, GmmSpec]:
    """Paired specs from a residual mixture: ``share_c`` of each variance on c,
    the rest spread over the regressor entries through ||x||^2."""
    norm2 = float(x @ x)
    if norm2 <= 0.0:
        return net, GmmSpec(net.weights, np.zeros(net.m), np.zeros(net.m))
    noise_c = GmmSpec(net.weights, net.means, share_c * net.variances)
    noise_D = GmmSpec(net.weights, np.zeros(net.m), (1.0 - share_c) * net.variances / norm2)
    return noise_c, noise_D


def _full_for_m(system: RegressionSystem, m: int, x0: np.ndarray, config: EgleConfig) -> MResult:
    em_config = config.em
    fit_location = _fits_location(config, False)
    variance = _residual_variance(system, x0, em_config.variance_floor)
    var_c = config.init_variance_c if config.init_variance_c is not None else variance / 2.0
    if config.init_variance_D is not None:
        var_D = config.init_variance_D
    else:
        var_D = variance / (2.0 * max(float(x0 @ x0), 1.0))
    share_c = var_c / (var_c + var_D * float(x0 @ x0))
    clustered = ClusteredSystem.single_cluster(system, GmmSpec.single(0.0, var_c), GmmSpec.single(0.0, var_D))

    solution = eiv_newton_solve(clustered, x0, config.newton)
    x = solution.x
    newton_iterations = solution.iterations
    trace = [x0.copy(), x]

    def refit(x_current: np.ndarray, previous: Optional[gmm_em.PairedFit]) -> gmm_em.PairedFit:
        residual = system.residual(x_current)
        if previous is not None and config.warm_start:
            start = previous.noise_c, previous.noise_D
        else:
            start = _split_residual_spec(gmm_em.em_fit(residual, m, em_config).spec, x_current, share_c)
        return gmm_em.em_fit_paired(residual, x_current, *start, em_config, hold_location=not fit_location)

    fit = refit(x, None)
    converged = False
    iteration = 0
    for iteration in range(1, config.i_max + 1):
        clustered = ClusteredSystem.from_responsibilities(system, fit.responsibilities, fit.noise_c, fit.noise_D)
        solution = eiv_newton_solve(clustered, x, config.newton, profile_means=fit_location)
        newton_iterations += solution.iterations
        fit = refit(solution.x, fit)
        trace.append(solution.x)
        change = float(np.linalg.norm(solution.x - x))
        x = solution.x
        logger.debug("EGLE m=%d iteration %d: |dx|=%.3e newton=%d", m, iteration, change, solution.iterations)
        if change < config.eps1:
            converged = True
            break
    if not converged:
        logger.warning("EGLE m=%d did not converge in %d iterations", m, config.i_max)

    clustered = ClusteredSystem.from_responsibilities(system, fit.responsibilities, fit.noise_c, fit.noise_D)
    noise = recover_noise(x, eiv_residual(x, clustered).lambdas, clustered)
    return MResult(
        m=m,
        bic=gmm_em.paired_bic(fit.loglik, m, system.n, hold_location=not fit_location),
        x=x,
        noise_c=fit.noise_c,
        noise_D=fit.noise_D,
        noise_estimates=noise,
        converged=converged,
        outer_iterations=iteration,
        newton_iterations=newton_iterations,
        trace=tuple(trace),
    )


def _guarded(solver: Callable[..., MResult], system: RegressionSystem, m: int, x0: np.ndarray,
             config: EgleConfig) -> MResult:
    try:
        return solver(system, m, x0, config)
    except EstimationError as exc:
        logger.warning("component count m=%d failed: %s", m, exc)
        return MResult(m=m, bic=float("inf"), error=f"{type(exc).__name__}: {exc}")


def _sweep(variant: str, solver, system: RegressionSystem, config: EgleConfig, x0) -> EstimationReport:
    started = time.perf_counter()
    if config.eps0 is not None:
        logger.warning("eps0=%g is accepted for compatibility and not used", config.eps0)
    x_start = _resolve_x0(system, config, x0)
    m_values: Sequence[int] = range(1, config.m_max + 1)
    logger.info("EGLE (%s) sweep over m=1..%d on n=%d rows", variant, config.m_max, system.n)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results: List[MResult] = list(
                pool.map(lambda m: _guarded(solver, system, m, x_start, config), m_values)
            )
    else:
        results = [_guarded(solver, system, m, x_start, config) for m in m_values]

    candidates = [result for result in results if not result.failed]
    if not candidates:
        reasons = "; ".join(f"m={result.m}: {result.error}" for result in results)
        raise EstimationError(f"no component count could be fitted ({reasons})")
    best = min(candidates, key=lambda result: (result.bic, result.m))
    elapsed = time.perf_counter() - started
    logger.info("EGLE (%s) selected m*=%d in %.2fs", variant, best.m, elapsed)
    return EstimationReport(
        variant=variant,
        x_hat=best.x,
        m_star=best.m,
        bic_trace=tuple((result.m, result.bic) for result in results),
        per_m=tuple(results),
        noise_c=best.noise_c,
        noise_D=best.noise_D,
        noise_estimates=best.noise_estimates,
        converged=best.converged,
        outer_iterations=best.outer_iterations,
        timing_s=elapsed,
    )


def egle_dependent(system: RegressionSystem, config: Optional[EgleConfig] = None, *, x0=None) -> EstimationReport:
    """Joint estimation with noise in c only; D is taken as exact."""
    return _sweep("dependent", _dependent_for_m, system, config or EgleConfig(), x0)


def egle_full(system: RegressionSystem, config: Optional[EgleConfig] = None, *, x0=None) -> EstimationReport:
    """Joint noise and parameter estimation with noise in both c and D."""
    return _sweep("full", _full_for_m, system, config or EgleConfig(), x0)
