from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .estimators import ls_estimate
from .models import PhasorRecord, RegressionSystem
from .schemas import MadConfig, MteeConfig
from .tlpe import build_system, records_from_arrays, records_to_arrays

logger = logging.getLogger(__name__)

MAD_SCALE = 1.4826
_SQRT_2PI = np.sqrt(2.0 * np.pi)


# Minimum total error entropy ----------------------------------------------


def total_error(system: RegressionSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return system.residual(x) / np.sqrt(x @ x + 1.0)


def _kernel_terms(errors: np.ndarray, sigma: float) -> Tuple[float, np.ndarray]:
    """Information potential V and the kernel-derivative matrix W_ij."""
    width = sigma * np.sqrt(2.0)
    offsets = errors[None, :] - errors[:, None]
    kernel = np.exp(-0.5 * (offsets / width) ** 2) / (width * _SQRT_2PI)
    potential = float(kernel.mean())
    return potential, -offsets * kernel / width**2


def renyi_entropy(errors, sigma: float) -> float:
    """Quadratic Renyi entropy of ``errors`` with a Gaussian Parzen kernel."""
    errors = np.asarray(errors, dtype=float).ravel()
    if errors.size < 1:
        raise ValueError("entropy needs at least one error sample")
    if sigma <= 0:
        raise ValueError("kernel size must be positive")
    potential, _ = _kernel_terms(errors, sigma)
    return -float(np.log(potential))


def _window(system: RegressionSystem, parzen_n: Optional[int]) -> slice:
    if parzen_n is None or parzen_n >= system.n:
        return slice(None)
    return slice(system.n - parzen_n, None)


def entropy_objective(system: RegressionSystem, x, sigma: float, parzen_n: Optional[int] = None) -> float:
    return renyi_entropy(total_error(system, x)[_window(system, parzen_n)], sigma)


def entropy_gradient(system: RegressionSystem, x, sigma: float, parzen_n: Optional[int] = None) -> np.ndarray:
    """Gradient of the total-error entropy with respect to x."""
    x = np.asarray(x, dtype=float)
    rows = _window(system, parzen_n)
    D = system.D[rows]
    rho = np.sqrt(x @ x + 1.0)
    errors = (system.c[rows] - D @ x) / rho
    d_errors = -(D / rho + np.outer(errors, x) / rho**2)
    potential, W = _kernel_terms(errors, sigma)
    n = errors.size
    d_potential = (2.0 / n**2) * (W.sum(axis=0) @ d_errors)
    return -d_potential / potential


def silverman_sigma(errors) -> float:
    errors = np.asarray(errors, dtype=float)
    return 1.06 * float(np.std(errors)) * errors.size ** (-0.2)


@dataclass(frozen=True, eq=False)
class MteeResult:
    x: np.ndarray
    entropy_trace: Tuple[float, ...]
    iterations: int
    converged: bool
    kernel_sigma: float


def mtee_estimate(system: RegressionSystem, x0, config: Optional[MteeConfig] = None) -> MteeResult:
    """Steepest descent on the total-error entropy.

    With ``backtracking`` the step is halved until the entropy does not
    increase; otherwise every iteration takes the fixed ``step_size``.
    """
    config = config or MteeConfig()
    x = np.asarray(x0, dtype=float).copy()
    rows = _window(system, config.parzen_n)
    sigma = config.kernel_sigma
    if sigma is None:
        sigma = silverman_sigma(total_error(system, x)[rows])
        if sigma <= 0.0:
            sigma = 1e-6
            logger.warning("zero spread in the initial total error; kernel size set to %g", sigma)

    entropy = entropy_objective(system, x, sigma, config.parzen_n)
    trace = [entropy]
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        gradient = entropy_gradient(system, x, sigma, config.parzen_n)
        step = config.step_size
        trial = x - step * gradient
        trial_entropy = entropy_objective(system, trial, sigma, config.parzen_n)
        if config.backtracking:
            halvings = 0
            while trial_entropy > entropy and halvings < config.max_halvings:
                step *= 0.5
                halvings += 1
                trial = x - step * gradient
                trial_entropy = entropy_objective(system, trial, sigma, config.parzen_n)
            if trial_entropy > entropy:
                trial, trial_entropy = x, entropy
        change = float(np.linalg.norm(trial - x))
        x, entropy = trial, trial_entropy
        trace.append(entropy)
        if change < config.tol:
            converged = True
            break
    if not converged:
        logger.warning("MTEE stopped after %d iterations without convergence", iteration)
    return MteeResult(
        x=x,
        entropy_trace=tuple(trace),
        iterations=iteration,
        converged=converged,
        kernel_sigma=float(sigma),
    )


# Moving-window MAD denoising ----------------------------------------------


def _median_absolute_deviation(window: np.ndarray) -> float:
    return float(np.median(np.abs(window - np.median(window))))


@dataclass(frozen=True, eq=False)
class DenoiseResult:
    cleaned: np.ndarray
    flags: np.ndarray
    passes: int


def mad_denoise(series, config: Optional[MadConfig] = None) -> DenoiseResult:
    """Flag samples further than ``threshold`` scaled MADs from the centered
    moving median and replace them; passes repeat until nothing is flagged."""
    config = config or MadConfig()
    values = pd.Series(np.asarray(series, dtype=float))
    if values.size < config.window:
        raise ValueError(f"series of length {values.size} is shorter than the window ({config.window})")

    flags = np.zeros(values.size, dtype=bool)
    passes = 0
    for passes in range(1, config.max_passes + 1):
        rolling = values.rolling(config.window, center=True, min_periods=1)
        median = rolling.median()
        spread = MAD_SCALE * rolling.apply(_median_absolute_deviation, raw=True)
        flagged = ((values - median).abs() > config.threshold * spread).to_numpy()
        if not flagged.any():
            break
        flags |= flagged
        if config.replacement == "median":
            values = values.where(~flagged, median)
        else:
            values = values.where(~flagged).interpolate(limit_direction="both")
        logger.debug("MAD pass %d flagged %d samples", passes, int(flagged.sum()))
    else:
        logger.warning("MAD filter still flagging samples after %d passes", config.max_passes)
    return DenoiseResult(cleaned=values.to_numpy(), flags=flags, passes=passes)


def denoise_records(records: Sequence[PhasorRecord], config: Optional[MadConfig] = None) -> List[PhasorRecord]:
    config = config or MadConfig()
    if len(records) < config.window:
        logger.warning("MAD window %d clamped to the series length %d", config.window, len(records))
        config = config.model_copy(update={"window": len(records)})
    t, voltages, currents = records_to_arrays(records)
    voltages = np.column_stack([mad_denoise(channel, config).cleaned for channel in voltages.T])
    currents = np.column_stack([mad_denoise(channel, config).cleaned for channel in currents.T])
    return records_from_arrays(t, voltages, currents)


def denoise_then_ls(records: Sequence[PhasorRecord], config: Optional[MadConfig] = None) -> np.ndarray:
    """MAD-filter every voltage and current channel, then least squares."""
    return ls_estimate(build_system(denoise_records(records, config)))


def denoise_window_sweep(
    records: Sequence[PhasorRecord],
    windows: Sequence[int] = (300, 600, 1200),
    config: Optional[MadConfig] = None,
) -> Dict[int, np.ndarray]:
    config = config or MadConfig()
    return {
        window: denoise_then_ls(records, config.model_copy(update={"window": window}))
        for window in windows
    }
