from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import (
    DegenerateSvd,
    DegenerateVariance,
    IllConditioned,
    Infeasible,
    NonGenericTls,
    SingularJacobian,
)
from .models import ClusteredSystem, NoiseEstimates, RegressionSystem
from .schemas import NewtonConfig

logger = logging.getLogger(__name__)

DEFAULT_COND_CAP = 1e12

# Y = T z with z = (Y1, Y2, Y4) enforces Y1 + Y3 = 0.
_ELIMINATION = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
    ]
)


def _qr_solve(A: np.ndarray, b: np.ndarray, cond_cap: float) -> np.ndarray:
    """Least-squares solve through QR; ``cond_cap`` bounds cond(A^T A)."""
    Q, R = linalg.qr(A, mode="economic")
    singular_values = linalg.svdvals(R)
    if singular_values[-1] <= 0.0:
        raise IllConditioned("design matrix is rank deficient")
    condition = (singular_values[0] / singular_values[-1]) ** 2
    if not np.isfinite(condition) or condition > cond_cap:
        raise IllConditioned(f"normal matrix condition number {condition:.3g} exceeds cap {cond_cap:.3g}")
    return linalg.solve_triangular(R, Q.T @ b)


def ls_estimate(system: RegressionSystem, *, cond_cap: float = DEFAULT_COND_CAP) -> np.ndarray:
    return _qr_solve(system.D, system.c, cond_cap)


def tls_estimate(system: RegressionSystem, *, tol: float = 1e-12) -> np.ndarray:
    """Total least squares from the SVD of the augmented matrix [D c].

    With v the right singular vector of the smallest singular value,
    x = -v[:p] / v[p], so that a consistent system returns its exact solution
    whatever sign the SVD picks for v.
    """
    augmented = np.column_stack([system.D, system.c])
    _, singular_values, Vt = linalg.svd(augmented, full_matrices=True)
    q = system.p + 1
    if singular_values.size < q:
        singular_values = np.concatenate([singular_values, np.zeros(q - singular_values.size)])
    scale = singular_values[0] if singular_values[0] > 0 else 1.0
    if singular_values[-2] - singular_values[-1] <= tol * scale:
        raise DegenerateSvd("smallest singular value of [D c] is repeated; TLS solution is not unique")
    v = Vt[-1]
    if abs(v[-1]) < tol:
        raise NonGenericTls("last component of the TLS singular vector vanishes")
    return -v[:-1] / v[-1]


@dataclass(frozen=True, eq=False)
class ConstrainedEstimate:
    x: np.ndarray
    box_active: bool


def _reduced_box(x0: np.ndarray, fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    spread = fraction * np.abs(x0)
    lower, upper = x0 - spread, x0 + spread
    # z1 = Y1 = -Y3 must sit inside both boxes
    low1 = max(lower[0], -upper[2])
    high1 = min(upper[0], -lower[2])
    if low1 > high1:
        raise Infeasible("box around x0 has no point with Y1 + Y3 = 0")
    return np.array([low1, lower[1], lower[3]]), np.array([high1, upper[1], upper[3]])


def _constrained(
    system: RegressionSystem,
    solver,
    x0: Optional[Sequence[float]],
    box_fraction: float,
) -> ConstrainedEstimate:
    if system.p != 4:
        raise ValueError("the Y1 + Y3 = 0 constraint needs the four-parameter line model")
    reduced = RegressionSystem(system.D @ _ELIMINATION, system.c, system.instants)
    try:
        z = solver(reduced)
    except IllConditioned as exc:
        raise Infeasible(f"eliminated system is ill-conditioned: {exc}") from exc
    box_active = False
    if x0 is not None:
        lower, upper = _reduced_box(np.asarray(x0, dtype=float), box_fraction)
        projected = np.clip(z, lower, upper)
        box_active = bool(np.any(projected != z))
        if box_active:
            logger.info("constrained estimate projected onto the box around x0")
        z = projected
    return ConstrainedEstimate(x=_ELIMINATION @ z, box_active=box_active)


def constrained_ls(
    system: RegressionSystem,
    x0: Optional[Sequence[float]] = None,
    *,
    box_fraction: float = 0.30,
    cond_cap: float = DEFAULT_COND_CAP,
) -> ConstrainedEstimate:
    """LS with Y1 + Y3 = 0 by elimination and an optional +/- box around x0."""
    return _constrained(system, lambda reduced: ls_estimate(reduced, cond_cap=cond_cap), x0, box_fraction)


def constrained_tls(
    system: RegressionSystem,
    x0: Optional[Sequence[float]] = None,
    *,
    box_fraction: float = 0.30,
) -> ConstrainedEstimate:
    """TLS on the eliminated system, expanded back to four parameters."""
    return _constrained(system, tls_estimate, x0, box_fraction)


def gmm_dep_estimate(
    clustered: ClusteredSystem,
    *,
    cond_cap: float = DEFAULT_COND_CAP,
    profile_means: bool = False,
) -> np.ndarray:
    """Minimizer of the per-component standardized squared errors.

    Rows of cluster g are scaled by sqrt(w_ig)/sigma_g after removing mu_g
    from c, so the stacked QR solve equals
    (sum D_g^T W_g D_g / s2_g)^-1 sum D_g^T W_g (c_g - mu_g) / s2_g.
    With ``profile_means`` each mu_g is solved for jointly with x, which
    amounts to centering c and D on their weighted block means.
    """
    rows, targets = [], []
    for block in clustered.blocks:
        if block.var_c <= 0.0:
            raise DegenerateVariance(f"component variance {block.var_c} is not positive")
        weights = block.row_weights
        if profile_means:
            total = weights.sum()
            c = block.c - weights @ block.c / total
            D = block.D - (weights @ block.D) / total
        else:
            c, D = block.c - block.mu_c, block.D
        scale = np.sqrt(weights / block.var_c)
        rows.append(D * scale[:, None])
        targets.append(c * scale)
    return _qr_solve(np.vstack(rows), np.concatenate(targets), cond_cap)


@dataclass(frozen=True, eq=False)
class EivResidual:
    f: np.ndarray
    lambdas: Tuple[np.ndarray, ...]


def _net_moments(block, x: np.ndarray) -> Tuple[float, float]:
    mu_net = block.mu_c - block.mu_D * float(x.sum())
    var_net = block.var_c + block.var_D * float(x @ x)
    if var_net <= 0.0:
        raise DegenerateVariance(f"net variance {var_net} is not positive")
    return mu_net, var_net


def _block_terms(block, x: np.ndarray, profile_means: bool) -> Tuple[np.ndarray, np.ndarray, float]:
    """Multipliers lambda, the regressor term a = d - mu_D and the net variance."""
    mu_net, var_net = _net_moments(block, x)
    residual = block.c - block.D @ x
    if profile_means:
        weights = block.row_weights
        total = weights.sum()
        # mu_net at its weighted-mean optimum; the mu_D term cancels in a
        return (residual - weights @ residual / total) / var_net, block.D - (weights @ block.D) / total, var_net
    return (residual - mu_net) / var_net, block.D - block.mu_D, var_net


def eiv_residual(x, clustered: ClusteredSystem, *, profile_means: bool = False) -> EivResidual:
    """Stationarity system f(x) = sum_g (D_g - De_g(x))^T W_g lambda_g."""
    x = np.asarray(x, dtype=float)
    f = np.zeros(clustered.p)
    lambdas = []
    for block in clustered.blocks:
        lam, a, _ = _block_terms(block, x, profile_means)
        weighted = block.row_weights * lam
        # D - De = (D - mu_D) + var_D * lam x^T
        f += a.T @ weighted + block.var_D * float(lam @ weighted) * x
        lambdas.append(lam)
    return EivResidual(f=f, lambdas=tuple(lambdas))


def _analytic_jacobian(x: np.ndarray, clustered: ClusteredSystem, profile_means: bool) -> np.ndarray:
    J = np.zeros((clustered.p, clustered.p))
    for block in clustered.blocks:
        lam, a, var_net = _block_terms(block, x, profile_means)
        weights = block.row_weights
        H = a + 2.0 * block.var_D * np.outer(lam, x)
        J -= (H.T @ (weights[:, None] * H)) / var_net
        J += block.var_D * float(lam @ (weights * lam)) * np.eye(clustered.p)
    return J


def _finite_difference_jacobian(
    x: np.ndarray, clustered: ClusteredSystem, fd_step: float, profile_means: bool
) -> np.ndarray:
    J = np.zeros((clustered.p, clustered.p))
    for j in range(clustered.p):
        h = fd_step * max(abs(x[j]), 1.0)
        forward, backward = x.copy(), x.copy()
        forward[j] += h
        backward[j] -= h
        J[:, j] = (
            eiv_residual(forward, clustered, profile_means=profile_means).f
            - eiv_residual(backward, clustered, profile_means=profile_means).f
        ) / (2.0 * h)
    return J


def eiv_jacobian(
    x,
    clustered: ClusteredSystem,
    *,
    mode: str = "analytic",
    fd_step: float = 1e-6,
    profile_means: bool = False,
) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if mode == "analytic":
        return _analytic_jacobian(x, clustered, profile_means)
    if mode == "finite-difference":
        return _finite_difference_jacobian(x, clustered, fd_step, profile_means)
    raise ValueError(f"unknown Jacobian mode: {mode}")


@dataclass(frozen=True, eq=False)
class NewtonResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float
    lambdas: Tuple[np.ndarray, ...]


# a Newton correction this small relative to x is below what f can resolve
_ROUNDING = 64 * np.finfo(float).eps


def eiv_newton_solve(
    clustered: ClusteredSystem,
    x0,
    config: Optional[NewtonConfig] = None,
    *,
    profile_means: bool = False,
) -> NewtonResult:
    """Damped Newton iteration on f(x) = 0.

    A full step is halved (up to ``max_halvings`` times) while it increases
    ||f||. A step that still increases ||f|| is rejected and ends the solve,
    so the returned iterate always has the lowest ||f|| seen. ``converged``
    needs a full Newton step shorter than ``tol_x`` and ||f||_inf <= ``tol_f``,
    or a step already at the rounding level of x.
    """
    config = config or NewtonConfig()
    x = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")

    def residual(point: np.ndarray) -> EivResidual:
        return eiv_residual(point, clustered, profile_means=profile_means)

    current = residual(x)
    current_norm = float(np.linalg.norm(current.f))
    converged = False
    iterations = 0
    for iterations in range(1, config.k_max + 1):
        J = eiv_jacobian(x, clustered, mode=config.jacobian_mode, fd_step=config.fd_step, profile_means=profile_means)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > config.cond_cap:
            raise SingularJacobian(f"Jacobian is singular at iteration {iterations}")
        try:
            step = linalg.solve(J, current.f)
        except linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc

        step_norm = float(np.linalg.norm(step))
        f_max = float(np.max(np.abs(current.f)))
        if step_norm < config.tol_x and (
            f_max <= config.tol_f or step_norm <= _ROUNDING * max(float(np.linalg.norm(x)), 1.0)
        ):
            converged = True
            break

        factor = 1.0
        trial = x - step
        trial_residual = residual(trial)
        trial_norm = float(np.linalg.norm(trial_residual.f))
        halvings = 0
        while trial_norm > current_norm and halvings < config.max_halvings:
            factor *= 0.5
            halvings += 1
            trial = x - factor * step
            trial_residual = residual(trial)
            trial_norm = float(np.linalg.norm(trial_residual.f))
        if trial_norm > current_norm:
            logger.warning("Newton iteration %d: no decrease of |f| after %d halvings", iterations, halvings)
            break

        x, current, current_norm = trial, trial_residual, trial_norm
        logger.debug(
            "Newton iteration %d: |dx|=%.3e |f|=%.3e halvings=%d",
            iterations, factor * step_norm, current_norm, halvings,
        )
    if not converged:
        logger.warning("Newton solve stopped after %d iterations (|f|=%.3e)", iterations, current_norm)
    return NewtonResult(
        x=x,
        iterations=iterations,
        converged=converged,
        residual_norm=current_norm,
        lambdas=current.lambdas,
    )


def recover_noise(x, lambdas: Sequence[np.ndarray], clustered: ClusteredSystem) -> NoiseEstimates:
    """Noise estimates c_e = s2_c lambda + mu_c and De_j = mu_D - x_j s2_D lambda.

    Soft blocks contribute in proportion to their row weights, which gives
    the posterior mean over components.
    """
    x = np.asarray(x, dtype=float)
    if len(lambdas) != len(clustered.blocks):
        raise ValueError("one multiplier vector per cluster block is required")
    c_e_hat = np.zeros(clustered.n)
    D_e_hat = np.zeros((clustered.n, clustered.p))
    for block, lam in zip(clustered.blocks, lambdas):
        weights = block.row_weights
        c_e_hat[block.rows] += weights * (block.var_c * lam + block.mu_c)
        D_e_hat[block.rows] += weights[:, None] * (block.mu_D - block.var_D * np.outer(lam, x))
    return NoiseEstimates(c_e_hat=c_e_hat, D_e_hat=D_e_hat, lambdas=tuple(lambdas))
