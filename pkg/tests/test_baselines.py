from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from app.baselines import (
    denoise_records,
    denoise_then_ls,
    denoise_window_sweep,
    entropy_gradient,
    entropy_objective,
    mad_denoise,
    mtee_estimate,
    renyi_entropy,
    silverman_sigma,
    total_error,
)
from app.models import RegressionSystem
from app.schemas import MadConfig, MteeConfig
from app.tlpe import line_params_to_y, simulate_measurements

from .factories import noise_free_config


def _noisy_system(seed: int = 0, n: int = 30):
    rng = np.random.default_rng(seed)
    D = rng.normal(size=(n, 2))
    c = D @ [1.0, -0.5] + 0.3 * rng.normal(size=n)
    return RegressionSystem(D=D, c=c)


# Total error entropy -------------------------------------------------------------


def test_total_error_at_zero_is_c(random_system):
    system, _ = random_system
    np.testing.assert_array_equal(total_error(system, np.zeros(3)), system.c)


def test_total_error_vanishes_on_consistent_system(random_system):
    system, x = random_system
    assert np.max(np.abs(total_error(system, x))) <= 1e-12


def test_total_error_formula():
    system = RegressionSystem(D=[[1.0, 2.0], [3.0, 4.0]], c=[1.0, 0.0])
    x = np.array([0.5, 0.5])
    expected = (np.array([1.0, 0.0]) - np.array([1.5, 3.5])) / math.sqrt(1.5)
    np.testing.assert_allclose(total_error(system, x), expected, atol=1e-15)


def test_entropy_of_identical_errors():
    sigma = 1.0 / math.sqrt(2.0)
    assert renyi_entropy(np.zeros(7), sigma) == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-12)


def test_entropy_invariances(rng):
    errors = rng.normal(size=25)
    base = renyi_entropy(errors, 0.5)
    assert renyi_entropy(rng.permutation(errors), 0.5) == pytest.approx(base, abs=1e-12)
    assert renyi_entropy(errors + 3.0, 0.5) == pytest.approx(base, abs=1e-12)
    assert renyi_entropy(errors * 10.0, 0.5) > base


def test_entropy_rejects_bad_kernel():
    with pytest.raises(ValueError):
        renyi_entropy([0.0, 1.0], 0.0)


def test_entropy_gradient_matches_finite_difference():
    system = _noisy_system()
    rng = np.random.default_rng(1)
    h = 1e-6
    for _ in range(10):
        x = rng.normal(size=2)
        analytic = entropy_gradient(system, x, 0.5)
        numeric = np.array(
            [
                (entropy_objective(system, x + h * unit, 0.5) - entropy_objective(system, x - h * unit, 0.5)) / (2 * h)
                for unit in np.eye(2)
            ]
        )
        assert np.linalg.norm(analytic - numeric) <= 1e-5 * np.linalg.norm(analytic)


def test_parzen_window_uses_latest_rows():
    system = _noisy_system(n=40)
    tail = RegressionSystem(D=system.D[-10:], c=system.c[-10:])
    x = np.array([0.3, 0.2])
    assert entropy_objective(system, x, 0.5, parzen_n=10) == pytest.approx(entropy_objective(tail, x, 0.5))
    np.testing.assert_allclose(entropy_gradient(system, x, 0.5, parzen_n=10), entropy_gradient(tail, x, 0.5))


def test_silverman_rule():
    errors = np.array([-1.0, 1.0] * 16)
    assert silverman_sigma(errors) == pytest.approx(1.06 * 32 ** (-0.2))


def test_mtee_stays_at_exact_solution(caplog):
    # integer design and dyadic x keep c - D x exactly zero
    D = np.random.default_rng(0).integers(-5, 6, size=(40, 3)).astype(float)
    x = np.array([1.0, -2.0, 0.5])
    system = RegressionSystem(D=D, c=D @ x)
    with caplog.at_level(logging.WARNING, logger="app.baselines"):
        result = mtee_estimate(system, x)
    assert np.linalg.norm(result.x - x) <= 1e-10
    assert result.converged
    assert result.kernel_sigma == 1e-6
    assert "kernel size" in caplog.text


def test_mtee_entropy_never_increases_with_backtracking():
    system = _noisy_system(seed=4)
    result = mtee_estimate(system, np.array([2.0, 1.0]), MteeConfig(step_size=0.5, max_iter=50))
    assert np.all(np.diff(result.entropy_trace) <= 1e-12)
    assert result.entropy_trace[-1] < result.entropy_trace[0]


def test_mtee_fixed_step_runs_to_the_cap():
    system = _noisy_system(seed=5)
    result = mtee_estimate(system, np.zeros(2), MteeConfig(step_size=1e-3, max_iter=5, backtracking=False))
    assert result.iterations == 5
    assert len(result.entropy_trace) == 6
    assert not result.converged


def test_mtee_explicit_kernel_size():
    system = _noisy_system(seed=6)
    result = mtee_estimate(system, np.zeros(2), MteeConfig(kernel_sigma=0.2, max_iter=3))
    assert result.kernel_sigma == 0.2


# Moving-window MAD --------------------------------------------------------------


def test_mad_flags_single_spike():
    series = np.full(50, 2.0)
    series[20] = 9.0
    result = mad_denoise(series, MadConfig(window=11))
    assert np.flatnonzero(result.flags).tolist() == [20]
    np.testing.assert_array_equal(result.cleaned, np.full(50, 2.0))


def test_mad_interpolates_spike():
    series = np.arange(50, dtype=float)
    series[20] = 500.0
    result = mad_denoise(series, MadConfig(window=11, replacement="interpolate"))
    assert result.flags[20]
    assert result.cleaned[20] == pytest.approx(20.0)


def test_mad_leaves_gaussian_noise_alone_at_high_threshold():
    series = np.random.default_rng(2).normal(size=2000)
    result = mad_denoise(series, MadConfig(window=201, threshold=10.0))
    assert not result.flags.any()
    np.testing.assert_array_equal(result.cleaned, series)


def test_mad_finds_injected_outliers():
    rng = np.random.default_rng(3)
    series = rng.normal(size=2000)
    outliers = rng.choice(2000, size=100, replace=False)
    series[outliers] += 8.0
    result = mad_denoise(series, MadConfig(window=201))
    recall = result.flags[outliers].mean()
    assert recall >= 0.9


def test_mad_is_idempotent():
    rng = np.random.default_rng(4)
    series = rng.normal(size=1000)
    series[rng.choice(1000, size=30, replace=False)] += 10.0
    config = MadConfig(window=101)
    first = mad_denoise(series, config)
    assert first.passes < config.max_passes
    second = mad_denoise(first.cleaned, config)
    assert not second.flags.any()
    np.testing.assert_array_equal(second.cleaned, first.cleaned)


def test_mad_series_shorter_than_window():
    with pytest.raises(ValueError):
        mad_denoise(np.zeros(10), MadConfig(window=11))


def test_denoise_records_clamps_window(caplog):
    records = simulate_measurements(noise_free_config(s=40))
    with caplog.at_level(logging.WARNING, logger="app.baselines"):
        cleaned = denoise_records(records, MadConfig(window=600))
    assert len(cleaned) == 40
    assert "clamped" in caplog.text


def test_denoise_then_ls_on_clean_records():
    config = noise_free_config(s=200)
    records = simulate_measurements(config)
    y_true = line_params_to_y(config.true_params.to_params()).as_array()
    np.testing.assert_allclose(denoise_then_ls(records, MadConfig(window=101)), y_true, atol=1e-10)


def test_denoise_window_sweep_keys():
    records = simulate_measurements(noise_free_config(s=60))
    sweep = denoise_window_sweep(records, windows=(11, 21))
    assert sorted(sweep) == [11, 21]
    assert all(estimate.shape == (4,) for estimate in sweep.values())
