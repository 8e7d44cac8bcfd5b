from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest

from app.errors import ZeroTruth
from app.harness import (
    DIVERGENCE_RI,
    MethodSettings,
    are,
    are_by_parameter,
    bic_demo,
    initial_guess,
    monte_carlo_run,
    normalize_method,
    run_method,
    sensitivity_initialization,
    sensitivity_noise_levels,
)
from app.models import LineParameters
from app.schemas import METHODS, EgleConfig, LineParamsIn, MadConfig, McConfig, McReportOut, ScenarioConfig

from .factories import noise_free_config

FAST_SETTINGS = MethodSettings(egle=EgleConfig(m_max=2, i_max=20))


def _small_mc(**overrides) -> McConfig:
    options = {"runs": 3, "scenario": ScenarioConfig(s=40), "methods": ["LS", "TLS"], "base_seed": 5}
    options.update(overrides)
    return McConfig(**options)


def _without_timing(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.drop(columns=["seconds"])


def test_are_examples():
    assert are(1.1, 1.0) == pytest.approx(0.1)
    assert are(0.9, 1.0) == pytest.approx(0.1)
    assert are(0.00396, 0.00413) == pytest.approx(0.0411622276, rel=1e-8)
    assert are(-2.0, -1.0) == pytest.approx(1.0)


def test_are_zero_truth():
    with pytest.raises(ZeroTruth):
        are(0.1, 0.0)


def test_are_by_parameter():
    errors = are_by_parameter(LineParameters(r=0.011, x=0.1, b=0.2), LineParameters(r=0.01, x=0.1, b=0.25))
    assert errors == pytest.approx({"r": 0.1, "x": 0.0, "b": 0.2})


@pytest.mark.parametrize(
    "name, expected",
    [("ls", "LS"), ("TLS", "TLS"), ("egle", "EGLE_FULL"), ("egle-dep", "EGLE_DEP"), ("Denoise-LS", "DENOISE_LS")],
)
def test_normalize_method(name, expected):
    assert normalize_method(name) == expected


def test_normalize_method_unknown():
    with pytest.raises(ValueError):
        normalize_method("kalman")


def test_initial_guess_distance_bins():
    y = np.array([1.0, -2.0, 3.0, -4.0])
    rng = np.random.default_rng(0)
    for _ in range(50):
        x0 = initial_guess(y, rng, (0.1, 0.2))
        ri = np.abs(x0 - y) / np.abs(y)
        assert np.all(ri >= 0.1 - 1e-12) and np.all(ri <= 0.2 + 1e-12)
    np.testing.assert_array_equal(initial_guess(y, rng, (0.0, 0.0)), y)


def test_run_method_defaults_to_least_squares_start(clean_records, y_true):
    outcome = run_method("cls", clean_records, None)
    assert outcome.method == "CLS"
    np.testing.assert_allclose(outcome.y, y_true, atol=1e-10)
    assert outcome.box_active is False


def test_every_method_exact_without_noise():
    config = McConfig(runs=1, scenario=noise_free_config(s=120), methods=list(METHODS), init_jitter=0.0)
    settings = MethodSettings(egle=EgleConfig(m_max=2, i_max=20), mad=MadConfig(threshold=10.0))
    report = monte_carlo_run(config, settings)
    assert not report.runs.failed.any()
    assert set(report.parameters.method) == set(METHODS)
    assert report.parameters["are"].max() <= 1e-8


def test_monte_carlo_is_reproducible():
    first = monte_carlo_run(_small_mc())
    second = monte_carlo_run(_small_mc())
    pd.testing.assert_frame_equal(_without_timing(first.runs), _without_timing(second.runs))
    pd.testing.assert_frame_equal(first.parameters, second.parameters)


def test_monte_carlo_seed_changes_noise():
    first = monte_carlo_run(_small_mc())
    other = monte_carlo_run(_small_mc(base_seed=6))
    assert not np.allclose(first.parameters["estimate"], other.parameters["estimate"])


def test_process_pool_matches_serial():
    serial = monte_carlo_run(_small_mc(runs=2))
    pooled = monte_carlo_run(_small_mc(runs=2, workers=2))
    pd.testing.assert_frame_equal(_without_timing(serial.runs), _without_timing(pooled.runs))
    pd.testing.assert_frame_equal(serial.parameters, pooled.parameters)


def test_report_aggregates():
    report = monte_carlo_run(_small_mc())
    summary = report.summary_frame()
    assert len(summary) == 6
    assert set(summary.columns) >= {"method", "parameter", "mare", "sdare", "runs", "failures"}
    assert (summary.runs == 3).all()
    ls_r = report.parameters[(report.parameters.method == "LS") & (report.parameters.parameter == "r")]["are"]
    assert report.mare("LS", "r") == pytest.approx(ls_r.mean())
    assert report.median_are("LS", "r") == pytest.approx(ls_r.median())
    row = summary[(summary.method == "LS") & (summary.parameter == "r")].iloc[0]
    assert row.sdare == pytest.approx(np.std(ls_r.to_numpy()))
    ls_runs = report.runs[report.runs.method == "LS"]
    assert report.mare_net("LS") == pytest.approx(ls_runs.are_net.mean())
    assert report.median_net("LS") == pytest.approx(ls_runs.are_net.median())


def test_win_rates_are_paired_shares():
    report = monte_carlo_run(_small_mc())
    a_wins = report.win_rate("LS", "TLS")
    b_wins = report.win_rate("TLS", "LS")
    assert 0.0 <= a_wins <= 1.0
    assert a_wins + b_wins <= 1.0 + 1e-12
    assert set(report.win_rates()) == {"LS<TLS", "TLS<LS"}


def test_failures_are_counted_not_raised():
    scenario = ScenarioConfig(s=30, true_params=LineParamsIn(b=0.0))
    report = monte_carlo_run(_small_mc(runs=2, scenario=scenario, methods=["LS"]))
    assert report.failures == {"LS": 2}
    assert report.runs.failed.all()
    assert "ZeroTruth" in report.runs.error.iloc[0]
    assert math.isnan(report.mare("LS", "r"))
    McReportOut.model_validate(report.to_dict())


def test_report_serializes():
    report = monte_carlo_run(_small_mc(methods=["LS", "EGLE_DEP"]), FAST_SETTINGS)
    payload = McReportOut.model_validate(report.to_dict())
    assert len(payload.metrics) == 6
    assert {row.method for row in payload.net} == {"LS", "EGLE_DEP"}
    assert "m_star" in report.runs.columns


def test_noise_scale_one_reproduces_base_run():
    config = _small_mc(runs=2)
    base = monte_carlo_run(config)
    sweep = sensitivity_noise_levels(config, [1.0, 3.0])
    pd.testing.assert_frame_equal(sweep.reports[0].parameters, base.parameters)
    assert sorted(sweep.table.scale.unique()) == [1.0, 3.0]


def test_noise_scales_must_be_positive():
    with pytest.raises(ValueError):
        sensitivity_noise_levels(_small_mc(), [0.0])


def test_initialization_sweep():
    config = _small_mc(runs=2, methods=["LS"])
    sweep = sensitivity_initialization(config, [(0.0, 0.0), (0.4, 0.5)])
    exact_start = sweep.reports[0].runs
    assert (exact_start.ri_max == 0.0).all()
    assert sweep.divergence_risk == [(0.4, 0.5)]
    assert sweep.reports[1].diverging_runs(DIVERGENCE_RI) == 2
    assert list(sweep.table.columns[:2]) == ["ri_low", "ri_high"]


def test_initialization_sweep_rejects_bad_bins():
    with pytest.raises(ValueError):
        sensitivity_initialization(_small_mc(), [(0.3, 0.1)])


def test_bic_demo_counts():
    report = bic_demo(n=2000, m_max=4, trials=2, seed=1)
    assert sorted(report.selected) == [1, 2, 3, 4]
    assert sum(report.selected.values()) == 2
    assert all(len(trial["bic"]) == 4 for trial in report.trials)


@pytest.mark.slow
def test_least_squares_error_grows_with_noise_scale():
    config = _small_mc(runs=20, scenario=ScenarioConfig(s=100), methods=["LS"])
    sweep = sensitivity_noise_levels(config, [1.0, 5.0])
    assert sweep.reports[1].mare_net("LS") > sweep.reports[0].mare_net("LS")


@pytest.mark.slow
def test_default_comparison_completes():
    config = McConfig(runs=3, scenario=ScenarioConfig(s=100), base_seed=2)
    report = monte_carlo_run(config, MethodSettings(egle=EgleConfig(m_max=3, i_max=20)))
    assert len(report.runs) == 9
    assert set(report.failures) == {"LS", "TLS", "EGLE_FULL"}
    McReportOut.model_validate(report.to_dict())


def test_win_rates_of_methods_that_always_fail_serialize_as_null():
    scenario = ScenarioConfig(s=30, true_params=LineParamsIn(b=0.0))
    report = monte_carlo_run(_small_mc(runs=2, scenario=scenario))
    assert report.failures == {"LS": 2, "TLS": 2}
    payload = McReportOut.model_validate(report.to_dict())
    assert payload.win_rates == {"LS<TLS": None, "TLS<LS": None}
