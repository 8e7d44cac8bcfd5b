from __future__ import annotations

import json

import pandas as pd
import pytest

from app.cli import EXIT_ESTIMATION, EXIT_INPUT, EXIT_OK, main
from app.config import load_config
from app.schemas import ScenarioConfig
from app.storage import read_measurements
from app.tlpe import generate_scenario

NOISE_FREE = """
[scenario]
s = 60

[noise_c]
weights = [1.0]
means = [0.0]
stds = [0.0]

[noise_D]
weights = [1.0]
means = [0.0]
stds = [0.0]

[egle]
m_max = 2
i_max = 10
"""

SMALL = """
[scenario]
s = 40

[egle]
m_max = 2
i_max = 10
"""


@pytest.fixture
def noise_free_config(tmp_path):
    path = tmp_path / "noise_free.toml"
    path.write_text(NOISE_FREE, encoding="utf-8")
    return path


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL, encoding="utf-8")
    return path


def test_generate_writes_measurements_and_truth(tmp_path):
    out = tmp_path / "out"
    assert main(["generate", "--out-dir", str(out), "--s", "25", "--seed", "2"]) == EXIT_OK
    frame = pd.read_csv(out / "measurements.csv")
    assert len(frame) == 25
    assert list(frame.columns) == ["t", "Vp_r", "Vp_i", "Vq_r", "Vq_i", "Ip_r", "Ip_i", "Iq_r", "Iq_i"]
    assert (out / "clean.csv").exists()
    truth = json.loads((out / "ground_truth.json").read_text(encoding="utf-8"))
    assert truth["seed"] == 2
    assert truth["line_params"]["b"] == 0.159


def test_generated_csv_reproduces_the_seeded_scenario(tmp_path):
    out = tmp_path / "out"
    assert main(["generate", "--out-dir", str(out), "--s", "25", "--seed", "2"]) == EXIT_OK
    scenario = load_config().scenario_config(seed=2)
    scenario = ScenarioConfig.model_validate({**scenario.model_dump(), "s": 25})
    assert read_measurements(out / "measurements.csv") == generate_scenario(scenario).noisy.records


def test_estimate_recovers_noise_free_line(tmp_path, noise_free_config):
    out = tmp_path / "out"
    assert main(["generate", "--config", str(noise_free_config), "--out-dir", str(out)]) == EXIT_OK
    code = main(
        ["estimate", str(out / "measurements.csv"), "--method", "ls", "--config", str(noise_free_config),
         "--out-dir", str(out)]
    )
    assert code == EXIT_OK
    report = json.loads((out / "estimate_ls.json").read_text(encoding="utf-8"))
    assert report["method"] == "LS"
    assert report["schema_version"] == "1.0"
    assert max(report["are"].values()) <= 1e-8


def test_estimate_with_egle_and_csv_output(tmp_path, small_config):
    out = tmp_path / "out"
    main(["generate", "--config", str(small_config), "--out-dir", str(out)])
    code = main(
        ["estimate", str(out / "measurements.csv"), "--method", "egle", "--config", str(small_config),
         "--out-dir", str(out), "--format", "csv", "--t-start", "5", "--t-end", "34"]
    )
    assert code == EXIT_OK
    frame = pd.read_csv(out / "estimate_egle_full.csv")
    assert frame.parameter.tolist() == ["r", "x", "b"]
    assert frame["are"].notna().all()


def test_estimate_json_carries_egle_report(tmp_path, small_config):
    out = tmp_path / "out"
    main(["generate", "--config", str(small_config), "--out-dir", str(out)])
    assert main(["estimate", str(out / "measurements.csv"), "--method", "egle_dep",
                 "--config", str(small_config), "--out-dir", str(out)]) == EXIT_OK
    report = json.loads((out / "estimate_egle_dep.json").read_text(encoding="utf-8"))
    assert report["egle"]["variant"] == "dependent"
    assert [m for m, _ in report["egle"]["bic_trace"]] == [1, 2]


def test_malformed_csv_is_an_input_error(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("t,Vp_r,Vp_i,Vq_r,Vq_i,Ip_r,Ip_i,Iq_r,Iq_i\n0,1,0,1,0,1,0,-1,0\n1,1,0,x,0,1,0,-1,0\n",
                    encoding="utf-8")
    assert main(["estimate", str(path), "--out-dir", str(tmp_path)]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "row 2" in err and "Vq_r" in err


def test_degenerate_data_is_an_estimation_error(tmp_path, capsys):
    path = tmp_path / "zeros.csv"
    path.write_text("t,Vp_r,Vp_i,Vq_r,Vq_i,Ip_r,Ip_i,Iq_r,Iq_i\n0,0,0,0,0,0,0,0,0\n1,0,0,0,0,0,0,0,0\n",
                    encoding="utf-8")
    assert main(["estimate", str(path), "--method", "ls", "--out-dir", str(tmp_path)]) == EXIT_ESTIMATION
    assert "estimation failed" in capsys.readouterr().err


def test_bad_config_is_an_input_error(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[egle]\nm_max = 0\n", encoding="utf-8")
    assert main(["schema", "--config", str(path)]) == EXIT_INPUT


def test_usage_error_is_an_input_error():
    assert main(["frobnicate"]) == EXIT_INPUT


def test_monte_carlo_outputs(tmp_path, small_config):
    out = tmp_path / "mc"
    code = main(["mc", "--runs", "2", "--methods", "ls,tls", "--config", str(small_config), "--out-dir", str(out)])
    assert code == EXIT_OK
    summary = pd.read_csv(out / "mc_summary.csv")
    assert len(summary) == 6
    report = json.loads((out / "mc_report.json").read_text(encoding="utf-8"))
    assert len(report["runs"]) == 4


def test_monte_carlo_csv_runs(tmp_path, small_config):
    out = tmp_path / "mc"
    main(["mc", "--runs", "2", "--methods", "ls", "--config", str(small_config), "--out-dir", str(out),
          "--format", "csv", "--seed", "3"])
    runs = pd.read_csv(out / "mc_runs.csv")
    assert runs.run.tolist() == [0, 1]


def test_sweeps(tmp_path, small_config):
    out = tmp_path / "sweeps"
    common = ["--runs", "1", "--methods", "ls", "--config", str(small_config), "--out-dir", str(out)]
    assert main(["sweep-noise", "--scales", "1,2", *common]) == EXIT_OK
    noise = json.loads((out / "noise_sweep.json").read_text(encoding="utf-8"))
    assert noise["scales"] == [1.0, 2.0]
    assert main(["sweep-init", "--bins", "0:0.1,0.4:0.5", *common]) == EXIT_OK
    init = json.loads((out / "init_sweep.json").read_text(encoding="utf-8"))
    assert init["divergence_risk"] == [[0.4, 0.5]]


def test_bic_demo(tmp_path):
    out = tmp_path / "bic"
    assert main(["bic-demo", "--n", "500", "--m-max", "3", "--trials", "1", "--out-dir", str(out)]) == EXIT_OK
    report = json.loads((out / "bic_demo.json").read_text(encoding="utf-8"))
    assert sum(report["selected"].values()) == 1


def test_schema_command(capsys):
    assert main(["schema"]) == EXIT_OK
    schema = json.loads(capsys.readouterr().out)
    assert schema["version"] == "1.0"
    assert "mc_report" in schema and "method_report" in schema


def test_monte_carlo_with_every_run_failing_still_writes_report(tmp_path):
    path = tmp_path / "zero_b.toml"
    path.write_text("[scenario]\ns = 30\nb = 0.0\n", encoding="utf-8")
    out = tmp_path / "mc"
    code = main(["mc", "--runs", "2", "--methods", "ls,tls", "--config", str(path), "--out-dir", str(out)])
    assert code == EXIT_OK
    report = json.loads((out / "mc_report.json").read_text(encoding="utf-8"))
    assert report["win_rates"] == {"LS<TLS": None, "TLS<LS": None}
