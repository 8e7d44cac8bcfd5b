from __future__ import annotations

import io
import json

import numpy as np
import pytest

from app.errors import MeasurementParseError
from app.models import LineParameters
from app.schemas import ScenarioConfig
from app.storage import (
    ground_truth_payload,
    measurements_frame,
    read_ground_truth,
    read_measurements,
    select_window,
    write_frame,
    write_ground_truth,
    write_measurements,
)
from app.tlpe import generate_scenario, two_component_spec

from .factories import noise_free_config

HEADER = "t,Vp_r,Vp_i,Vq_r,Vq_i,Ip_r,Ip_i,Iq_r,Iq_i\n"


def test_measurement_csv_round_trip(tmp_path, clean_records):
    path = write_measurements(clean_records, tmp_path / "measurements.csv")
    assert read_measurements(path) == clean_records


def test_noisy_measurements_read_back_bit_exact(tmp_path):
    records = generate_scenario(ScenarioConfig(s=60, seed=11)).noisy.records
    path = write_measurements(records, tmp_path / "measurements.csv")
    loaded = read_measurements(path)
    mismatched = [index for index, (a, b) in enumerate(zip(loaded, records)) if a != b]
    assert mismatched == []


def test_written_frame_reads_back_bit_exact(tmp_path):
    records = generate_scenario(ScenarioConfig(s=40, seed=5)).noisy.records
    path = write_frame(measurements_frame(records), tmp_path / "frame.csv")
    assert read_measurements(path) == records


def test_read_from_text_stream():
    records = read_measurements(io.StringIO(HEADER + "0,1,0,0.9,0,0.5,0,-0.5,0\n"))
    assert len(records) == 1
    assert records[0].vq == complex(0.9, 0.0)
    assert records[0].iq == complex(-0.5, 0.0)


def test_bad_value_reports_row_and_column():
    text = HEADER + "0,1,0,0.9,0,0.5,0,-0.5,0\n1,1,0,abc,0,0.5,0,-0.5,0\n"
    with pytest.raises(MeasurementParseError) as excinfo:
        read_measurements(io.StringIO(text))
    assert excinfo.value.row == 2
    assert excinfo.value.column == "Vq_r"
    assert "row 2" in str(excinfo.value) and "Vq_r" in str(excinfo.value)


def test_non_finite_value_rejected():
    with pytest.raises(MeasurementParseError) as excinfo:
        read_measurements(io.StringIO(HEADER + "0,1,0,0.9,0,inf,0,-0.5,0\n"))
    assert excinfo.value.column == "Ip_r"


def test_missing_column():
    with pytest.raises(MeasurementParseError) as excinfo:
        read_measurements(io.StringIO("t,Vp_r\n0,1\n"))
    assert excinfo.value.column == "Vp_i"


def test_fractional_time_index():
    with pytest.raises(MeasurementParseError) as excinfo:
        read_measurements(io.StringIO(HEADER + "0.5,1,0,0.9,0,0.5,0,-0.5,0\n"))
    assert excinfo.value.column == "t"


def test_header_only():
    with pytest.raises(MeasurementParseError):
        read_measurements(io.StringIO(HEADER))


def test_select_window(clean_records):
    window = select_window(clean_records, 10, 19)
    assert [record.t for record in window] == list(range(10, 20))
    assert len(select_window(clean_records, t_end=4)) == 5
    with pytest.raises(ValueError):
        select_window(clean_records, 500, 600)


def test_ground_truth_round_trip(tmp_path):
    scenario = generate_scenario(noise_free_config(s=5).model_copy(update={"seed": 3}))
    spec = two_component_spec()
    payload = ground_truth_payload(scenario.true_params, spec, spec, 3, scenario.noisy)
    path = write_ground_truth(payload, tmp_path / "truth.json")
    loaded = read_ground_truth(path)
    assert loaded["line_params"] == scenario.true_params
    assert loaded["seed"] == 3
    np.testing.assert_allclose(loaded["y"], scenario.true_y.as_array())
    assert len(loaded["current_noise"]) == 5


def test_ground_truth_without_parameters(tmp_path):
    path = tmp_path / "truth.json"
    path.write_text(json.dumps({"seed": 1}), encoding="utf-8")
    with pytest.raises(ValueError):
        read_ground_truth(path)


def test_ground_truth_payload_is_json_clean():
    payload = ground_truth_payload(LineParameters(0.01, 0.1, 0.2), two_component_spec(), two_component_spec(), 0)
    assert json.loads(json.dumps(payload, allow_nan=False))["line_params"] == {"r": 0.01, "x": 0.1, "b": 0.2}
