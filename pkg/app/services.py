from __future__ import annotations

import logging
from typing import Dict, Optional, Sequence

import numpy as np

from .harness import MethodSettings, are_by_parameter, normalize_method, run_method
from .models import LineParameters, PhasorRecord
from .schemas import AppConfig, MethodReportOut, ScenarioConfig
from .storage import ground_truth_payload, measurements_frame
from .tlpe import build_system, generate_scenario, line_params_to_y

logger = logging.getLogger(__name__)


def method_settings(config: AppConfig) -> MethodSettings:
    return MethodSettings(egle=config.egle, mtee=config.mtee, mad=config.mad)


def default_x0(config: AppConfig) -> np.ndarray:
    """Initial guess: ``egle.x0`` if set, else the configured line parameters."""
    if config.egle.x0 is not None:
        return np.asarray(config.egle.x0, dtype=float)
    section = config.scenario
    return line_params_to_y(LineParameters(r=section.r, x=section.x, b=section.b)).as_array()


def estimate(
    records: Sequence[PhasorRecord],
    method: str,
    config: Optional[AppConfig] = None,
    *,
    x0=None,
    truth: Optional[LineParameters] = None,
) -> Dict:
    """Run one estimator on measurement records and build its JSON report."""
    config = config or AppConfig()
    method = normalize_method(method)
    x_start = np.asarray(x0, dtype=float) if x0 is not None else default_x0(config)
    if x_start.shape != (4,):
        raise ValueError("x0 must hold the four values Y1..Y4")
    system = build_system(records)
    logger.info("estimating with %s on %d instants", method, len(records))
    outcome = run_method(method, records, x_start, method_settings(config), system=system)
    params = outcome.line_params
    payload = {
        "method": method,
        "y_hat": outcome.y.tolist(),
        "line_params": params.as_dict(),
        "are": are_by_parameter(params, truth) if truth is not None else None,
        "converged": outcome.converged,
        "iterations": outcome.iterations,
        "box_active": outcome.box_active,
        "egle": outcome.egle.to_dict() if outcome.egle is not None else None,
        "config": {
            "x0": x_start.tolist(),
            "egle": config.egle.model_dump(mode="json"),
            "mtee": config.mtee.model_dump(mode="json"),
            "mad": config.mad.model_dump(mode="json"),
        },
    }
    return MethodReportOut.model_validate(payload).model_dump(mode="json")


def generate(scenario: ScenarioConfig) -> Dict:
    """Noisy and clean records plus the ground truth of one synthetic scenario."""
    generated = generate_scenario(scenario)
    truth = ground_truth_payload(
        generated.true_params,
        scenario.noise_c.to_spec(),
        scenario.noise_D.to_spec(),
        scenario.seed,
        generated.noisy,
    )
    return {
        "scenario": generated,
        "noisy": measurements_frame(generated.noisy.records),
        "clean": measurements_frame(generated.clean),
        "ground_truth": truth,
    }
