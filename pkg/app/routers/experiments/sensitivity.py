from __future__ import annotations

from fastapi import APIRouter, HTTPException

from ...errors import EstimationError
from ...harness import sensitivity_initialization, sensitivity_noise_levels
from ...schemas import InitSweepOut, InitSweepRequest, NoiseSweepOut, NoiseSweepRequest
from .monte_carlo import request_settings

router = APIRouter()


@router.post("/sweep-noise", response_model=NoiseSweepOut)
def sweep_noise(payload: NoiseSweepRequest):
    try:
        report = sensitivity_noise_levels(payload.mc, payload.scales, request_settings(payload))
    except EstimationError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return report.to_dict()


@router.post("/sweep-init", response_model=InitSweepOut)
def sweep_init(payload: InitSweepRequest):
    try:
        report = sensitivity_initialization(payload.mc, payload.bins, request_settings(payload))
    except (EstimationError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return report.to_dict()
