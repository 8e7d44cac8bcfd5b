from __future__ import annotations

from fastapi import APIRouter, HTTPException

from ...errors import EstimationError
from ...harness import MethodSettings, bic_demo, monte_carlo_run
from ...schemas import BicDemoOut, BicDemoRequest, McReportOut, McRequest

router = APIRouter()


def request_settings(payload: McRequest) -> MethodSettings:
    return MethodSettings(egle=payload.egle, mtee=payload.mtee, mad=payload.mad)


@router.post("/mc", response_model=McReportOut)
def run_monte_carlo(payload: McRequest):
    try:
        report = monte_carlo_run(payload.mc, request_settings(payload))
    except EstimationError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return report.to_dict()


@router.post("/bic-demo", response_model=BicDemoOut)
def run_bic_demo(payload: BicDemoRequest):
    report = bic_demo(
        n=payload.n,
        m_max=payload.m_max,
        trials=payload.trials,
        seed=payload.seed,
        em=payload.em,
        spec=payload.noise.to_spec(),
    )
    return report.to_dict()
