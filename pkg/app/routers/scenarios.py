from __future__ import annotations

from fastapi import APIRouter

from .. import services
from ..harness import frame_records
from ..schemas import ScenarioConfig

router = APIRouter(prefix="/scenarios", tags=["Scenarios"])


@router.post("/generate")
def generate(payload: ScenarioConfig):
    generated = services.generate(payload)
    return {
        "records": frame_records(generated["noisy"]),
        "clean": frame_records(generated["clean"]),
        "ground_truth": generated["ground_truth"],
    }
