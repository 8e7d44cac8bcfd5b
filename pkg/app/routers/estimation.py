from __future__ import annotations

import io
from typing import Optional

from fastapi import APIRouter, File, Form, HTTPException, UploadFile

from .. import services
from ..errors import EstimationError
from ..storage import read_measurements, select_window

router = APIRouter(prefix="/estimation", tags=["Estimation"])


def _parse_x0(text: Optional[str]):
    if not text:
        return None
    try:
        return [float(item) for item in text.split(",")]
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=f"x0 must be comma-separated numbers: {text!r}") from exc


@router.post("")
def estimate(
    file: UploadFile = File(...),
    method: str = Form(default="EGLE_FULL"),
    x0: Optional[str] = Form(default=None),
    t_start: Optional[int] = Form(default=None),
    t_end: Optional[int] = Form(default=None),
):
    try:
        content = file.file.read().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise HTTPException(
            status_code=400, detail=f"measurement file is not valid UTF-8 (byte {exc.start}: {exc.reason})"
        ) from exc
    try:
        records = read_measurements(io.StringIO(content))
        if t_start is not None or t_end is not None:
            records = select_window(records, t_start, t_end)
        return services.estimate(records, method, x0=_parse_x0(x0))
    except EstimationError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
