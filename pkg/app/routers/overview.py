from __future__ import annotations

from fastapi import APIRouter

from .. import __version__
from ..schemas import METHODS, REPORT_SCHEMA_VERSION, report_json_schema

router = APIRouter(tags=["Overview"])


@router.get("/")
def overview():
    return {
        "service": "line parameter estimation",
        "version": __version__,
        "report_schema_version": REPORT_SCHEMA_VERSION,
        "methods": list(METHODS),
    }


@router.get("/schema")
def schema():
    return report_json_schema()
