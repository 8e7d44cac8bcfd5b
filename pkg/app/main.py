from __future__ import annotations

from fastapi import FastAPI

from . import __version__
from .routers import estimation, experiments, overview, scenarios

app = FastAPI(title="Line Parameter Estimation Service", version=__version__)

app.include_router(overview.router)
app.include_router(scenarios.router)
app.include_router(estimation.router)
app.include_router(experiments.router)
