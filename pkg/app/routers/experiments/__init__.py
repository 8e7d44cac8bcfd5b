from fastapi import APIRouter

from . import monte_carlo, sensitivity

router = APIRouter(prefix="/experiments", tags=["Experiments"])
router.include_router(monte_carlo.router)
router.include_router(sensitivity.router)

__all__ = ["router"]
