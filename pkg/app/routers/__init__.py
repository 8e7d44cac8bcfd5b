from . import estimation, experiments, overview, scenarios

__all__ = [
    "estimation",
    "experiments",
    "overview",
    "scenarios",
]
