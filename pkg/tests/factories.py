from __future__ import annotations

from app.schemas import GmmSpecIn, ScenarioConfig


def zero_noise() -> GmmSpecIn:
    return GmmSpecIn(weights=[1.0], means=[0.0], stds=[0.0])


def noise_free_config(s: int = 50, seed: int = 0, **overrides) -> ScenarioConfig:
    return ScenarioConfig(s=s, seed=seed, noise_c=zero_noise(), noise_D=zero_noise(), **overrides)
