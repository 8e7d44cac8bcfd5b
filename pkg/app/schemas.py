from __future__ import annotations

from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .models import GmmSpec, LineParameters

REPORT_SCHEMA_VERSION = "1.0"

METHODS = ("LS", "TLS", "CLS", "CTLS", "EGLE_DEP", "EGLE_FULL", "MTEE", "DENOISE_LS")
MethodName = Literal["LS", "TLS", "CLS", "CTLS", "EGLE_DEP", "EGLE_FULL", "MTEE", "DENOISE_LS"]


class GmmSpecIn(BaseModel):
    """Noise spec as written in config files; std or variance per component."""

    model_config = ConfigDict(extra="forbid")

    weights: List[float]
    means: List[float]
    stds: Optional[List[float]] = None
    variances: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_shape(self) -> "GmmSpecIn":
        if (self.stds is None) == (self.variances is None):
            raise ValueError("give exactly one of 'stds' or 'variances'")
        spread = self.stds if self.stds is not None else self.variances
        if not (len(self.weights) == len(self.means) == len(spread)) or not self.weights:
            raise ValueError("weights, means and stds/variances must have the same positive length")
        if any(value < 0 for value in spread):
            raise ValueError("stds/variances must be non-negative")
        return self

    def to_spec(self) -> GmmSpec:
        variances = self.variances if self.variances is not None else [s**2 for s in self.stds]
        return GmmSpec(self.weights, self.means, variances)

    @classmethod
    def from_spec(cls, spec: GmmSpec) -> "GmmSpecIn":
        return cls(weights=spec.weights.tolist(), means=spec.means.tolist(), variances=spec.variances.tolist())


def two_component_noise() -> GmmSpecIn:
    return GmmSpecIn(weights=[0.3, 0.7], means=[0.0, 0.005], stds=[0.0015, 0.0015])


def four_component_noise() -> GmmSpecIn:
    return GmmSpecIn(
        weights=[0.1, 0.2, 0.5, 0.2],
        means=[-0.002, 0.0, 0.005, 0.008],
        stds=[0.001, 0.001, 0.001, 0.001],
    )


class EmConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_iter: int = Field(default=500, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    variance_floor: float = Field(default=1e-12, gt=0)
    init_strategy: Literal["quantile", "random"] = "quantile"
    seed: int = 0


class NewtonConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k_max: int = Field(default=50, ge=1)
    tol_x: float = Field(default=1e-10, gt=0)
    tol_f: float = Field(default=1e-9, gt=0)
    jacobian_mode: Literal["analytic", "finite-difference"] = "analytic"
    fd_step: float = Field(default=1e-6, gt=0)
    max_halvings: int = Field(default=20, ge=0)
    cond_cap: float = Field(default=1e14, gt=1)


class EgleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    m_max: int = Field(default=10, ge=1)
    i_max: int = Field(default=100, ge=1)
    eps0: Optional[float] = Field(default=None, gt=0)
    eps1: float = Field(default=1e-7, gt=0)
    newton: NewtonConfig = Field(default_factory=NewtonConfig)
    em: EmConfig = Field(default_factory=EmConfig)
    x0: Optional[List[float]] = None
    init_variance_c: Optional[float] = Field(default=None, gt=0)
    init_variance_D: Optional[float] = Field(default=None, gt=0)
    warm_start: bool = True
    # overall noise mean; None fits it in the dependent variant and holds it at zero in the full one
    fit_location: Optional[bool] = None
    cond_cap: float = Field(default=1e12, gt=1)
    workers: int = Field(default=1, ge=1)


class MteeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kernel_sigma: Optional[float] = Field(default=None, gt=0)
    step_size: float = Field(default=1e-3, gt=0)
    max_iter: int = Field(default=200, ge=1)
    tol: float = Field(default=1e-10, gt=0)
    parzen_n: Optional[int] = Field(default=None, ge=1)
    backtracking: bool = True
    max_halvings: int = Field(default=30, ge=0)


class MadConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    window: int = Field(default=600, ge=3)
    threshold: float = Field(default=3.0, gt=0)
    replacement: Literal["median", "interpolate"] = "median"
    max_passes: int = Field(default=20, ge=1)


class LineParamsIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    r: float = Field(default=0.00904, ge=0)
    x: float = 0.0925
    b: float = Field(default=0.159, ge=0)

    @field_validator("x")
    @classmethod
    def _nonzero_reactance(cls, value: float) -> float:
        if value == 0:
            raise ValueError("reactance must be non-zero for a physical line")
        return value

    def to_params(self) -> LineParameters:
        return LineParameters(r=self.r, x=self.x, b=self.b)


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    true_params: LineParamsIn = Field(default_factory=LineParamsIn)
    s: int = Field(default=250, ge=1)
    loading_variation: float = Field(default=0.40, ge=0)
    base_load: float = Field(default=1.0, gt=0)
    power_factor: float = Field(default=0.95, gt=0, le=1)
    voltage_spread: float = Field(default=0.02, ge=0, lt=0.5)
    angle_spread_deg: float = Field(default=5.0, ge=0)
    noise_c: GmmSpecIn = Field(default_factory=two_component_noise)
    noise_D: GmmSpecIn = Field(default_factory=two_component_noise)
    seed: int = 0


class McConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    runs: int = Field(default=100, ge=1)
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    methods: List[MethodName] = Field(default_factory=lambda: ["LS", "TLS", "EGLE_FULL"])
    init_jitter: float = Field(default=0.30, ge=0)
    ri_range: Optional[Tuple[float, float]] = None
    base_seed: int = 0
    workers: int = Field(default=1, ge=1)

    @field_validator("methods")
    @classmethod
    def _unique_methods(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one method is required")
        return list(dict.fromkeys(value))

    @field_validator("ri_range")
    @classmethod
    def _valid_range(cls, value):
        if value is not None and not (0 <= value[0] <= value[1]):
            raise ValueError("ri_range must satisfy 0 <= low <= high")
        return value


class ScenarioSection(BaseModel):
    """[scenario] section: line parameters and loading profile."""

    model_config = ConfigDict(extra="forbid")

    r: float = Field(default=0.00904, ge=0)
    x: float = 0.0925
    b: float = Field(default=0.159, ge=0)
    s: int = Field(default=250, ge=1)
    loading_variation: float = Field(default=0.40, ge=0)
    base_load: float = Field(default=1.0, gt=0)
    power_factor: float = Field(default=0.95, gt=0, le=1)
    voltage_spread: float = Field(default=0.02, ge=0, lt=0.5)
    angle_spread_deg: float = Field(default=5.0, ge=0)
    seed: int = 0


class McSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    runs: int = Field(default=100, ge=1)
    methods: List[MethodName] = Field(default_factory=lambda: ["LS", "TLS", "EGLE_FULL"])
    init_jitter: float = Field(default=0.30, ge=0)
    base_seed: int = 0
    workers: int = Field(default=1, ge=1)


class AppConfig(BaseModel):
    """Whole config file."""

    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    noise_c: GmmSpecIn = Field(default_factory=two_component_noise)
    noise_D: GmmSpecIn = Field(default_factory=two_component_noise)
    egle: EgleConfig = Field(default_factory=EgleConfig)
    mtee: MteeConfig = Field(default_factory=MteeConfig)
    mad: MadConfig = Field(default_factory=MadConfig)
    mc: McSection = Field(default_factory=McSection)

    def scenario_config(self, *, seed: Optional[int] = None) -> ScenarioConfig:
        section = self.scenario
        return ScenarioConfig(
            true_params=LineParamsIn(r=section.r, x=section.x, b=section.b),
            s=section.s,
            loading_variation=section.loading_variation,
            base_load=section.base_load,
            power_factor=section.power_factor,
            voltage_spread=section.voltage_spread,
            angle_spread_deg=section.angle_spread_deg,
            noise_c=self.noise_c,
            noise_D=self.noise_D,
            seed=section.seed if seed is None else seed,
        )

    def mc_config(self, *, seed: Optional[int] = None, runs: Optional[int] = None,
                  methods: Optional[List[str]] = None) -> McConfig:
        section = self.mc
        return McConfig(
            runs=section.runs if runs is None else runs,
            scenario=self.scenario_config(),
            methods=section.methods if methods is None else methods,
            init_jitter=section.init_jitter,
            base_seed=section.base_seed if seed is None else seed,
            workers=section.workers,
        )


# Report payloads ---------------------------------------------------------


class MetricRow(BaseModel):
    method: str
    parameter: str
    mare: Optional[float]
    sdare: Optional[float]
    runs: int
    failures: int


class NetMetricRow(BaseModel):
    method: str
    mare_net: Optional[float]
    sdare_net: Optional[float]
    median_net: Optional[float]
    failures: int
    non_converged: int


class PerMOut(BaseModel):
    m: int
    bic: Optional[float]
    x: Optional[List[float]]
    converged: bool
    outer_iterations: int
    newton_iterations: int
    trace: List[List[float]]
    noise_c: Optional[Dict[str, List[float]]]
    noise_D: Optional[Dict[str, List[float]]]
    error: Optional[str]


class EstimationReportOut(BaseModel):
    schema_version: Literal["1.0"] = REPORT_SCHEMA_VERSION
    variant: Literal["dependent", "full"]
    x_hat: List[float]
    m_star: int
    bic_trace: List[Tuple[int, Optional[float]]]
    per_m: List[PerMOut]
    noise_c: Dict[str, List[float]]
    noise_D: Optional[Dict[str, List[float]]]
    converged: bool
    outer_iterations: int
    timing_s: float


class MethodReportOut(BaseModel):
    schema_version: Literal["1.0"] = REPORT_SCHEMA_VERSION
    method: str
    y_hat: List[float]
    line_params: Dict[str, float]
    are: Optional[Dict[str, float]] = None
    converged: bool = True
    iterations: Optional[int] = None
    box_active: Optional[bool] = None
    egle: Optional[EstimationReportOut] = None
    config: Dict


class McReportOut(BaseModel):
    schema_version: Literal["1.0"] = REPORT_SCHEMA_VERSION
    config: Dict
    metrics: List[MetricRow]
    net: List[NetMetricRow]
    win_rates: Dict[str, Optional[float]]
    failures: Dict[str, int]
    runs: List[Dict]


class NoiseSweepOut(BaseModel):
    schema_version: Literal["1.0"] = REPORT_SCHEMA_VERSION
    scales: List[float]
    table: List[Dict]
    reports: List[McReportOut]


class InitSweepOut(BaseModel):
    schema_version: Literal["1.0"] = REPORT_SCHEMA_VERSION
    bins: List[Tuple[float, float]]
    table: List[Dict]
    divergence_risk: List[Tuple[float, float]]
    reports: List[McReportOut]


class BicDemoOut(BaseModel):
    schema_version: Literal["1.0"] = REPORT_SCHEMA_VERSION
    n: int
    m_max: int
    trials: List[Dict]
    selected: Dict[int, int]


class McRequest(BaseModel):
    mc: McConfig = Field(default_factory=McConfig)
    egle: EgleConfig = Field(default_factory=EgleConfig)
    mtee: MteeConfig = Field(default_factory=MteeConfig)
    mad: MadConfig = Field(default_factory=MadConfig)


class NoiseSweepRequest(McRequest):
    scales: List[float] = Field(default_factory=lambda: [1.0, 2.0, 5.0, 10.0])

    @field_validator("scales")
    @classmethod
    def _positive(cls, value: List[float]) -> List[float]:
        if not value or any(scale <= 0 for scale in value):
            raise ValueError("scales must be positive")
        return value


class InitSweepRequest(McRequest):
    bins: List[Tuple[float, float]] = Field(default_factory=lambda: [(0.0, 0.1), (0.1, 0.2), (0.2, 0.3)])


class BicDemoRequest(BaseModel):
    n: int = Field(default=5000, ge=2)
    m_max: int = Field(default=10, ge=1)
    trials: int = Field(default=10, ge=1)
    seed: int = 0
    noise: GmmSpecIn = Field(default_factory=four_component_noise)
    em: EmConfig = Field(default_factory=EmConfig)


def report_json_schema() -> Dict[str, Dict]:
    return {
        "version": REPORT_SCHEMA_VERSION,
        "method_report": MethodReportOut.model_json_schema(),
        "mc_report": McReportOut.model_json_schema(),
        "noise_sweep": NoiseSweepOut.model_json_schema(),
        "init_sweep": InitSweepOut.model_json_schema(),
        "bic_demo": BicDemoOut.model_json_schema(),
    }
