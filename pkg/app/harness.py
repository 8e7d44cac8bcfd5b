from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import gmm_em
from .baselines import denoise_then_ls, mtee_estimate
from .egle import EstimationReport, egle_dependent, egle_full
from .errors import EstimationError, ZeroTruth
from .estimators import constrained_ls, constrained_tls, ls_estimate, tls_estimate
from .models import GmmSpec, LineParameters, PhasorRecord, RegressionSystem
from .schemas import (
    METHODS,
    EgleConfig,
    EmConfig,
    GmmSpecIn,
    MadConfig,
    McConfig,
    MteeConfig,
    four_component_noise,
)
from .tlpe import build_system, inject_noise, line_params_to_y, recover_line_params, simulate_measurements

logger = logging.getLogger(__name__)

PARAMETERS = ("r", "x", "b")
DIVERGENCE_RI = 0.4

METHOD_ALIASES = {
    "ls": "LS",
    "tls": "TLS",
    "cls": "CLS",
    "ctls": "CTLS",
    "egle": "EGLE_FULL",
    "egle_full": "EGLE_FULL",
    "egle_dep": "EGLE_DEP",
    "egle_dependent": "EGLE_DEP",
    "mtee": "MTEE",
    "denoise": "DENOISE_LS",
    "denoise_ls": "DENOISE_LS",
}


def normalize_method(name: str) -> str:
    key = name.strip()
    if key.upper() in METHODS:
        return key.upper()
    try:
        return METHOD_ALIASES[key.lower().replace("-", "_")]
    except KeyError:
        raise ValueError(f"unknown method '{name}'; choose from {', '.join(METHODS)}") from None


def are(x_est: float, x_true: float) -> float:
    """Absolute relative error |x_est - x_true| / |x_true|."""
    if x_true == 0:
        raise ZeroTruth("relative error is undefined for a zero true value")
    return abs(x_est - x_true) / abs(x_true)


def are_by_parameter(estimate: LineParameters, truth: LineParameters) -> Dict[str, float]:
    return {name: are(getattr(estimate, name), getattr(truth, name)) for name in PARAMETERS}


# Method registry -----------------------------------------------------------


@dataclass(frozen=True)
class MethodSettings:
    egle: EgleConfig = field(default_factory=EgleConfig)
    mtee: MteeConfig = field(default_factory=MteeConfig)
    mad: MadConfig = field(default_factory=MadConfig)


@dataclass(frozen=True, eq=False)
class MethodOutcome:
    method: str
    y: np.ndarray
    converged: bool = True
    iterations: Optional[int] = None
    box_active: Optional[bool] = None
    egle: Optional[EstimationReport] = None

    @property
    def line_params(self) -> LineParameters:
        return recover_line_params(self.y)


MethodRunner = Callable[[RegressionSystem, Sequence[PhasorRecord], np.ndarray, MethodSettings], MethodOutcome]


def _run_ls(system, records, x0, settings):
    return MethodOutcome("LS", ls_estimate(system))


def _run_tls(system, records, x0, settings):
    return MethodOutcome("TLS", tls_estimate(system))


def _run_cls(system, records, x0, settings):
    result = constrained_ls(system, x0)
    return MethodOutcome("CLS", result.x, box_active=result.box_active)


def _run_ctls(system, records, x0, settings):
    result = constrained_tls(system, x0)
    return MethodOutcome("CTLS", result.x, box_active=result.box_active)


def _run_egle_dep(system, records, x0, settings):
    report = egle_dependent(system, settings.egle, x0=x0)
    return MethodOutcome("EGLE_DEP", report.x_hat, report.converged, report.outer_iterations, egle=report)


def _run_egle_full(system, records, x0, settings):
    report = egle_full(system, settings.egle, x0=x0)
    return MethodOutcome("EGLE_FULL", report.x_hat, report.converged, report.outer_iterations, egle=report)


def _run_mtee(system, records, x0, settings):
    result = mtee_estimate(system, x0, settings.mtee)
    return MethodOutcome("MTEE", result.x, result.converged, result.iterations)


def _run_denoise_ls(system, records, x0, settings):
    return MethodOutcome("DENOISE_LS", denoise_then_ls(records, settings.mad))


METHOD_RUNNERS: Dict[str, MethodRunner] = {
    "LS": _run_ls,
    "TLS": _run_tls,
    "CLS": _run_cls,
    "CTLS": _run_ctls,
    "EGLE_DEP": _run_egle_dep,
    "EGLE_FULL": _run_egle_full,
    "MTEE": _run_mtee,
    "DENOISE_LS": _run_denoise_ls,
}


def run_method(
    method: str,
    records: Sequence[PhasorRecord],
    x0,
    settings: Optional[MethodSettings] = None,
    *,
    system: Optional[RegressionSystem] = None,
) -> MethodOutcome:
    method = normalize_method(method)
    system = system if system is not None else build_system(records)
    x0 = np.asarray(x0, dtype=float) if x0 is not None else ls_estimate(system)
    return METHOD_RUNNERS[method](system, records, x0, settings or MethodSettings())


# Monte-Carlo ------------------------------------------------------------------


def initial_guess(y_true: np.ndarray, rng: np.random.Generator, ri_range: Tuple[float, float]) -> np.ndarray:
    """x0 at a relative distance drawn from ``ri_range`` with a random sign per parameter."""
    low, high = ri_range
    distance = rng.uniform(low, high, y_true.size)
    sign = rng.choice((-1.0, 1.0), size=y_true.size)
    return y_true * (1.0 + sign * distance)


def _ri_range(config: McConfig) -> Tuple[float, float]:
    return tuple(config.ri_range) if config.ri_range is not None else (0.0, config.init_jitter)


def _single_run(config: McConfig, settings: MethodSettings, run: int) -> Tuple[List[Dict], List[Dict]]:
    scenario = config.scenario
    truth = scenario.true_params.to_params()
    y_true = line_params_to_y(truth).as_array()
    clean = simulate_measurements(scenario)

    rng = np.random.default_rng(np.random.SeedSequence([config.base_seed, run]))
    noisy = inject_noise(clean, scenario.noise_c.to_spec(), scenario.noise_D.to_spec(), rng)
    x0 = initial_guess(y_true, rng, _ri_range(config))
    ri = np.abs(x0 - y_true) / np.abs(y_true)
    system = build_system(noisy.records)

    run_rows: List[Dict] = []
    parameter_rows: List[Dict] = []
    for method in config.methods:
        started = time.perf_counter()
        row = {"run": run, "method": method, "ri_max": float(ri.max()), "failed": False, "error": None}
        try:
            outcome = METHOD_RUNNERS[method](system, noisy.records, x0, settings)
            errors = are_by_parameter(outcome.line_params, truth)
        except (EstimationError, np.linalg.LinAlgError) as exc:
            logger.warning("run %d: %s failed: %s", run, method, exc)
            row.update(failed=True, error=f"{type(exc).__name__}: {exc}", converged=False, iterations=None,
                       are_net=math.nan, seconds=time.perf_counter() - started)
            run_rows.append(row)
            continue
        row.update(
            converged=outcome.converged,
            iterations=outcome.iterations,
            are_net=float(sum(errors.values())),
            seconds=time.perf_counter() - started,
        )
        if outcome.egle is not None:
            row["m_star"] = outcome.egle.m_star
        run_rows.append(row)
        estimate = outcome.line_params
        for name in PARAMETERS:
            parameter_rows.append(
                {
                    "run": run,
                    "method": method,
                    "parameter": name,
                    "estimate": getattr(estimate, name),
                    "truth": getattr(truth, name),
                    "are": errors[name],
                }
            )
    return run_rows, parameter_rows


def _json_value(value):
    if isinstance(value, (np.floating, float)):
        return None if not np.isfinite(value) else float(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def frame_records(frame: pd.DataFrame) -> List[Dict]:
    return [{key: _json_value(value) for key, value in row.items()} for row in frame.to_dict(orient="records")]


@dataclass(frozen=True, eq=False)
class McReport:
    config: Dict
    methods: Tuple[str, ...]
    runs: pd.DataFrame
    parameters: pd.DataFrame
    elapsed_s: float

    @property
    def metrics(self) -> pd.DataFrame:
        """MARE / SDARE per method and parameter (population std)."""
        if self.parameters.empty:
            return pd.DataFrame(columns=["method", "parameter", "mare", "sdare", "runs"])
        grouped = self.parameters.groupby(["method", "parameter"], sort=False)["are"]
        frame = grouped.agg(mare="mean", sdare=lambda values: float(np.std(values)), runs="count").reset_index()
        return frame

    @property
    def net(self) -> pd.DataFrame:
        grouped = self.runs.groupby("method", sort=False)
        frame = grouped.agg(
            mare_net=("are_net", "mean"),
            sdare_net=("are_net", lambda values: float(np.std(values.dropna())) if values.notna().any() else math.nan),
            median_net=("are_net", "median"),
            failures=("failed", "sum"),
            non_converged=("converged", lambda values: int((~values.astype(bool)).sum())),
        ).reset_index()
        return frame

    @property
    def failures(self) -> Dict[str, int]:
        counts = self.runs.groupby("method", sort=False)["failed"].sum()
        return {method: int(counts.get(method, 0)) for method in self.methods}

    def mare(self, method: str, parameter: str) -> float:
        rows = self.parameters[(self.parameters.method == method) & (self.parameters.parameter == parameter)]
        return float(rows["are"].mean()) if not rows.empty else math.nan

    def median_are(self, method: str, parameter: str) -> float:
        rows = self.parameters[(self.parameters.method == method) & (self.parameters.parameter == parameter)]
        return float(rows["are"].median()) if not rows.empty else math.nan

    def mare_net(self, method: str) -> float:
        return float(self.runs.loc[self.runs.method == method, "are_net"].mean())

    def median_net(self, method: str) -> float:
        return float(self.runs.loc[self.runs.method == method, "are_net"].median())

    def win_rate(self, a: str, b: str) -> float:
        """Share of paired runs where method ``a`` has the lower net ARE."""
        left = self.runs.loc[self.runs.method == a, ["run", "are_net"]]
        right = self.runs.loc[self.runs.method == b, ["run", "are_net"]]
        paired = left.merge(right, on="run", suffixes=("_a", "_b")).dropna()
        if paired.empty:
            return math.nan
        return float((paired.are_net_a < paired.are_net_b).mean())

    def win_rates(self) -> Dict[str, float]:
        return {f"{a}<{b}": self.win_rate(a, b) for a in self.methods for b in self.methods if a != b}

    def summary_frame(self) -> pd.DataFrame:
        """One row per method x parameter, with failure counts."""
        metrics = self.metrics
        failures = pd.Series(self.failures, name="failures")
        return metrics.merge(failures, left_on="method", right_index=True, how="left")

    def diverging_runs(self, threshold: float = DIVERGENCE_RI) -> int:
        per_run = self.runs.drop_duplicates("run")
        return int((per_run.ri_max > threshold).sum())

    def to_dict(self) -> Dict:
        return {
            "config": self.config,
            "metrics": frame_records(self.summary_frame()),
            "net": frame_records(self.net),
            "win_rates": {key: _json_value(value) for key, value in self.win_rates().items()},
            "failures": self.failures,
            "runs": frame_records(self.runs),
        }


def monte_carlo_run(config: McConfig, settings: Optional[MethodSettings] = None) -> McReport:
    """Paired Monte-Carlo experiment: every method sees the same noisy data per run."""
    settings = settings or MethodSettings()
    started = time.perf_counter()
    logger.info("Monte-Carlo: %d runs of %s", config.runs, ", ".join(config.methods))
    run_indices = range(config.runs)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_single_run, [config] * config.runs, [settings] * config.runs, run_indices))
    else:
        results = [_single_run(config, settings, run) for run in run_indices]

    run_rows = [row for rows, _ in results for row in rows]
    parameter_rows = [row for _, rows in results for row in rows]
    runs = pd.DataFrame(run_rows)
    parameters = pd.DataFrame(parameter_rows, columns=["run", "method", "parameter", "estimate", "truth", "are"])
    elapsed = time.perf_counter() - started
    logger.info("Monte-Carlo finished in %.1fs", elapsed)
    return McReport(
        config=config.model_dump(mode="json"),
        methods=tuple(config.methods),
        runs=runs,
        parameters=parameters,
        elapsed_s=elapsed,
    )


# Sensitivity studies ------------------------------------------------------


def _scaled(spec_in: GmmSpecIn, factor: float) -> GmmSpecIn:
    return GmmSpecIn.from_spec(spec_in.to_spec().scaled(factor))


@dataclass(frozen=True, eq=False)
class NoiseSweepReport:
    scales: Tuple[float, ...]
    reports: Tuple[McReport, ...]

    @property
    def table(self) -> pd.DataFrame:
        frames = []
        for scale, report in zip(self.scales, self.reports):
            frame = report.metrics.copy()
            frame.insert(0, "scale", scale)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    def to_dict(self) -> Dict:
        return {
            "scales": list(self.scales),
            "table": frame_records(self.table),
            "reports": [report.to_dict() for report in self.reports],
        }


def sensitivity_noise_levels(
    config: McConfig,
    scales: Sequence[float],
    settings: Optional[MethodSettings] = None,
) -> NoiseSweepReport:
    """Monte-Carlo per noise scale; means and standard deviations scale together."""
    if not scales or any(scale <= 0 for scale in scales):
        raise ValueError("noise scales must be positive")
    reports = []
    for scale in scales:
        scenario = config.scenario.model_copy(
            update={
                "noise_c": _scaled(config.scenario.noise_c, scale),
                "noise_D": _scaled(config.scenario.noise_D, scale),
            }
        )
        logger.info("noise sweep: scale %g", scale)
        reports.append(monte_carlo_run(config.model_copy(update={"scenario": scenario}), settings))
    return NoiseSweepReport(scales=tuple(float(scale) for scale in scales), reports=tuple(reports))


@dataclass(frozen=True, eq=False)
class InitSweepReport:
    bins: Tuple[Tuple[float, float], ...]
    reports: Tuple[McReport, ...]

    @property
    def table(self) -> pd.DataFrame:
        frames = []
        for (low, high), report in zip(self.bins, self.reports):
            frame = report.metrics.copy()
            frame.insert(0, "ri_high", high)
            frame.insert(0, "ri_low", low)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)

    @property
    def divergence_risk(self) -> List[Tuple[float, float]]:
        """Bins reaching past the RI level where the iteration may diverge."""
        return [(low, high) for low, high in self.bins if high > DIVERGENCE_RI]

    def to_dict(self) -> Dict:
        return {
            "bins": [list(item) for item in self.bins],
            "table": frame_records(self.table),
            "divergence_risk": [list(item) for item in self.divergence_risk],
            "reports": [report.to_dict() for report in self.reports],
        }


def sensitivity_initialization(
    config: McConfig,
    ri_bins: Sequence[Tuple[float, float]],
    settings: Optional[MethodSettings] = None,
) -> InitSweepReport:
    bins = []
    for low, high in ri_bins:
        if not (0 <= low <= high):
            raise ValueError(f"invalid RI bin ({low}, {high})")
        bins.append((float(low), float(high)))
    reports = []
    for low, high in bins:
        logger.info("initialization sweep: RI in [%g, %g]", low, high)
        report = monte_carlo_run(config.model_copy(update={"ri_range": (low, high)}), settings)
        if high > DIVERGENCE_RI:
            logger.warning("RI bin [%g, %g]: %d runs beyond RI %.1f", low, high, report.diverging_runs(), DIVERGENCE_RI)
        reports.append(report)
    return InitSweepReport(bins=tuple(bins), reports=tuple(reports))


# BIC order selection --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BicDemoReport:
    n: int
    m_max: int
    trials: Tuple[Dict, ...]

    @property
    def selected(self) -> Dict[int, int]:
        counts = {m: 0 for m in range(1, self.m_max + 1)}
        for trial in self.trials:
            counts[trial["selected"]] += 1
        return counts

    def to_dict(self) -> Dict:
        return {"n": self.n, "m_max": self.m_max, "trials": list(self.trials), "selected": self.selected}


def bic_demo(
    n: int = 5000,
    m_max: int = 10,
    trials: int = 10,
    seed: int = 0,
    em: Optional[EmConfig] = None,
    spec: Optional[GmmSpec] = None,
    restarts: int = 3,
) -> BicDemoReport:
    """Fresh samples per trial from the four-component spec, BIC sweep over m."""
    spec = spec or four_component_noise().to_spec()
    rows = []
    for trial in range(trials):
        samples = gmm_em.gmm_sample(spec, n, np.random.SeedSequence([seed, trial]))
        points = gmm_em.bic_sweep(samples, range(1, m_max + 1), em, restarts=restarts)
        selected = gmm_em.select_order(points)
        rows.append(
            {
                "trial": trial,
                "selected": selected,
                "bic": [_json_value(point.bic) for point in points],
            }
        )
        logger.info("BIC trial %d selected m=%d", trial, selected)
    return BicDemoReport(n=n, m_max=m_max, trials=tuple(rows))
