"""Pi-line front end: synthetic phasors, noise injection, regression rows and
the conversions between (r, x, b) and the Y parameterization."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from .errors import DegenerateAdmittance, DegenerateImpedance
from .gmm_em import SeedLike, gmm_sample
from .models import GmmSpec, LineParameters, NoisyMeasurements, PhasorRecord, RegressionSystem, YVector
from .schemas import ScenarioConfig, four_component_noise, two_component_noise

logger = logging.getLogger(__name__)

VOLTAGE_COLUMNS = ("Vp_r", "Vp_i", "Vq_r", "Vq_i")
CURRENT_COLUMNS = ("Ip_r", "Ip_i", "Iq_r", "Iq_i")
MEASUREMENT_COLUMNS = ("t",) + VOLTAGE_COLUMNS + CURRENT_COLUMNS


def two_component_spec() -> GmmSpec:
    """Two-component PMU noise: w=(0.3, 0.7), mu=(0, 0.005), sigma=0.0015."""
    return two_component_noise().to_spec()


def four_component_spec() -> GmmSpec:
    return four_component_noise().to_spec()


def records_to_arrays(records: Sequence[PhasorRecord]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(t, voltages s x 4, currents s x 4) in rectangular components."""
    t = np.array([record.t for record in records], dtype=int)
    voltages = np.array([[r.vp.real, r.vp.imag, r.vq.real, r.vq.imag] for r in records], dtype=float).reshape(-1, 4)
    currents = np.array([[r.ip.real, r.ip.imag, r.iq.real, r.iq.imag] for r in records], dtype=float).reshape(-1, 4)
    return t, voltages, currents


def records_from_arrays(t, voltages: np.ndarray, currents: np.ndarray) -> List[PhasorRecord]:
    return [
        PhasorRecord(
            t=int(ti),
            vp=complex(v[0], v[1]),
            vq=complex(v[2], v[3]),
            ip=complex(i[0], i[1]),
            iq=complex(i[2], i[3]),
        )
        for ti, v, i in zip(t, voltages, currents)
    ]


def simulate_measurements(config: ScenarioConfig) -> List[PhasorRecord]:
    """Noise-free phasors that satisfy the pi-line circuit equations.

    The sending voltage and the receiving-end load current are drawn per
    instant; Vq, Ip and Iq follow from the line admittances.
    """
    params = config.true_params.to_params()
    rng = np.random.default_rng(config.seed)
    s = config.s

    magnitude = 1.0 + rng.uniform(-config.voltage_spread, config.voltage_spread, s)
    angle = np.deg2rad(rng.uniform(-config.angle_spread_deg, config.angle_spread_deg, s))
    vp = magnitude * np.exp(1j * angle)

    half_range = config.loading_variation / 2.0
    load = config.base_load * (1.0 + rng.uniform(-half_range, half_range, s))
    i_load = load * np.exp(1j * (angle - np.arccos(config.power_factor)))

    y = 1.0 / complex(params.r, params.x)
    shunt = 1j * params.b
    iq = -i_load
    vq = (iq + y * vp) / (y + shunt)
    ip = shunt * vp + (vp - vq) * y

    return [
        PhasorRecord(t=t, vp=complex(vp[t]), vq=complex(vq[t]), ip=complex(ip[t]), iq=complex(iq[t]))
        for t in range(s)
    ]


def inject_noise(
    records: Sequence[PhasorRecord],
    noise_c: GmmSpec,
    noise_D: GmmSpec,
    seed: SeedLike = None,
) -> NoisyMeasurements:
    """Add independent GMM draws to every rectangular current (noise_c) and
    voltage (noise_D) component."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    t, voltages, currents = records_to_arrays(records)
    s = len(records)
    noisy_currents = currents + gmm_sample(noise_c, 4 * s, rng).reshape(s, 4)
    noisy_voltages = voltages + gmm_sample(noise_D, 4 * s, rng).reshape(s, 4)
    return NoisyMeasurements(
        records=records_from_arrays(t, noisy_voltages, noisy_currents),
        current_noise=noisy_currents - currents,
        voltage_noise=noisy_voltages - voltages,
    )


def build_system(records: Sequence[PhasorRecord]) -> RegressionSystem:
    """Stack four rows per instant: c = (Ip_r, Ip_i, Iq_r, Iq_i), x = (Y1..Y4)."""
    if not records:
        raise ValueError("at least one phasor record is required")
    t, voltages, currents = records_to_arrays(records)
    vpr, vpi, vqr, vqi = voltages.T
    blocks = np.stack(
        [
            np.column_stack([vpr, vpi, vqr, vqi]),
            np.column_stack([vpi, -vpr, vqi, -vqr]),
            np.column_stack([vqr, vqi, vpr, vpi]),
            np.column_stack([vqi, -vqr, vpi, -vpr]),
        ],
        axis=1,
    )
    return RegressionSystem(D=blocks.reshape(-1, 4), c=currents.reshape(-1), instants=np.repeat(t, 4))


def recover_line_params(y: Union[YVector, Sequence[float], np.ndarray]) -> LineParameters:
    y1, y2, y3, y4 = y.as_array() if isinstance(y, YVector) else np.asarray(y, dtype=float)
    diff = y1 - y3
    denominator = diff**2 + (2.0 * y4) ** 2
    if denominator < 1e-300:
        raise DegenerateAdmittance("(Y1 - Y3)^2 + (2 Y4)^2 vanishes")
    return LineParameters(
        r=float(2.0 * diff / denominator),
        x=float(-4.0 * y4 / denominator),
        b=float(-(y2 + y4)),
    )


def line_params_to_y(params: LineParameters) -> YVector:
    denominator = params.r**2 + params.x**2
    if denominator < 1e-300:
        raise DegenerateImpedance("series impedance r + jx vanishes")
    y_real = params.r / denominator
    y_imag = -params.x / denominator
    return YVector(y1=y_real, y2=-(params.b + y_imag), y3=-y_real, y4=y_imag)


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    clean: List[PhasorRecord]
    noisy: NoisyMeasurements

    @property
    def true_params(self) -> LineParameters:
        return self.config.true_params.to_params()

    @property
    def true_y(self) -> YVector:
        return line_params_to_y(self.true_params)


def generate_scenario(config: ScenarioConfig, noise_seed: SeedLike = None) -> Scenario:
    """Clean records from ``config.seed``; noise from ``noise_seed`` or a
    stream spawned from the scenario seed."""
    clean = simulate_measurements(config)
    if noise_seed is None:
        noise_seed = np.random.SeedSequence([config.seed, 1])
    noisy = inject_noise(clean, config.noise_c.to_spec(), config.noise_D.to_spec(), noise_seed)
    logger.debug("generated scenario with %d instants (seed=%d)", config.s, config.seed)
    return Scenario(config=config, clean=clean, noisy=noisy)
