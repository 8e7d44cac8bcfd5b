from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InsufficientSamples, InvalidSample

# n x m matrix of gamma_ig; rows sum to one.
Responsibilities = np.ndarray


def _frozen_array(values, *, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True)
    if ndim == 1:
        array = np.atleast_1d(array)
    if array.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class GmmSpec:
    """Scalar Gaussian mixture: the noise model theta = {w_g, mu_g, sigma2_g}."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        weights = _frozen_array(self.weights, ndim=1)
        means = _frozen_array(self.means, ndim=1)
        variances = _frozen_array(self.variances, ndim=1)
        if not (weights.size == means.size == variances.size) or weights.size < 1:
            raise ValueError("weights, means and variances must have the same positive length")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(means)) and np.all(np.isfinite(variances))):
            raise ValueError("GMM parameters must be finite")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("GMM weights must be non-negative and sum to 1")
        if np.any(variances < 0):
            raise ValueError("GMM variances must be non-negative")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def m(self) -> int:
        return int(self.weights.size)

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(self.variances)

    @classmethod
    def single(cls, mean: float = 0.0, variance: float = 0.0) -> "GmmSpec":
        return cls(weights=[1.0], means=[mean], variances=[variance])

    def mixture_mean(self) -> float:
        return float(np.dot(self.weights, self.means))

    def mixture_variance(self) -> float:
        mean = self.mixture_mean()
        return float(np.dot(self.weights, self.variances + (self.means - mean) ** 2))

    def floored(self, variance_floor: float) -> "GmmSpec":
        return GmmSpec(self.weights, self.means, np.maximum(self.variances, variance_floor))

    def scaled(self, factor: float) -> "GmmSpec":
        """Scale means and standard deviations by ``factor``."""
        return GmmSpec(self.weights, self.means * factor, self.variances * factor**2)

    def sorted_by_mean(self) -> Tuple["GmmSpec", np.ndarray]:
        order = np.argsort(self.means, kind="stable")
        return GmmSpec(self.weights[order], self.means[order], self.variances[order]), order

    def to_dict(self) -> Dict[str, List[float]]:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Sequence[float]]) -> "GmmSpec":
        return cls(payload["weights"], payload["means"], payload["variances"])


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    index_sets: Tuple[np.ndarray, ...]

    @property
    def m(self) -> int:
        return len(self.index_sets)

    @property
    def counts(self) -> np.ndarray:
        return np.array([rows.size for rows in self.index_sets], dtype=int)

    @classmethod
    def from_labels(cls, labels, m: int) -> "ClusterAssignment":
        labels = np.asarray(labels, dtype=int)
        index_sets = tuple(np.flatnonzero(labels == g) for g in range(m))
        return cls(labels=labels, index_sets=index_sets)


@dataclass(frozen=True, eq=False)
class RegressionSystem:
    """Linear model c = D x with per-row time-instant bookkeeping."""

    D: np.ndarray
    c: np.ndarray
    instants: Optional[np.ndarray] = None

    def __post_init__(self):
        D = _frozen_array(self.D, ndim=2)
        c = _frozen_array(self.c, ndim=1)
        if D.shape[0] != c.size:
            raise ValueError(f"D has {D.shape[0]} rows but c has {c.size} entries")
        if D.shape[0] < D.shape[1]:
            raise InsufficientSamples(f"need n >= p, got n={D.shape[0]}, p={D.shape[1]}")
        if not (np.all(np.isfinite(D)) and np.all(np.isfinite(c))):
            raise InvalidSample("regression system contains non-finite values")
        instants = np.arange(c.size) if self.instants is None else np.asarray(self.instants, dtype=int)
        if instants.size != c.size:
            raise ValueError("one time instant per row is required")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "instants", instants)

    @property
    def n(self) -> int:
        return int(self.D.shape[0])

    @property
    def p(self) -> int:
        return int(self.D.shape[1])

    def residual(self, x) -> np.ndarray:
        return self.c - self.D @ np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class ClusterBlock:
    rows: np.ndarray
    c: np.ndarray
    D: np.ndarray
    mu_c: float
    var_c: float
    mu_D: float = 0.0
    var_D: float = 0.0
    # per-row membership weights; None means every row counts fully
    weights: Optional[np.ndarray] = None

    @property
    def row_weights(self) -> np.ndarray:
        return np.ones(self.rows.size) if self.weights is None else self.weights


@dataclass(frozen=True, eq=False)
class ClusteredSystem:
    """Rows of a system grouped by noise component; component g of the
    dependent noise is paired with component g of the independent noise."""

    blocks: Tuple[ClusterBlock, ...]
    noise_c: GmmSpec
    noise_D: Optional[GmmSpec]
    n: int
    p: int

    @classmethod
    def from_assignment(
        cls,
        system: RegressionSystem,
        assignment: ClusterAssignment,
        noise_c: GmmSpec,
        noise_D: Optional[GmmSpec] = None,
    ) -> "ClusteredSystem":
        if noise_c.m != assignment.m:
            raise ValueError("dependent-noise spec and assignment disagree on m")
        if noise_D is not None and noise_D.m != assignment.m:
            raise ValueError("independent-noise spec and assignment disagree on m")
        blocks = []
        for g, rows in enumerate(assignment.index_sets):
            if rows.size == 0:
                continue
            blocks.append(
                ClusterBlock(
                    rows=rows,
                    c=system.c[rows],
                    D=system.D[rows],
                    mu_c=float(noise_c.means[g]),
                    var_c=float(noise_c.variances[g]),
                    mu_D=float(noise_D.means[g]) if noise_D is not None else 0.0,
                    var_D=float(noise_D.variances[g]) if noise_D is not None else 0.0,
                )
            )
        return cls(blocks=tuple(blocks), noise_c=noise_c, noise_D=noise_D, n=system.n, p=system.p)

    @classmethod
    def from_responsibilities(
        cls,
        system: RegressionSystem,
        resp: Responsibilities,
        noise_c: GmmSpec,
        noise_D: Optional[GmmSpec] = None,
    ) -> "ClusteredSystem":
        """Soft grouping: block g holds every row, weighted by gamma_ig."""
        resp = np.asarray(resp, dtype=float)
        if resp.shape != (system.n, noise_c.m):
            raise ValueError(f"responsibilities of shape {resp.shape} do not match n={system.n}, m={noise_c.m}")
        if noise_D is not None and noise_D.m != noise_c.m:
            raise ValueError("independent-noise spec and responsibilities disagree on m")
        rows = np.arange(system.n)
        blocks = []
        for g in range(noise_c.m):
            if resp[:, g].sum() < 1e-300:
                continue
            blocks.append(
                ClusterBlock(
                    rows=rows,
                    c=system.c,
                    D=system.D,
                    mu_c=float(noise_c.means[g]),
                    var_c=float(noise_c.variances[g]),
                    mu_D=float(noise_D.means[g]) if noise_D is not None else 0.0,
                    var_D=float(noise_D.variances[g]) if noise_D is not None else 0.0,
                    weights=resp[:, g].copy(),
                )
            )
        return cls(blocks=tuple(blocks), noise_c=noise_c, noise_D=noise_D, n=system.n, p=system.p)

    @classmethod
    def single_cluster(
        cls,
        system: RegressionSystem,
        noise_c: GmmSpec,
        noise_D: Optional[GmmSpec] = None,
    ) -> "ClusteredSystem":
        labels = np.zeros(system.n, dtype=int)
        return cls.from_assignment(system, ClusterAssignment.from_labels(labels, 1), noise_c, noise_D)


@dataclass(frozen=True, eq=False)
class NoiseEstimates:
    c_e_hat: np.ndarray
    D_e_hat: np.ndarray
    lambdas: Tuple[np.ndarray, ...]


@dataclass(frozen=True)
class LineParameters:
    r: float
    x: float
    b: float

    def as_dict(self) -> Dict[str, float]:
        return {"r": self.r, "x": self.x, "b": self.b}


@dataclass(frozen=True)
class YVector:
    y1: float
    y2: float
    y3: float
    y4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.y1, self.y2, self.y3, self.y4], dtype=float)

    @classmethod
    def from_array(cls, values) -> "YVector":
        y1, y2, y3, y4 = (float(v) for v in np.asarray(values, dtype=float))
        return cls(y1, y2, y3, y4)


@dataclass(frozen=True)
class PhasorRecord:
    t: int
    vp: complex
    vq: complex
    ip: complex
    iq: complex

    def as_row(self) -> Dict[str, float]:
        return {
            "t": self.t,
            "Vp_r": self.vp.real,
            "Vp_i": self.vp.imag,
            "Vq_r": self.vq.real,
            "Vq_i": self.vq.imag,
            "Ip_r": self.ip.real,
            "Ip_i": self.ip.imag,
            "Iq_r": self.iq.real,
            "Iq_i": self.iq.imag,
        }


@dataclass(frozen=True, eq=False)
class NoisyMeasurements:
    """Noisy records plus the injected noise kept for oracle checks.

    ``current_noise`` and ``voltage_noise`` are s x 4 arrays ordered like the
    rectangular components (Ip_r, Ip_i, Iq_r, Iq_i) and (Vp_r, Vp_i, Vq_r, Vq_i).
    """

    records: List[PhasorRecord]
    current_noise: np.ndarray
    voltage_noise: np.ndarray
