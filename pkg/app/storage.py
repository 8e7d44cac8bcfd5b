from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import IO, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import MeasurementParseError
from .models import GmmSpec, LineParameters, NoisyMeasurements, PhasorRecord
from .tlpe import MEASUREMENT_COLUMNS, line_params_to_y, records_from_arrays

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Source = Union[PathLike, IO[str]]


def read_measurements(path: Source) -> List[PhasorRecord]:
    """Parse a measurement CSV (header ``t,Vp_r,...,Iq_i``) into records.

    Row numbers in errors count data rows from 1, excluding the header.
    """
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise MeasurementParseError(f"cannot read measurement CSV {path}: {exc}") from exc

    frame.columns = [str(column).strip() for column in frame.columns]
    for column in MEASUREMENT_COLUMNS:
        if column not in frame.columns:
            raise MeasurementParseError("missing measurement column", column=column)
    if frame.empty:
        raise MeasurementParseError(f"measurement CSV {path} has no data rows")

    numeric = {}
    for column in MEASUREMENT_COLUMNS:
        raw = frame[column].str.strip()
        values = pd.to_numeric(raw, errors="coerce")
        bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise MeasurementParseError(
                f"value {raw.iloc[row]!r} is not a finite number", row=row + 1, column=column
            )
        # to_numeric is not correctly rounded; float() is
        numeric[column] = raw.map(float).to_numpy(dtype=float)

    t = numeric["t"]
    if np.any(t != np.round(t)):
        row = int(np.flatnonzero(t != np.round(t))[0])
        raise MeasurementParseError("time index must be an integer", row=row + 1, column="t")
    voltages = np.column_stack([numeric[name] for name in MEASUREMENT_COLUMNS[1:5]])
    currents = np.column_stack([numeric[name] for name in MEASUREMENT_COLUMNS[5:9]])
    records = records_from_arrays(t.astype(int), voltages, currents)
    logger.debug("read %d measurement rows from %s", len(records), path)
    return records


def measurements_frame(records: Sequence[PhasorRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.as_row() for record in records], columns=list(MEASUREMENT_COLUMNS))


def write_measurements(records: Sequence[PhasorRecord], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    measurements_frame(records).to_csv(path, index=False, float_format="%.17g")
    return path


def select_window(
    records: Sequence[PhasorRecord],
    t_start: Optional[int] = None,
    t_end: Optional[int] = None,
) -> List[PhasorRecord]:
    """Records with t_start <= t <= t_end; open ends are unbounded."""
    selected = [
        record
        for record in records
        if (t_start is None or record.t >= t_start) and (t_end is None or record.t <= t_end)
    ]
    if not selected:
        raise ValueError(f"no measurements in the window [{t_start}, {t_end}]")
    return selected


def ground_truth_payload(
    params: LineParameters,
    noise_c: GmmSpec,
    noise_D: GmmSpec,
    seed: int,
    noisy: Optional[NoisyMeasurements] = None,
) -> Dict:
    payload = {
        "line_params": params.as_dict(),
        "y": line_params_to_y(params).as_array().tolist(),
        "noise_c": noise_c.to_dict(),
        "noise_D": noise_D.to_dict(),
        "seed": seed,
    }
    if noisy is not None:
        payload["current_noise"] = noisy.current_noise.tolist()
        payload["voltage_noise"] = noisy.voltage_noise.tolist()
    return payload


def write_ground_truth(payload: Dict, path: PathLike) -> Path:
    return write_json(payload, path)


def read_ground_truth(path: PathLike) -> Dict:
    with Path(path).open(encoding="utf-8") as handle:
        payload = json.load(handle)
    try:
        payload["line_params"] = LineParameters(**payload["line_params"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"ground-truth file {path} lacks line parameters") from exc
    return payload


def write_json(payload: Dict, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, ensure_ascii=False, allow_nan=False)
    return path


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path
