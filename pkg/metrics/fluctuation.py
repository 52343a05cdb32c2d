"""
Voltage fluctuation (successive absolute differences), its windowed mean
(SAVFI) and ANSI band violations. Arrays are time-major: axis 0 is the step.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SAVFI_WINDOW = 15
# savfi.csv and report tables print SAVFI in this unit
SAVFI_SCALE = 1e-3


@dataclass(frozen=True)
class VoltageBand:
    low: float = 0.95
    high: float = 1.05

    def validate(self) -> None:
        if not self.low < self.high:
            raise ValueError("band.low must be below band.high")


def delta_v(voltage_series) -> np.ndarray:
    """|V(t+1) - V(t)| of voltage magnitudes; one entry shorter than the input."""
    v = np.asarray(voltage_series, dtype=float)
    if v.ndim == 0 or v.shape[0] < 2:
        raise ValueError("voltage series needs at least 2 samples")
    return np.abs(np.diff(v, axis=0))


def savfi(fluctuation_series, window: int = SAVFI_WINDOW) -> np.ndarray:
    """
    Mean of the fluctuation over consecutive non-overlapping windows of
    `window` steps, starting at the first entry. A shorter trailing window is
    averaged over its own length.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    dv = np.asarray(fluctuation_series, dtype=float)
    n = dv.shape[0] if dv.ndim else 0
    if n == 0:
        return np.zeros((0,) + dv.shape[1:])
    starts = np.arange(0, n, window)
    return np.stack([dv[s : s + window].mean(axis=0) for s in starts])


@dataclass(frozen=True)
class ViolationReport:
    # same shape as the voltage series
    flags: np.ndarray
    over_count: int
    under_count: int
    # largest distance outside the band, 0 when inside
    worst_excursion: float

    @property
    def count(self) -> int:
        return self.over_count + self.under_count


def violations(voltage_series, band: VoltageBand = VoltageBand()) -> ViolationReport:
    band.validate()
    v = np.asarray(voltage_series, dtype=float)
    over = v > band.high
    under = v < band.low
    excursion = np.maximum(np.maximum(v - band.high, band.low - v), 0.0)
    worst = float(excursion.max()) if excursion.size else 0.0
    return ViolationReport(
        flags=over | under,
        over_count=int(over.sum()),
        under_count=int(under.sum()),
        worst_excursion=worst,
    )


# ---------------------------------------------------------
# Frame helpers over a voltage table
# (index t_min, columns MultiIndex (bus, phase))
# ---------------------------------------------------------
def savfi_table(voltage_frame: pd.DataFrame, window: int = SAVFI_WINDOW) -> pd.DataFrame:
    """
    Long table `bus, phase, window_start, savfi` (savfi in pu). Empty when
    there are fewer than two steps.
    """
    columns = ["bus", "phase", "window_start", "savfi"]
    if len(voltage_frame) < 2:
        return pd.DataFrame(columns=columns)
    values = savfi(delta_v(voltage_frame.to_numpy()), window)
    t = voltage_frame.index.to_numpy()[:-1]
    starts = t[np.arange(0, len(t), window)]
    rows = []
    for j, (bus, phase) in enumerate(voltage_frame.columns):
        for k, start in enumerate(starts):
            rows.append({"bus": bus, "phase": phase, "window_start": start, "savfi": values[k, j]})
    return pd.DataFrame(rows, columns=columns)


def violation_table(voltage_frame: pd.DataFrame, band: VoltageBand = VoltageBand()) -> pd.DataFrame:
    columns = ["bus", "phase", "over", "under", "worst_excursion"]
    rows = []
    for bus, phase in voltage_frame.columns:
        report = violations(voltage_frame[(bus, phase)].to_numpy(), band)
        rows.append(
            {
                "bus": bus,
                "phase": phase,
                "over": report.over_count,
                "under": report.under_count,
                "worst_excursion": report.worst_excursion,
            }
        )
    return pd.DataFrame(rows, columns=columns)
