import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import norm

from model.feeder import Feeder, Phase

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]

SHIFT_ITERATIONS = 60


@dataclass(frozen=True)
class PvProfileSpec:
    day_length_min: int = 1440
    sunrise_min: float = 360.0
    sunset_min: float = 1080.0
    # 0.3 means 99.7% of noise draws stay within +/-30%
    variability: float = 0.0
    seed: int = 0
    step_min: int = 1

    def validate(self) -> None:
        if not 0 <= self.sunrise_min < self.sunset_min <= self.day_length_min:
            raise ValueError("need 0 <= sunrise < sunset <= day length")
        if not 0.0 <= self.variability <= 1.0:
            raise ValueError("variability must be in [0, 1]")
        if self.step_min <= 0:
            raise ValueError("step_min must be positive")

    def time_grid(self) -> np.ndarray:
        return np.arange(0, self.day_length_min, self.step_min, dtype=float)


def clear_sky(spec: PvProfileSpec) -> pd.Series:
    """
    Parabolic clear-sky output on `spec.time_grid()`: 1.0 at midday,
    0.0 at and outside sunrise/sunset.
    """
    spec.validate()
    t = spec.time_grid()
    mid = 0.5 * (spec.sunrise_min + spec.sunset_min)
    half = 0.5 * (spec.sunset_min - spec.sunrise_min)
    values = np.clip(1.0 - ((t - mid) / half) ** 2, 0.0, 1.0)
    return pd.Series(values, index=pd.Index(t, name="t_min"), name="clear_sky")


def variability_noise(n: int, variability: float, seed: Seed) -> np.ndarray:
    """Multiplicative noise draws: i.i.d. Gaussian with sigma = variability / 3."""
    if not 0.0 <= variability <= 1.0:
        raise ValueError("variability must be in [0, 1]")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, variability / 3.0, size=n)


def _clipped_mean(mu, tau):
    # E[clip(X, 0, 1)] for X ~ N(mu, tau)
    def excess(a):
        z = (mu - a) / tau
        return (mu - a) * norm.cdf(z) + tau * norm.pdf(z)

    return excess(0.0) - excess(1.0)


def mean_preserving_center(values, tau):
    """
    Center mu per sample so that E[clip(N(mu, tau), 0, 1)] equals the
    sample value. Values outside (0, 1) or with tau == 0 are returned as is.
    """
    values = np.asarray(values, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), values.shape)
    mu = values.copy()
    todo = (values > 0.0) & (values < 1.0) & (tau > 0.0)
    if not todo.any():
        return mu
    s, t = values[todo], tau[todo]
    # E[clip] is increasing in mu; bisect inside a bracket that always holds the root
    lo = np.full_like(s, -1.0) - 10.0 * t
    hi = np.full_like(s, 2.0) + 10.0 * t
    for _ in range(SHIFT_ITERATIONS):
        mid = 0.5 * (lo + hi)
        low_side = _clipped_mean(mid, t) < s
        lo = np.where(low_side, mid, lo)
        hi = np.where(low_side, hi, mid)
    mu[todo] = 0.5 * (lo + hi)
    return mu


def with_variability(series, variability: float, seed: Seed):
    """
    out(t) = clip(mu(t) + series(t) * eps_t, 0, 1) with eps_t from
    `variability_noise`. mu(t) is shifted away from series(t) just enough
    that clipping leaves the expected output equal to series(t), so noisy
    profiles carry no clipping bias. Same seed, same output.
    Returns the same container type it was given (Series or ndarray).
    """
    values = np.asarray(series, dtype=float)
    eps = variability_noise(values.size, variability, seed).reshape(values.shape)
    center = mean_preserving_center(values, values * variability / 3.0)
    out = np.clip(center + values * eps, 0.0, 1.0)
    if isinstance(series, pd.Series):
        return pd.Series(out, index=series.index, name=series.name)
    return out


def unit_series(spec: PvProfileSpec, unit_ids: Iterable[str], correlated: bool = False) -> pd.DataFrame:
    """
    Normalized output per PV unit over one day. Each unit draws its own
    noise from a child of `spec.seed` (units in sorted order); with
    `correlated` every unit shares one realization.
    """
    base = clear_sky(spec)
    ids = sorted(unit_ids)
    if correlated:
        shared = with_variability(base, spec.variability, spec.seed)
        columns = {uid: shared.to_numpy() for uid in ids}
    else:
        children = np.random.SeedSequence(spec.seed).spawn(len(ids))
        columns = {
            uid: with_variability(base.to_numpy(), spec.variability, child) for uid, child in zip(ids, children)
        }
    return pd.DataFrame(columns, index=base.index)


def realize_pv_injections(
    feeder: Feeder,
    series: Union[pd.Series, pd.DataFrame, float],
    t: float,
) -> Dict[Tuple[str, Phase], float]:
    """
    Active output (kW) per (unit, phase) at time t. `series` is one shared
    normalized series, a DataFrame with one column per unit id, or a scalar.
    A unit's active rating is split equally over its phases.
    """
    out = {}
    for unit in feeder.pv_units:
        if isinstance(series, pd.DataFrame):
            level = float(series.at[t, unit.id])
        elif isinstance(series, pd.Series):
            level = float(series.at[t])
        else:
            level = float(series)
        for phase in unit.phases:
            out[(unit.id, phase)] = unit.phase_p_rated_kw * level
    return out
