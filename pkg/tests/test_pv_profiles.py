import dataclasses

import numpy as np
import pandas as pd
import pytest

from generators.pv_profiles import (
    PvProfileSpec,
    clear_sky,
    realize_pv_injections,
    unit_series,
    mean_preserving_center,
    variability_noise,
    with_variability,
)
from model.feeder import Phase, PvUnit

from conftest import single_phase_line

A, B, C = Phase.A, Phase.B, Phase.C


def test_clear_sky_shape():
    cs = clear_sky(PvProfileSpec())
    assert len(cs) == 1440
    assert cs.at[720.0] == pytest.approx(1.0)
    assert cs.at[360.0] == 0.0
    assert cs.at[1080.0] == 0.0
    assert cs.loc[:359].eq(0).all() and cs.loc[1081:].eq(0).all()
    assert cs.max() <= 1.0


def test_clear_sky_energy():
    # integral of a unit parabola over 720 minutes is 2/3 of 720
    assert clear_sky(PvProfileSpec()).sum() == pytest.approx(480.0, abs=1.0)


def test_bad_profile_spec_rejected():
    with pytest.raises(ValueError):
        clear_sky(PvProfileSpec(sunrise_min=900, sunset_min=600))
    with pytest.raises(ValueError):
        variability_noise(10, 1.5, 0)


def test_zero_variability_is_identity():
    cs = clear_sky(PvProfileSpec())
    out = with_variability(cs, 0.0, seed=3)
    pd.testing.assert_series_equal(out, cs)


def test_three_sigma_fraction():
    eps = variability_noise(100_000, 0.3, seed=11)
    outside = np.mean(np.abs(eps) > 0.3)
    assert outside == pytest.approx(0.0027, abs=0.002)


def test_same_seed_same_profile():
    cs = clear_sky(PvProfileSpec())
    a = with_variability(cs, 0.4, seed=5)
    b = with_variability(cs, 0.4, seed=5)
    c = with_variability(cs, 0.4, seed=6)
    np.testing.assert_array_equal(a.to_numpy(), b.to_numpy())
    assert not np.array_equal(a.to_numpy(), c.to_numpy())


def test_noisy_profile_stays_normalized():
    out = with_variability(np.full(5000, 0.95), 1.0, seed=1)
    assert out.min() >= 0.0 and out.max() <= 1.0


@pytest.mark.parametrize("variability", [0.3, 0.7])
def test_clipping_leaves_the_mean_unbiased(variability):
    out = with_variability(np.full(200_000, 0.9), variability, seed=21)
    assert abs(out.mean() - 0.9) < 0.009
    assert out.max() == 1.0
    assert out.std() > 0.05


def test_center_matches_clipped_expectation():
    values = np.array([0.0, 0.2, 0.9, 1.0])
    mu = mean_preserving_center(values, 0.1)
    assert mu[0] == 0.0 and mu[-1] == 1.0
    # barely clipped at 0.2, pushed above the level at 0.9
    assert mu[1] == pytest.approx(0.2, abs=2e-3)
    assert mu[2] > 0.9
    np.testing.assert_array_equal(mean_preserving_center(values, 0.0), values)


def test_unit_series_independent_unless_correlated():
    spec = PvProfileSpec(variability=0.3, seed=2)
    free = unit_series(spec, ["pv_b", "pv_a"])
    assert list(free.columns) == ["pv_a", "pv_b"]
    assert not np.array_equal(free["pv_a"].to_numpy(), free["pv_b"].to_numpy())
    tied = unit_series(spec, ["pv_a", "pv_b"], correlated=True)
    np.testing.assert_array_equal(tied["pv_a"].to_numpy(), tied["pv_b"].to_numpy())
    np.testing.assert_array_equal(unit_series(spec, ["pv_a", "pv_b"]).to_numpy(), free.to_numpy())


def test_three_phase_unit_split(twobus):
    three = dataclasses.replace(twobus, pv_units=(PvUnit("pv", "leaf", (A, B, C), 69.0),))
    out = realize_pv_injections(three, 1.0, 720.0)
    assert out == {("pv", A): pytest.approx(23.0), ("pv", B): pytest.approx(23.0), ("pv", C): pytest.approx(23.0)}


def test_single_phase_unit_at_half_output():
    feeder = single_phase_line(pv_kva=23.0)
    series = pd.Series([0.5], index=pd.Index([600.0], name="t_min"))
    out = realize_pv_injections(feeder, series, 600.0)
    assert list(out.values()) == [pytest.approx(11.5)]


def test_per_unit_frame_lookup(twobus):
    frame = pd.DataFrame({"pv_leaf": [0.0, 0.4]}, index=pd.Index([0.0, 1.0], name="t_min"))
    out = realize_pv_injections(twobus, frame, 1.0)
    unit = twobus.pv_units[0]
    assert out[(unit.id, A)] == pytest.approx(0.4 * unit.phase_p_rated_kw)
