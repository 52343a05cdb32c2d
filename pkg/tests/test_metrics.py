import numpy as np
import pandas as pd
import pytest

from metrics.fluctuation import (
    SAVFI_WINDOW,
    VoltageBand,
    delta_v,
    savfi,
    savfi_table,
    violation_table,
    violations,
)


def test_delta_v_constant_series():
    np.testing.assert_array_equal(delta_v(np.full(20, 1.02)), np.zeros(19))


def test_delta_v_arithmetic():
    np.testing.assert_allclose(delta_v([1.00, 1.01, 0.99]), [0.01, 0.02])


def test_delta_v_sawtooth():
    a = 0.003
    series = 1.0 + a * (np.arange(40) % 2)
    np.testing.assert_allclose(delta_v(series), a)


def test_delta_v_needs_two_samples():
    with pytest.raises(ValueError):
        delta_v([1.0])


def test_savfi_zero_and_constant():
    np.testing.assert_array_equal(savfi(np.zeros(30)), [0.0, 0.0])
    np.testing.assert_allclose(savfi(np.full(45, 0.004)), [0.004] * 3)


def test_savfi_mean_of_ramp():
    assert SAVFI_WINDOW == 15
    dv = np.arange(1, 16) * 1e-3
    np.testing.assert_allclose(savfi(dv), [8e-3])


def test_savfi_short_trailing_window():
    out = savfi(np.r_[np.zeros(15), [0.002, 0.004]])
    np.testing.assert_allclose(out, [0.0, 0.003])


def test_savfi_columns_independent():
    dv = np.column_stack([np.zeros(15), np.full(15, 0.01)])
    np.testing.assert_allclose(savfi(dv), [[0.0, 0.01]])


def test_savfi_bad_window():
    with pytest.raises(ValueError):
        savfi(np.zeros(5), window=0)


def test_violations_inside_band():
    report = violations(np.linspace(0.96, 1.04, 50))
    assert report.count == 0
    assert report.worst_excursion == 0.0
    assert not report.flags.any()


def test_single_overvoltage_sample():
    report = violations([1.0, 1.06, 1.0])
    assert report.over_count == 1 and report.under_count == 0
    assert report.worst_excursion == pytest.approx(0.01)
    assert report.flags.tolist() == [False, True, False]


def test_band_edges_are_inside():
    assert violations([0.95, 1.05]).count == 0


def test_custom_band_and_bad_band():
    assert violations([0.97], VoltageBand(low=0.98, high=1.02)).under_count == 1
    with pytest.raises(ValueError):
        violations([1.0], VoltageBand(low=1.1, high=1.0))


def frame(values):
    cols = pd.MultiIndex.from_tuples([("b1", "A"), ("b1", "B")], names=["bus", "phase"])
    return pd.DataFrame(values, index=pd.Index(np.arange(len(values)) + 600.0, name="t_min"), columns=cols)


def test_savfi_table_rows():
    v = np.column_stack([1.0 + 0.001 * (np.arange(31) % 2), np.ones(31)])
    table = savfi_table(frame(v))
    assert list(table.columns) == ["bus", "phase", "window_start", "savfi"]
    assert len(table) == 4
    assert table["window_start"].tolist() == [600.0, 615.0, 600.0, 615.0]
    a = table[table["phase"] == "A"]["savfi"].to_numpy()
    np.testing.assert_allclose(a, 0.001)
    assert table[table["phase"] == "B"]["savfi"].eq(0).all()


def test_savfi_table_single_step_is_empty():
    assert savfi_table(frame(np.ones((1, 2)))).empty


def test_violation_table_counts():
    v = np.array([[1.0, 0.94], [1.07, 0.96], [1.0, 0.93]])
    table = violation_table(frame(v)).set_index("phase")
    assert table.loc["A", "over"] == 1
    assert table.loc["B", "under"] == 2
    assert table.loc["B", "worst_excursion"] == pytest.approx(0.02)


def random_voltages(seed=3, steps=61, columns=4):
    rng = np.random.default_rng(seed)
    return 1.0 + 0.01 * rng.standard_normal((steps, columns))


@pytest.mark.parametrize("shift", [-0.05, 0.02, 0.3])
def test_savfi_ignores_a_constant_offset(shift):
    v = random_voltages()
    np.testing.assert_allclose(savfi(delta_v(v + shift)), savfi(delta_v(v)), atol=1e-12)


@pytest.mark.parametrize("k", [0.5, 2.0, 10.0])
def test_savfi_scales_linearly(k):
    v = random_voltages(seed=5)
    np.testing.assert_allclose(savfi(delta_v(k * v)), k * savfi(delta_v(v)), rtol=1e-9)
