import numpy as np
import pandas as pd
import pytest

from parsers.profile_parser import ProfileError, load_profiles, parse_profiles, profile_to_csv_bytes


def test_three_rows_one_series():
    table = parse_profiles("t_min,load\n0,1.0\n1,0.9\n2,1.1\n")
    assert len(table) == 3
    assert list(table.columns) == ["load"]
    assert table.attrs["step_min"] == 1.0
    assert table["load"].tolist() == [1.0, 0.9, 1.1]


def test_decreasing_time_rejected():
    with pytest.raises(ProfileError) as info:
        parse_profiles("t_min,load\n0,1\n2,1\n1,1\n")
    assert info.value.line == 4
    assert info.value.column == "t_min"


def test_non_uniform_step_rejected():
    with pytest.raises(ProfileError, match="non-uniform"):
        parse_profiles("t_min,load\n0,1\n1,1\n3,1\n")


def test_full_day_spans_24_hours():
    body = "\n".join(f"{t},{0.5}" for t in range(1440))
    table = parse_profiles("t_min,pv\n" + body + "\n", kind="pv")
    assert len(table) == 1440
    assert table.index[-1] - table.index[0] + table.attrs["step_min"] == 1440


def test_ragged_row_rejected():
    with pytest.raises(ProfileError):
        parse_profiles("t_min,a,b\n0,1,1\n1,1\n")


def test_non_numeric_cell_reports_line_and_column():
    with pytest.raises(ProfileError) as info:
        parse_profiles("t_min,a\n0,1\n1,abc\n")
    assert info.value.line == 3
    assert info.value.column == "a"


def test_pv_values_must_be_normalized():
    with pytest.raises(ProfileError, match="outside"):
        parse_profiles("t_min,pv\n0,0.5\n1,1.2\n", kind="pv")
    # loads may exceed 1
    assert parse_profiles("t_min,load\n0,1.5\n1,2.0\n")["load"].max() == 2.0


def test_negative_load_rejected():
    with pytest.raises(ProfileError):
        parse_profiles("t_min,load\n0,-0.1\n1,1\n")


def test_header_must_start_with_time():
    with pytest.raises(ProfileError, match="first column"):
        parse_profiles("time,load\n0,1\n")


def test_empty_input_rejected():
    with pytest.raises(ProfileError):
        parse_profiles("")


def test_invalid_utf8_rejected(tmp_path):
    with pytest.raises(ProfileError, match="UTF-8") as info:
        parse_profiles(b"t_min,load\n0,\xff\n")
    assert info.value.line == 2
    bad = tmp_path / "loads.csv"
    bad.write_bytes(b"t_min,load\n0,1\n1,\xfe\n")
    with pytest.raises(ProfileError) as info:
        load_profiles(bad)
    assert info.value.line == 3


def test_profile_csv_round_trip():
    table = pd.DataFrame(
        {"pv": [0.0, 0.25, 0.5], "pv_b": [1.0, 0.123456, 0.0]}, index=pd.Index([600.0, 601.0, 602.0], name="t_min")
    )
    again = parse_profiles(profile_to_csv_bytes(table), kind="pv")
    np.testing.assert_allclose(again.to_numpy(), table.to_numpy(), atol=1e-6)
    np.testing.assert_allclose(again.index.to_numpy(), table.index.to_numpy())
