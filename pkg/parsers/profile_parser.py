import io
import logging
from pathlib import Path
from typing import IO, Union

import numpy as np
import pandas as pd

from model.errors import ProfileError
from utils.helpers import safe_strip

logger = logging.getLogger(__name__)

__all__ = ["ProfileError", "parse_profiles", "load_profiles", "profile_to_csv_bytes"]

TIME_COLUMN = "t_min"
PROFILE_KINDS = ("load", "pv")

Source = Union[str, bytes, Path, IO]


def _decode(data):
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data.count(b"\n", 0, exc.start) + 1
        raise ProfileError(f"invalid UTF-8 byte 0x{data[exc.start]:02x}", line=line) from None


def _read_text(source: Source) -> str:
    if isinstance(source, Path):
        try:
            return _decode(source.read_bytes())
        except OSError as exc:
            raise ProfileError(f"cannot read {source}: {exc.strerror}") from None
    if isinstance(source, bytes):
        return _decode(source)
    if isinstance(source, str):
        return source
    data = source.read()
    return _decode(data) if isinstance(data, bytes) else data


def parse_profiles(source: Source, kind: str = "load") -> pd.DataFrame:
    """
    Parse a ProfileFile (`t_min,<series>...`) into a DataFrame indexed by
    t_min with one float column per series. The uniform step is stored in
    `df.attrs["step_min"]`.

    kind="load" accepts multipliers in [0, inf); kind="pv" requires [0, 1].
    """
    if kind not in PROFILE_KINDS:
        raise ValueError(f"kind must be one of {PROFILE_KINDS}")

    text = _read_text(source)
    if not safe_strip(text):
        raise ProfileError("profile file is empty", line=1)

    try:
        raw = pd.read_csv(
            io.StringIO(text), dtype=str, skipinitialspace=True, keep_default_na=False, index_col=False
        )
    except pd.errors.ParserError as exc:
        raise ProfileError(f"ragged row: {exc}") from None
    except pd.errors.EmptyDataError:
        raise ProfileError("profile file has no header", line=1) from None

    columns = [safe_strip(c) for c in raw.columns]
    raw.columns = columns
    if not columns or columns[0] != TIME_COLUMN:
        raise ProfileError(f"first column must be {TIME_COLUMN!r}", line=1)
    if len(columns) < 2:
        raise ProfileError("profile needs at least one series column", line=1)
    if len(set(columns)) != len(columns):
        raise ProfileError("duplicate series name in header", line=1)
    if raw.empty:
        raise ProfileError("profile has no rows", line=2)

    values = {}
    for col in columns:
        cells = raw[col].fillna("").map(safe_strip)
        empty = cells == ""
        if empty.any():
            row = int(np.flatnonzero(empty.to_numpy())[0])
            raise ProfileError("ragged row or empty cell", line=row + 2, column=col)
        numeric = pd.to_numeric(cells, errors="coerce")
        bad = numeric.isna() | ~np.isfinite(numeric.fillna(0.0))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ProfileError(f"non-numeric cell {cells.iloc[row]!r}", line=row + 2, column=col)
        values[col] = numeric.astype(float).to_numpy()

    t = values.pop(TIME_COLUMN)
    steps = np.diff(t)
    if steps.size:
        if (steps <= 0).any():
            row = int(np.flatnonzero(steps <= 0)[0])
            raise ProfileError("t_min must be strictly increasing", line=row + 3, column=TIME_COLUMN)
        if not np.allclose(steps, steps[0], rtol=0.0, atol=1e-9):
            row = int(np.flatnonzero(~np.isclose(steps, steps[0], rtol=0.0, atol=1e-9))[0])
            raise ProfileError("non-uniform time step", line=row + 3, column=TIME_COLUMN)
        step = float(steps[0])
    else:
        step = 1.0

    upper = 1.0 if kind == "pv" else np.inf
    for col, series in values.items():
        outside = (series < 0) | (series > upper)
        if outside.any():
            row = int(np.flatnonzero(outside)[0])
            raise ProfileError(
                f"value {series[row]} outside [0, {upper}] for a {kind} profile", line=row + 2, column=col
            )

    table = pd.DataFrame(values, index=pd.Index(t, name=TIME_COLUMN))
    table.attrs["step_min"] = step
    table.attrs["kind"] = kind
    logger.debug("parsed %s profile: %d rows, %d series, step %.3g min", kind, len(table), table.shape[1], step)
    return table


def load_profiles(path: Union[str, Path], kind: str = "load") -> pd.DataFrame:
    return parse_profiles(Path(path), kind=kind)


def profile_to_csv_bytes(table: pd.DataFrame) -> bytes:
    """
    Write a profile table back in ProfileFile form.
    """
    out = table.copy()
    out.index = out.index.rename(TIME_COLUMN)
    buf = io.StringIO()
    out.reset_index().to_csv(buf, index=False, float_format="%.6f", lineterminator="\n")
    return buf.getvalue().encode("utf-8")
