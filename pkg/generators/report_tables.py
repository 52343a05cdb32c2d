import pandas as pd

from metrics.fluctuation import SAVFI_SCALE

SUMMARY_COLUMNS = ["bus", "phase", "savfi", "over", "under", "worst_excursion"]


def summary_table(result) -> pd.DataFrame:
    """
    Per (bus, phase): mean SAVFI over the run (in SAVFI_SCALE units) and
    violation counts.
    """
    savfi = result.savfi_table()
    if len(savfi):
        mean = savfi.groupby(["bus", "phase"], sort=False)["savfi"].mean().div(SAVFI_SCALE).reset_index()
    else:
        mean = pd.DataFrame(columns=["bus", "phase", "savfi"])
    table = result.violation_table().merge(mean, on=["bus", "phase"], how="left")
    return table[SUMMARY_COLUMNS]


def scaled_comparison(table: pd.DataFrame) -> pd.DataFrame:
    out = table.copy()
    for col in [c for c in out.columns if c.startswith("savfi_")]:
        out[col] = out[col] / SAVFI_SCALE
    return out


def format_table(df: pd.DataFrame, digits: int = 4) -> str:
    if df.empty:
        return "(no rows)"
    return df.to_string(index=False, float_format=lambda x: f"{x:.{digits}f}")
