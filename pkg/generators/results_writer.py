import io
import json
import logging
import os
from typing import Any, Dict, Optional

import pandas as pd

from metrics.fluctuation import SAVFI_SCALE

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.csv"
SAVFI_FILE = "savfi.csv"
META_FILE = "meta.json"

RESULT_COLUMNS = ["t_min", "bus", "phase", "v_pu", "p_inj_kw", "q_inj_kvar", "flag_violation"]
SAVFI_COLUMNS = ["bus", "phase", "window_start", "savfi"]
SAVFI_HEADER = f"# savfi scale: {SAVFI_SCALE:g} pu\n"
FLOAT_FORMAT = "%.6f"


def _csv_bytes(df: pd.DataFrame, preamble: str = "") -> bytes:
    buffer = io.StringIO()
    buffer.write(preamble)
    df.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue().encode("utf-8")


def results_csv_bytes(result) -> bytes:
    """
    One row per (step, bus, phase):
    t_min,bus,phase,v_pu,p_inj_kw,q_inj_kvar,flag_violation
    """
    df = result.results_frame() if result is not None else pd.DataFrame(columns=RESULT_COLUMNS)
    return _csv_bytes(df[RESULT_COLUMNS])


def savfi_csv_bytes(result) -> bytes:
    """SAVFI per (bus, phase, window) in units of SAVFI_SCALE pu, after a scale comment line."""
    if result is None:
        df = pd.DataFrame(columns=SAVFI_COLUMNS)
    else:
        df = result.savfi_table().copy()
        df["savfi"] = df["savfi"].astype(float) / SAVFI_SCALE
        if len(df) and (df["window_start"] == df["window_start"].round()).all():
            df["window_start"] = df["window_start"].astype("int64")
    return _csv_bytes(df[SAVFI_COLUMNS], preamble=SAVFI_HEADER)


def meta_json_bytes(result, extra: Optional[Dict[str, Any]] = None) -> bytes:
    payload = dict(result.metadata) if result is not None else {}
    if extra:
        payload.update(extra)
    return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")


def write_results(result, directory, extra_meta: Optional[Dict[str, Any]] = None) -> Dict[str, str]:
    """
    Write results.csv, savfi.csv and meta.json into `directory` (created if
    missing). Returns {file name: path}. I/O errors propagate.
    """
    os.makedirs(directory, exist_ok=True)
    files = {
        RESULTS_FILE: results_csv_bytes(result),
        SAVFI_FILE: savfi_csv_bytes(result),
        META_FILE: meta_json_bytes(result, extra_meta),
    }
    written = {}
    for name, data in files.items():
        path = os.path.join(directory, name)
        with open(path, "wb") as fh:
            fh.write(data)
        written[name] = path
    logger.info("wrote %s", ", ".join(sorted(written.values())))
    return written
