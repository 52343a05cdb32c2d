import logging
import os
from typing import Tuple

import pandas as pd

from generators.results_writer import RESULT_COLUMNS, RESULTS_FILE, SAVFI_COLUMNS, SAVFI_FILE

logger = logging.getLogger(__name__)


def read_results(directory) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Read back results.csv and savfi.csv written by `write_results`.
    SAVFI values stay in the file's scale (see its comment line).
    """
    results = pd.read_csv(os.path.join(directory, RESULTS_FILE), dtype={"bus": str, "phase": str})
    savfi = pd.read_csv(os.path.join(directory, SAVFI_FILE), comment="#", dtype={"bus": str, "phase": str})
    for name, df, expected in ((RESULTS_FILE, results, RESULT_COLUMNS), (SAVFI_FILE, savfi, SAVFI_COLUMNS)):
        if list(df.columns) != expected:
            raise ValueError(f"{name}: expected columns {','.join(expected)}, found {','.join(df.columns)}")
    logger.debug("read %d result rows and %d savfi rows from %s", len(results), len(savfi), directory)
    return results, savfi
