import logging
import os
from typing import Optional

LOG_ENV_VAR = "GRIDFLUX_LOG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Optional[str] = None) -> None:
    """
    Configure root logging on stderr. The level comes from the argument,
    then from GRIDFLUX_LOG, then defaults to WARNING.
    """
    name = (level or os.environ.get(LOG_ENV_VAR) or "WARNING").strip().upper()
    numeric = getattr(logging, name, None)
    unknown = not isinstance(numeric, int)
    logging.basicConfig(level=logging.WARNING if unknown else numeric, format=LOG_FORMAT, force=True)
    if unknown:
        logging.getLogger(__name__).warning("unknown log level %r, using WARNING", name)
