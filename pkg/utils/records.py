import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from utils.logger import get_logger
from config import settings

log = get_logger("records", settings.LOG_LEVEL)


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(payload: dict, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            json.dump(_plain(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as e:
        log.exception("could not write %s: %s", path, e)
        raise
    log.debug("wrote %s", path)
    return path


def read_json(path: str | Path) -> dict:
    with Path(path).open(encoding="utf-8") as fh:
        return json.load(fh)


def write_table(frame: pd.DataFrame, path: str | Path) -> Path:
    """CSV with round-trip float formatting, so identical runs give identical bytes."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        log.exception("could not write %s: %s", path, e)
        raise
    log.info("wrote %d rows to %s", len(frame), path)
    return path


def append_row(row: dict, path: str | Path) -> Path:
    """Append one summary row to a CSV journal, writing the header on first use."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not path.exists() or path.stat().st_size == 0
        pd.DataFrame([_plain(row)]).to_csv(path, mode="a", header=fresh, index=False, float_format="%.17g")
    except OSError as e:
        log.exception("journal write failed for %s: %s", path, e)
        raise
    log.info("journal: row appended to %s", path)
    return path


def json_text(payload: dict) -> str:
    return json.dumps(_plain(payload), indent=2, sort_keys=True)
