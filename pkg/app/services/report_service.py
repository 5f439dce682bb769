"""
Report Service Module

Writes experiment tables as CSV. Every file starts with one comment line naming
the command, the configuration hash and the units of the columns, followed by
the table. Floats use a fixed format and line endings are normalized, so a
rerun with the same configuration produces identical bytes.
"""

import io
import logging
import sys
from pathlib import Path
from typing import Dict, Optional

import pandas as pd

# Configure logger
logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def header_line(command: str, config_hash: str, units: Dict[str, str]) -> str:
    """Comment line carrying provenance and column units."""
    unit_text = ";".join(f"{column}:{unit}" for column, unit in units.items())
    return f"# command={command} config_hash={config_hash} units={unit_text}\n"


def render_csv(frame: pd.DataFrame, command: str, config_hash: str, units: Dict[str, str]) -> str:
    buffer = io.StringIO()
    buffer.write(header_line(command, config_hash, units))
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def write_csv(
    frame: pd.DataFrame,
    path: Optional[str],
    command: str,
    config_hash: str,
    units: Dict[str, str],
) -> str:
    """
    Emit a table to ``path`` (stdout when None).

    Returns:
        str: The rendered CSV text
    """
    text = render_csv(frame, command, config_hash, units)
    if path is None:
        sys.stdout.write(text)
        return text
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="") as f:
        f.write(text)
    logger.info(f"Wrote {len(frame)} rows to {target}")
    return text


def read_csv(path: str) -> pd.DataFrame:
    """Read a table written by write_csv, skipping the header comment."""
    return pd.read_csv(path, comment="#")
