import csv
import io
import math
import os
import tempfile
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence

from errors import MissingArtifacts

HEADER_PREFIX = "# generated "


def format_value(value: Any) -> str:
    """floats as %.12g, inf/nan spelled out, None as an empty cell"""
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return "%.12g" % value
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        return format_value(value.item())
    return str(value)


def columns_of(rows: Sequence[Dict[str, Any]]) -> List[str]:
    """union of the row keys, first-seen order"""
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    return columns


def render_csv(rows: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None,
               stamp: Optional[str] = None) -> str:
    """
    :param rows: one dict per record
    :param columns: column order, defaults to the keys in first-seen order
    :param stamp: ISO timestamp for the header line, now by default
    :return: the CSV text, starting with the single '# generated' line
    """
    columns = list(columns) if columns is not None else columns_of(rows)
    stamp = stamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    buffer = io.StringIO()
    buffer.write(f"{HEADER_PREFIX}{stamp}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    if columns:
        writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])
    return buffer.getvalue()


def write_atomic(path: str, text: str) -> str:
    """writes through a temp file in the same folder and renames it into place"""
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def write_csv(path: str, rows: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> str:
    return write_atomic(path, render_csv(rows, columns))


def read_csv(path: str) -> List[Dict[str, str]]:
    if not os.path.exists(path):
        raise MissingArtifacts(f"missing artifact {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith(HEADER_PREFIX)]
    return list(csv.DictReader(lines))


def strip_stamp(text: str) -> str:
    """the CSV text without its timestamp line, for reproducibility checks"""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith(HEADER_PREFIX))


def prefixed(rows: Iterable[Dict[str, Any]], **fixed) -> List[Dict[str, Any]]:
    """rows with the fixed columns put in front"""
    return [{**fixed, **row} for row in rows]
