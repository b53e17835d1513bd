"""File formats: `date,close` price CSVs, numeric CSVs and JSON reports."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

SCHEMA_VERSION = 1


class CsvFormatError(ValidationError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class PriceTable:
    dates: tuple[str, ...]
    closes: np.ndarray

    def window(self, start: str | None = None, end: str | None = None) -> PriceTable:
        lo = dt.date.fromisoformat(start) if start else None
        hi = dt.date.fromisoformat(end) if end else None
        keep = [
            i for i, d in enumerate(self.dates)
            if (lo is None or dt.date.fromisoformat(d) >= lo) and (hi is None or dt.date.fromisoformat(d) <= hi)
        ]
        return PriceTable(tuple(self.dates[i] for i in keep), self.closes[keep])


def read_price_csv(path) -> PriceTable:
    """Read a `date,close` file; dates must be ISO-8601 and strictly increasing."""
    path = Path(path)
    dates: list[str] = []
    closes: list[float] = []
    prev = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["date", "close"]:
            raise CsvFormatError(path, 1, "header must be 'date,close'")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise CsvFormatError(path, line, f"expected 2 fields, got {len(row)}")
            raw_date, raw_close = row[0].strip(), row[1].strip()
            try:
                day = dt.date.fromisoformat(raw_date)
            except ValueError:
                raise CsvFormatError(path, line, f"bad ISO-8601 date {raw_date!r}") from None
            try:
                close = float(raw_close)
            except ValueError:
                raise CsvFormatError(path, line, f"bad close value {raw_close!r}") from None
            if not (math.isfinite(close) and close > 0):
                raise CsvFormatError(path, line, f"close must be finite and > 0, got {raw_close}")
            if prev is not None and day <= prev:
                raise CsvFormatError(path, line, "dates must be strictly increasing")
            prev = day
            dates.append(day.isoformat())
            closes.append(close)
    return PriceTable(tuple(dates), np.array(closes, dtype=float))


def write_price_csv(path, dates, closes) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "close"])
        for d, c in zip(dates, closes):
            w.writerow([d, format_number(c)])


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_table_csv(path, header, rows) -> None:
    """Write rows of numbers/strings; floats use a round-trip representation."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([format_number(v) for v in row])


def read_table_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no infinities; keep them in-band as strings
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return obj.value
    return obj


def write_json(path, payload: dict) -> None:
    body = {"schema_version": SCHEMA_VERSION, **payload}
    text = json.dumps(_jsonable(body), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def parse_float(text) -> float:
    """Float from a number, a decimal string, 'inf' or a fraction like '1/252'."""
    if isinstance(text, (int, float)):
        return float(text)
    text = str(text).strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)
