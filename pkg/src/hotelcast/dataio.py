"""CSV ingestion and export in the ``city,kpi,month,value`` format."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .errors import KpiError
from .series import KPI_ORDER, KpiKind, KpiSeries, MonthIndex

COLUMNS = ("city", "kpi", "month", "value")


@dataclass(frozen=True)
class IngestError:
    city: str
    kpi: str
    line: int
    message: str
    source: str = ""

    def as_dict(self) -> dict:
        return {"city": self.city, "kpi": self.kpi, "line": self.line, "message": self.message,
                "source": self.source}


def parse_kpi_csv(text: str, source: str = "") -> tuple[list[KpiSeries], list[IngestError]]:
    """Parse one CSV document.

    Bad rows do not abort the parse: the affected (city, kpi) series is
    dropped and reported with the first offending line number (1-based,
    header is line 1). Series are returned in order of first appearance.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise KpiError("BAD_CSV", f"{source or 'input'}: empty file") from None
    if tuple(h.strip() for h in header) != COLUMNS:
        raise KpiError("BAD_CSV", f"{source or 'input'}: header must be {','.join(COLUMNS)}")

    rows: dict[tuple[str, str], list[tuple[int, MonthIndex, Optional[float]]]] = defaultdict(list)
    errors: dict[tuple[str, str], IngestError] = {}

    def fail(key, line, msg):
        if key not in errors:
            errors[key] = IngestError(key[0], key[1], line, msg, source)

    for rec in reader:
        line = reader.line_num
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != 4:
            key = (rec[0].strip() if rec else "", rec[1].strip() if len(rec) > 1 else "")
            fail(key, line, f"expected 4 fields, got {len(rec)}")
            continue
        city, kpi, month, value = (f.strip() for f in rec)
        key = (city, kpi)
        try:
            if not city:
                raise ValueError("empty city")
            kind = KpiKind(kpi)
            m = MonthIndex.parse(month)
            v = None if value == "" else float(value)
            if v is not None and not kind.check(v):
                raise ValueError(f"value {value} outside the valid {kpi} range")
        except ValueError as e:
            fail(key, line, str(e))
            continue
        rows[key].append((line, m, v))

    series = []
    for key, recs in rows.items():
        if key in errors:
            continue
        recs.sort(key=lambda r: r[1])
        for (l0, m0, _), (l1, m1, _) in zip(recs, recs[1:]):
            if m1 == m0:
                fail(key, max(l0, l1), f"duplicate month {m1}")
                break
            if m1 - m0 != 1:
                fail(key, l1, f"gap between {m0} and {m1}")
                break
        if key in errors:
            continue
        series.append(KpiSeries(key[0], KpiKind(key[1]), recs[0][1], tuple(r[2] for r in recs)))
    return series, list(errors.values())


def read_kpi_csv(path) -> tuple[list[KpiSeries], list[IngestError]]:
    path = Path(path)
    return parse_kpi_csv(path.read_text(encoding="utf-8"), source=path.name)


def read_inputs(path) -> tuple[list[KpiSeries], list[IngestError]]:
    """Read a CSV file, or every ``*.csv`` in a directory (sorted by name)."""
    path = Path(path)
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise KpiError("BAD_CSV", f"no CSV files under {path}")
    series, errors = [], []
    for f in files:
        s, e = read_kpi_csv(f)
        series += s
        errors += e
    return series, errors


def _fmt(v: Optional[float]) -> str:
    if v is None:
        return ""
    if not math.isfinite(v):
        raise ValueError(f"cannot write non-finite value {v}")
    return repr(float(v))


def format_kpi_csv(series: Iterable[KpiSeries]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for s in series:
        for i, v in enumerate(s.values):
            w.writerow([s.city, s.kind.value, str(s.start + i), _fmt(v)])
    return buf.getvalue()


def write_kpi_csv(series: Iterable[KpiSeries], path) -> None:
    Path(path).write_text(format_kpi_csv(series), encoding="utf-8")


def safe_name(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in text)


def order_series(series: list[KpiSeries]) -> list[KpiSeries]:
    """City order of first appearance, then OCC/ADR/REVPAR."""
    cities = list(dict.fromkeys(s.city for s in series))
    return sorted(series, key=lambda s: (cities.index(s.city), KPI_ORDER.index(s.kind)))
