"""Parsing and validation of the monthly credit-card source CSV.

The source table has one row per account: profile fields, six months of
repayment status / bill / payment history, and a binary default label.
Month-indexed columns ship newest-first (suffix 1 = September); records
store them oldest-first (April .. September) so downstream code can walk
the months chronologically.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

from .errors import InputError, RowError, SchemaError

logger = logging.getLogger(__name__)

N_MONTHS = 6
MONTH_NAMES = ("April", "May", "June", "July", "August", "September")

# Oldest month first. The source has no PAY_1; September's status is PAY_0.
PAY_STATUS_COLUMNS = ("PAY_6", "PAY_5", "PAY_4", "PAY_3", "PAY_2", "PAY_0")
BILL_COLUMNS = ("BILL_AMT6", "BILL_AMT5", "BILL_AMT4", "BILL_AMT3", "BILL_AMT2", "BILL_AMT1")
PAY_AMT_COLUMNS = ("PAY_AMT6", "PAY_AMT5", "PAY_AMT4", "PAY_AMT3", "PAY_AMT2", "PAY_AMT1")

ID_COLUMN = "ID"
LABEL_COLUMN = "default payment next month"

SOURCE_COLUMNS = (
    ID_COLUMN,
    "LIMIT_BAL",
    "SEX",
    "EDUCATION",
    "MARRIAGE",
    "AGE",
    "PAY_0",
    "PAY_2",
    "PAY_3",
    "PAY_4",
    "PAY_5",
    "PAY_6",
    "BILL_AMT1",
    "BILL_AMT2",
    "BILL_AMT3",
    "BILL_AMT4",
    "BILL_AMT5",
    "BILL_AMT6",
    "PAY_AMT1",
    "PAY_AMT2",
    "PAY_AMT3",
    "PAY_AMT4",
    "PAY_AMT5",
    "PAY_AMT6",
    LABEL_COLUMN,
)


@dataclass(frozen=True)
class CustomerRecord:
    """One source row: account profile plus six months of history, oldest first."""

    id: int
    limit_bal: int
    sex: int
    education: int
    marriage: int
    age: int
    pay_status: tuple[int, ...]
    bill_amt: tuple[int, ...]
    pay_amt: tuple[int, ...]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if self.limit_bal <= 0:
            raise ValueError(f"limit_bal must be positive, got {self.limit_bal}")
        if self.age <= 0:
            raise ValueError(f"age must be positive, got {self.age}")
        for name in ("pay_status", "bill_amt", "pay_amt"):
            if len(getattr(self, name)) != N_MONTHS:
                raise ValueError(f"{name} must have {N_MONTHS} entries")


@dataclass(frozen=True)
class SourceSummary:
    count: int
    defaults: int

    @property
    def default_rate(self) -> float:
        return self.defaults / self.count if self.count else 0.0


def _to_int(cell: str) -> int:
    text = cell.strip()
    try:
        return int(text)
    except ValueError:
        value = float(text)  # may raise ValueError again
        if not value.is_integer():
            raise ValueError(f"non-integral value {text!r}")
        return int(value)


def parse_source(path) -> list[CustomerRecord]:
    """Parse the source CSV into customer records.

    Raises ``SchemaError`` when a required column is missing, ``RowError``
    (with the file line number) for unparseable cells, and ``InputError``
    for an empty file.
    """
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [cell.strip() for cell in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        index = {name: i for i, name in enumerate(header)}
        for name in SOURCE_COLUMNS:
            if name not in index:
                raise SchemaError(f"{path}: missing column {name!r}")

        records = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < len(header):
                raise RowError(line, f"expected {len(header)} cells, got {len(row)}")

            def cell(name: str) -> int:
                raw = row[index[name]]
                try:
                    return _to_int(raw)
                except ValueError:
                    raise RowError(line, f"non-numeric value {raw!r} in column {name!r}") from None

            try:
                record = CustomerRecord(
                    id=cell(ID_COLUMN),
                    limit_bal=cell("LIMIT_BAL"),
                    sex=cell("SEX"),
                    education=cell("EDUCATION"),
                    marriage=cell("MARRIAGE"),
                    age=cell("AGE"),
                    pay_status=tuple(cell(c) for c in PAY_STATUS_COLUMNS),
                    bill_amt=tuple(cell(c) for c in BILL_COLUMNS),
                    pay_amt=tuple(cell(c) for c in PAY_AMT_COLUMNS),
                    label=cell(LABEL_COLUMN),
                )
            except ValueError as exc:
                raise RowError(line, str(exc)) from None
            records.append(record)

    summary = source_summary(records)
    if summary.count:
        logger.info(
            "parsed %d records, %d defaults (%.1f%%)",
            summary.count, summary.defaults, 100.0 * summary.default_rate,
        )
    return records


def write_source(records, path) -> None:
    """Write records back to the source CSV layout (inverse of ``parse_source``)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SOURCE_COLUMNS)
        for r in records:
            by_column = {
                ID_COLUMN: r.id,
                "LIMIT_BAL": r.limit_bal,
                "SEX": r.sex,
                "EDUCATION": r.education,
                "MARRIAGE": r.marriage,
                "AGE": r.age,
                LABEL_COLUMN: r.label,
            }
            for i in range(N_MONTHS):
                by_column[PAY_STATUS_COLUMNS[i]] = r.pay_status[i]
                by_column[BILL_COLUMNS[i]] = r.bill_amt[i]
                by_column[PAY_AMT_COLUMNS[i]] = r.pay_amt[i]
            writer.writerow([by_column[name] for name in SOURCE_COLUMNS])


def source_summary(records) -> SourceSummary:
    return SourceSummary(count=len(records), defaults=sum(r.label for r in records))
