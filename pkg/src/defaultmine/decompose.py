"""Decomposition of source records into monthly offline and online batches.

The six source months split into an initial summarized month (April) and
five batch months (May .. September). Offline batch ``i`` summarizes every
account through the predecessor of its batch month; online batch ``i``
carries that month's individual transactions: one "pay" event per account
plus "exp" events obtained by splitting the monthly bill along an empirical
transaction-amount distribution.
"""

from __future__ import annotations

import calendar
import csv
import dataclasses
import logging
from dataclasses import dataclass
from datetime import date

import numpy as np

from .errors import BinningError, DegenerateRangeError, InputError, RowError, SchemaError
from .ingest import N_MONTHS, CustomerRecord

logger = logging.getLogger(__name__)

BATCH_COUNT = N_MONTHS - 1
DEFAULT_YEAR = 2005
FIRST_BATCH_MONTH = 5  # May; April folds into the initial totals

OFFLINE_HEADER = (
    "account", "balance_limit", "sex", "education", "marriage", "age",
    "total_bill", "total_payment", "repayment", "default",
)
ONLINE_HEADER = ("tid", "account", "amount", "date", "type")

_STREAM_ACCOUNT = 1
_STREAM_TEMPLATE = 4


@dataclass(frozen=True)
class OfflineAccount:
    """Summarized per-account profile as of the start of a batch month."""

    account: int
    balance_limit: int
    sex: int
    education: int
    marriage: int
    age: int
    total_bill: int
    total_payment: int
    repayment: int
    default: int

    def __post_init__(self):
        if self.default not in (0, 1):
            raise ValueError(f"default must be 0 or 1, got {self.default}")
        if self.balance_limit <= 0:
            raise ValueError(f"balance_limit must be positive, got {self.balance_limit}")


@dataclass(frozen=True)
class OnlineTransaction:
    """A single pay/exp event inside a batch month."""

    tid: int
    account: int
    amount: int
    date: date
    type: str

    def __post_init__(self):
        if self.type not in ("pay", "exp"):
            raise ValueError(f"type must be 'pay' or 'exp', got {self.type!r}")


@dataclass(frozen=True)
class RescaleRange:
    """Affine mapping bounds: [min1, max1] in the source scale to [min2, max2]."""

    min1: float
    max1: float
    min2: float
    max2: float

    def __post_init__(self):
        if not self.max1 > self.min1:
            raise DegenerateRangeError(f"source range [{self.min1}, {self.max1}] has no width")
        if self.max2 < self.min2:
            raise ValueError(f"target range [{self.min2}, {self.max2}] is inverted")


def rescale(value: float, bounds: RescaleRange) -> float:
    """Map ``value`` affinely into the target range; out-of-range values clamp first."""
    v = min(max(float(value), bounds.min1), bounds.max1)
    span1 = bounds.max1 - bounds.min1
    return (bounds.max2 - bounds.min2) * (v - bounds.min1) / span1 + bounds.min2


def equal_frequency_bins(samples, n_bins: int) -> list[float]:
    """Quantile-style boundaries putting (nearly) equal sample counts per bin.

    ``samples`` must be sorted ascending. Returns ``n_bins + 1`` non-decreasing
    boundaries; bin ``k`` holds the samples with indices in
    ``[k*n // n_bins, (k+1)*n // n_bins)``, i.e. floor(n/n_bins) or
    ceil(n/n_bins) of them, even when values tie across the boundary.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.size == 0:
        raise BinningError("samples must be non-empty")
    if n_bins < 1:
        raise BinningError("n_bins must be at least 1")
    if n_bins > s.size:
        raise BinningError(f"n_bins {n_bins} exceeds sample count {s.size}")
    if s.size > 1 and np.any(np.diff(s) < 0):
        raise BinningError("samples must be sorted ascending")
    edges = [float(s[0])]
    for k in range(1, n_bins):
        edges.append(float(s[(k * s.size) // n_bins]))
    edges.append(float(s[-1]))
    return edges


def assign_bin(value: float, boundaries) -> int:
    """Index of the half-open bin containing ``value``; outside values clamp."""
    b = np.asarray(boundaries, dtype=np.float64)
    n_bins = b.size - 1
    k = int(np.searchsorted(b, value, side="right")) - 1
    return min(max(k, 0), n_bins - 1)


def _bin_slice(n_samples: int, n_bins: int, k: int) -> tuple[int, int]:
    return (k * n_samples) // n_bins, ((k + 1) * n_samples) // n_bins


@dataclass(frozen=True, eq=False)
class DistributionTemplate:
    """Empirical transaction-amount distribution guiding bill splits.

    ``amounts`` is the sorted reference sample in its own currency scale;
    ``bin_boundaries`` are its equal-frequency edges; ``counts_per_bin`` is
    the expected number of transactions for a bill falling into each bin.
    ``bill_range`` maps source-scale bills into the reference scale and is
    fitted from the data being decomposed when left unset.
    """

    amounts: np.ndarray
    bin_boundaries: np.ndarray
    counts_per_bin: np.ndarray
    bill_range: RescaleRange | None = None

    @property
    def n_bins(self) -> int:
        return self.bin_boundaries.size - 1


def build_template(amounts, n_bins: int = 10, min_parts: float = 2.0,
                   max_parts: float = 20.0) -> DistributionTemplate:
    """Build a template from raw reference amounts.

    The transactions-per-bill statistic ramps linearly from ``min_parts``
    for the smallest-bill bin to ``max_parts`` for the largest; the mapping
    from bill size to transaction count is not observable from a plain
    amounts sample, so it is an explicit knob.
    """
    a = np.sort(np.asarray(amounts, dtype=np.float64))
    if a.size == 0:
        raise InputError("template needs at least one amount")
    if np.any(a <= 0):
        raise InputError("template amounts must all be positive")
    if min_parts < 1 or max_parts < min_parts:
        raise InputError("need 1 <= min_parts <= max_parts")
    boundaries = np.asarray(equal_frequency_bins(a, n_bins), dtype=np.float64)
    counts = np.linspace(float(min_parts), float(max_parts), n_bins)
    return DistributionTemplate(a, boundaries, counts)


def synthetic_template(n_bins: int = 10, n_amounts: int = 20000, log_mean: float = 3.2,
                       log_sigma: float = 1.0, seed: int = 11, min_parts: float = 2.0,
                       max_parts: float = 20.0) -> DistributionTemplate:
    """Log-normal fallback template so the pipeline runs without reference data."""
    rng = np.random.default_rng((_STREAM_TEMPLATE, seed))
    amounts = np.maximum(np.round(rng.lognormal(log_mean, log_sigma, size=n_amounts), 2), 0.01)
    return build_template(amounts, n_bins=n_bins, min_parts=min_parts, max_parts=max_parts)


def load_template_csv(path, n_bins: int = 10, min_parts: float = 2.0,
                      max_parts: float = 20.0) -> DistributionTemplate:
    """Load a single-column amounts CSV (optional header) into a template."""
    amounts = []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        for line, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            try:
                amounts.append(float(row[0]))
            except ValueError:
                if line == 1:
                    continue  # header row
                raise RowError(line, f"non-numeric template amount {row[0]!r}") from None
    if not amounts:
        raise InputError(f"{path}: no template amounts found")
    return build_template(amounts, n_bins=n_bins, min_parts=min_parts, max_parts=max_parts)


def fit_bill_range(template: DistributionTemplate, records) -> DistributionTemplate:
    """Fit the bill-to-template mapping from the positive batch-month bills."""
    lo, hi = None, None
    for r in records:
        for b in r.bill_amt[1:]:
            if b > 0:
                lo = b if lo is None else min(lo, b)
                hi = b if hi is None else max(hi, b)
    if lo is None or lo == hi:
        return template  # nothing to map; bills index the bins directly
    bounds = RescaleRange(float(lo), float(hi),
                          float(template.amounts[0]), float(template.amounts[-1]))
    return dataclasses.replace(template, bill_range=bounds)


def split_bill(bill: int, template: DistributionTemplate, rng) -> list[int]:
    """Split a monthly bill into transaction amounts summing to it exactly.

    Non-positive bills are never split. The bill is mapped into the template
    scale, its equal-frequency bin picks the amount pool and the expected
    transaction count, and integer amounts are apportioned by largest
    remainder so the sum invariant holds to the currency unit.
    """
    bill = int(bill)
    if bill <= 0:
        return [bill]
    scaled = rescale(bill, template.bill_range) if template.bill_range else float(bill)
    k = assign_bin(scaled, template.bin_boundaries)
    stat = float(template.counts_per_bin[k])
    n_parts = max(1, int(stat) + (1 if rng.random() < stat - int(stat) else 0))
    lo, hi = _bin_slice(template.amounts.size, template.n_bins, k)
    weights = template.amounts[rng.integers(lo, hi, size=n_parts)]
    quota = bill * (weights / weights.sum())
    base = np.floor(quota).astype(np.int64)
    residue = int(bill - base.sum())
    if residue > 0:
        order = np.argsort(base - quota, kind="stable")  # largest remainder first
        take = min(residue, n_parts)
        base[order[:take]] += 1
        base[order[0]] += residue - take
    return [int(p) for p in base if p > 0]


def batch_month(batch_index: int) -> int:
    """Calendar month number covered by 1-based batch ``batch_index``."""
    return FIRST_BATCH_MONTH + batch_index - 1


def summarize_offline(records) -> list[list[OfflineAccount]]:
    """Build the five offline batches: cumulative totals through each batch's
    predecessor month, with the repayment code of the latest folded month."""
    batches = []
    for i in range(BATCH_COUNT):
        rows = [
            OfflineAccount(
                account=r.id,
                balance_limit=r.limit_bal,
                sex=r.sex,
                education=r.education,
                marriage=r.marriage,
                age=r.age,
                total_bill=sum(r.bill_amt[: i + 1]),
                total_payment=sum(r.pay_amt[: i + 1]),
                repayment=r.pay_status[i],
                default=r.label,
            )
            for r in records
        ]
        batches.append(rows)
    return batches


def decompose_dataset(records, template: DistributionTemplate, seed: int,
                      year: int = DEFAULT_YEAR):
    """Decompose records into 5 offline and 5 online monthly batches.

    Each account draws from its own random stream derived from
    ``(seed, account)``, so processing order cannot change the output.
    Transaction ids are assigned sequentially across all batches in
    date order.
    """
    records = list(records)
    if not records:
        raise InputError("no records to decompose")
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate account ids in source records")
    if template.bill_range is None:
        template = fit_bill_range(template, records)

    offline_batches = summarize_offline(records)

    protos: list[list[tuple]] = [[] for _ in range(BATCH_COUNT)]
    for r in records:
        rng = np.random.default_rng((_STREAM_ACCOUNT, seed, r.id))
        for i in range(BATCH_COUNT):
            month = batch_month(i + 1)
            n_days = calendar.monthrange(year, month)[1]
            parts = split_bill(r.bill_amt[i + 1], template, rng)
            days = rng.integers(1, n_days + 1, size=len(parts) + 1)
            for j, amount in enumerate(parts):
                protos[i].append((date(year, month, int(days[j])), r.id, j, amount, "exp"))
            protos[i].append(
                (date(year, month, int(days[-1])), r.id, len(parts), int(r.pay_amt[i + 1]), "pay")
            )

    online_batches = []
    tid = 1
    for i in range(BATCH_COUNT):
        protos[i].sort(key=lambda e: (e[0], e[1], e[2]))
        batch = []
        for when, account, _ordinal, amount, kind in protos[i]:
            batch.append(OnlineTransaction(tid=tid, account=account, amount=amount,
                                           date=when, type=kind))
            tid += 1
        online_batches.append(batch)
        logger.info("online batch %d: %d transactions", i + 1, len(batch))

    return offline_batches, online_batches


def write_offline_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(OFFLINE_HEADER)
        for r in rows:
            writer.writerow([r.account, r.balance_limit, r.sex, r.education, r.marriage,
                             r.age, r.total_bill, r.total_payment, r.repayment, r.default])


def read_offline_csv(path) -> list[OfflineAccount]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(cell.strip() for cell in next(reader))
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        if header != OFFLINE_HEADER:
            raise SchemaError(f"{path}: expected header {OFFLINE_HEADER}, got {header}")
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = [int(cell) for cell in row]
                rows.append(OfflineAccount(*values))
            except (ValueError, TypeError) as exc:
                raise RowError(line, str(exc)) from None
    return rows


def write_online_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ONLINE_HEADER)
        for t in rows:
            writer.writerow([t.tid, t.account, t.amount, t.date.isoformat(), t.type])


def read_online_csv(path) -> list[OnlineTransaction]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(cell.strip() for cell in next(reader))
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        if header != ONLINE_HEADER:
            raise SchemaError(f"{path}: expected header {ONLINE_HEADER}, got {header}")
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append(OnlineTransaction(
                    tid=int(row[0]), account=int(row[1]), amount=int(row[2]),
                    date=date.fromisoformat(row[3]), type=row[4],
                ))
            except (ValueError, IndexError) as exc:
                raise RowError(line, str(exc)) from None
    return rows
