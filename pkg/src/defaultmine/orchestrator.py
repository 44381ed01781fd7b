"""Per-account risk state, online/offline fusion, and the batch run loop.

The fused score of a transaction is a convex combination of its online rule
score and the account's rolling offline risk. A positive online score makes
the fused value the new offline risk (carry-forward); at each month boundary
the state re-synchronizes against fresh model predictions on the updated
profiles.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass, field

from .errors import (ConfigError, ContractError, PredictionError, RunError,
                     StateError, SyncError)
from .extra_trees import ExtraTreesClassifier, features_from_accounts
from .metrics_bench import BatchReport, confusion_from_pairs, metrics
from .rule_engine import BatchContextProvider, RuleCatalog, risk

logger = logging.getLogger(__name__)

STATE_HEADER = ("account", "r_offline", "last_r_total", "last_batch",
                "last_ordinal", "active_this_month")


@dataclass(frozen=True)
class ScoringConfig:
    """Fusion weight and default-flag threshold.

    ``online_weight`` is the convex weight on the online rule score; the
    remainder applies to the rolling offline risk.
    """

    online_weight: float = 0.5
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.online_weight <= 1.0:
            raise ConfigError(f"online_weight out of [0, 1]: {self.online_weight}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold out of [0, 1]: {self.threshold}")


@dataclass
class AccountRisk:
    r_offline: float
    last_r_total: float | None = None
    last_batch: int = 0
    last_ordinal: int = 0
    active_this_month: bool = False


@dataclass
class RiskState:
    """Rolling per-account risk store; one record per account."""

    accounts: dict[int, AccountRisk] = field(default_factory=dict)

    def record(self, account: int) -> AccountRisk:
        try:
            return self.accounts[account]
        except KeyError:
            raise StateError(f"unknown account {account}") from None


def init_offline_risk(model: ExtraTreesClassifier, offline_batch) -> RiskState:
    """Seed every account's offline risk with the model's default probability."""
    rows = list(offline_batch)
    X, _ = features_from_accounts(rows)
    try:
        p1 = model.predict_proba(X)[:, 1]
    except PredictionError as exc:
        first, last = rows[0].account, rows[-1].account
        raise PredictionError(f"scoring accounts {first}..{last}: {exc}") from exc
    state = RiskState()
    for row, p in zip(rows, p1):
        state.accounts[row.account] = AccountRisk(r_offline=float(p))
    return state


def combine(r_online: float, r_offline: float, online_weight: float) -> float:
    """Convex combination of the online and offline risks."""
    for name, value in (("r_online", r_online), ("r_offline", r_offline),
                        ("online_weight", online_weight)):
        if not 0.0 <= value <= 1.0:
            raise ContractError(f"{name} out of [0, 1]: {value}")
    return online_weight * r_online + (1.0 - online_weight) * r_offline


def apply_transaction(state: RiskState, txn, r_online: float, config: ScoringConfig,
                      batch: int = 0, ordinal: int = 0) -> float:
    """Fuse one transaction's score into the account state and return it.

    A positive online score carries the fused value forward as the new
    offline risk; a zero score leaves the offline risk untouched.
    """
    record = state.record(txn.account)
    r_total = combine(r_online, record.r_offline, config.online_weight)
    if r_online > 0:
        record.r_offline = r_total
        record.active_this_month = True
    record.last_r_total = r_total
    record.last_batch = batch
    record.last_ordinal = ordinal
    return r_total


def month_end_sync(state: RiskState, model: ExtraTreesClassifier,
                   next_offline_batch) -> RiskState:
    """Re-synchronize offline risks against the next month's profiles.

    Accounts without positive online activity take the fresh prediction
    outright; active accounts keep the larger of carried and fresh risk.
    Month-activity flags reset for the new month.
    """
    rows = list(next_offline_batch)
    if {r.account for r in rows} != set(state.accounts):
        raise SyncError("offline batch does not cover the same accounts as the state")
    X, _ = features_from_accounts(rows)
    try:
        fresh = model.predict_proba(X)[:, 1]
    except PredictionError as exc:
        raise SyncError(f"offline profiles no longer match the model: {exc}") from exc
    for row, p in zip(rows, fresh):
        record = state.accounts[row.account]
        if record.active_this_month:
            record.r_offline = max(record.r_offline, float(p))
        else:
            record.r_offline = float(p)
        record.active_this_month = False
    return state


def _check_alignment(offline_batches, online_batches) -> None:
    if len(offline_batches) != len(online_batches) or not offline_batches:
        raise RunError(
            f"need equally many offline and online batches, got "
            f"{len(offline_batches)} and {len(online_batches)}")
    previous = None
    for i, (off, on) in enumerate(zip(offline_batches, online_batches), start=1):
        if not off or not on:
            raise RunError(f"batch {i} is empty")
        months = {(t.date.year, t.date.month) for t in on}
        if len(months) != 1:
            raise RunError(f"online batch {i} spans several months: {sorted(months)}")
        month = months.pop()
        if previous is not None:
            year, mon = previous
            expected = (year + 1, 1) if mon == 12 else (year, mon + 1)
            if month != expected:
                raise RunError(f"online batch {i} month {month} does not follow "
                               f"{previous}")
        previous = month
        offline_accounts = {r.account for r in off}
        missing = {t.account for t in on} - offline_accounts
        if missing:
            raise RunError(f"online batch {i} references accounts missing from its "
                           f"offline batch: {sorted(missing)[:5]}")


def run_batches(offline_batches, online_batches, model: ExtraTreesClassifier,
                catalog: RuleCatalog, config: ScoringConfig,
                measure_time: bool = True):
    """Run the monthly batch cycles and return (reports, final state).

    For each batch: synchronize offline risk from the offline table, stream
    the online transactions through the rule tests and the carry-forward
    update, flag accounts whose end-of-batch fused score reaches the
    threshold, and score the flags against the default labels. Offline and
    online wall-clock times are recorded separately (zeroed when
    ``measure_time`` is off, keeping reports byte-reproducible).
    """
    _check_alignment(offline_batches, online_batches)
    catalog.coefficients()  # fail before any scoring if weights are unresolved

    state: RiskState | None = None
    prev_totals: dict[int, tuple[int, int]] = {}
    reports = []
    for i, (off, on) in enumerate(zip(offline_batches, online_batches), start=1):
        t0 = time.perf_counter()
        if state is None:
            state = init_offline_risk(model, off)
        else:
            state = month_end_sync(state, model, off)
        offline_seconds = time.perf_counter() - t0

        provider = BatchContextProvider(off, prev_totals)
        t1 = time.perf_counter()
        scores = risk(catalog, on, provider)
        skipped = 0
        for ordinal, scored in enumerate(scores, start=1):
            if scored.error is not None:
                skipped += 1
                continue
            apply_transaction(state, scored.txn, scored.r_online, config,
                              batch=i, ordinal=ordinal)
        online_seconds = time.perf_counter() - t1

        predictions = []
        labels = []
        for row in off:
            record = state.accounts[row.account]
            if record.last_r_total is not None:
                score = record.last_r_total
            else:
                score = combine(0.0, record.r_offline, config.online_weight)
            predictions.append(1 if score >= config.threshold else 0)
            labels.append(row.default)
        batch_metrics = metrics(confusion_from_pairs(predictions, labels))
        reports.append(BatchReport(
            batch=i,
            accuracy=batch_metrics.accuracy,
            precision=batch_metrics.precision,
            recall=batch_metrics.recall,
            f_score=batch_metrics.f_score,
            offline_seconds=offline_seconds if measure_time else 0.0,
            online_seconds=online_seconds if measure_time else 0.0,
            skipped=skipped,
        ))
        logger.info(
            "batch %d: accuracy=%.4f precision=%.4f recall=%.4f f=%.4f "
            "(offline %.2fs, online %.2fs, %d skipped)",
            i, batch_metrics.accuracy, batch_metrics.precision,
            batch_metrics.recall, batch_metrics.f_score,
            offline_seconds, online_seconds, skipped,
        )
        prev_totals = {r.account: (r.total_bill, r.total_payment) for r in off}
    return reports, state


def save_state(state: RiskState, path) -> None:
    """Atomically rewrite the line-oriented risk-state file."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(STATE_HEADER)
        for account in sorted(state.accounts):
            r = state.accounts[account]
            writer.writerow([
                account,
                repr(r.r_offline),
                "" if r.last_r_total is None else repr(r.last_r_total),
                r.last_batch,
                r.last_ordinal,
                int(r.active_this_month),
            ])
    os.replace(tmp, path)


def load_state(path) -> RiskState:
    state = RiskState()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != STATE_HEADER:
            raise StateError(f"{path}: expected header {STATE_HEADER}, got {header}")
        for row in reader:
            if not row:
                continue
            account = int(row[0])
            state.accounts[account] = AccountRisk(
                r_offline=float(row[1]),
                last_r_total=float(row[2]) if row[2] else None,
                last_batch=int(row[3]),
                last_ordinal=int(row[4]),
                active_this_month=bool(int(row[5])),
            )
    return state
