"""Deterministic synthetic stand-in for the credit-card source table.

The real source data is distributed under terms that keep it out of this
repository, so tests and demos generate a table with the same schema and
comparable statistics: a latent distress level drives repayment delays,
utilization, and payment coverage, and (with noise) the default label.
Classifiers trained on the summarized profiles therefore have real signal
to find, and roughly 22% of accounts default.
"""

from __future__ import annotations

import numpy as np

from .ingest import N_MONTHS, CustomerRecord

DEFAULT_RATE = 0.221
_STREAM_SOURCE = 7


def make_source_records(n_accounts: int, seed: int = 0) -> list[CustomerRecord]:
    """Generate ``n_accounts`` synthetic customer records, account ids 1..n."""
    if n_accounts < 1:
        raise ValueError("n_accounts must be positive")
    rng = np.random.default_rng((_STREAM_SOURCE, seed))
    n = n_accounts

    distress = rng.beta(2.0, 5.0, size=n)
    limit = np.clip(np.rint(rng.lognormal(11.6, 0.8, size=n) / 10000.0), 1, 100).astype(np.int64) * 10000
    sex = rng.integers(1, 3, size=n)
    education = rng.choice(
        np.arange(7), size=n, p=[0.01, 0.34, 0.44, 0.15, 0.03, 0.02, 0.01]
    )
    marriage = rng.choice(np.array([1, 2, 3]), size=n, p=[0.45, 0.52, 0.03])
    age = rng.integers(21, 76, size=n)

    shape = (n, N_MONTHS)
    utilization = np.clip(rng.normal(0.15 + 0.6 * distress[:, None], 0.10, size=shape), -0.02, 1.2)
    bills = np.rint(utilization * limit[:, None]).astype(np.int64)
    coverage = np.clip(rng.normal(1.05 - 1.0 * distress[:, None], 0.15, size=shape), 0.0, 1.6)
    payments = np.rint(coverage * np.maximum(bills, 0)).astype(np.int64)
    delays = np.clip(
        np.rint(rng.normal(6.0 * distress[:, None] - 1.8, 0.9, size=shape)), -2, 8
    ).astype(np.int64)

    score = distress + rng.normal(0.0, 0.08, size=n)
    labels = (score > np.quantile(score, 1.0 - DEFAULT_RATE)).astype(np.int64)

    records = []
    for i in range(n):
        records.append(
            CustomerRecord(
                id=i + 1,
                limit_bal=int(limit[i]),
                sex=int(sex[i]),
                education=int(education[i]),
                marriage=int(marriage[i]),
                age=int(age[i]),
                pay_status=tuple(int(v) for v in delays[i]),
                bill_amt=tuple(int(v) for v in bills[i]),
                pay_amt=tuple(int(v) for v in payments[i]),
                label=int(labels[i]),
            )
        )
    return records
