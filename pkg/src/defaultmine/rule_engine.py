"""Standard and customer-specific tests over online transactions.

Every transaction is checked against a catalog of standard rules; when any
rule is violated, the customer-specific test collects the causes mapped to
the violated rules, keeps those whose detector fires for the account, and
scores the transaction as one minus the weight fraction of the explained
causes. A transaction that conforms to every rule scores zero.

Catalogs (rules, causes, rule-to-cause mapping, impact coefficients) load
from a YAML document so other datasets can redefine them without code
changes; see ``DEFAULT_CATALOG_YAML`` for the grammar.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Callable, Mapping

import yaml

from .decompose import OfflineAccount, OnlineTransaction
from .errors import ConfigError, ContextError, ContractError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AccountContext:
    """Account snapshot a rule sees: offline profile plus month-to-date sums.

    ``prior_bill`` is the most recent summarized month's bill (the statement
    being paid this month); ``mtd_bill``/``mtd_payment`` accumulate the
    current month's observed transactions, excluding the one under test.
    """

    account: int
    balance_limit: int
    repayment: int
    total_bill: int
    total_payment: int
    prior_bill: int
    mtd_bill: int = 0
    mtd_payment: int = 0


# --- rule predicates: return True when the transaction conforms -------------

def _check_min_due(params, txn, ctx) -> bool:
    if txn.type != "pay":
        return True
    due = params.get("fraction", 0.10) * max(ctx.prior_bill, 0)
    return ctx.mtd_payment + txn.amount >= due


def _check_payment_covers_bill(params, txn, ctx) -> bool:
    # Compared against the current month-to-date spending at payment time,
    # not the prior statement; the prior statement is the min-due rule's job.
    if txn.type != "pay":
        return True
    return ctx.mtd_payment + txn.amount >= ctx.mtd_bill


def _check_bill_within_limit(params, txn, ctx) -> bool:
    if txn.type != "exp":
        return True
    return ctx.mtd_bill + txn.amount <= ctx.balance_limit


RULE_KINDS: dict[str, Callable] = {
    "min_due": _check_min_due,
    "payment_covers_bill": _check_payment_covers_bill,
    "bill_within_limit": _check_bill_within_limit,
}


# --- cause detectors: return True when the mitigating cause holds -----------

def _detect_repayment_at_most(params, ctx) -> bool:
    return ctx.repayment <= params.get("threshold", 0)


def _detect_utilization_below(params, ctx) -> bool:
    return ctx.total_bill < params.get("fraction", 0.5) * ctx.balance_limit


def _detect_net_payer(params, ctx) -> bool:
    return ctx.total_payment >= ctx.total_bill


CAUSE_KINDS: dict[str, Callable] = {
    "repayment_at_most": _detect_repayment_at_most,
    "utilization_below": _detect_utilization_below,
    "net_payer": _detect_net_payer,
}


@dataclass(frozen=True)
class StandardRule:
    """A universal conformance check with named parameters.

    ``feature`` names the offline profile feature the rule mostly reflects;
    it seeds derived cause weights.
    """

    rule_id: str
    kind: str
    params: Mapping[str, float]
    feature: str | None = None
    description: str = ""

    def check(self, txn: OnlineTransaction, ctx: AccountContext) -> bool:
        return RULE_KINDS[self.kind](self.params, txn, ctx)


@dataclass(frozen=True)
class Cause:
    """A mitigating circumstance with a positive impact coefficient.

    ``impact_coefficient`` may be None until derived from feature scores.
    """

    cause_id: str
    kind: str
    params: Mapping[str, float]
    impact_coefficient: float | None = None
    description: str = ""

    def detect(self, ctx: AccountContext) -> bool:
        return CAUSE_KINDS[self.kind](self.params, ctx)


@dataclass(frozen=True)
class RuleEvaluation:
    """Outcome of both tests for one transaction.

    ``related_causes`` is the union of causes mapped to the violated rules;
    ``valid_causes`` is the subset whose detector fired.
    """

    violated_rules: frozenset[str]
    related_causes: frozenset[str]
    valid_causes: frozenset[str]
    r_online: float


@dataclass(frozen=True)
class TransactionScore:
    txn: OnlineTransaction
    r_online: float | None
    evaluation: RuleEvaluation | None
    error: str | None = None


@dataclass(frozen=True)
class RuleCatalog:
    rules: tuple[StandardRule, ...]
    causes: tuple[Cause, ...]
    mapping: Mapping[str, frozenset[str]]

    def cause_by_id(self) -> dict[str, Cause]:
        return {c.cause_id: c for c in self.causes}

    def coefficients(self) -> dict[str, float]:
        out = {}
        for c in self.causes:
            if c.impact_coefficient is None:
                raise ConfigError(
                    f"cause {c.cause_id!r} has an unresolved impact coefficient; "
                    "call resolve_weights() with feature scores first")
            out[c.cause_id] = c.impact_coefficient
        return out

    def resolve_weights(self, scores: Mapping[str, float]) -> "RuleCatalog":
        """Fill 'auto' impact coefficients from per-feature scores.

        A pending cause gets the mean score of the dominant features of the
        rules that map to it; all coefficients are then renormalized to sum 1.
        Catalogs without pending coefficients are returned unchanged.
        """
        if all(c.impact_coefficient is not None for c in self.causes):
            return self
        rules_by_id = {r.rule_id: r for r in self.rules}
        mapped_rules = defaultdict(list)
        for rule_id, cause_ids in self.mapping.items():
            for cid in cause_ids:
                mapped_rules[cid].append(rule_id)
        resolved = []
        for cause in self.causes:
            if cause.impact_coefficient is not None:
                resolved.append(cause)
                continue
            rule_ids = mapped_rules.get(cause.cause_id)
            if not rule_ids:
                raise ConfigError(
                    f"cause {cause.cause_id!r} has an auto coefficient but no rule "
                    "maps to it")
            values = []
            for rid in sorted(rule_ids):
                feature = rules_by_id[rid].feature
                if feature is None:
                    raise ConfigError(
                        f"rule {rid!r} needs a 'feature' to derive the weight of "
                        f"cause {cause.cause_id!r}")
                if feature not in scores:
                    raise ConfigError(f"no feature score for {feature!r} "
                                      f"(rule {rid!r})")
                values.append(scores[feature])
            weight = sum(values) / len(values)
            if weight <= 0:
                raise ConfigError(
                    f"derived weight for cause {cause.cause_id!r} is not positive; "
                    "set an explicit impact_coefficient")
            resolved.append(replace(cause, impact_coefficient=weight))
        total = sum(c.impact_coefficient for c in resolved)
        normalized = tuple(replace(c, impact_coefficient=c.impact_coefficient / total)
                           for c in resolved)
        return RuleCatalog(rules=self.rules, causes=normalized, mapping=self.mapping)


def standard_test(txn: OnlineTransaction, ctx: AccountContext, rules) -> frozenset[str]:
    """Ids of the rules the transaction violates; empty means conforming."""
    return frozenset(r.rule_id for r in rules if not r.check(txn, ctx))


def r_online_score(valid_causes, related_causes, coefficients) -> float:
    """One minus the explained weight fraction, in [0, 1].

    All related causes valid scores 0; none valid scores 1. No related
    causes at all also scores 1: a confirmed violation with no conceivable
    mitigation is maximal risk.
    """
    x = frozenset(valid_causes)
    y = frozenset(related_causes)
    if not x <= y:
        raise ContractError("valid causes must be a subset of related causes")
    if not y:
        return 1.0
    try:
        weight_y = sum(coefficients[c] for c in sorted(y))
        weight_x = sum(coefficients[c] for c in sorted(x))
    except KeyError as exc:
        raise ContractError(f"no impact coefficient for cause {exc}") from None
    if weight_y <= 0:
        raise ContractError("related causes carry no positive weight")
    return 1.0 - weight_x / weight_y


def customer_specific_test(violated, ctx: AccountContext, causes,
                           mapping) -> RuleEvaluation:
    """Collect causes related to the violated rules and score the residual risk."""
    violated = frozenset(violated)
    if not violated:
        raise ContractError("customer_specific_test needs at least one violated rule")
    by_id = {c.cause_id: c for c in causes}
    related = frozenset().union(*(mapping.get(rule_id, frozenset())
                                  for rule_id in violated))
    unknown = related - by_id.keys()
    if unknown:
        raise ContractError(f"mapping references unknown causes {sorted(unknown)}")
    valid = frozenset(cid for cid in related if by_id[cid].detect(ctx))
    coefficients = {}
    for cid in related:
        if by_id[cid].impact_coefficient is None:
            raise ConfigError(f"cause {cid!r} has an unresolved impact coefficient")
        coefficients[cid] = by_id[cid].impact_coefficient
    return RuleEvaluation(
        violated_rules=violated,
        related_causes=related,
        valid_causes=valid,
        r_online=r_online_score(valid, related, coefficients),
    )


def risk(catalog: RuleCatalog, transactions, context_provider) -> list[TransactionScore]:
    """Score a transaction batch, one result per transaction in input order.

    Transactions whose account context cannot be resolved are reported on
    the result (and logged), never silently dropped.
    """
    catalog.coefficients()  # fail fast on unresolved weights
    out = []
    for txn in transactions:
        try:
            ctx = context_provider.context_for(txn)
        except ContextError as exc:
            logger.warning("skipping transaction %d: %s", txn.tid, exc)
            out.append(TransactionScore(txn=txn, r_online=None, evaluation=None,
                                        error=str(exc)))
            continue
        violated = standard_test(txn, ctx, catalog.rules)
        if violated:
            evaluation = customer_specific_test(violated, ctx, catalog.causes,
                                                catalog.mapping)
        else:
            evaluation = RuleEvaluation(frozenset(), frozenset(), frozenset(), 0.0)
        context_provider.observe(txn)
        out.append(TransactionScore(txn=txn, r_online=evaluation.r_online,
                                    evaluation=evaluation))
    return out


class BatchContextProvider:
    """Account contexts for one batch month, tracking month-to-date sums.

    ``prev_totals`` maps account to its (total_bill, total_payment) from the
    previous offline batch so the latest month's bill can be recovered from
    the cumulative totals; the first batch passes an empty mapping.
    """

    def __init__(self, offline_rows, prev_totals: Mapping[int, tuple[int, int]] | None = None):
        self._profiles: dict[int, OfflineAccount] = {r.account: r for r in offline_rows}
        self._prev = dict(prev_totals or {})
        self._mtd_bill: dict[int, int] = defaultdict(int)
        self._mtd_payment: dict[int, int] = defaultdict(int)

    def context_for(self, txn: OnlineTransaction) -> AccountContext:
        profile = self._profiles.get(txn.account)
        if profile is None:
            raise ContextError(f"unknown account {txn.account}")
        prev_bill, _prev_payment = self._prev.get(txn.account, (0, 0))
        return AccountContext(
            account=profile.account,
            balance_limit=profile.balance_limit,
            repayment=profile.repayment,
            total_bill=profile.total_bill,
            total_payment=profile.total_payment,
            prior_bill=profile.total_bill - prev_bill,
            mtd_bill=self._mtd_bill[txn.account],
            mtd_payment=self._mtd_payment[txn.account],
        )

    def observe(self, txn: OnlineTransaction) -> None:
        if txn.type == "exp":
            self._mtd_bill[txn.account] += txn.amount
        else:
            self._mtd_payment[txn.account] += txn.amount


DEFAULT_CATALOG_YAML = """\
rules:
  - id: SR_MIN_DUE
    type: min_due
    feature: total_payment
    params: {fraction: 0.10}
    description: Month's payments must cover the minimum due on the prior bill.
  - id: SR_PAY_LT_BILL
    type: payment_covers_bill
    feature: total_bill
    description: Month's payments must keep up with the month's spending.
  - id: SR_OVER_LIMIT
    type: bill_within_limit
    feature: balance_limit
    description: Month-to-date spending must stay within the balance limit.
causes:
  - id: C_GOOD_HISTORY
    detector: repayment_at_most
    params: {threshold: 0}
    impact_coefficient: auto
    description: Repayment status shows an on-time history.
  - id: C_LOW_UTILIZATION
    detector: utilization_below
    params: {fraction: 0.5}
    impact_coefficient: auto
    description: Cumulative bills stay well under the balance limit.
  - id: C_NET_PAYER
    detector: net_payer
    impact_coefficient: auto
    description: Cumulative payments cover cumulative bills.
mapping:
  SR_MIN_DUE: [C_GOOD_HISTORY, C_NET_PAYER]
  SR_PAY_LT_BILL: [C_GOOD_HISTORY, C_LOW_UTILIZATION, C_NET_PAYER]
  SR_OVER_LIMIT: [C_LOW_UTILIZATION]
"""

_RULE_PARAM_CHECKS = {
    "min_due": {"fraction": lambda v: 0 < v <= 1},
    "payment_covers_bill": {},
    "bill_within_limit": {},
}
_CAUSE_PARAM_CHECKS = {
    "repayment_at_most": {"threshold": lambda v: True},
    "utilization_below": {"fraction": lambda v: v > 0},
    "net_payer": {},
}


def _require(condition: bool, where: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{where}: {message}")


def _check_params(raw, where: str, checks) -> dict:
    params = raw if raw is not None else {}
    _require(isinstance(params, dict), where, "params must be a mapping")
    for name, value in params.items():
        _require(name in checks, f"{where}.params.{name}", "unknown parameter")
        _require(isinstance(value, (int, float)) and not isinstance(value, bool),
                 f"{where}.params.{name}", "parameter must be a number")
        _require(checks[name](value), f"{where}.params.{name}",
                 f"invalid value {value!r}")
    return dict(params)


def parse_catalog(text: str, source: str = "<catalog>") -> RuleCatalog:
    """Parse and validate a catalog document; errors carry precise positions."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigError(f"{where}: malformed YAML: {exc}") from None
    _require(isinstance(doc, dict), source, "catalog must be a mapping")
    for key in doc:
        _require(key in ("rules", "causes", "mapping"), f"{source}.{key}",
                 "unknown section")

    rules = []
    seen_rules = set()
    raw_rules = doc.get("rules")
    _require(isinstance(raw_rules, list) and raw_rules, f"{source}.rules",
             "must be a non-empty list")
    for i, entry in enumerate(raw_rules):
        where = f"{source}.rules[{i}]"
        _require(isinstance(entry, dict), where, "rule must be a mapping")
        rule_id = entry.get("id")
        _require(isinstance(rule_id, str) and rule_id, f"{where}.id",
                 "rule needs a non-empty string id")
        _require(rule_id not in seen_rules, f"{where}.id",
                 f"duplicate rule id {rule_id!r}")
        seen_rules.add(rule_id)
        kind = entry.get("type")
        _require(kind in RULE_KINDS, f"{where}.type",
                 f"unknown rule type {kind!r}; known: {sorted(RULE_KINDS)}")
        params = _check_params(entry.get("params"), where, _RULE_PARAM_CHECKS[kind])
        feature = entry.get("feature")
        _require(feature is None or isinstance(feature, str), f"{where}.feature",
                 "feature must be a string")
        rules.append(StandardRule(rule_id=rule_id, kind=kind, params=params,
                                  feature=feature,
                                  description=str(entry.get("description", ""))))

    causes = []
    seen_causes = set()
    raw_causes = doc.get("causes", [])
    _require(isinstance(raw_causes, list), f"{source}.causes", "must be a list")
    for i, entry in enumerate(raw_causes):
        where = f"{source}.causes[{i}]"
        _require(isinstance(entry, dict), where, "cause must be a mapping")
        cause_id = entry.get("id")
        _require(isinstance(cause_id, str) and cause_id, f"{where}.id",
                 "cause needs a non-empty string id")
        _require(cause_id not in seen_causes, f"{where}.id",
                 f"duplicate cause id {cause_id!r}")
        seen_causes.add(cause_id)
        kind = entry.get("detector")
        _require(kind in CAUSE_KINDS, f"{where}.detector",
                 f"unknown detector {kind!r}; known: {sorted(CAUSE_KINDS)}")
        params = _check_params(entry.get("params"), where, _CAUSE_PARAM_CHECKS[kind])
        raw_weight = entry.get("impact_coefficient", "auto")
        if raw_weight == "auto" or raw_weight is None:
            weight = None
        else:
            _require(isinstance(raw_weight, (int, float)) and not isinstance(raw_weight, bool),
                     f"{where}.impact_coefficient", "must be a number or 'auto'")
            _require(raw_weight > 0, f"{where}.impact_coefficient",
                     f"must be positive, got {raw_weight}")
            weight = float(raw_weight)
        causes.append(Cause(cause_id=cause_id, kind=kind, params=params,
                            impact_coefficient=weight,
                            description=str(entry.get("description", ""))))

    raw_mapping = doc.get("mapping", {})
    _require(isinstance(raw_mapping, dict), f"{source}.mapping", "must be a mapping")
    mapping = {}
    for rule_id, cause_ids in raw_mapping.items():
        where = f"{source}.mapping.{rule_id}"
        _require(rule_id in seen_rules, where, f"unknown rule id {rule_id!r}")
        _require(isinstance(cause_ids, list), where, "must be a list of cause ids")
        for cid in cause_ids:
            _require(cid in seen_causes, where, f"unknown cause id {cid!r}")
        mapping[rule_id] = frozenset(cause_ids)

    return RuleCatalog(rules=tuple(rules), causes=tuple(causes), mapping=mapping)


def load_catalog(path) -> RuleCatalog:
    with open(path, encoding="utf-8") as fh:
        return parse_catalog(fh.read(), source=str(path))


def default_catalog() -> RuleCatalog:
    """The shipped three-rule, three-cause catalog with derived weights."""
    return parse_catalog(DEFAULT_CATALOG_YAML, source="<default catalog>")
