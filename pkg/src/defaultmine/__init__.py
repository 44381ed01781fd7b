"""Credit-default mining: offline tree-ensemble risk priors fused with
rule-based scoring of live transactions."""

from .decompose import (DistributionTemplate, OfflineAccount, OnlineTransaction,
                        RescaleRange, build_template, decompose_dataset,
                        equal_frequency_bins, rescale, split_bill,
                        summarize_offline, synthetic_template)
from .extra_trees import (ExtraTreesClassifier, cross_validate, feature_scores,
                          features_from_accounts, pick_split, train_on_accounts)
from .ingest import CustomerRecord, parse_source, source_summary, write_source
from .metrics_bench import (BatchReport, BenchResult, ConfusionMatrix, MetricSet,
                            bench_scaling, confusion_from_pairs, metrics)
from .orchestrator import (RiskState, ScoringConfig, apply_transaction, combine,
                           init_offline_risk, load_state, month_end_sync,
                           run_batches, save_state)
from .rule_engine import (AccountContext, BatchContextProvider, Cause, RuleCatalog,
                          RuleEvaluation, StandardRule, customer_specific_test,
                          default_catalog, load_catalog, parse_catalog,
                          r_online_score, risk, standard_test)

__version__ = "0.1.0"

__all__ = [
    "AccountContext", "BatchContextProvider", "BatchReport", "BenchResult",
    "Cause", "ConfusionMatrix", "CustomerRecord", "DistributionTemplate",
    "ExtraTreesClassifier", "MetricSet", "OfflineAccount", "OnlineTransaction",
    "RescaleRange", "RiskState", "RuleCatalog", "RuleEvaluation", "ScoringConfig",
    "StandardRule", "apply_transaction", "bench_scaling", "build_template",
    "combine", "confusion_from_pairs", "cross_validate", "customer_specific_test",
    "decompose_dataset", "default_catalog", "equal_frequency_bins",
    "feature_scores", "features_from_accounts", "init_offline_risk",
    "load_catalog", "load_state", "metrics", "month_end_sync", "parse_catalog",
    "parse_source", "pick_split", "r_online_score", "rescale", "risk",
    "run_batches", "save_state", "source_summary", "split_bill",
    "standard_test", "summarize_offline", "synthetic_template",
    "train_on_accounts", "write_source",
]
