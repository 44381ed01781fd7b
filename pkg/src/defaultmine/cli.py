"""Command-line entry point: decompose, train, run, bench.

Exit codes: 0 success, 1 input/config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time

from . import decompose as dc
from .config import RunConfig, load_config, require_inputs
from .errors import ConfigError, DefaultMineError, InputError
from .extra_trees import (ExtraTreesClassifier, cross_validate, feature_scores,
                          features_from_accounts)
from .metrics_bench import bench_scaling, write_bench_csv, write_reports_csv
from .orchestrator import (RiskState, ScoringConfig, apply_transaction,
                           run_batches, save_state)
from .rule_engine import BatchContextProvider, default_catalog, load_catalog, risk

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defaultmine",
        description="Mine potential credit-default accounts from offline "
                    "history and live transactions.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress details")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", help="YAML configuration file")
        p.add_argument("--source", help="source CSV (overrides config)")
        p.add_argument("--template", help="template amounts CSV (overrides config)")
        p.add_argument("--rules", dest="rules_file",
                       help="rule/cause catalog YAML (overrides config)")
        p.add_argument("--output-dir", help="batch output directory")
        p.add_argument("--model-file", help="model JSON path")
        p.add_argument("--state-file", help="risk state CSV path")
        p.add_argument("--report-file", help="batch report CSV path")
        p.add_argument("--threads", type=int, help="global parallelism cap")

    p = sub.add_parser("decompose", help="split the source CSV into 5 offline "
                                         "and 5 online monthly batches")
    common(p)
    p.add_argument("--seed", type=int, dest="decompose_seed",
                   help="decomposition seed (overrides config)")

    p = sub.add_parser("train", help="cross-validate and fit the classifier "
                                     "on an offline batch")
    common(p)
    p.add_argument("--seed", type=int, dest="train_seed",
                   help="training seed (overrides config)")

    p = sub.add_parser("run", help="run the monthly batch cycles and report "
                                   "per-batch metrics")
    common(p)

    p = sub.add_parser("bench", help="time the online scoring pipeline over "
                                     "halving batch sizes")
    common(p)
    p.add_argument("--halvings", type=int, dest="bench_halvings",
                   help="number of halvings (overrides config)")

    return parser


def _config_from_args(args) -> RunConfig:
    overrides = {
        name: getattr(args, name, None)
        for name in ("source", "template", "rules_file", "output_dir", "model_file",
                     "state_file", "report_file", "threads", "decompose_seed",
                     "train_seed", "bench_halvings")
    }
    return load_config(args.config, overrides)


def _load_template(cfg: RunConfig) -> dc.DistributionTemplate:
    if cfg.template is not None:
        return dc.load_template_csv(cfg.template, n_bins=cfg.bins,
                                    min_parts=cfg.min_parts, max_parts=cfg.max_parts)
    return dc.synthetic_template(
        n_bins=cfg.bins, n_amounts=cfg.template_amounts,
        log_mean=cfg.template_log_mean, log_sigma=cfg.template_log_sigma,
        seed=cfg.template_seed, min_parts=cfg.min_parts, max_parts=cfg.max_parts,
    )


def _load_catalog(cfg: RunConfig):
    if cfg.rules_file is not None:
        return load_catalog(cfg.rules_file)
    return default_catalog()


def _read_batches(cfg: RunConfig):
    offline, online = [], []
    for i in range(1, dc.BATCH_COUNT + 1):
        offline.append(dc.read_offline_csv(cfg.offline_batch_path(i)))
        online.append(dc.read_online_csv(cfg.online_batch_path(i)))
    return offline, online


def cmd_decompose(cfg: RunConfig) -> int:
    require_inputs(cfg, [("source CSV", cfg.source)]
                   + ([("template CSV", cfg.template)] if cfg.template else []))
    from .ingest import parse_source, source_summary

    records = parse_source(cfg.source)
    if not records:
        raise InputError(f"{cfg.source}: no data rows")
    summary = source_summary(records)
    print(f"source: {summary.count} records, {summary.defaults} defaults "
          f"({100.0 * summary.default_rate:.1f}%)")

    template = _load_template(cfg)
    offline, online = dc.decompose_dataset(records, template,
                                           seed=cfg.decompose_seed, year=cfg.year)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    for i, (off, on) in enumerate(zip(offline, online), start=1):
        dc.write_offline_csv(off, cfg.offline_batch_path(i))
        dc.write_online_csv(on, cfg.online_batch_path(i))
        print(f"batch {i}: {len(off)} offline rows, {len(on)} online transactions")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    batch_path = cfg.offline_batch_path(cfg.train_batch)
    require_inputs(cfg, [("offline batch CSV", batch_path)])
    rows = dc.read_offline_csv(batch_path)
    X, y = features_from_accounts(rows)

    estimator = ExtraTreesClassifier(n_trees=cfg.n_trees, k_features=cfg.k_features,
                                     n_min=cfg.n_min, seed=cfg.train_seed,
                                     n_threads=cfg.threads)
    result = cross_validate(estimator, X, y, k=cfg.cv_folds, seed=cfg.train_seed)
    print("fold,accuracy,precision,recall,f_score,train_seconds")
    for fold in result.folds:
        m = fold.metrics
        print(f"{fold.fold},{m.accuracy:.4f},{m.precision:.4f},{m.recall:.4f},"
              f"{m.f_score:.4f},{fold.train_seconds:.2f}")
    m = result.mean_metrics
    print(f"mean,{m.accuracy:.4f},{m.precision:.4f},{m.recall:.4f},{m.f_score:.4f},"
          f"{result.mean_train_seconds:.2f}")

    cfg.cv_report_file.parent.mkdir(parents=True, exist_ok=True)
    with open(cfg.cv_report_file, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("fold", "accuracy", "precision", "recall", "f_score",
                         "train_seconds"))
        for fold in result.folds:
            fm = fold.metrics
            writer.writerow([fold.fold, f"{fm.accuracy:.6f}", f"{fm.precision:.6f}",
                             f"{fm.recall:.6f}", f"{fm.f_score:.6f}",
                             f"{fold.train_seconds:.6f}"])
        writer.writerow(["mean", f"{m.accuracy:.6f}", f"{m.precision:.6f}",
                         f"{m.recall:.6f}", f"{m.f_score:.6f}",
                         f"{result.mean_train_seconds:.6f}"])

    t0 = time.perf_counter()
    model = ExtraTreesClassifier(n_trees=cfg.n_trees, k_features=cfg.k_features,
                                 n_min=cfg.n_min, seed=cfg.train_seed,
                                 n_threads=cfg.threads).fit(X, y)
    fit_seconds = time.perf_counter() - t0
    cfg.model_file.parent.mkdir(parents=True, exist_ok=True)
    model.save(cfg.model_file)
    print(f"model fitted on {len(rows)} rows in {fit_seconds:.2f}s "
          f"-> {cfg.model_file}")
    return 0


def cmd_run(cfg: RunConfig) -> int:
    needed = [("model file", cfg.model_file)]
    for i in range(1, dc.BATCH_COUNT + 1):
        needed.append((f"offline batch {i}", cfg.offline_batch_path(i)))
        needed.append((f"online batch {i}", cfg.online_batch_path(i)))
    if cfg.rules_file is not None:
        needed.append(("rules file", cfg.rules_file))
    require_inputs(cfg, needed)

    model = ExtraTreesClassifier.load(cfg.model_file)
    catalog = _load_catalog(cfg).resolve_weights(feature_scores(model))
    offline, online = _read_batches(cfg)
    scoring = ScoringConfig(online_weight=cfg.online_weight, threshold=cfg.threshold)

    reports, state = run_batches(offline, online, model, catalog, scoring,
                                 measure_time=cfg.measure_time)
    cfg.report_file.parent.mkdir(parents=True, exist_ok=True)
    write_reports_csv(reports, cfg.report_file)
    cfg.state_file.parent.mkdir(parents=True, exist_ok=True)
    save_state(state, cfg.state_file)

    print("batch,accuracy,precision,recall,f_score,offline_seconds,online_seconds")
    for r in reports:
        print(f"{r.batch},{r.accuracy:.4f},{r.precision:.4f},{r.recall:.4f},"
              f"{r.f_score:.4f},{r.offline_seconds:.2f},{r.online_seconds:.2f}")
        if r.skipped:
            print(f"  batch {r.batch}: {r.skipped} transactions skipped",
                  file=sys.stderr)
    print(f"report -> {cfg.report_file}; state -> {cfg.state_file}")
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    needed = [
        ("model file", cfg.model_file),
        (f"offline batch {cfg.bench_batch}", cfg.offline_batch_path(cfg.bench_batch)),
        (f"online batch {cfg.bench_batch}", cfg.online_batch_path(cfg.bench_batch)),
    ]
    if cfg.rules_file is not None:
        needed.append(("rules file", cfg.rules_file))
    require_inputs(cfg, needed)

    model = ExtraTreesClassifier.load(cfg.model_file)
    catalog = _load_catalog(cfg).resolve_weights(feature_scores(model))
    offline = dc.read_offline_csv(cfg.offline_batch_path(cfg.bench_batch))
    online = dc.read_online_csv(cfg.online_batch_path(cfg.bench_batch))
    scoring = ScoringConfig(online_weight=cfg.online_weight, threshold=cfg.threshold)

    from .orchestrator import init_offline_risk

    base_state = init_offline_risk(model, offline)

    def scorer(transactions):
        # Full online pipeline over a prefix: rule tests plus state updates
        # on a fresh copy of the initial state.
        state = RiskState(accounts={
            account: type(record)(r_offline=record.r_offline)
            for account, record in base_state.accounts.items()
        })
        provider = BatchContextProvider(offline)
        for ordinal, scored in enumerate(risk(catalog, transactions, provider), start=1):
            if scored.error is None:
                apply_transaction(state, scored.txn, scored.r_online, scoring,
                                  batch=1, ordinal=ordinal)

    result = bench_scaling(online, cfg.bench_halvings, scorer,
                           repeats=cfg.bench_repeats)
    cfg.bench_file.parent.mkdir(parents=True, exist_ok=True)
    write_bench_csv(result, cfg.bench_file)
    print("size,median_seconds")
    for point in result.points:
        print(f"{point.size},{point.median_seconds:.4f}")
    print(f"fit: seconds = {result.slope:.3e} * size + {result.intercept:.3e} "
          f"(r_squared={result.r_squared:.4f})")
    print(f"bench -> {cfg.bench_file}")
    return 0


_COMMANDS = {
    "decompose": cmd_decompose,
    "train": cmd_train,
    "run": cmd_run,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _config_from_args(args)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DefaultMineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
