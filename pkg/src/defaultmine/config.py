"""Run configuration: one YAML file, flag overrides win.

Relative paths resolve against the config file's directory (or the current
directory when no file is given). Only the paths a command actually reads
are required to exist, and they are checked before anything is written.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .errors import ConfigError


@dataclass
class RunConfig:
    # paths
    source: Path | None = None
    template: Path | None = None
    rules_file: Path | None = None
    output_dir: Path = Path("out")
    model_file: Path = Path("out/model.json")
    state_file: Path = Path("out/risk_state.csv")
    report_file: Path = Path("out/batch_report.csv")
    cv_report_file: Path = Path("out/cv_report.csv")
    bench_file: Path = Path("out/bench.csv")
    # classifier
    n_trees: int = 100
    k_features: int | str = "auto"
    n_min: int = 2
    train_seed: int = 7
    cv_folds: int = 10
    train_batch: int = 1
    # scoring
    online_weight: float = 0.5
    threshold: float = 0.5
    measure_time: bool = True
    # decomposition
    bins: int = 10
    year: int = 2005
    decompose_seed: int = 7
    min_parts: float = 2.0
    max_parts: float = 20.0
    template_amounts: int = 20000
    template_log_mean: float = 3.2
    template_log_sigma: float = 1.0
    template_seed: int = 11
    # bench
    bench_halvings: int = 4
    bench_batch: int = 1
    bench_repeats: int = 3
    # global
    threads: int = 1

    def offline_batch_path(self, index: int) -> Path:
        return self.output_dir / f"offline_batch_{index}.csv"

    def online_batch_path(self, index: int) -> Path:
        return self.output_dir / f"online_batch_{index}.csv"


_PATH_FIELDS = ("source", "template", "rules_file", "output_dir", "model_file",
                "state_file", "report_file", "cv_report_file", "bench_file")

# config-file layout: section -> key -> RunConfig field
_SECTIONS = {
    "paths": {
        "source": "source",
        "template": "template",
        "rules_file": "rules_file",
        "output_dir": "output_dir",
        "model_file": "model_file",
        "state_file": "state_file",
        "report_file": "report_file",
        "cv_report_file": "cv_report_file",
        "bench_file": "bench_file",
    },
    "classifier": {
        "n_trees": "n_trees",
        "k_features": "k_features",
        "n_min": "n_min",
        "seed": "train_seed",
        "cv_folds": "cv_folds",
        "train_batch": "train_batch",
    },
    "scoring": {
        "online_weight": "online_weight",
        "threshold": "threshold",
        "measure_time": "measure_time",
    },
    "decomposition": {
        "bins": "bins",
        "year": "year",
        "seed": "decompose_seed",
        "min_parts": "min_parts",
        "max_parts": "max_parts",
        "template_amounts": "template_amounts",
        "template_log_mean": "template_log_mean",
        "template_log_sigma": "template_log_sigma",
        "template_seed": "template_seed",
    },
    "bench": {
        "halvings": "bench_halvings",
        "batch": "bench_batch",
        "repeats": "bench_repeats",
    },
}


def _coerce(cfg: RunConfig, base: Path) -> RunConfig:
    types = {f.name: f for f in fields(RunConfig)}
    for name in _PATH_FIELDS:
        value = getattr(cfg, name)
        if value is None:
            continue
        path = Path(value)
        if not path.is_absolute():
            path = base / path
        setattr(cfg, name, path)
    for name, value in vars(cfg).items():
        if name in _PATH_FIELDS or value is None:
            continue
        annotation = types[name].type
        try:
            if annotation == "int":
                setattr(cfg, name, int(value))
            elif annotation == "float":
                setattr(cfg, name, float(value))
            elif annotation == "bool":
                if not isinstance(value, bool):
                    raise ValueError("expected true/false")
                setattr(cfg, name, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"setting {name}: {exc}") from None
    if cfg.k_features != "auto":
        try:
            cfg.k_features = int(cfg.k_features)
        except (TypeError, ValueError):
            raise ConfigError(
                f"classifier.k_features must be an integer or 'auto', got "
                f"{cfg.k_features!r}") from None
    return cfg


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional YAML file plus override settings.

    ``overrides`` maps RunConfig field names to values and takes precedence
    over the file; unknown file keys are rejected.
    """
    cfg = RunConfig()
    base = Path.cwd()
    if path is not None:
        base = Path(path).resolve().parent
        try:
            with open(path, encoding="utf-8") as fh:
                doc = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: malformed YAML: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        for section, body in doc.items():
            if section == "threads":
                cfg.threads = body
                continue
            if section not in _SECTIONS:
                raise ConfigError(f"{path}: unknown section {section!r}")
            if body is None:
                continue
            if not isinstance(body, dict):
                raise ConfigError(f"{path}: section {section!r} must be a mapping")
            for key, value in body.items():
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"{path}: unknown setting {section}.{key}")
                setattr(cfg, _SECTIONS[section][key], value)
    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if not hasattr(cfg, name):
            raise ConfigError(f"unknown override {name!r}")
        setattr(cfg, name, value)
    cfg = _coerce(cfg, base)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    checks = [
        (cfg.n_trees >= 1, "classifier.n_trees must be at least 1"),
        (cfg.n_min >= 2, "classifier.n_min must be at least 2"),
        (cfg.cv_folds >= 2, "classifier.cv_folds must be at least 2"),
        (1 <= cfg.train_batch, "classifier.train_batch must be at least 1"),
        (0.0 <= cfg.online_weight <= 1.0, "scoring.online_weight must be in [0, 1]"),
        (0.0 <= cfg.threshold <= 1.0, "scoring.threshold must be in [0, 1]"),
        (cfg.bins >= 1, "decomposition.bins must be at least 1"),
        (1 <= cfg.min_parts <= cfg.max_parts,
         "decomposition needs 1 <= min_parts <= max_parts"),
        (cfg.template_amounts >= cfg.bins,
         "decomposition.template_amounts must cover the bin count"),
        (cfg.bench_halvings >= 2, "bench.halvings must be at least 2"),
        (cfg.bench_repeats >= 1, "bench.repeats must be at least 1"),
        (cfg.bench_batch >= 1, "bench.batch must be at least 1"),
        (cfg.threads >= 1, "threads must be at least 1"),
    ]
    if cfg.k_features != "auto":
        checks.append((cfg.k_features >= 1, "classifier.k_features must be >= 1"))
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def require_inputs(cfg: RunConfig, names_and_paths) -> None:
    """Fail with ConfigError if any named input path is missing."""
    missing = [f"{name} ({path})" for name, path in names_and_paths
               if path is None or not Path(path).exists()]
    if missing:
        raise ConfigError("missing required inputs: " + ", ".join(missing))
