"""Configuration-driven experiment runner and run comparison.

A configuration is a flat ``key = value`` text file; ``#`` starts a comment.
Command-line overrides use the same keys. Every output CSV starts with a
``# schema: <name>/<version>`` line so readers can check what they parse.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from dataclasses import dataclass, field, fields
from importlib import metadata
from pathlib import Path

import numpy as np

from .errors import ComparisonError, ConfigError
from .evaluation import DEFAULT_ROPE, correlated_bayesian_t_test, stream_cross_validation
from .frameworks import CLASSIFIER_KINDS, FRAMEWORKS, FrameworkConfig, FrameworkFactory
from .streams import FAMILIES, CsvSchema, StreamPreset, make_stream, read_csv_stream, stream_arrays

METRICS_SCHEMA = "occstream-metrics/1"
THRESHOLDS_SCHEMA = "occstream-thresholds/1"
SNAPSHOT_SCHEMA = "occstream-snapshot/1"
CBTT_SCHEMA = "occstream-cbtt/1"

METRIC_COLUMNS = ("instance_index", "fold", "framework", "classifier",
                  "prequential_auc", "g_mean", "sensitivity", "specificity")
METRICS = METRIC_COLUMNS[4:]
THRESHOLD_COLUMNS = ("framework", "classifier", "fold", "operating_threshold",
                     "evaluation_threshold", "mean_prequential_auc")
CBTT_COLUMNS = ("comparison", "p_left", "p_rope", "p_right")

# Framework keys the experiment sets itself rather than taking from the file.
_RESERVED = {"classifier", "seed", "contexts"}


def _tuple(v):
    return tuple(s.strip() for s in str(v).split(",") if s.strip())


def _opt_str(v):
    v = str(v).strip()
    return None if v.lower() in ("", "none") else v


def _opt_float(v):
    v = str(v).strip()
    return None if v.lower() in ("", "none") else float(v)


def _opt_int(v):
    v = str(v).strip()
    return None if v.lower() in ("", "none") else int(v)


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parser_for(default):
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, tuple):
        return _tuple
    return str


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a stream, a grid of frameworks x classifiers, and the protocol."""

    stream: str = "mixture"                 # mixture | rbf | rbf_noise | csv
    instances: int = 100_000
    dimension: int = 4
    contexts: int = 2
    minority_fraction: float = 0.05
    components_per_context: int = 3
    minority_components: int = 2
    noise_fraction: float = 0.2
    model_seed: int = 1
    stream_seed: int | None = None          # None: use ``seed``
    csv_path: str | None = None
    feature_columns: tuple = ()
    class_column: str = "class"
    minority_labels: tuple = ()
    majority_labels: tuple = ()
    context_column: str | None = None
    frameworks: tuple = ("single",)
    classifiers: tuple = ("sa",)
    fold_count: int = 10
    metric_period: int = 500
    window_size: int = 500
    jobs: int = 1
    seed: int = 0
    out: str = "run"
    framework: dict = field(default_factory=dict)   # FrameworkConfig overrides

    _OPTIONAL = {"stream_seed": _opt_int, "csv_path": _opt_str, "context_column": _opt_str}

    @classmethod
    def keys(cls):
        own = [f.name for f in fields(cls) if f.name != "framework"]
        return own + [k for k in FrameworkConfig.field_names() if k not in _RESERVED]

    @classmethod
    def from_mapping(cls, mapping) -> "ExperimentConfig":
        own = {f.name: f for f in fields(cls) if f.name != "framework"}
        fw_defaults = FrameworkConfig()
        values, overrides = {}, {}
        for key, raw in mapping.items():
            key = key.strip().replace("-", "_")
            if key in own:
                default = own[key].default
                parse = cls._OPTIONAL.get(key) or _parser_for(default)
                target = values
            elif key in FrameworkConfig.field_names() and key not in _RESERVED:
                default = getattr(fw_defaults, key)
                parse = _opt_float if key == "threshold" else _parser_for(default)
                target = overrides
            else:
                raise ConfigError(f"unknown configuration key {key!r}", key=key)
            try:
                target[key] = parse(raw) if isinstance(raw, str) else raw
            except (TypeError, ValueError):
                raise ConfigError(f"invalid value {raw!r} for {key!r}", key=key) from None
        for key in ("frameworks", "classifiers", "feature_columns", "minority_labels", "majority_labels"):
            if key in values and isinstance(values[key], (list, str)):
                values[key] = _tuple(",".join(values[key]) if isinstance(values[key], list) else values[key])
        cfg = cls(**values, framework=overrides)
        cfg.validate()
        return cfg

    def validate(self):
        if self.stream not in FAMILIES + ("csv",):
            raise ConfigError(f"unknown stream {self.stream!r}", key="stream")
        if (self.stream == "csv") != (self.csv_path is not None):
            raise ConfigError("exactly one stream source: set stream=csv together with csv_path",
                              key="csv_path")
        if self.stream == "csv":
            if not self.feature_columns:
                raise ConfigError("csv streams need feature_columns", key="feature_columns")
            if not self.minority_labels:
                raise ConfigError("csv streams need minority_labels", key="minority_labels")
        for name in self.frameworks:
            if name not in FRAMEWORKS:
                raise ConfigError(f"unknown framework {name!r}", key="frameworks")
        for name in self.classifiers:
            if name not in CLASSIFIER_KINDS:
                raise ConfigError(f"unknown classifier {name!r}", key="classifiers")
        if not self.frameworks or not self.classifiers:
            raise ConfigError("at least one framework and one classifier are required", key="frameworks")
        for key, lo in (("instances", 1), ("dimension", 1), ("contexts", 1), ("fold_count", 2),
                        ("metric_period", 1), ("window_size", 1), ("jobs", 1)):
            if getattr(self, key) < lo:
                raise ConfigError(f"{key} must be >= {lo}", key=key)
        if not 0.0 <= self.minority_fraction <= 1.0:
            raise ConfigError("minority_fraction must lie in [0, 1]", key="minority_fraction")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ConfigError("noise_fraction must lie in [0, 1]", key="noise_fraction")
        self.framework_config("sa")     # surfaces FrameworkConfig range errors now

    def framework_config(self, classifier) -> FrameworkConfig:
        return FrameworkConfig(**self.framework, contexts=self.contexts, classifier=classifier,
                               seed=self.seed)

    def effective_stream_seed(self):
        return self.seed if self.stream_seed is None else self.stream_seed

    def to_mapping(self):
        """Flat ``key -> str`` echo that :func:`from_mapping` parses back to an equal config."""
        out = {}
        for f in fields(self):
            if f.name == "framework":
                continue
            v = getattr(self, f.name)
            out[f.name] = ",".join(v) if isinstance(v, tuple) else ("none" if v is None else str(v))
        for k, v in sorted(self.framework.items()):
            out[k] = "none" if v is None else str(v)
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        mapping = self.to_mapping()
        mapping.update({k: v if isinstance(v, str) else _format_value(v) for k, v in changes.items()})
        return ExperimentConfig.from_mapping(mapping)


def _format_value(v):
    if isinstance(v, (tuple, list)):
        return ",".join(map(str, v))
    return "none" if v is None else str(v)


def parse_config_text(text) -> dict:
    """``key = value`` lines; blank lines and ``#`` comments are skipped."""
    mapping = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value", key=line)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key", key="")
        mapping[key] = value
    return mapping


def load_config(path=None, overrides=None) -> ExperimentConfig:
    mapping = {}
    if path is not None:
        try:
            mapping.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}", key="config") from None
    mapping.update(overrides or {})
    return ExperimentConfig.from_mapping(mapping)


def write_config_text(config: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.to_mapping().items())


# ---------------------------------------------------------------------------
# Running


def load_stream(config: ExperimentConfig):
    """``(X, labels, contexts or None)`` for the configured stream."""
    if config.stream == "csv":
        schema = CsvSchema(config.feature_columns, config.class_column,
                           frozenset(config.minority_labels),
                           frozenset(config.majority_labels) if config.majority_labels else None,
                           config.context_column)
        instances = []
        for inst in read_csv_stream(config.csv_path, schema):
            instances.append(inst)
            if len(instances) == config.instances:
                break
    else:
        preset = StreamPreset(config.stream, config.dimension, config.contexts, None,
                              config.minority_fraction, config.components_per_context,
                              config.minority_components, config.noise_fraction,
                              config.model_seed, config.effective_stream_seed())
        instances = make_stream(preset).take(config.instances)
    if not instances:
        raise ConfigError("the stream produced no instances", key="instances")
    X, y, c = stream_arrays(instances)
    return X, y, (None if (c < 0).all() else c)


def _fmt(v):
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    return str(v)


def _write_csv(path, schema, columns, rows):
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    data = buf.getvalue().encode()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunResult:
    out: Path
    files: dict
    results: dict          # (framework, classifier) -> CrossValidationResult

    def mean_auc(self, framework, classifier):
        return float(np.nanmean([np.nanmean(f.auc) for f in self.results[framework, classifier].folds]))


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "scikit-learn"):
        out[pkg] = metadata.version(pkg)
    try:
        out["occstream"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["occstream"] = "unknown"
    return out


def run_experiment(config: ExperimentConfig, out=None) -> RunResult:
    """Run every framework x classifier pair under stream cross-validation and write the outputs.

    Writes ``metrics.csv``, ``thresholds.csv``, ``snapshots.csv``, ``config.txt`` and
    ``manifest.json`` to ``out`` (default ``config.out``). Initialization errors propagate.
    """
    out = Path(out or config.out)
    out.mkdir(parents=True, exist_ok=True)
    X, y, c = load_stream(config)
    results = {}
    for fw in config.frameworks:
        for clf in config.classifiers:
            factory = FrameworkFactory(fw, config.framework_config(clf), X.shape[1])
            init_size = factory(0).init_size
            if len(X) <= init_size:
                raise ConfigError(f"the stream has {len(X)} instances but {fw} consumes {init_size} "
                                  "for initialization", key="instances")
            results[fw, clf] = stream_cross_validation(
                X, y, c, factory, config.fold_count, config.metric_period, config.window_size,
                config.jobs, keep_frameworks=True)

    metric_rows, threshold_rows, snap_rows = [], [], []
    for (fw, clf), res in results.items():
        for idx, fold, a, g, se, sp in res.rows():
            metric_rows.append((idx, fold, fw, clf, a, g, se, sp))
        for f in res.folds:
            threshold_rows.append((fw, clf, f.fold, float(f.framework.threshold), res.threshold,
                                   float(np.nanmean(f.auc)) if f.auc.size else math.nan))
            for r in f.framework.snapshot_rows():
                snap_rows.append({"framework": fw, "classifier": clf, "fold": f.fold, **r})
        for f in res.folds:
            f.framework = None
    metric_rows.sort(key=lambda r: (r[2], r[3], r[1], r[0]))

    files = {
        "metrics.csv": _write_csv(out / "metrics.csv", METRICS_SCHEMA, METRIC_COLUMNS, metric_rows),
        "thresholds.csv": _write_csv(out / "thresholds.csv", THRESHOLDS_SCHEMA, THRESHOLD_COLUMNS,
                                     threshold_rows),
    }
    centers = [f"center_{i}" for i in range(X.shape[1])]
    snap_cols = ("framework", "classifier", "fold", "context_id", "training_count", "weight", "radius",
                 *centers)
    files["snapshots.csv"] = _write_csv(out / "snapshots.csv", SNAPSHOT_SCHEMA, snap_cols,
                                        [[r.get(k, "") for k in snap_cols] for r in snap_rows])
    config_text = write_config_text(config)
    (out / "config.txt").write_text(config_text)
    manifest = {
        "schema": "occstream-manifest/1",
        "config": config.to_mapping(),
        "seeds": {"seed": config.seed, "stream_seed": config.effective_stream_seed(),
                  "model_seed": config.model_seed},
        "fold_count": config.fold_count,
        "instances": int(len(X)),
        "versions": _versions(),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(out, files, results)


# ---------------------------------------------------------------------------
# Comparison


def read_metrics(path):
    """Rows of a metrics CSV as dicts; the schema line is checked."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# schema: {METRICS_SCHEMA}":
            raise ComparisonError(f"{path}: unsupported metrics schema {first!r}")
        return list(csv.DictReader(fh))


def _fold_count(run_dir, rows):
    manifest = Path(run_dir) / "manifest.json"
    if manifest.exists():
        return int(json.loads(manifest.read_text())["fold_count"])
    return len({r["fold"] for r in rows})


@dataclass(frozen=True)
class Comparison:
    comparison: str
    p_left: float
    p_rope: float
    p_right: float
    mean_difference: float
    differences: tuple


def _fold_means(series, common):
    out = []
    for fold in sorted(series):
        vals = [series[fold][i] for i in common[fold]]
        vals = [v for v in vals if not math.isnan(v)]
        out.append(float(np.mean(vals)) if vals else math.nan)
    return np.array(out)


def compare_runs(run_dirs, metric="prequential_auc", rope=DEFAULT_ROPE, baseline=None,
                 out=None) -> list[Comparison]:
    """CBTT comparisons of per-fold mean metrics against a baseline system.

    A system is one ``framework/classifier`` series of one run; with several runs
    labels are prefixed ``<run index>:``. Each system is compared to ``baseline``
    (a label) or, by default, to the same system of run 0, else to the ``single``
    system of its own run with the same classifier, else to the first system.
    ``rho`` is ``1/fold_count``.
    """
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}", key="metric")
    if rope < 0:
        raise ConfigError("rope must be non-negative", key="rope")
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ComparisonError("no runs given")
    systems, folds_of = {}, set()
    for i, d in enumerate(run_dirs):
        try:
            rows = read_metrics(d / "metrics.csv")
        except OSError as exc:
            raise ComparisonError(f"cannot read run {d}: {exc}") from None
        folds_of.add(_fold_count(d, rows))
        prefix = f"{i}:" if len(run_dirs) > 1 else ""
        for r in rows:
            label = f"{prefix}{r['framework']}/{r['classifier']}"
            systems.setdefault(label, {}).setdefault(int(r["fold"]), {})[int(r["instance_index"])] = \
                float(r[metric])
    if len(folds_of) != 1:
        raise ComparisonError(f"runs have different fold counts: {sorted(folds_of)}")
    fold_count = folds_of.pop()
    for label, series in systems.items():
        if sorted(series) != list(range(fold_count)):
            raise ComparisonError(f"{label}: folds {sorted(series)} do not match fold_count {fold_count}")
    labels = list(systems)
    if len(labels) < 2:
        raise ComparisonError("need at least two systems to compare")
    if baseline is not None and baseline not in systems:
        raise ComparisonError(f"baseline {baseline!r} not among {labels}")

    def default_base(label):
        run, _, system = label.rpartition(":")
        if run not in ("", "0") and f"0:{system}" in systems:
            return f"0:{system}"
        single = f"{run}:single/{system.rsplit('/', 1)[1]}" if run else f"single/{system.rsplit('/', 1)[1]}"
        return single if single in systems else labels[0]

    report = []
    for label in labels:
        base = baseline or default_base(label)
        if label == base:
            continue
        a, b = systems[base], systems[label]
        common = {f: sorted(set(a[f]) & set(b[f])) for f in range(fold_count)}
        if any(not common[f] for f in common):
            raise ComparisonError(f"{label} and {base} share no instance indices")
        diff = _fold_means(b, common) - _fold_means(a, common)
        if np.isnan(diff).any():
            raise ComparisonError(f"{label} vs {base}: a fold has no defined {metric}")
        post = correlated_bayesian_t_test(diff, rho=1.0 / fold_count, rope=rope)
        report.append(Comparison(f"{label} - {base}", post.p_left, post.p_rope, post.p_right,
                                 float(diff.mean()), tuple(diff.tolist())))
    if out is not None:
        out = Path(out)
        target = out / "cbtt.csv" if out.is_dir() or not out.suffix else out
        target.parent.mkdir(parents=True, exist_ok=True)
        _write_csv(target, CBTT_SCHEMA, CBTT_COLUMNS,
                   [(r.comparison, r.p_left, r.p_rope, r.p_right) for r in report])
    return report


def summarize(result: RunResult):
    """``{(framework, classifier): mean prequential AUC}``."""
    return {key: result.mean_auc(*key) for key in result.results}


__all__ = [
    "CBTT_COLUMNS", "Comparison", "ExperimentConfig", "METRIC_COLUMNS", "RunResult",
    "compare_runs", "load_config", "load_stream", "parse_config_text", "read_metrics",
    "run_experiment", "summarize", "write_config_text",
]
