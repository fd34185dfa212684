"""Command-line entry point: ``occstream <command> [--config FILE] [--seed N] [--out PATH] [--key=value ...]``.

Exit codes: 0 success, 2 configuration error, 3 initialization error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .clustering import MacroCluster, cluster_distance
from .errors import (ComparisonError, ConfigError, ContractError, InitializationError,
                     SchemaError, StreamParseError)
from .harness import compare_runs, load_config, parse_config_text, run_experiment, summarize
from .sampling import WindowSizeQuery, min_window_size

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INIT = 3


def _overrides(extra):
    """``--key=value`` / ``--key value`` leftovers as a mapping."""
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or tok == "--":
            raise ConfigError(f"unexpected argument {tok!r}", key=tok)
        body = tok[2:]
        if "=" in body:
            key, value = body.split("=", 1)
        elif i + 1 < len(extra) and not extra[i + 1].startswith("--"):
            key, value = body, extra[i + 1]
            i += 1
        else:
            raise ConfigError(f"option --{body} needs a value", key=body)
        out[key.replace("-", "_")] = value
        i += 1
    return out


def _mapping(args, extra):
    mapping = {}
    if args.config:
        try:
            mapping.update(parse_config_text(Path(args.config).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}", key="config") from None
    mapping.update(_overrides(extra))
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    return mapping


def _take(mapping, key, parse, default=None, required=False):
    if key not in mapping:
        if required:
            raise ConfigError(f"missing required key {key!r}", key=key)
        return default
    raw = mapping.pop(key)
    try:
        return parse(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {raw!r} for {key!r}", key=key) from None


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _reject_rest(mapping):
    for key in mapping:
        raise ConfigError(f"unknown configuration key {key!r}", key=key)


def _emit(payload, out):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    print(text)


def cmd_run(args, extra):
    mapping = _mapping(args, extra)
    if args.out:
        mapping["out"] = args.out
    config = load_config(None, mapping)
    result = run_experiment(config)
    for (fw, clf), mean in summarize(result).items():
        print(f"{fw:<11} {clf:<8} mean prequential AUC {mean:.4f}")
    print(f"outputs written to {result.out}")
    return EXIT_OK


def cmd_compare(args, extra):
    mapping = _mapping(args, extra)
    mapping.pop("seed", None)
    metric = _take(mapping, "metric", str, "prequential_auc")
    rope = _take(mapping, "rope", float, 0.01)
    baseline = _take(mapping, "baseline", str)
    _reject_rest(mapping)
    out = args.out or args.runs[0]
    report = compare_runs(args.runs, metric, rope, baseline, out=out)
    for r in report:
        print(f"{r.comparison:<40} p_left={r.p_left:.4f} p_rope={r.p_rope:.4f} p_right={r.p_right:.4f}")
    return EXIT_OK


def cmd_window_size(args, extra):
    mapping = _mapping(args, extra)
    mapping.pop("seed", None)
    probs = _take(mapping, "probabilities", _floats, required=True)
    tau = _take(mapping, "tau", int, required=True)
    confidence = _take(mapping, "confidence", float, 0.95)
    _reject_rest(mapping)
    try:
        res = min_window_size(WindowSizeQuery(tuple(probs), tau, confidence))
    except ContractError as exc:
        raise ConfigError(str(exc), key="probabilities") from None
    _emit({"n": res.n, "lemma_satisfied": res.lemma_satisfied, "p_min": res.p_min,
           "quantile": res.quantile}, args.out)
    return EXIT_OK


def cmd_cluster_distance(args, extra):
    mapping = _mapping(args, extra)
    seed = _take(mapping, "seed", int, 0)
    balls = []
    for name in ("a", "b"):
        center = np.array(_take(mapping, f"{name}_center", _floats, required=True))
        radius = _take(mapping, f"{name}_radius", float, required=True)
        try:
            balls.append(MacroCluster(0, center, radius, 1.0))
        except ContractError as exc:
            raise ConfigError(str(exc), key=f"{name}_radius") from None
    samples = _take(mapping, "samples", int, 100_000)
    method = _take(mapping, "method", str, "monte_carlo")
    _reject_rest(mapping)
    if method not in ("monte_carlo", "exact"):
        raise ConfigError(f"unknown method {method!r}", key="method")
    if samples < 1:
        raise ConfigError("samples must be >= 1", key="samples")
    try:
        cd = cluster_distance(balls[0], balls[1], samples, seed, method)
    except ContractError as exc:
        raise ConfigError(str(exc), key="a_center") from None
    _emit({"raw": cd.raw, "normalized": cd.normalized, "method": method}, args.out)
    return EXIT_OK


def cmd_serve(args, extra):
    import uvicorn

    mapping = _mapping(args, extra)
    mapping.pop("seed", None)
    host = _take(mapping, "host", str, "127.0.0.1")
    port = _take(mapping, "port", int, 8000)
    _reject_rest(mapping)
    uvicorn.run("occstream.service.app:app", host=host, port=port)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="occstream", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory or file")
        return p

    p = common(sub.add_parser("run", help="run an experiment; extra --key=value pairs override the config"))
    p.set_defaults(func=cmd_run)
    p = common(sub.add_parser("compare", help="correlated Bayesian t-test between runs"))
    p.add_argument("runs", nargs="+", help="run output directories")
    p.set_defaults(func=cmd_compare)
    p = common(sub.add_parser("window-size", help="minimal window holding tau rare-context instances"))
    p.set_defaults(func=cmd_window_size)
    p = common(sub.add_parser("cluster-distance", help="distance between two balls"))
    p.set_defaults(func=cmd_cluster_distance)
    p = common(sub.add_parser("serve", help="start the HTTP service"))
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, extra)
    except ConfigError as exc:
        key = f" [key: {exc.key}]" if exc.key else ""
        print(f"configuration error{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ComparisonError, SchemaError, StreamParseError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InitializationError as exc:
        print(f"initialization error: {exc}", file=sys.stderr)
        return EXIT_INIT


if __name__ == "__main__":
    sys.exit(main())
