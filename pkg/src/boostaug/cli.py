"""Command-line entry point: ``augment``, ``diagnose``, ``sweep`` and ``eval``.

Every command takes ``--seed`` and ``--config file.json``. The JSON file holds
flat keys named after the long flags (``confidence_threshold``, ``n``, ...);
flags given on the command line win over the file. Exit status is 0 on
success, 1 on a runtime failure and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .backends import STRATEGIES, TransformConfig
from .boost import BoostError, BoostRunConfig, ExternalScorerFactory, LightweightScorerFactory, boost_augment
from .corpus import ConfigError, CorpusError, load_dataset, write_dataset
from .evalharness import MODES, evaluate, sweep_n, train_classifier
from .filters import STAGES, FilterConfig
from .shiftmetrics import NgramFeaturizer, embed_clouds, shift_report
from .surrogate import ScorerError, SurrogateTrainConfig

log = logging.getLogger("boostaug")

# keys that never enter the config echo: worker count and output locations
# do not change results, and echoing them would break byte-identical reports
_NOT_ECHOED = {"config", "jobs", "out", "report", "points", "command"}

DEFAULTS = {
    "seed": 0,
    "task": "tc",
    "jobs": 1,
    # pipeline
    "k": 5,
    "n": 8,
    "mode": "cross",
    "pool_multiplier": 2,
    "include_originals": True,
    "scorer": "lightweight",
    "timeout": 30.0,
    # backend
    "backend": "eda",
    "prob": 0.1,
    "eda_op_weights": [1.0, 1.0, 1.0, 1.0],
    "max_attempts": 10,
    "protect_aspect": True,
    "synonyms": None,
    "misspellings": None,
    # filters
    "confidence_threshold": 0.99,
    "perplexity_limit": 5.0,
    "perplexity_mode": "absolute",
    "relative_ratio": 1.5,
    "disable": [],
    # surrogate
    "learning_rate": 1e-5,
    "batch_size": 16,
    "max_sequence_length": 80,
    "l2_lambda": 1e-8,
    "max_epochs": 10,
    "checkpoint_metric": "accuracy",
    "ngram_order": 2,
    "smoothing_alpha": 1.0,
    "grid_search": True,
    # diagnose
    "method": "deterministic",
    # sweep
    "seeds": 5,
    "modes": ["boostaug", "monoaug", "raw_backend"],
}

_PIPELINE_KEYS = [
    "k", "n", "mode", "pool_multiplier", "include_originals", "scorer", "timeout",
    "backend", "prob", "eda_op_weights", "max_attempts", "protect_aspect", "synonyms", "misspellings",
    "confidence_threshold", "perplexity_limit", "perplexity_mode", "relative_ratio", "disable",
    "learning_rate", "batch_size", "max_sequence_length", "l2_lambda", "max_epochs", "checkpoint_metric",
    "ngram_order", "smoothing_alpha", "grid_search",
]
COMMAND_KEYS = {
    "augment": ["seed", "task", "jobs", "input", *_PIPELINE_KEYS],
    "diagnose": ["seed", "task", "jobs", "train", "augmented", "test", "a", "b", "method"],
    "sweep": ["seed", "task", "jobs", "input", "test", "valid", "seeds", "modes", *_PIPELINE_KEYS],
    "eval": ["seed", "task", "train", "test", "valid"],
}
_LIST_KEYS = {"disable", "modes", "n_values", "eda_op_weights"}


class UsageError(ConfigError):
    pass


def _csv(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _weights(text: str) -> list[float]:
    return [float(x) for x in _csv(text)]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of flat settings; command-line flags win")
    p.add_argument("--seed", type=int)
    p.add_argument("--task", choices=("tc", "absc"))


def _add_pipeline(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--k", type=int, help="number of folds (cross mode, must exceed 3)")
    g.add_argument("--mode", choices=("cross", "mono"))
    g.add_argument("--pool-multiplier", type=int, dest="pool_multiplier")
    g.add_argument("--include-originals", type=_bool, dest="include_originals")
    g.add_argument("--scorer", help="lightweight, exec:<command> or http:<url>; {fold} expands to the iteration")
    g.add_argument("--timeout", type=float, help="external scorer timeout in seconds")
    g.add_argument("--jobs", type=int)
    b = p.add_argument_group("backend")
    b.add_argument("--backend", choices=STRATEGIES)
    b.add_argument("--prob", type=float, help="per-token transform probability")
    b.add_argument("--eda-op-weights", type=_weights, dest="eda_op_weights",
                   help="weights of synonym_replace,random_insert,random_swap,random_delete")
    b.add_argument("--max-attempts", type=int, dest="max_attempts")
    b.add_argument("--protect-aspect", type=_bool, dest="protect_aspect")
    b.add_argument("--synonyms", help="synonym lexicon (word<TAB>syn1,syn2)")
    b.add_argument("--misspellings", help="misspelling dictionary, same format")
    f = p.add_argument_group("filters")
    f.add_argument("--confidence-threshold", type=float, dest="confidence_threshold")
    f.add_argument("--perplexity-limit", type=float, dest="perplexity_limit")
    f.add_argument("--perplexity-mode", choices=("absolute", "relative"), dest="perplexity_mode")
    f.add_argument("--relative-ratio", type=float, dest="relative_ratio")
    f.add_argument("--disable", type=_csv, help=f"comma-separated filter stages from {','.join(STAGES)}")
    s = p.add_argument_group("surrogate")
    s.add_argument("--ngram-order", type=int, dest="ngram_order")
    s.add_argument("--smoothing-alpha", type=float, dest="smoothing_alpha")
    s.add_argument("--grid-search", type=_bool, dest="grid_search")
    s.add_argument("--checkpoint-metric", choices=("accuracy", "macro_f1"), dest="checkpoint_metric")
    s.add_argument("--learning-rate", type=float, dest="learning_rate")
    s.add_argument("--batch-size", type=int, dest="batch_size")
    s.add_argument("--max-sequence-length", type=int, dest="max_sequence_length")
    s.add_argument("--l2-lambda", type=float, dest="l2_lambda")
    s.add_argument("--max-epochs", type=int, dest="max_epochs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boostaug", description="Augment-then-filter text augmentation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("augment", help="augment a dataset with cross-boosted filtering")
    _add_common(p)
    p.add_argument("--input", help="training dataset")
    p.add_argument("--n", type=int, help="surviving candidates per example")
    p.add_argument("--out", required=True, help="augmented dataset path")
    p.add_argument("--report", help="run report JSON path")
    _add_pipeline(p)

    p = sub.add_parser("diagnose", help="feature-space shift between datasets")
    _add_common(p)
    p.add_argument("--train")
    p.add_argument("--augmented")
    p.add_argument("--test")
    p.add_argument("--a", help="shorthand for --augmented")
    p.add_argument("--b", help="shorthand for --test")
    p.add_argument("--method", choices=("deterministic", "tsne"))
    p.add_argument("--out", required=True, help="shift report JSON path")
    p.add_argument("--points", help="embedded points TSV path")
    p.add_argument("--jobs", type=int, help="accepted so every command takes the same flags; diagnosis runs in one process")

    p = sub.add_parser("sweep", help="accuracy / macro-F1 against candidates per example")
    _add_common(p)
    p.add_argument("--input", help="training dataset")
    p.add_argument("--test")
    p.add_argument("--valid", help="optional validation set for classifier smoothing")
    p.add_argument("--n", type=lambda t: [int(x) for x in _csv(t)], dest="n_values",
                   help="comma-separated candidate counts, e.g. 1,2,4,8,12")
    p.add_argument("--seeds", type=int, help="number of repeated seeds per cell")
    p.add_argument("--modes", type=_csv, help=f"comma-separated from {','.join(MODES)}")
    p.add_argument("--out", help="TSV path (stdout when omitted)")
    p.add_argument("--report", help="JSON with the effective config and every cell")
    _add_pipeline(p)

    p = sub.add_parser("eval", help="train the downstream classifier and report Acc / macro-F1")
    _add_common(p)
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--valid")
    p.add_argument("--out", help="optional JSON result path")
    return parser


# -- configuration ---------------------------------------------------------

def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    out = {}
    for key, value in data.items():
        key = key.replace("-", "_")
        if key in _LIST_KEYS and isinstance(value, str):
            value = _csv(value)
        out[key] = value
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    allowed = COMMAND_KEYS[args.command] + (["n_values"] if args.command == "sweep" else [])
    if args.command == "augment":
        allowed = allowed + ["n"]
    file_cfg = _load_config_file(args.config) if args.config else {}
    if args.command == "sweep" and "n" in file_cfg:
        file_cfg["n_values"] = file_cfg.pop("n")
    unknown = sorted(set(file_cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config key(s) for {args.command}: {', '.join(unknown)}")
    cfg = {k: DEFAULTS.get(k) for k in allowed}
    if args.command == "sweep":
        cfg["n_values"] = [1, 2, 4, 8, 12]
    cfg.update(file_cfg)
    for key in allowed:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join("--" + k for k in missing))


def _check_paths(cfg: dict, *keys: str) -> None:
    for k in keys:
        p = cfg.get(k)
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"--{k}: file not found: {p}")


def run_config(cfg: dict) -> BoostRunConfig:
    """Build the pipeline config from the flat settings."""
    disable = list(cfg["disable"] or [])
    unknown = sorted(set(disable) - set(STAGES))
    if unknown:
        raise ConfigError(f"--disable: unknown stage(s) {unknown}; choose from {list(STAGES)}")
    synonyms = cfg["synonyms"] or os.environ.get("BOOSTAUG_SYNONYMS")
    misspellings = cfg["misspellings"] or os.environ.get("BOOSTAUG_MISSPELLINGS")
    for flag, p in (("synonyms", synonyms), ("misspellings", misspellings)):
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"--{flag}: file not found: {p}")
    try:
        transform = TransformConfig(
            strategy=cfg["backend"], token_transform_prob=float(cfg["prob"]),
            eda_op_weights=tuple(float(w) for w in cfg["eda_op_weights"]), max_attempts=int(cfg["max_attempts"]),
            protect_aspect=bool(cfg["protect_aspect"]), synonyms_path=synonyms, misspellings_path=misspellings,
        )
        filters = FilterConfig(
            confidence_threshold=float(cfg["confidence_threshold"]), perplexity_limit=float(cfg["perplexity_limit"]),
            perplexity_mode=cfg["perplexity_mode"], relative_ratio=float(cfg["relative_ratio"]),
            keep_per_example=int(cfg.get("n") or DEFAULTS["n"]), enabled=frozenset(STAGES) - set(disable),
        )
        surrogate = SurrogateTrainConfig(
            learning_rate=float(cfg["learning_rate"]), batch_size=int(cfg["batch_size"]),
            max_sequence_length=int(cfg["max_sequence_length"]), l2_lambda=float(cfg["l2_lambda"]),
            max_epochs=int(cfg["max_epochs"]), checkpoint_metric=cfg["checkpoint_metric"],
            ngram_order=int(cfg["ngram_order"]), smoothing_alpha=float(cfg["smoothing_alpha"]),
            grid_search=bool(cfg["grid_search"]),
        )
        return BoostRunConfig(k=int(cfg["k"]), seed=int(cfg["seed"]), transform=transform, filters=filters,
                              surrogate=surrogate, mode=cfg["mode"], pool_multiplier=int(cfg["pool_multiplier"]),
                              include_originals=bool(cfg["include_originals"]))
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid setting: {e}") from e


def scorer_factory(cfg: dict, config: BoostRunConfig):
    spec = cfg["scorer"]
    if spec in (None, "lightweight"):
        return LightweightScorerFactory(config.surrogate)
    if not str(spec).startswith(("exec:", "http:", "https:")):
        raise ConfigError(f"--scorer must be lightweight, exec:<command> or http:<url>, got {spec!r}")
    return ExternalScorerFactory(spec, float(cfg["timeout"]))


def echo(cfg: dict) -> dict:
    return {k: cfg[k] for k in sorted(cfg) if k not in _NOT_ECHOED}


def _dump_json(obj, path: str) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from e


# -- commands --------------------------------------------------------------

def cmd_augment(args, cfg) -> int:
    _require(cfg, "input")
    _check_paths(cfg, "input")
    config = run_config(cfg)
    factory = scorer_factory(cfg, config)
    data = load_dataset(cfg["input"], cfg["task"])
    run = boost_augment(data, config, factory, jobs=int(cfg["jobs"]))
    write_dataset(run.dataset, args.out)
    if args.report:
        report = dict(run.report)
        report["effective_config"] = echo(cfg)
        report["provenance"] = [
            {"origin_id": p.origin_id, "draw_index": p.draw_index, "text": p.text, "backend": p.backend,
             "fold_iteration": p.fold_iteration, "perplexity": p.perplexity, "confidence": list(p.confidence),
             "predicted_label": p.predicted_label, "survived": p.survived}
            for p in run.provenance
        ]
        _dump_json(report, args.report)
    t = run.report["totals"]
    print(f"{t['n_original']} originals, {t['survived']} of {t['generated']} candidates kept -> {args.out}")
    return 0


def cmd_diagnose(args, cfg) -> int:
    for short, long in (("a", "augmented"), ("b", "test")):
        if cfg.get(short):
            if cfg.get(long) and cfg[long] != cfg[short]:
                raise ConfigError(f"--{short} and --{long} name different files")
            cfg[long] = cfg[short]
    sources = [s for s in ("train", "augmented", "test") if cfg.get(s)]
    if len(sources) < 2:
        raise ConfigError("diagnose needs at least two of --train, --augmented, --test (or --a and --b)")
    _check_paths(cfg, *sources)
    texts = {s: list(load_dataset(cfg[s], cfg["task"]).texts) for s in sources}
    # one vocabulary and one projection for every cloud, so they share a frame
    featurizer = NgramFeaturizer().fit([t for s in sources for t in texts[s]])
    clouds = embed_clouds(texts, featurizer, cfg["method"], int(cfg["seed"]))
    reference = "test" if "test" in clouds else sources[-1]
    pairs = {}
    for s in sources:
        if s != reference:
            pairs[f"{s}_vs_{reference}"] = shift_report(clouds[s], clouds[reference]).to_dict()
    report = {"effective_config": echo(cfg), "reference": reference, "pairs": pairs}
    _dump_json(report, args.out)
    if args.points:
        lines = ["x\ty\tsource"]
        for s in sources:
            lines.extend(f"{x!r}\t{y!r}\t{s}" for x, y in clouds[s].points)
        with open(args.points, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    for name, r in pairs.items():
        print(f"{name}: overlap {r['overlap_rate']:.4f}, global skewness {r['global_skewness']:.4f}")
    return 0


def cmd_sweep(args, cfg) -> int:
    _require(cfg, "input", "test")
    _check_paths(cfg, "input", "test", "valid")
    if int(cfg["seeds"]) < 1:
        raise ConfigError("--seeds must be >= 1")
    if not cfg["n_values"]:
        raise ConfigError("--n must list at least one value")
    config = run_config({**cfg, "n": max(cfg["n_values"])})
    if cfg["scorer"] not in (None, "lightweight"):
        raise ConfigError("sweep uses the lightweight scorer; external scorers are supported by augment")
    train = load_dataset(cfg["input"], cfg["task"])
    test = load_dataset(cfg["test"], cfg["task"])
    valid = load_dataset(cfg["valid"], cfg["task"]) if cfg.get("valid") else None
    seed0 = int(cfg["seed"])
    result = sweep_n(train, test, cfg["n_values"], modes=cfg["modes"],
                     seeds=[seed0 + i for i in range(int(cfg["seeds"]))], base=config, valid=valid,
                     jobs=int(cfg["jobs"]))
    tsv = result.to_tsv()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(tsv)
    else:
        sys.stdout.write(tsv)
    if args.report:
        _dump_json({"effective_config": echo(cfg), "cells": result.cells}, args.report)
    return 0


def cmd_eval(args, cfg) -> int:
    _require(cfg, "train", "test")
    _check_paths(cfg, "train", "test", "valid")
    train = load_dataset(cfg["train"], cfg["task"])
    test = load_dataset(cfg["test"], cfg["task"])
    valid = load_dataset(cfg["valid"], cfg["task"]) if cfg.get("valid") else None
    result = evaluate(train_classifier(train, valid, seed=int(cfg["seed"])), test)
    print(f"Acc\t{result.accuracy:.6f}")
    print(f"macro-F1\t{result.macro_f1:.6f}")
    if args.out:
        _dump_json({"effective_config": echo(cfg), **result.to_dict()}, args.out)
    return 0


COMMANDS = {"augment": cmd_augment, "diagnose": cmd_diagnose, "sweep": cmd_sweep, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"boostaug: error: {e}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        print(f"boostaug {args.command}: configuration error: {e}", file=sys.stderr)
        return 2
    except (CorpusError, BoostError, ScorerError, OSError, ValueError) as e:
        print(f"boostaug {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
