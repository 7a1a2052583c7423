"""Command-line entry point.

Exit statuses: 0 success, 1 internal error or failed validation,
2 configuration error, 3 exhaustive-search budget exceeded.
"""

import argparse
import json
import sys

from .channel import ConfigError, NetworkConfig
from .experiments import (
    ExperimentConfig,
    run_ber_experiment,
    run_mse_experiment,
    run_selection_histogram,
    summarize,
    write_csv,
)
from .selection import DEFAULT_EXHAUSTIVE_BUDGET, BudgetExceededError, exhaustive_trial_count

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3

KNOWN_KEYS = {
    "ns", "nd", "nr", "k", "k_list", "snr_db_list", "ps_db", "ploc_db", "trials",
    "schemes", "seed", "symbols_per_trial", "exhaustive_budget", "l_max", "noise_scale",
}

DEFAULTS = {
    "ns": 4, "nd": 4, "nr": 2, "k": 15, "ps_db": 5.0, "ploc_db": 5.0, "trials": 1000,
    "seed": 0, "symbols_per_trial": 200, "exhaustive_budget": DEFAULT_EXHAUSTIVE_BUDGET,
    "l_max": None, "noise_scale": 1.0,
}

DEFAULT_SCHEMES = {
    "mse-vs-k": ["GMM", "GMM-global-power", "DORS", "SO"],
    "ber-vs-snr": ["GMM", "GMM-global-power", "DORS", "SO"],
    "histogram": ["GMM"],
}


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [_parse_value(part.strip()) for part in text.split(",") if part.strip()]
    return text


def load_config(path, overrides):
    """Merge the JSON document at ``path`` (if any) with ``key=value`` overrides."""
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        doc[key.strip()] = _parse_value(value.strip())
    unknown = sorted(set(doc) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]}")
    return {**DEFAULTS, **doc}


def _as_list(value, name):
    if value is None:
        raise ConfigError(f"{name} is required for this subcommand")
    if not isinstance(value, list):
        value = [value]
    return value


def _number(doc, key, kind=float):
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return kind(value)


def network_from(doc):
    return NetworkConfig.from_db(
        _number(doc, "ns", int), _number(doc, "nd", int), _number(doc, "nr", int),
        _number(doc, "k", int), _number(doc, "ps_db"), _number(doc, "ploc_db"),
    )


def experiment_from(doc, subcommand, seed=None):
    if subcommand == "mse-vs-k":
        kind = "k"
        sweep = tuple(int(_number({"k_list": v}, "k_list", int)) for v in _as_list(doc.get("k_list"), "k_list"))
        doc = {**doc, "k": sweep[0] if sweep else doc["k"]}
    else:
        kind = "snr_db"
        sweep = tuple(_number({"snr_db_list": v}, "snr_db_list") for v in _as_list(doc.get("snr_db_list"), "snr_db_list"))
    schemes = doc.get("schemes", DEFAULT_SCHEMES[subcommand])
    if isinstance(schemes, str):
        schemes = [schemes]
    l_max = doc["l_max"]
    return ExperimentConfig(
        base=network_from(doc),
        schemes=tuple(schemes),
        sweep_kind=kind,
        sweep=sweep,
        trials=_number(doc, "trials", int),
        seed=int(seed if seed is not None else _number(doc, "seed", int)),
        symbols_per_trial=_number(doc, "symbols_per_trial", int),
        exhaustive_budget=_number(doc, "exhaustive_budget", int),
        exhaustive_l_max=None if l_max is None else _number(doc, "l_max", int),
        noise_scale=_number(doc, "noise_scale"),
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="afrelay",
        description="Antenna selection for AF MIMO relay networks: experiments and checks.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in [
        ("mse-vs-k", "mean MSE versus relay count"),
        ("ber-vs-snr", "QPSK BER versus SNR at the relays"),
        ("histogram", "distribution of the number of GMM-selected pairs"),
        ("validate", "run the numerical self-check suites"),
        ("count-trials", "print the exhaustive-search trial count"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("--out", help="CSV output path (default: <subcommand>.csv)")
        p.add_argument("--seed", type=int, help="base random seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--timing", action="store_true",
                       help="fill the seconds column of the CSV (breaks byte-reproducibility)")
        if name == "validate":
            p.add_argument("--quick", action="store_true", help="smaller sample sizes")
    return parser


def _progress(done, total):
    print(f"\rsweep point {done}/{total}", end="" if done < total else "\n", file=sys.stderr)


def _dispatch(args):
    if args.workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {args.workers}")
    doc = load_config(args.config, args.overrides)

    if args.subcommand == "count-trials":
        net = network_from(doc)
        l_max = net.k if doc["l_max"] is None else _number(doc, "l_max", int)
        try:
            print(exhaustive_trial_count(net, l_max))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return EXIT_OK

    if args.subcommand == "validate":
        from .validation import run_all

        results = run_all(quick=args.quick)
        for r in results:
            print(r.line())
        return EXIT_OK if all(r.passed for r in results) else EXIT_INTERNAL

    cfg = experiment_from(doc, args.subcommand, args.seed)
    runner = {
        "mse-vs-k": run_mse_experiment,
        "ber-vs-snr": run_ber_experiment,
        "histogram": run_selection_histogram,
    }[args.subcommand]
    result = runner(cfg, workers=args.workers, progress=_progress)
    out = args.out or f"{args.subcommand}.csv"
    write_csv(result, out, include_timing=args.timing)
    print(summarize(result))
    print(f"wrote {out}")
    return EXIT_OK


def parse_and_dispatch(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main():
    sys.exit(parse_and_dispatch())
