"""Command-line front end for the experiment runner.

Each subcommand builds an ExperimentConfig from an optional JSON config file
with individual flags overriding file values, then writes one CSV into the
output directory (--output-dir, else $FLOWCAP_OUTPUT_DIR, else the current
directory). Exit codes: 0 success, 1 configuration error, 2 input-data error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import (
    ConfigError,
    FlowcapError,
    InsufficientBenignError,
    UnreadableFileError,
    UnsupportedLinkTypeError,
)
from .experiments import (
    MODES,
    ExperimentConfig,
    aggregate_rows,
    load_config_file,
    run_pcap_mix,
    run_sweep_p,
    run_sweep_r,
)
from .metrics import FNR_DENOMINATORS

OUTPUT_DIR_ENV = "FLOWCAP_OUTPUT_DIR"

# config fields that plain value flags may override
_OVERRIDE_FIELDS = (
    "seed", "iterations", "profile", "mode", "n", "r", "cell_width", "p", "t",
    "min_flows", "max_flows", "fnr_denominator", "injected_fnr", "injected_fpr",
    "r_list", "p_list", "benign_pcts", "attack_pcap", "benign_pcap",
    "dedupe_indices",
)


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="JSON config file; flags override its values")
    parser.add_argument("--output", metavar="NAME", help="output CSV filename")
    parser.add_argument("--output-dir", metavar="DIR",
                        help=f"output directory (default ${OUTPUT_DIR_ENV} or cwd)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--profile", help="builtin profile name or .profile path")
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--n", type=int, help="memory block rows")
    parser.add_argument("--r", type=int, help="filter size exponent (2**r cells)")
    parser.add_argument("--cell-width", dest="cell_width", type=int)
    parser.add_argument("--p", type=int, help="per-flow packet cap")
    parser.add_argument("--t", type=float, help="window length in seconds")
    parser.add_argument("--min-flows", dest="min_flows", type=int)
    parser.add_argument("--max-flows", dest="max_flows", type=int)
    parser.add_argument("--injected-fnr", dest="injected_fnr", type=float)
    parser.add_argument("--injected-fpr", dest="injected_fpr", type=float)
    parser.add_argument("--fnr-denominator", dest="fnr_denominator",
                        choices=FNR_DENOMINATORS)
    parser.add_argument("--no-dedupe-indices", dest="dedupe_indices",
                        action="store_const", const=False,
                        help="replay duplicate cell increments instead of deduping")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowcap",
        description="Flow-capture pipeline experiments: sweeps, mixes, reports.")
    sub = parser.add_subparsers(dest="command")

    sweep_r = sub.add_parser("sweep-r", help="collected flows vs filter size")
    _add_common_flags(sweep_r)
    sweep_r.add_argument("--r-list", dest="r_list", type=_int_tuple,
                         help="comma-separated filter exponents, e.g. 10,12,15")
    sweep_r.set_defaults(handler=_cmd_sweep_r)

    sweep_p = sub.add_parser("sweep-p", help="collected flows vs per-flow cap")
    _add_common_flags(sweep_p)
    sweep_p.add_argument("--p-list", dest="p_list", type=_int_tuple,
                         help="comma-separated caps, e.g. 2,4,8,16,32")
    sweep_p.set_defaults(handler=_cmd_sweep_p)

    mix = sub.add_parser("pcap-mix", help="replay capture files at benign shares")
    _add_common_flags(mix)
    mix.add_argument("--attack-pcap", dest="attack_pcap", metavar="FILE")
    mix.add_argument("--benign-pcap", dest="benign_pcap", metavar="FILE")
    mix.add_argument("--benign-pcts", dest="benign_pcts", type=_int_tuple,
                     help="comma-separated benign packet shares, e.g. 0,25,50,75")
    mix.set_defaults(handler=_cmd_pcap_mix)

    report = sub.add_parser("report", help="aggregate a results CSV")
    report.add_argument("--input", required=True, metavar="FILE")
    report.add_argument("--group-by", required=True, metavar="COLS",
                        help="comma-separated grouping columns")
    report.add_argument("--output", metavar="NAME")
    report.add_argument("--output-dir", metavar="DIR")
    report.set_defaults(handler=_cmd_report)

    return parser


def _build_config(args: argparse.Namespace, scenario: str) -> ExperimentConfig:
    data = load_config_file(args.config) if args.config else {}
    for field in _OVERRIDE_FIELDS:
        value = getattr(args, field, None)
        if value is not None:
            data[field] = value
    data["scenario"] = scenario
    return ExperimentConfig.from_dict(data)


def _output_path(args: argparse.Namespace, default_name: str) -> Path:
    directory = Path(args.output_dir or os.environ.get(OUTPUT_DIR_ENV) or ".")
    directory.mkdir(parents=True, exist_ok=True)
    return directory / (args.output or default_name)


def _cmd_sweep_r(args) -> int:
    config = _build_config(args, "sweep_r")
    path = _output_path(args, "sweep_r.csv")
    run_sweep_r(config, path)
    print(path)
    return 0


def _cmd_sweep_p(args) -> int:
    config = _build_config(args, "sweep_p")
    path = _output_path(args, "sweep_p.csv")
    run_sweep_p(config, path)
    print(path)
    return 0


def _cmd_pcap_mix(args) -> int:
    config = _build_config(args, "pcap_mix")
    path = _output_path(args, "pcap_mix.csv")
    run_pcap_mix(config, path)
    print(path)
    return 0


def _cmd_report(args) -> int:
    group_by = [c for c in args.group_by.split(",") if c]
    if not group_by:
        raise ConfigError("--group-by needs at least one column")
    path = _output_path(args, "report.csv")
    aggregate_rows(args.input, group_by, path)
    print(path)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; those are configuration errors
        return 0 if exc.code in (0, None) else 1
    if getattr(args, "handler", None) is None:
        parser.print_help()
        return 1
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"flowcap: config error: {exc}", file=sys.stderr)
        return 1
    except (UnreadableFileError, UnsupportedLinkTypeError, InsufficientBenignError) as exc:
        print(f"flowcap: input error: {exc}", file=sys.stderr)
        return 2
    except FlowcapError as exc:
        print(f"flowcap: input error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"flowcap: config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
