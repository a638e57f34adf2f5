"""Batch experiment runner: parameter sweeps and mixed-traffic replays.

Sweeps run on the array simulator for speed; mixed-traffic scenarios replay
records through the real per-packet pipeline with windowed collection and the
oracle classifier. Every run is driven by an ExperimentConfig and emits flat
CSV rows, one per iteration/window, so downstream plotting never depends on
in-run aggregation. Reruns with the same config are byte-identical.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .controlplane import OracleClassifier, PipelineDriver, predict_labels
from .dataplane import BlockPair
from .errors import ConfigError, UnreadableFileError
from .fastsim import cell_table, generate_stream, simulate_baseline, simulate_filtered
from .metrics import FNR_DENOMINATORS, window_report
from .traffic import TrafficProfile, load_builtin_profile, mix_streams, read_pcap

SCENARIOS = ("sweep_r", "sweep_p", "pcap_mix")
MODES = ("filtered", "baseline", "both")

SWEEP_CSV_COLUMNS = (
    "scenario", "iteration", "r", "p", "mode", "num_flows", "packets",
    "stored", "overwritten_rows", "collision_lost_flows", "overwrite_lost_flows",
    "collected_flows_pct", "quality_pct",
)

MIX_CSV_COLUMNS = (
    "scenario", "benign_pct", "mode", "window_index",
    "collected_flows_pct", "quality_pct", "sfnr",
    "total_flows", "malicious_flows", "benign_flows", "collected_malicious",
    "misclassified_malicious", "uncollected_malicious",
)


@dataclass
class ExperimentConfig:
    """Validated knobs for one experiment run."""

    scenario: str
    profile: str = "campus"
    mode: str = "both"
    n: int = 16384
    r: int = 15
    cell_width: int = 3
    p: int = 4
    t: float = 2.0
    seed: int = 0
    iterations: int = 1000
    min_flows: int = 1
    max_flows: int = 8192
    r_list: tuple = (10, 11, 12, 13, 14, 15)
    p_list: tuple = (2, 4, 8, 16, 32)
    benign_pcts: tuple = (0, 25, 50, 75)
    attack_pcap: str | None = None
    benign_pcap: str | None = None
    injected_fnr: float = 0.0
    injected_fpr: float = 0.0
    fnr_denominator: str = "all_malicious"
    dedupe_indices: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        coerced = dict(data)
        for key in ("r_list", "p_list", "benign_pcts"):
            if key in coerced:
                coerced[key] = tuple(coerced[key])
        try:
            config = cls(**coerced)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return config.validate()

    def validate(self) -> "ExperimentConfig":
        checks = [
            (self.scenario in SCENARIOS, f"scenario must be one of {SCENARIOS}"),
            (self.mode in MODES, f"mode must be one of {MODES}"),
            (self.n >= 1, "n must be >= 1"),
            (1 <= self.r <= 32, "r must be in 1..32"),
            (self.p >= 1, "p must be >= 1"),
            (self.cell_width >= max(1, self.p.bit_length()),
             f"cell_width {self.cell_width} cannot count to p={self.p}"),
            (self.t > 0, "t must be positive"),
            (self.iterations >= 1, "iterations must be >= 1"),
            (1 <= self.min_flows <= self.max_flows, "need 1 <= min_flows <= max_flows"),
            (len(self.r_list) > 0 and all(1 <= r <= 32 for r in self.r_list),
             "r_list values must be in 1..32"),
            (len(self.p_list) > 0 and all(p >= 1 for p in self.p_list),
             "p_list values must be >= 1"),
            (all(0 <= pct < 100 for pct in self.benign_pcts),
             "benign_pcts values must be in [0, 100)"),
            (0.0 <= self.injected_fnr <= 1.0, "injected_fnr must be in [0, 1]"),
            (0.0 <= self.injected_fpr <= 1.0, "injected_fpr must be in [0, 1]"),
            (self.fnr_denominator in FNR_DENOMINATORS,
             f"fnr_denominator must be one of {FNR_DENOMINATORS}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def resolve_profile(self) -> TrafficProfile:
        try:
            if self.profile.endswith(".profile") or "/" in self.profile:
                return TrafficProfile.load(self.profile)
            return load_builtin_profile(self.profile)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load profile {self.profile!r}: {exc}") from None


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def _iteration_stream(config: ExperimentConfig, profile: TrafficProfile, iteration: int):
    """Per-iteration stream, identical across modes and across r/p values."""
    child = np.random.SeedSequence(config.seed, spawn_key=(iteration,))
    rng = np.random.default_rng(child)
    num_flows = int(rng.integers(config.min_flows, config.max_flows + 1))
    stream_seed = int(rng.integers(0, 2**63))
    flow_seq, lengths, protocols = generate_stream(profile, num_flows, stream_seed)
    return num_flows, flow_seq, lengths, protocols


def _modes(config: ExperimentConfig) -> tuple[str, ...]:
    return ("filtered", "baseline") if config.mode == "both" else (config.mode,)


def _sweep_row(config, scenario, iteration, r, p, mode, num_flows, lengths, sim) -> dict:
    return {
        "scenario": scenario,
        "iteration": iteration,
        "r": r,
        "p": p,
        "mode": mode,
        "num_flows": num_flows,
        "packets": int(lengths.sum()),
        "stored": sim.stored,
        "overwritten_rows": max(0, sim.stored - config.n),
        "collision_lost_flows": sim.collision_lost_flows(lengths, p) if p else 0,
        "overwrite_lost_flows": sim.overwrite_lost_flows(),
        "collected_flows_pct": 100.0 * sim.collected_rate,
        "quality_pct": 100.0 * sim.quality,
    }


def run_sweep_r(config: ExperimentConfig, output_path=None) -> list[dict]:
    """Collected-flows sweep over filter sizes, paired streams per iteration.

    Baseline rows carry r=0 (no filter); they double as the inputs for the
    baseline trend curve over generated-flow counts.
    """
    config.validate()
    profile = config.resolve_profile()
    rows = []
    for iteration in range(config.iterations):
        num_flows, flow_seq, lengths, protocols = _iteration_stream(config, profile, iteration)
        if "baseline" in _modes(config):
            sim = simulate_baseline(flow_seq, lengths, n=config.n, p=config.p)
            rows.append(_sweep_row(config, "sweep_r", iteration, 0, config.p,
                                   "baseline", num_flows, lengths, sim))
        if "filtered" in _modes(config):
            for r in config.r_list:
                sim = simulate_filtered(
                    flow_seq, lengths, cell_table(num_flows, protocols, r),
                    n=config.n, p=config.p, cell_width=config.cell_width,
                    dedupe_indices=config.dedupe_indices)
                rows.append(_sweep_row(config, "sweep_r", iteration, r, config.p,
                                       "filtered", num_flows, lengths, sim))
    if output_path is not None:
        write_rows_csv(rows, SWEEP_CSV_COLUMNS, output_path)
    return rows


def run_sweep_p(config: ExperimentConfig, output_path=None) -> list[dict]:
    """Collected-flows sweep over per-flow caps at fixed filter size.

    Each cap runs with a cell width that can count to it (at least the
    configured width). Baseline rows carry p=0 in the cap column; their
    quality still uses the configured p.
    """
    config.validate()
    profile = config.resolve_profile()
    rows = []
    for iteration in range(config.iterations):
        num_flows, flow_seq, lengths, protocols = _iteration_stream(config, profile, iteration)
        cells4 = cell_table(num_flows, protocols, config.r)
        if "baseline" in _modes(config):
            sim = simulate_baseline(flow_seq, lengths, n=config.n, p=config.p)
            rows.append(_sweep_row(config, "sweep_p", iteration, config.r, 0,
                                   "baseline", num_flows, lengths, sim))
        if "filtered" in _modes(config):
            for p in config.p_list:
                width = max(config.cell_width, p.bit_length())
                sim = simulate_filtered(flow_seq, lengths, cells4,
                                        n=config.n, p=p, cell_width=width,
                                        dedupe_indices=config.dedupe_indices)
                rows.append(_sweep_row(config, "sweep_p", iteration, config.r, p,
                                       "filtered", num_flows, lengths, sim))
    if output_path is not None:
        write_rows_csv(rows, SWEEP_CSV_COLUMNS, output_path)
    return rows


def run_mix(config: ExperimentConfig, attack_records, benign_records,
            output_path=None) -> list[dict]:
    """Replay benign/attack mixes through the per-packet pipeline.

    For every benign share and mode, the mixed stream runs through windowed
    collection; each window is classified by the oracle (with any injected
    error rates) and reported as one row.
    """
    config.validate()
    rows = []
    window_us = int(round(config.t * 1_000_000))
    for pct in config.benign_pcts:
        mixed = mix_streams(attack_records, benign_records, pct)
        for mode in _modes(config):
            pair = BlockPair(n=config.n, r=config.r, cell_width=config.cell_width,
                             p=config.p, mode=mode,
                             dedupe_indices=config.dedupe_indices)
            driver = PipelineDriver(pair, window_us=window_us, sample_rows=config.p)
            for window in driver.run(mixed):
                labels = {key: t.label for key, t in window.truth.items()}
                classifier = OracleClassifier(labels.get,
                                              injected_fnr=config.injected_fnr,
                                              injected_fpr=config.injected_fpr,
                                              seed=config.seed)
                predictions = predict_labels(classifier, window.samples)
                report = window_report(window.index, window.truth, predictions,
                                       config.p,
                                       fnr_denominator=config.fnr_denominator)
                row = {"scenario": "pcap_mix", "benign_pct": pct, "mode": mode}
                row.update(asdict(report))
                rows.append({k: row[k] for k in MIX_CSV_COLUMNS})
    if output_path is not None:
        write_rows_csv(rows, MIX_CSV_COLUMNS, output_path)
    return rows


def run_pcap_mix(config: ExperimentConfig, output_path=None) -> list[dict]:
    """run_mix over records read from the configured capture files."""
    config.validate()
    if config.attack_pcap is None:
        raise ConfigError("pcap_mix needs attack_pcap")
    if any(pct > 0 for pct in config.benign_pcts) and config.benign_pcap is None:
        raise ConfigError("pcap_mix with benign_pcts > 0 needs benign_pcap")
    attack, _ = read_pcap(config.attack_pcap, label=1)
    benign = []
    if any(pct > 0 for pct in config.benign_pcts):
        benign, _ = read_pcap(config.benign_pcap, label=0)
    return run_mix(config, attack, benign, output_path)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def write_rows_csv(rows: list[dict], columns, path_or_fh) -> None:
    """Write rows in fixed column order with fixed float formatting, so the
    same rows always serialise to the same bytes."""
    def emit(fh):
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row[c]) for c in columns) + "\n")

    if hasattr(path_or_fh, "write"):
        emit(path_or_fh)
    else:
        with open(path_or_fh, "w", newline="") as fh:
            emit(fh)


def aggregate_rows(input_path, group_by: list[str], output_path=None) -> list[dict]:
    """Group a result CSV and emit mean/std for every numeric column.

    Columns listed in group_by key the groups; every other column whose
    non-empty values all parse as numbers gets <col>_mean and <col>_std
    outputs. Groups are emitted in sorted key order.
    """
    try:
        with open(input_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise UnreadableFileError(f"{input_path} has no CSV header")
            fieldnames = list(reader.fieldnames)
            records = list(reader)
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {input_path}: {exc}") from None
    missing = [c for c in group_by if c not in fieldnames]
    if missing:
        raise ConfigError(f"group-by columns not in {input_path}: {missing}")
    if not records:
        raise UnreadableFileError(f"{input_path} has no data rows")

    def numeric(column):
        values = [row[column] for row in records if row[column] not in ("", None)]
        if not values:
            return False
        try:
            [float(v) for v in values]
        except ValueError:
            return False
        return True

    metric_columns = [c for c in fieldnames if c not in group_by and numeric(c)]
    groups: dict[tuple, list[dict]] = {}
    for row in records:
        groups.setdefault(tuple(row[c] for c in group_by), []).append(row)

    out_rows = []
    for key in sorted(groups):
        members = groups[key]
        out = dict(zip(group_by, key))
        out["rows"] = len(members)
        for column in metric_columns:
            values = [float(r[column]) for r in members if r[column] not in ("", None)]
            out[f"{column}_mean"] = statistics.fmean(values) if values else None
            out[f"{column}_std"] = statistics.pstdev(values) if values else None
        out_rows.append(out)

    columns = list(group_by) + ["rows"]
    for column in metric_columns:
        columns += [f"{column}_mean", f"{column}_std"]
    if output_path is not None:
        write_rows_csv(out_rows, columns, output_path)
    return out_rows
