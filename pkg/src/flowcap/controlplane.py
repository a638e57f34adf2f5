"""Control plane: window collection, flow assembly, classification, exports.

The control plane owns the swap protocol. A collection flips the switch
register, drains the now-idle block in block order, and resets its rows,
cursor, and filter. Collected rows are grouped into direction-merged flow
samples of exactly p rows each, which is what a downstream detector consumes.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from hashlib import blake2b
from typing import Callable, Iterable, Mapping, Protocol

import numpy as np

from .dataplane import BlockPair, IngestOutcome
from .packet import (
    FEATURE_FULL_SCALE,
    FEATURE_NAMES,
    NUM_FEATURES,
    PacketRecord,
    id5_key,
    record_key,
)

SAMPLES_MAGIC = b"FCS1"
SAMPLES_VERSION = 1

FlowKey = tuple[int, int, int, int, int]


@dataclass(slots=True)
class CollectedWindow:
    """Rows drained from one block at a swap, plus the window's time span."""

    index: int
    t_start_us: int
    t_end_us: int
    rows: list[tuple[bytes, tuple[int, ...]]]


@dataclass(slots=True)
class FlowSample:
    """One assembled flow: canonical key, p x f feature matrix, and the
    number of rows collected for the flow before truncation."""

    key: FlowKey
    matrix: np.ndarray
    packet_count: int


@dataclass(slots=True)
class FlowTruth:
    """Per-window ground truth for one flow."""

    packets: int
    label: int | None
    collected: int = 0


@dataclass(slots=True)
class WindowResult:
    """Everything the evaluation needs about one completed window."""

    index: int
    t_start_us: int
    t_end_us: int
    rows: list[tuple[bytes, tuple[int, ...]]]
    truth: dict[FlowKey, FlowTruth]
    outcomes: Counter
    samples: list[FlowSample] = field(default_factory=list)


def swap_and_collect(pair: BlockPair) -> list[tuple[bytes, tuple[int, ...]]]:
    """Flip the switch, drain the idle block in block order, reset it.

    The switch flips first, so the data plane keeps writing into the other
    block while this side is drained; the block lock only covers the drain
    against the at-most-one in-flight packet that read the old switch value.
    """
    k = pair.switch.read()
    pair.switch.write(1 - k)
    block = pair.blocks[k]
    with block.lock:
        rows = block.occupied_rows()
        block.reset()
        pair.filters[k].reset()
        pair.flow_counts[k].clear()
    return rows


def assemble_flows(window: CollectedWindow, p: int) -> list[FlowSample]:
    """Group a window's rows into per-flow samples of exactly p rows.

    Both directions of a flow merge under the canonical key. Rows are ordered
    by timestamp (stable over block order), truncated to the first p, and
    zero-padded up to p; timestamps are rebased to the sample's first row.
    """
    if p < 1:
        raise ValueError(f"sample depth p must be positive, got {p}")
    groups: dict[FlowKey, list[tuple[int, ...]]] = {}
    for id_f5, feats in window.rows:
        groups.setdefault(id5_key(id_f5), []).append(feats)
    samples = []
    for key in sorted(groups):
        feats = sorted(groups[key], key=lambda row: row[0])
        matrix = np.zeros((p, NUM_FEATURES), dtype=np.float64)
        kept = feats[:p]
        base_ts = kept[0][0]
        for i, row in enumerate(kept):
            matrix[i] = row
            matrix[i, 0] = row[0] - base_ts
        samples.append(FlowSample(key=key, matrix=matrix, packet_count=len(feats)))
    return samples


def normalize(sample: FlowSample, window_us: int) -> FlowSample:
    """Scale features into [0, 1]: fixed full-scale bounds per feature, and
    the rebased timestamp divided by the window length."""
    scale = np.array(
        [window_us] + [FEATURE_FULL_SCALE[name] for name in FEATURE_NAMES[1:]],
        dtype=np.float64,
    )
    return FlowSample(key=sample.key, matrix=sample.matrix / scale,
                      packet_count=sample.packet_count)


class Classifier(Protocol):
    """Detector plug-in: per-sample probability that the flow is malicious."""

    def classify(self, samples: list[FlowSample]) -> list[float]: ...


def _keyed_coin(seed: int, key: FlowKey, salt: bytes, rate: float) -> bool:
    if rate <= 0.0:
        return False
    digest = blake2b(struct.pack(">IHIHB", *key) + salt,
                     key=seed.to_bytes(8, "big"), digest_size=8).digest()
    return int.from_bytes(digest, "big") < rate * 2.0**64


class OracleClassifier:
    """Ground-truth classifier with injected error rates.

    Labels each sample via ``label_lookup(key)``, then flips malicious flows
    to benign with probability injected_fnr and benign flows to malicious
    with probability injected_fpr. Flips are decided per (seed, key), so the
    output is independent of sample order and reproducible across runs.
    """

    def __init__(self, label_lookup: Callable[[FlowKey], int | None],
                 injected_fnr: float = 0.0, injected_fpr: float = 0.0,
                 seed: int = 0):
        for name, rate in (("injected_fnr", injected_fnr), ("injected_fpr", injected_fpr)):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        self.label_lookup = label_lookup
        self.injected_fnr = injected_fnr
        self.injected_fpr = injected_fpr
        self.seed = seed

    def classify(self, samples: list[FlowSample]) -> list[float]:
        probs = []
        for sample in samples:
            label = self.label_lookup(sample.key)
            if label == 1:
                flip = _keyed_coin(self.seed, sample.key, b"fnr", self.injected_fnr)
                probs.append(0.0 if flip else 1.0)
            else:
                flip = _keyed_coin(self.seed, sample.key, b"fpr", self.injected_fpr)
                probs.append(1.0 if flip else 0.0)
        return probs


class MeanLengthHeuristic:
    """Toy detector: flows whose mean collected packet length stays at or
    below the threshold are called malicious (floods use tiny packets)."""

    def __init__(self, max_mean_length: float = 100.0):
        self.max_mean_length = max_mean_length

    def classify(self, samples: list[FlowSample]) -> list[float]:
        col = FEATURE_NAMES.index("packet_length")
        probs = []
        for sample in samples:
            rows = min(sample.packet_count, sample.matrix.shape[0])
            mean_len = float(sample.matrix[:rows, col].mean()) if rows else 0.0
            probs.append(1.0 if mean_len <= self.max_mean_length else 0.0)
        return probs


def predict_labels(classifier: Classifier, samples: list[FlowSample],
                   threshold: float = 0.5) -> dict[FlowKey, int]:
    """Run the classifier and threshold its probabilities into labels."""
    probs = classifier.classify(samples)
    return {s.key: int(prob > threshold) for s, prob in zip(samples, probs)}


class PipelineDriver:
    """Deterministic virtual-time pipeline: ingest timestamp-ordered records,
    swap at every window boundary, keep per-window ground truth.

    Window boundaries sit at multiples of window_us after the first record's
    timestamp. Every parsed record counts toward its window's ground truth,
    including checksum drops; empty windows advance the index but produce no
    result.
    """

    def __init__(self, pair: BlockPair, window_us: int = 2_000_000,
                 sample_rows: int | None = None):
        if window_us < 1:
            raise ValueError(f"window_us must be positive, got {window_us}")
        self.pair = pair
        self.window_us = window_us
        self.sample_rows = sample_rows if sample_rows is not None else (pair.p or 4)

    def run(self, records: Iterable[PacketRecord]) -> list[WindowResult]:
        results: list[WindowResult] = []
        truth: dict[FlowKey, FlowTruth] = {}
        outcomes: Counter = Counter()
        window_start: int | None = None
        index = 0

        def close_window(start_us: int) -> int:
            nonlocal truth, outcomes
            rows = swap_and_collect(self.pair)
            window = CollectedWindow(index=index, t_start_us=start_us,
                                     t_end_us=start_us + self.window_us, rows=rows)
            for id_f5, _ in rows:
                truth[id5_key(id_f5)].collected += 1
            result = WindowResult(index=index, t_start_us=start_us,
                                  t_end_us=window.t_end_us, rows=rows,
                                  truth=truth, outcomes=outcomes)
            if rows:
                result.samples = assemble_flows(window, self.sample_rows)
            results.append(result)
            truth, outcomes = {}, Counter()
            return window.t_end_us

        for rec in records:
            if window_start is None:
                window_start = rec.capture_ts
            while rec.capture_ts >= window_start + self.window_us:
                if truth:
                    window_start = close_window(window_start)
                else:
                    window_start += self.window_us
                index += 1
            entry = truth.get(key := record_key(rec))
            if entry is None:
                truth[key] = entry = FlowTruth(packets=0, label=rec.label)
            entry.packets += 1
            outcomes[self.pair.ingest(rec)] += 1

        if truth and window_start is not None:
            close_window(window_start)
        return results


def export_samples_csv(samples: list[FlowSample], fh) -> None:
    """One CSV line per sample: key, packet_count, then the p*f matrix
    flattened row-major with columns named r{i}_{feature}."""
    p = samples[0].matrix.shape[0] if samples else 0
    header = ["ip_a", "port_a", "ip_b", "port_b", "protocol", "packet_count"]
    for i in range(p):
        header.extend(f"r{i}_{name}" for name in FEATURE_NAMES)
    fh.write(",".join(header) + "\n")
    for s in samples:
        fields = [str(v) for v in s.key] + [str(s.packet_count)]
        fields.extend(repr(float(v)) for v in s.matrix.ravel())
        fh.write(",".join(fields) + "\n")


def export_samples_binary(samples: list[FlowSample], fh) -> None:
    """Little-endian sample dump.

    Header: magic "FCS1", u16 version, u16 p, u16 f, u32 count. Each record:
    u32 ip_a, u16 port_a, u32 ip_b, u16 port_b, u8 protocol, u8 pad,
    u16 packet_count, then p*f float64 matrix values row-major.
    """
    p = samples[0].matrix.shape[0] if samples else 0
    fh.write(struct.pack("<4sHHHI", SAMPLES_MAGIC, SAMPLES_VERSION, p,
                         NUM_FEATURES, len(samples)))
    for s in samples:
        ip_a, port_a, ip_b, port_b, proto = s.key
        fh.write(struct.pack("<IHIHBBH", ip_a, port_a, ip_b, port_b, proto, 0,
                             s.packet_count))
        fh.write(s.matrix.astype("<f8").tobytes())


def read_samples_binary(fh) -> list[FlowSample]:
    header = fh.read(struct.calcsize("<4sHHHI"))
    if len(header) < struct.calcsize("<4sHHHI"):
        raise ValueError("not a sample dump")
    magic, version, p, f, count = struct.unpack("<4sHHHI", header)
    if magic != SAMPLES_MAGIC or version != SAMPLES_VERSION:
        raise ValueError("not a sample dump")
    samples = []
    for _ in range(count):
        ip_a, port_a, ip_b, port_b, proto, _, packet_count = struct.unpack(
            "<IHIHBBH", fh.read(16))
        matrix = np.frombuffer(fh.read(8 * p * f), dtype="<f8").reshape(p, f).copy()
        samples.append(FlowSample(key=(ip_a, port_a, ip_b, port_b, proto),
                                  matrix=matrix, packet_count=packet_count))
    return samples
