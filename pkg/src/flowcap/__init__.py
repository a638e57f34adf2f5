"""Per-flow capped packet-feature capture and the experiments around it.

The package splits along the runtime boundary of the system it models:

- :mod:`flowcap.packet` — frame parsing, the 9-feature vector, flow ids.
- :mod:`flowcap.cbf` — the counting Bloom filter that enforces the per-flow cap.
- :mod:`flowcap.dataplane` — double-buffered ring-buffer memory blocks and the
  per-packet ingest path.
- :mod:`flowcap.controlplane` — block draining, windowed flow assembly into
  p×f samples, classifiers, sample exports.
- :mod:`flowcap.metrics` — collected-flows, quality, and system-FNR metrics
  plus per-window reports.
- :mod:`flowcap.traffic` — flow-length profiles, synthetic stream generation,
  pcap reading, benign/attack mixing.
- :mod:`flowcap.fastsim` — vectorized replay of the admit/store path for
  large parameter sweeps (bit-equivalent to the object pipeline).
- :mod:`flowcap.experiments` — sweep and mix campaigns behind the CLI.
- :mod:`flowcap.cli` — the ``flowcap`` command.
"""

from .cbf import CountingBloomFilter
from .controlplane import (
    FlowSample,
    FlowTruth,
    MeanLengthHeuristic,
    OracleClassifier,
    PipelineDriver,
    WindowResult,
    assemble_flows,
    export_samples_binary,
    export_samples_csv,
    predict_labels,
    read_samples_binary,
    swap_and_collect,
)
from .dataplane import (
    BlockPair,
    IngestOutcome,
    MemoryBlock,
    block_footprint_bytes,
)
from .errors import (
    ConfigError,
    EmptyWindowError,
    FlowcapError,
    InsufficientBenignError,
    NoMaliciousFlowsError,
    NotIPv4Error,
    TruncatedFrameError,
    UnreadableFileError,
    UnsupportedLinkTypeError,
)
from .experiments import (
    ExperimentConfig,
    aggregate_rows,
    run_mix,
    run_pcap_mix,
    run_sweep_p,
    run_sweep_r,
)
from .metrics import collected_flows, quality, sfnr, window_report
from .packet import (
    FEATURE_NAMES,
    PacketRecord,
    cell_index,
    extract_features,
    flow_ids,
    parse_packet,
)
from .traffic import (
    TrafficProfile,
    generate_synthetic,
    load_builtin_profile,
    mix_streams,
    read_pcap,
)

__version__ = "0.1.0"

__all__ = [
    "BlockPair",
    "ConfigError",
    "CountingBloomFilter",
    "EmptyWindowError",
    "ExperimentConfig",
    "FEATURE_NAMES",
    "FlowSample",
    "FlowTruth",
    "FlowcapError",
    "IngestOutcome",
    "InsufficientBenignError",
    "MeanLengthHeuristic",
    "MemoryBlock",
    "NoMaliciousFlowsError",
    "NotIPv4Error",
    "OracleClassifier",
    "PacketRecord",
    "PipelineDriver",
    "TrafficProfile",
    "TruncatedFrameError",
    "UnreadableFileError",
    "UnsupportedLinkTypeError",
    "WindowResult",
    "aggregate_rows",
    "assemble_flows",
    "block_footprint_bytes",
    "cell_index",
    "collected_flows",
    "export_samples_binary",
    "export_samples_csv",
    "extract_features",
    "flow_ids",
    "generate_synthetic",
    "load_builtin_profile",
    "mix_streams",
    "parse_packet",
    "predict_labels",
    "quality",
    "read_pcap",
    "read_samples_binary",
    "run_mix",
    "run_pcap_mix",
    "run_sweep_p",
    "run_sweep_r",
    "sfnr",
    "swap_and_collect",
    "window_report",
    "__version__",
]
