"""Synthetic traffic generation, pcap reading, and stream mixing.

Flow-length profiles are plain text files: key/value directives plus a
cumulative distribution table. Sampling is inverse-CDF with lengths uniform
over the integers of each table segment, so every published statistic of a
profile is exactly computable from its table.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .controlplane import FlowTruth
from .errors import (
    InsufficientBenignError,
    NotIPv4Error,
    TruncatedFrameError,
    UnreadableFileError,
    UnsupportedLinkTypeError,
)
from .packet import PacketRecord, canonical_key, parse_packet

PROTOCOL_NAMES = {"tcp": 6, "udp": 17, "icmp": 1}

# header-only packet templates per protocol: (ip_total_length, dst_port)
_TEMPLATES = {6: (40, 80), 17: (28, 53), 1: (28, 0)}

PCAP_MAGIC = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1

STREAM_CSV_COLUMNS = (
    "capture_ts", "src_ip", "dst_ip", "src_port", "dst_port", "protocol",
    "ip_total_length", "ip_flags_frag", "tcp_length", "tcp_ack", "tcp_flags",
    "tcp_window_size", "udp_length", "icmp_type", "label", "checksum_ok",
)


class TrafficProfile:
    """Flow-length distribution plus protocol mix, parsed from profile text."""

    def __init__(self, name: str, cdf_rows: list[tuple[int, float]],
                 protocol_mix: list[tuple[int, float]],
                 declared_mean: float | None = None,
                 declared_std: float | None = None):
        if not cdf_rows:
            raise ValueError("profile needs at least one cdf row")
        lengths = [length for length, _ in cdf_rows]
        probs = [prob for _, prob in cdf_rows]
        if lengths[0] < 1 or any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ValueError("cdf lengths must be strictly increasing and >= 1")
        if any(b < a for a, b in zip(probs, probs[1:])) or any(not 0.0 < p <= 1.0 for p in probs):
            raise ValueError("cdf probabilities must be non-decreasing within (0, 1]")
        if abs(probs[-1] - 1.0) > 1e-9:
            raise ValueError(f"cdf must end at 1.0, ends at {probs[-1]}")
        if not protocol_mix:
            raise ValueError("profile needs a protocol mix")
        if abs(sum(frac for _, frac in protocol_mix) - 1.0) > 1e-9:
            raise ValueError("protocol fractions must sum to 1")

        self.name = name
        self._hi = np.array(lengths, dtype=np.int64)
        self._lo = np.concatenate(([1], self._hi[:-1] + 1))
        self._cum = np.array(probs, dtype=np.float64)
        self._cum_prev = np.concatenate(([0.0], self._cum[:-1]))
        self._mass = self._cum - self._cum_prev
        self.protocol_mix = list(protocol_mix)
        self._proto_values = np.array([proto for proto, _ in protocol_mix], dtype=np.int64)
        self._proto_cum = np.cumsum([frac for _, frac in protocol_mix])

        for label_, declared, exact in (("mean", declared_mean, self.exact_mean()),
                                        ("std", declared_std, self.exact_std())):
            if declared is not None and abs(declared - exact) > max(0.01 * exact, 0.01):
                raise ValueError(
                    f"declared {label_} {declared} does not match the cdf table ({exact:.3f})")
        self.declared_mean = declared_mean
        self.declared_std = declared_std

    @property
    def max_length(self) -> int:
        return int(self._hi[-1])

    def exact_mean(self) -> float:
        return float(np.sum(self._mass * (self._lo + self._hi) / 2.0))

    def exact_std(self) -> float:
        sq = [sum(x * x for x in range(lo, hi + 1)) / (hi - lo + 1)
              for lo, hi in zip(self._lo, self._hi)]
        second = float(np.sum(self._mass * np.array(sq)))
        mean = self.exact_mean()
        return (second - mean * mean) ** 0.5

    def cdf_at(self, length: int) -> float:
        """Exact P(flow length <= length)."""
        total = 0.0
        for lo, hi, mass, cum in zip(self._lo, self._hi, self._mass, self._cum):
            if length >= hi:
                total = cum
            elif length >= lo:
                total += mass * (length - lo + 1) / (hi - lo + 1)
                break
            else:
                break
        return total

    def sample_lengths(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draw flow lengths by inverse CDF, one uniform variate per flow."""
        u = rng.random(count)
        seg = np.searchsorted(self._cum, u, side="right")
        lo, hi = self._lo[seg], self._hi[seg]
        frac = (u - self._cum_prev[seg]) / self._mass[seg]
        offset = np.minimum((frac * (hi - lo + 1)).astype(np.int64), hi - lo)
        return lo + offset

    def sample_protocols(self, count: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(count)
        return self._proto_values[np.searchsorted(self._proto_cum, u, side="right")]

    @classmethod
    def loads(cls, text: str) -> "TrafficProfile":
        name = "unnamed"
        mean = std = None
        protocol_mix: list[tuple[int, float]] = []
        cdf_rows: list[tuple[int, float]] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            try:
                if fields[0] == "name" and len(fields) == 2:
                    name = fields[1]
                elif fields[0] == "mean" and len(fields) == 2:
                    mean = float(fields[1])
                elif fields[0] == "std" and len(fields) == 2:
                    std = float(fields[1])
                elif fields[0] == "protocol" and len(fields) == 3:
                    proto = PROTOCOL_NAMES.get(fields[1], None)
                    if proto is None:
                        proto = int(fields[1])
                    protocol_mix.append((proto, float(fields[2])))
                elif fields[0] == "cdf" and len(fields) == 3:
                    cdf_rows.append((int(fields[1]), float(fields[2])))
                else:
                    raise ValueError("unrecognised directive")
            except ValueError as exc:
                raise ValueError(f"profile line {lineno}: {raw.strip()!r}: {exc}") from None
        return cls(name, cdf_rows, protocol_mix, declared_mean=mean, declared_std=std)

    @classmethod
    def load(cls, path) -> "TrafficProfile":
        return cls.loads(Path(path).read_text())


def load_builtin_profile(name: str) -> TrafficProfile:
    """Load one of the packaged profiles (campus, office, flood)."""
    resource = resources.files("flowcap").joinpath(f"profiles/{name}.profile")
    try:
        text = resource.read_text()
    except (FileNotFoundError, OSError):
        raise ValueError(f"no builtin profile named {name!r}") from None
    return TrafficProfile.loads(text)


def generate_synthetic(profile: TrafficProfile, num_flows: int, seed: int, *,
                       label: int = 0, window_us: int = 2_000_000,
                       base_ts: int = 0, ip_base: int = 0x0A000000,
                       dst_ip: int = 0xC0A80001,
                       ) -> tuple[list[PacketRecord], dict, np.ndarray]:
    """Synthesise one window of header-only packets for num_flows flows.

    Flows get deterministic distinct 5-tuples (sequential source IPs above
    ip_base), lengths and protocols drawn from the profile, globally shuffled
    packet order, and monotone timestamps evenly spaced across the window.
    Returns (records, ground truth keyed by canonical flow key, lengths).
    """
    if num_flows < 1:
        raise ValueError(f"num_flows must be positive, got {num_flows}")
    if ip_base + num_flows > 2**32:
        raise ValueError("ip_base leaves no room for num_flows distinct addresses")
    rng = np.random.default_rng(seed)
    lengths = profile.sample_lengths(num_flows, rng)
    protocols = profile.sample_protocols(num_flows, rng)
    order = rng.permutation(np.repeat(np.arange(num_flows), lengths))

    total = order.shape[0]
    records = []
    for k, j in enumerate(order):
        j = int(j)
        proto = int(protocols[j])
        total_len, dport = _TEMPLATES[proto]
        records.append(PacketRecord(
            capture_ts=base_ts + (k * window_us) // total,
            src_ip=ip_base + j,
            dst_ip=dst_ip,
            src_port=1024 + j % 60000 if proto != 1 else 0,
            dst_port=dport,
            protocol=proto,
            ip_total_length=total_len,
            ip_flags_frag=0x4000,
            tcp_len=0,
            tcp_ack=0,
            tcp_flags=0x10 if proto == 6 else 0,
            tcp_window=8192 if proto == 6 else 0,
            udp_len=8 if proto == 17 else 0,
            icmp_type=8 if proto == 1 else 0,
            label=label,
        ))

    truth = {}
    for j in range(num_flows):
        proto = int(protocols[j])
        _, dport = _TEMPLATES[proto]
        sport = 1024 + j % 60000 if proto != 1 else 0
        key = canonical_key(ip_base + j, sport, dst_ip, dport, proto)
        truth[key] = FlowTruth(packets=int(lengths[j]), label=label)
    return records, truth, lengths


@dataclass
class PcapStats:
    """Per-file read accounting, including skipped frames."""

    frames: int = 0
    parsed: int = 0
    skipped_non_ipv4: int = 0
    skipped_truncated: int = 0


def read_pcap(path, label: int | None = None) -> tuple[list[PacketRecord], PcapStats]:
    """Read a classic pcap capture into labeled records.

    Only Ethernet link type is supported. Non-IPv4 frames and frames cut
    below their headers are skipped and counted in the returned stats.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from None
    if len(data) < 24:
        raise UnreadableFileError(f"{path} is too short to be a pcap")
    if data[:4] == struct.pack(">I", PCAP_MAGIC):
        end = ">"
    elif data[:4] == struct.pack("<I", PCAP_MAGIC):
        end = "<"
    else:
        raise UnreadableFileError(f"{path} has no classic pcap magic")
    linktype = struct.unpack(end + "I", data[20:24])[0]
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedLinkTypeError(f"{path} uses link type {linktype}, expected Ethernet (1)")

    records: list[PacketRecord] = []
    stats = PcapStats()
    offset = 24
    while offset < len(data):
        if offset + 16 > len(data):
            raise UnreadableFileError(f"{path}: truncated record header at byte {offset}")
        ts_sec, ts_frac, incl_len, _ = struct.unpack(end + "IIII", data[offset:offset + 16])
        offset += 16
        if offset + incl_len > len(data):
            raise UnreadableFileError(f"{path}: record at byte {offset - 16} overruns the file")
        frame = data[offset:offset + incl_len]
        offset += incl_len
        stats.frames += 1
        try:
            records.append(parse_packet(frame, ts_sec * 1_000_000 + ts_frac, label))
            stats.parsed += 1
        except NotIPv4Error:
            stats.skipped_non_ipv4 += 1
        except TruncatedFrameError:
            stats.skipped_truncated += 1
    return records, stats


def mix_streams(attack: list[PacketRecord], benign: list[PacketRecord],
                benign_pct: float) -> list[PacketRecord]:
    """Blend a benign stream into an attack stream at a packet share.

    The benign stream is rate-scaled by timestamp dilation: the prefix of
    benign packets needed to make up benign_pct of the output is stretched or
    compressed onto the attack stream's time span, keeping its flow structure.
    Labels are preserved; the merge is ordered by timestamp (attack first on
    ties). Both inputs must be timestamp-sorted.
    """
    if not 0 <= benign_pct < 100:
        raise ValueError(f"benign_pct must be in [0, 100), got {benign_pct}")
    if benign_pct == 0:
        return list(attack)
    if not attack:
        raise ValueError("attack stream is empty")
    need = round(len(attack) * benign_pct / (100.0 - benign_pct))
    if len(benign) < need:
        raise InsufficientBenignError(
            f"need {need} benign packets for {benign_pct}%, trace has {len(benign)}")
    if need == 0:
        return list(attack)

    prefix = benign[:need]
    a0, a1 = attack[0].capture_ts, attack[-1].capture_ts
    b0, b1 = prefix[0].capture_ts, prefix[-1].capture_ts
    scale = (a1 - a0) / (b1 - b0) if b1 > b0 else 0.0
    dilated = [replace(rec, capture_ts=a0 + round((rec.capture_ts - b0) * scale))
               for rec in prefix]
    return sorted(attack + dilated, key=lambda rec: rec.capture_ts)


def dump_stream_csv(records: list[PacketRecord], fh) -> None:
    """Debug dump of a packet stream, one CSV line per record."""
    fh.write(",".join(STREAM_CSV_COLUMNS) + "\n")
    for r in records:
        fields = (r.capture_ts, r.src_ip, r.dst_ip, r.src_port, r.dst_port,
                  r.protocol, r.ip_total_length, r.ip_flags_frag, r.tcp_len,
                  r.tcp_ack, r.tcp_flags, r.tcp_window, r.udp_len, r.icmp_type,
                  "" if r.label is None else r.label, int(r.checksum_ok))
        fh.write(",".join(str(v) for v in fields) + "\n")
