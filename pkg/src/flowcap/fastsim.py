"""Vectorized flow-level simulation for large parameter sweeps.

The object pipeline processes one packet at a time, which is the right shape
for correctness but too slow for thousand-iteration sweeps. This module
replays the exact same admission arithmetic on flat arrays: CRC-32 of the
four flow ids computed table-wise over id byte matrices, and a compiled
per-packet admission loop over precomputed cell indices. Equivalence with the
object pipeline is pinned by tests that run both on identical streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is an install-time extra
    njit = None

# reflected CRC-32 byte table (polynomial 0xEDB88320)
def _build_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint32)
    for i in range(256):
        crc = i
        for _ in range(8):
            crc = (crc >> 1) ^ 0xEDB88320 if crc & 1 else crc >> 1
        table[i] = crc
    return table


_CRC_TABLE = _build_table()


def crc32_many(rows: np.ndarray) -> np.ndarray:
    """CRC-32 of every row of a (count, width) uint8 matrix."""
    if rows.dtype != np.uint8 or rows.ndim != 2:
        raise ValueError("rows must be a 2-D uint8 array")
    crc = np.full(rows.shape[0], 0xFFFFFFFF, dtype=np.uint32)
    for col in range(rows.shape[1]):
        crc = (crc >> np.uint32(8)) ^ _CRC_TABLE[(crc ^ rows[:, col]) & np.uint32(0xFF)]
    return crc ^ np.uint32(0xFFFFFFFF)


def _be_columns(out: np.ndarray, start: int, values: np.ndarray, width: int) -> None:
    for k in range(width):
        out[:, start + k] = (values >> (8 * (width - 1 - k))) & 0xFF


def flow_cell_crcs(src_ips, src_ports, dst_ips, dst_ports, protocols) -> np.ndarray:
    """CRC-32 of the four flow ids for each tuple; shape (flows, 4).

    Column order matches the per-packet path: forward/backward 4-tuple,
    forward/backward 5-tuple.
    """
    arrays = [np.asarray(a, dtype=np.uint64) for a in
              (src_ips, src_ports, dst_ips, dst_ports, protocols)]
    src_ip, sport, dst_ip, dport, proto = arrays
    count = src_ip.shape[0]

    fwd = np.zeros((count, 13), dtype=np.uint8)
    _be_columns(fwd, 0, src_ip, 4)
    _be_columns(fwd, 4, dst_ip, 4)
    _be_columns(fwd, 8, sport, 2)
    _be_columns(fwd, 10, dport, 2)
    fwd[:, 12] = proto & 0xFF
    bwd = np.zeros((count, 13), dtype=np.uint8)
    _be_columns(bwd, 0, dst_ip, 4)
    _be_columns(bwd, 4, src_ip, 4)
    _be_columns(bwd, 8, dport, 2)
    _be_columns(bwd, 10, sport, 2)
    bwd[:, 12] = proto & 0xFF

    return np.stack([
        crc32_many(fwd[:, :12]),
        crc32_many(bwd[:, :12]),
        crc32_many(fwd),
        crc32_many(bwd),
    ], axis=1)


def synthetic_tuple_arrays(num_flows: int, protocols: np.ndarray, *,
                           ip_base: int = 0x0A000000, dst_ip: int = 0xC0A80001):
    """The deterministic 5-tuples assigned by the synthetic generator."""
    j = np.arange(num_flows, dtype=np.uint64)
    protocols = np.asarray(protocols, dtype=np.uint64)
    src_ips = ip_base + j
    src_ports = np.where(protocols == 1, 0, 1024 + j % 60000)
    dst_ports = np.select([protocols == 6, protocols == 17], [80, 53], default=0)
    dst_ips = np.full(num_flows, dst_ip, dtype=np.uint64)
    return src_ips, src_ports, dst_ips, dst_ports, protocols


def _admit_loop(flow_seq, cells4, num_cells, cap, use_cap, cell_max, dedupe):
    """Per-packet admission replay; returns (admitted mask, final cells)."""
    cells = np.zeros(num_cells, dtype=np.int64)
    admitted = np.zeros(flow_seq.shape[0], dtype=np.uint8)
    guard = cap if use_cap else cell_max
    for k in range(flow_seq.shape[0]):
        f = flow_seq[k]
        est = cells[cells4[f, 0]]
        for slot in range(1, 4):
            value = cells[cells4[f, slot]]
            if value < est:
                est = value
        if use_cap and est >= cap:
            continue
        admitted[k] = 1
        for slot in range(4):
            i = cells4[f, slot]
            if dedupe:
                duplicate = False
                for prev in range(slot):
                    if cells4[f, prev] == i:
                        duplicate = True
                        break
                if duplicate:
                    continue
            if cells[i] < guard:
                cells[i] += 1
    return admitted, cells


_admit_loop_jit = njit(cache=True)(_admit_loop) if njit is not None else _admit_loop


@dataclass
class SimResult:
    """Outcome of replaying one window through a simulated block."""

    admitted: np.ndarray         # uint8 per packet: stored or not
    admitted_counts: np.ndarray  # per flow: packets that passed admission
    resident_counts: np.ndarray  # per flow: rows still in the block at window end
    stored: int                  # total store operations (incl. overwritten rows)
    collected_rate: float        # flows with >= 1 resident row / flows
    quality: float               # mean min(resident, l)/l with l = min(length, p)
    final_cells: np.ndarray | None = None  # filter cells at window end

    def overwrite_lost_flows(self) -> int:
        """Flows that lost stored rows to ring wrap-around."""
        return int(np.sum(self.resident_counts < self.admitted_counts))

    def collision_lost_flows(self, lengths: np.ndarray, p: int) -> int:
        """Flows admitted below their min(length, p) budget by the filter."""
        return int(np.sum(self.admitted_counts < np.minimum(lengths, p)))


def _finish(flow_seq: np.ndarray, lengths: np.ndarray, admitted: np.ndarray,
            n: int, p: int) -> SimResult:
    stored_seq = flow_seq[admitted == 1]
    keep = min(stored_seq.shape[0], n)
    resident = np.bincount(stored_seq[stored_seq.shape[0] - keep:],
                           minlength=lengths.shape[0])
    l = np.minimum(lengths, p)
    per_flow = np.minimum(resident, l) / l
    return SimResult(
        admitted=admitted,
        admitted_counts=np.bincount(stored_seq, minlength=lengths.shape[0]),
        resident_counts=resident,
        stored=int(stored_seq.shape[0]),
        collected_rate=float(np.mean(resident >= 1)),
        quality=float(np.mean(per_flow)),
    )


def simulate_filtered(flow_seq: np.ndarray, lengths: np.ndarray,
                      cells4: np.ndarray, *, n: int, p: int,
                      cell_width: int = 3, cap_enabled: bool = True,
                      dedupe_indices: bool = True, use_jit: bool = True) -> SimResult:
    """Replay one window through the filter and a ring block of n rows."""
    if n < 1:
        raise ValueError(f"block capacity must be positive, got {n}")
    loop = _admit_loop_jit if use_jit else _admit_loop
    admitted, cells = loop(
        np.ascontiguousarray(flow_seq, dtype=np.int64),
        np.ascontiguousarray(cells4, dtype=np.int64),
        int(_num_cells_for(cells4)),
        int(p), True if cap_enabled else False,
        (1 << cell_width) - 1, dedupe_indices,
    )
    result = _finish(flow_seq, lengths, admitted, n, p)
    result.final_cells = cells
    return result


def _num_cells_for(cells4: np.ndarray) -> int:
    # cells above the highest used index can never be touched, so the
    # simulated array only needs to cover the indices that appear
    return int(cells4.max(initial=0)) + 1


def simulate_baseline(flow_seq: np.ndarray, lengths: np.ndarray, *,
                      n: int, p: int) -> SimResult:
    """Replay one window with no filter: every packet stored into the ring."""
    if n < 1:
        raise ValueError(f"block capacity must be positive, got {n}")
    admitted = np.ones(flow_seq.shape[0], dtype=np.uint8)
    return _finish(flow_seq, lengths, admitted, n, p)


def generate_stream(profile, num_flows: int, seed: int):
    """Draw the same lengths/protocols/packet order as the record generator.

    Returns (flow_seq, lengths, protocols); the RNG call sequence mirrors
    generate_synthetic exactly, so seed s here and seed s there describe the
    same window.
    """
    if num_flows < 1:
        raise ValueError(f"num_flows must be positive, got {num_flows}")
    rng = np.random.default_rng(seed)
    lengths = profile.sample_lengths(num_flows, rng)
    protocols = profile.sample_protocols(num_flows, rng)
    flow_seq = rng.permutation(np.repeat(np.arange(num_flows), lengths))
    return flow_seq, lengths, protocols


def cell_table(num_flows: int, protocols: np.ndarray, r: int, *,
               ip_base: int = 0x0A000000, dst_ip: int = 0xC0A80001) -> np.ndarray:
    """Per-flow 4-cell index table for the synthetic tuple scheme at size r."""
    if not 1 <= r <= 32:
        raise ValueError(f"r must be in 1..32, got {r}")
    crcs = flow_cell_crcs(*synthetic_tuple_arrays(
        num_flows, protocols, ip_base=ip_base, dst_ip=dst_ip))
    return (crcs & np.uint32((1 << r) - 1)).astype(np.int64)
