"""Data-plane store: double-buffered memory blocks behind a switch register.

The ingest path mirrors the per-packet pipeline: verify checksum, read the
switch register once, consult the write-side filter, append the (id, features)
row at the cursor. The control plane only ever touches the idle side, so the
writer is never blocked across a collection.
"""

from __future__ import annotations

import enum
import struct
import threading
from collections import Counter

from .cbf import CountingBloomFilter
from .packet import (
    FEATURE_VECTOR_BITS,
    ID_BITS,
    PacketRecord,
    extract_features,
    flow_ids,
    record_key,
)

ROW_BITS = ID_BITS + FEATURE_VECTOR_BITS
ROW_BYTES = ROW_BITS // 8

BLOCK_CSV_COLUMNS = (
    "src_ip", "dst_ip", "src_port", "dst_port", "protocol",
    "timestamp", "packet_length", "ip_flags", "tcp_length", "tcp_ack",
    "tcp_flags", "tcp_window_size", "udp_length", "icmp_type",
)


def block_footprint_bytes(n: int) -> int:
    """Bytes occupied by one n-row block (35 bytes per 280-bit row)."""
    if n < 1:
        raise ValueError(f"block capacity must be at least one row, got {n}")
    return n * ROW_BYTES


def pack_row(id_f5: bytes, features: tuple[int, ...]) -> bytes:
    """Serialise one stored row to its canonical 35-byte wire layout."""
    ts, plen, ipf, tlen, tack, tflg, twin, ulen, ityp = features
    return (id_f5 + ts.to_bytes(6, "big")
            + struct.pack(">HHHIBHHB", plen, ipf, tlen, tack, tflg, twin, ulen, ityp))


class IngestOutcome(enum.Enum):
    STORED = "stored"
    FILTERED_FULL_FLOW = "filtered_full_flow"
    FILTERED_COLLISION = "filtered_collision"
    DROPPED_CHECKSUM = "dropped_checksum"


class MemoryBlock:
    """Fixed-capacity ring of (5-tuple id, feature vector) rows.

    The cursor wraps modulo n, so the oldest rows are overwritten first.
    ``stores`` counts writes since the last reset; slots 0..min(stores,n)-1
    are the occupied ones.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"block capacity must be at least one row, got {n}")
        self.n = n
        self.rows: list[tuple[bytes, tuple[int, ...]] | None] = [None] * n
        self.cursor = 0
        self.stores = 0
        self.lock = threading.Lock()

    @property
    def occupied(self) -> int:
        return min(self.stores, self.n)

    @property
    def wraps_seen(self) -> int:
        return self.stores // self.n

    def store(self, id_f5: bytes, features: tuple[int, ...]) -> None:
        self.rows[self.cursor] = (id_f5, features)
        self.cursor = (self.cursor + 1) % self.n
        self.stores += 1

    def occupied_rows(self) -> list[tuple[bytes, tuple[int, ...]]]:
        """Occupied rows in block order (slot 0 upward)."""
        return self.rows[:self.occupied]  # type: ignore[return-value]

    def reset(self) -> None:
        self.rows = [None] * self.n
        self.cursor = 0
        self.stores = 0

    def to_bytes(self) -> bytes:
        return b"".join(pack_row(fid, feats) for fid, feats in self.occupied_rows())

    def dump_csv(self, fh) -> None:
        """Debug dump: one CSV line per occupied slot, all fields decimal."""
        fh.write(",".join(BLOCK_CSV_COLUMNS) + "\n")
        for id_f5, feats in self.occupied_rows():
            sip, dip, sp, dp = struct.unpack(">IIHH", id_f5[:12])
            fields = (sip, dip, sp, dp, id_f5[12]) + feats
            fh.write(",".join(str(v) for v in fields) + "\n")


class SwitchRegister:
    """One-bit register selecting the write-side block.

    Reads and writes are single attribute operations (atomic under the
    interpreter lock); the ingest path reads it exactly once per packet.
    """

    __slots__ = ("_value",)

    def __init__(self, value: int = 0):
        self._value = value

    def read(self) -> int:
        return self._value

    def write(self, value: int) -> None:
        self._value = value


class BlockPair:
    """The full data-plane state: two blocks, two filters, the switch.

    mode "filtered" consults the write-side counting Bloom filter with the
    per-flow cap ``p`` (p=None disables the cap); mode "baseline" stores every
    packet unconditionally. Per-block admitted counts by canonical flow key
    are kept as ground-truth side information so a rejected packet can be
    attributed to its own flow being full versus a colliding flow.
    """

    def __init__(self, n: int, r: int, cell_width: int = 3, p: int | None = 4,
                 mode: str = "filtered", dedupe_indices: bool = True):
        if mode not in ("filtered", "baseline"):
            raise ValueError(f"mode must be 'filtered' or 'baseline', got {mode!r}")
        self.n = n
        self.p = p
        self.mode = mode
        self.blocks = (MemoryBlock(n), MemoryBlock(n))
        self.filters = (
            CountingBloomFilter(r, cell_width, cap=p, dedupe_indices=dedupe_indices),
            CountingBloomFilter(r, cell_width, cap=p, dedupe_indices=dedupe_indices),
        )
        self.flow_counts: tuple[Counter, Counter] = (Counter(), Counter())
        self.switch = SwitchRegister(0)

    def ingest(self, rec: PacketRecord) -> IngestOutcome:
        if not rec.checksum_ok:
            return IngestOutcome.DROPPED_CHECKSUM
        k = self.switch.read()
        block = self.blocks[k]
        ids = flow_ids(rec)
        features = extract_features(rec)
        key = record_key(rec)
        with block.lock:
            counts = self.flow_counts[k]
            if self.mode == "filtered" and not self.filters[k].admit_and_count(ids):
                if self.p is not None and counts[key] >= self.p:
                    return IngestOutcome.FILTERED_FULL_FLOW
                return IngestOutcome.FILTERED_COLLISION
            block.store(ids.id_f5, features)
            counts[key] += 1
        return IngestOutcome.STORED
