"""Packet model: IPv4 frame parsing, per-packet features, and flow identifiers.

Everything downstream (filter, memory blocks, flow assembly) operates on the
fixed-width fields defined here. Field widths are part of the storage contract:
a stored row is the 104-bit 5-tuple id plus the 176-bit feature vector.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .errors import NotIPv4Error, TruncatedFrameError

ETHERTYPE_IPV4 = 0x0800
ETHERNET_HEADER_LEN = 14

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17

TS_MASK = (1 << 48) - 1

# Feature vector layout, in storage order. Widths are bits on the wire-side
# row format; the sum (176) plus the 104-bit id gives the 35-byte row.
FEATURE_NAMES = (
    "timestamp",
    "packet_length",
    "ip_flags",
    "tcp_length",
    "tcp_ack",
    "tcp_flags",
    "tcp_window_size",
    "udp_length",
    "icmp_type",
)

FEATURE_BITS = {
    "timestamp": 48,
    "packet_length": 16,
    "ip_flags": 16,
    "tcp_length": 16,
    "tcp_ack": 32,
    "tcp_flags": 8,
    "tcp_window_size": 16,
    "udp_length": 16,
    "icmp_type": 8,
}

# Fixed full-scale bound per feature, used by normalisation. The timestamp is
# rebased to its window and divided by the window length instead.
FEATURE_FULL_SCALE = {
    "packet_length": 65535,
    "ip_flags": 65535,
    "tcp_length": 65535,
    "tcp_ack": 4294967295,
    "tcp_flags": 255,
    "tcp_window_size": 65535,
    "udp_length": 65535,
    "icmp_type": 255,
}

ID_BITS = 32 + 32 + 16 + 16 + 8
FEATURE_VECTOR_BITS = sum(FEATURE_BITS.values())
NUM_FEATURES = len(FEATURE_NAMES)


@dataclass(slots=True)
class PacketRecord:
    """Parsed fields of one captured IPv4 packet.

    Ports are 0 when the transport has none or the packet is a non-first
    fragment. L4 fields of absent protocols are 0. ``label`` and
    ``checksum_ok`` are side information: they are never stored in a block.
    """

    capture_ts: int  # microseconds, 48 bits
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    protocol: int
    ip_total_length: int
    ip_flags_frag: int  # IPv4 flags + fragment offset field, verbatim
    tcp_len: int  # TCP payload bytes
    tcp_ack: int
    tcp_flags: int
    tcp_window: int
    udp_len: int
    icmp_type: int
    label: int | None = None
    checksum_ok: bool = True


@dataclass(frozen=True, slots=True)
class FlowIdSet:
    """The four per-packet flow identifiers, serialised big-endian.

    id_f4/id_b4 are the forward/backward 4-tuples (12 bytes); id_f5/id_b5
    append the protocol byte (13 bytes). The backward ids make a flow's two
    directions hash to the same filter cells.
    """

    id_f4: bytes
    id_b4: bytes
    id_f5: bytes
    id_b5: bytes

    def __iter__(self):
        return iter((self.id_f4, self.id_b4, self.id_f5, self.id_b5))


def verify_checksum(header: bytes) -> bool:
    """Check the IPv4 header checksum: the one's-complement sum of all
    16-bit words (checksum field included) must fold to 0xFFFF."""
    total = 0
    for i in range(0, len(header) - 1, 2):
        total += (header[i] << 8) | header[i + 1]
    if len(header) % 2:
        total += header[-1] << 8
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total == 0xFFFF


def ipv4_checksum(header: bytes) -> int:
    """Compute the checksum value for a header whose checksum field is 0."""
    total = 0
    for i in range(0, len(header) - 1, 2):
        total += (header[i] << 8) | header[i + 1]
    if len(header) % 2:
        total += header[-1] << 8
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def parse_packet(frame: bytes, capture_ts: int, label: int | None = None) -> PacketRecord:
    """Parse an Ethernet II frame into a PacketRecord.

    Raises NotIPv4Error for non-IPv4 frames and TruncatedFrameError when the
    capture is shorter than the headers it declares. Trailing bytes beyond
    the IP total length (Ethernet padding) are ignored.
    """
    if len(frame) < ETHERNET_HEADER_LEN:
        raise TruncatedFrameError(f"frame of {len(frame)} bytes is shorter than an Ethernet header")
    ethertype = (frame[12] << 8) | frame[13]
    if ethertype != ETHERTYPE_IPV4:
        raise NotIPv4Error(f"ethertype 0x{ethertype:04x} is not IPv4")

    ip_off = ETHERNET_HEADER_LEN
    if len(frame) < ip_off + 20:
        raise TruncatedFrameError("capture ends inside the IPv4 header")
    vihl = frame[ip_off]
    if vihl >> 4 != 4:
        raise NotIPv4Error(f"IP version {vihl >> 4} is not 4")
    ihl = (vihl & 0x0F) * 4
    if ihl < 20:
        raise TruncatedFrameError(f"IHL of {ihl} bytes is below the IPv4 minimum")
    if len(frame) < ip_off + ihl:
        raise TruncatedFrameError("capture ends inside the IPv4 options")

    header = frame[ip_off:ip_off + ihl]
    total_length = (header[2] << 8) | header[3]
    flags_frag = (header[6] << 8) | header[7]
    protocol = header[9]
    src_ip = int.from_bytes(header[12:16], "big")
    dst_ip = int.from_bytes(header[16:20], "big")
    checksum_ok = verify_checksum(header)

    src_port = dst_port = 0
    tcp_len = tcp_ack = tcp_flags = tcp_window = 0
    udp_len = icmp_type = 0

    l4_off = ip_off + ihl
    frag_offset = flags_frag & 0x1FFF
    if frag_offset == 0:
        # Only first fragments carry a transport header.
        if protocol == PROTO_TCP:
            if len(frame) < l4_off + 20:
                raise TruncatedFrameError("capture ends inside the TCP header")
            src_port = (frame[l4_off] << 8) | frame[l4_off + 1]
            dst_port = (frame[l4_off + 2] << 8) | frame[l4_off + 3]
            tcp_ack = int.from_bytes(frame[l4_off + 8:l4_off + 12], "big")
            data_offset = (frame[l4_off + 12] >> 4) * 4
            if data_offset < 20:
                raise TruncatedFrameError(f"TCP data offset of {data_offset} bytes is below the minimum")
            tcp_flags = frame[l4_off + 13]
            tcp_window = (frame[l4_off + 14] << 8) | frame[l4_off + 15]
            tcp_len = max(total_length - ihl - data_offset, 0)
        elif protocol == PROTO_UDP:
            if len(frame) < l4_off + 8:
                raise TruncatedFrameError("capture ends inside the UDP header")
            src_port = (frame[l4_off] << 8) | frame[l4_off + 1]
            dst_port = (frame[l4_off + 2] << 8) | frame[l4_off + 3]
            udp_len = (frame[l4_off + 4] << 8) | frame[l4_off + 5]
        elif protocol == PROTO_ICMP:
            if len(frame) < l4_off + 1:
                raise TruncatedFrameError("capture ends before the ICMP type byte")
            icmp_type = frame[l4_off]

    return PacketRecord(
        capture_ts=capture_ts & TS_MASK,
        src_ip=src_ip,
        dst_ip=dst_ip,
        src_port=src_port,
        dst_port=dst_port,
        protocol=protocol,
        ip_total_length=total_length,
        ip_flags_frag=flags_frag,
        tcp_len=tcp_len,
        tcp_ack=tcp_ack,
        tcp_flags=tcp_flags,
        tcp_window=tcp_window,
        udp_len=udp_len,
        icmp_type=icmp_type,
        label=label,
        checksum_ok=checksum_ok,
    )


def extract_features(rec: PacketRecord) -> tuple[int, ...]:
    """The 9-feature vector of a packet, in FEATURE_NAMES order."""
    return (
        rec.capture_ts,
        rec.ip_total_length,
        rec.ip_flags_frag,
        rec.tcp_len,
        rec.tcp_ack,
        rec.tcp_flags,
        rec.tcp_window,
        rec.udp_len,
        rec.icmp_type,
    )


def flow_ids(rec: PacketRecord) -> FlowIdSet:
    """The packet's four flow identifiers (forward/backward, 4/5-tuple)."""
    f4 = struct.pack(">IIHH", rec.src_ip, rec.dst_ip, rec.src_port, rec.dst_port)
    b4 = struct.pack(">IIHH", rec.dst_ip, rec.src_ip, rec.dst_port, rec.src_port)
    proto = bytes((rec.protocol,))
    return FlowIdSet(id_f4=f4, id_b4=b4, id_f5=f4 + proto, id_b5=b4 + proto)


def cell_index(flow_id: bytes, r: int) -> int:
    """Map a serialised flow id to a filter cell: CRC32 reduced mod 2**r."""
    if not 1 <= r <= 32:
        raise ValueError(f"r must be in 1..32, got {r}")
    return zlib.crc32(flow_id) & ((1 << r) - 1)


def canonical_key(src_ip: int, src_port: int, dst_ip: int, dst_port: int,
                  protocol: int) -> tuple[int, int, int, int, int]:
    """Direction-independent flow key: endpoints ordered, protocol last."""
    a = (src_ip, src_port)
    b = (dst_ip, dst_port)
    if b < a:
        a, b = b, a
    return (a[0], a[1], b[0], b[1], protocol)


def record_key(rec: PacketRecord) -> tuple[int, int, int, int, int]:
    return canonical_key(rec.src_ip, rec.src_port, rec.dst_ip, rec.dst_port, rec.protocol)


def id5_key(id_f5: bytes) -> tuple[int, int, int, int, int]:
    """Canonical key of a stored row's 13-byte 5-tuple id."""
    src_ip, dst_ip, src_port, dst_port = struct.unpack(">IIHH", id_f5[:12])
    return canonical_key(src_ip, src_port, dst_ip, dst_port, id_f5[12])
