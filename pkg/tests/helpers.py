"""Shared test fixtures: frame builders, reference oracles, pcap writer.

The oracles here are written from first principles (bitwise CRC, word-sum
checksum) so they stay independent of the package implementations they check.
"""

from __future__ import annotations

import struct

from flowcap.packet import PacketRecord


def crc32_bitwise(data: bytes) -> int:
    """Bit-serial CRC-32 (reflected 0x04C11DB7, init/xorout 0xFFFFFFFF)."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            if crc & 1:
                crc = (crc >> 1) ^ 0xEDB88320
            else:
                crc >>= 1
    return crc ^ 0xFFFFFFFF


def rfc1071_checksum(data: bytes) -> int:
    """Internet checksum of ``data`` via unpacked 16-bit words."""
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f">{len(data) // 2}H", data))
    total = (total >> 16) + (total & 0xFFFF)
    total += total >> 16
    return ~total & 0xFFFF


def tcp_segment(src_port: int, dst_port: int, *, seq: int = 0, ack: int = 0,
                flags: int = 0x02, window: int = 8192, payload: bytes = b"",
                data_offset: int = 20) -> bytes:
    base = struct.pack(
        ">HHIIBBHHH",
        src_port, dst_port, seq, ack,
        (data_offset // 4) << 4, flags, window, 0, 0,
    )
    return base + b"\x00" * (data_offset - 20) + payload


def udp_datagram(src_port: int, dst_port: int, payload: bytes = b"",
                 length: int | None = None) -> bytes:
    if length is None:
        length = 8 + len(payload)
    return struct.pack(">HHHH", src_port, dst_port, length, 0) + payload


def icmp_message(icmp_type: int = 8, code: int = 0, payload: bytes = b"") -> bytes:
    return struct.pack(">BBH", icmp_type, code, 0) + payload


def ipv4_frame(src_ip: int, dst_ip: int, protocol: int, l4: bytes = b"", *,
               flags_frag: int = 0x4000, ttl: int = 64, options: bytes = b"",
               total_length: int | None = None, corrupt_checksum: bool = False) -> bytes:
    """Ethernet II + IPv4 frame with a correct (or corrupted) header checksum."""
    assert len(options) % 4 == 0
    ihl = 20 + len(options)
    if total_length is None:
        total_length = ihl + len(l4)
    header = bytearray(struct.pack(
        ">BBHHHBBHII",
        0x40 | (ihl // 4), 0, total_length, 0, flags_frag,
        ttl, protocol, 0, src_ip, dst_ip,
    )) + bytearray(options)
    checksum = rfc1071_checksum(bytes(header))
    if corrupt_checksum:
        checksum ^= 0x0001
    header[10:12] = struct.pack(">H", checksum)
    eth = b"\x02\x00\x00\x00\x00\x01" + b"\x02\x00\x00\x00\x00\x02" + b"\x08\x00"
    return eth + bytes(header) + l4


def arp_frame() -> bytes:
    eth = b"\xff" * 6 + b"\x02\x00\x00\x00\x00\x02" + b"\x08\x06"
    arp = struct.pack(">HHBBH", 1, 0x0800, 6, 4, 1) + b"\x00" * 20
    return eth + arp


def tcp_frame(src_ip: int, dst_ip: int, src_port: int, dst_port: int, **kw) -> bytes:
    frame_kw = {k: kw.pop(k) for k in ("flags_frag", "corrupt_checksum", "options", "total_length") if k in kw}
    return ipv4_frame(src_ip, dst_ip, 6, tcp_segment(src_port, dst_port, **kw), **frame_kw)


def make_record(src_ip: int = 0x0A000001, dst_ip: int = 0xC0A80001,
                src_port: int = 1024, dst_port: int = 80, protocol: int = 6,
                capture_ts: int = 0, label: int | None = None,
                checksum_ok: bool = True, **features) -> PacketRecord:
    """Synthetic header-only record with deterministic defaults."""
    values = dict(
        ip_total_length=40, ip_flags_frag=0x4000, tcp_len=0, tcp_ack=0,
        tcp_flags=0x10, tcp_window=8192, udp_len=0, icmp_type=0,
    )
    values.update(features)
    return PacketRecord(
        capture_ts=capture_ts, src_ip=src_ip, dst_ip=dst_ip,
        src_port=src_port, dst_port=dst_port, protocol=protocol,
        label=label, checksum_ok=checksum_ok, **values,
    )


def write_pcap(path, frames_with_ts, *, byteorder: str = "<", linktype: int = 1,
               snaplen: int = 65535) -> None:
    """Write a classic pcap file. ``frames_with_ts`` yields (ts_us, frame)."""
    with open(path, "wb") as fh:
        fh.write(struct.pack(byteorder + "IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, snaplen, linktype))
        for ts_us, frame in frames_with_ts:
            fh.write(struct.pack(byteorder + "IIII", ts_us // 1_000_000,
                                 ts_us % 1_000_000, len(frame), len(frame)))
            fh.write(frame)
