import struct
import zlib

import pytest
from hypothesis import given, strategies as st

import helpers
from flowcap.errors import NotIPv4Error, TruncatedFrameError
from flowcap.packet import (
    FEATURE_BITS,
    FEATURE_NAMES,
    FEATURE_VECTOR_BITS,
    ID_BITS,
    canonical_key,
    cell_index,
    extract_features,
    flow_ids,
    id5_key,
    ipv4_checksum,
    parse_packet,
    record_key,
    verify_checksum,
)

ips = st.integers(0, 2**32 - 1)
ports = st.integers(0, 2**16 - 1)


# --- hashing ---------------------------------------------------------------

def test_crc_check_values():
    # frozen check values, confirmed by the independent bit-serial oracle
    assert helpers.crc32_bitwise(b"") == 0x00000000
    assert helpers.crc32_bitwise(b"123456789") == 0xCBF43926
    assert cell_index(b"123456789", 32) == 0xCBF43926
    assert cell_index(b"", 32) == 0x00000000
    assert cell_index(b"123456789", 15) == 0x3926


@given(st.binary(max_size=64))
def test_cell_index_matches_bitwise_crc(data):
    assert zlib.crc32(data) == helpers.crc32_bitwise(data)


@given(st.binary(max_size=32), st.integers(1, 32))
def test_cell_index_range(data, r):
    idx = cell_index(data, r)
    assert 0 <= idx < 2**r
    assert idx == helpers.crc32_bitwise(data) % 2**r


@pytest.mark.parametrize("r", [0, -3, 33, 64])
def test_cell_index_rejects_bad_r(r):
    with pytest.raises(ValueError):
        cell_index(b"x", r)


# --- flow identifiers ------------------------------------------------------

def test_flow_id_serialization_is_big_endian():
    rec = helpers.make_record(src_ip=0x0A000001, dst_ip=0xC0A80001,
                              src_port=0x0400, dst_port=0x0050, protocol=6)
    ids = flow_ids(rec)
    assert ids.id_f4 == bytes.fromhex("0a000001c0a8000104000050")
    assert ids.id_b4 == bytes.fromhex("c0a800010a00000100500400")
    assert ids.id_f5 == ids.id_f4 + b"\x06"
    assert ids.id_b5 == ids.id_b4 + b"\x06"
    assert len(ids.id_f4) == len(ids.id_b4) == 12
    assert len(ids.id_f5) == len(ids.id_b5) == 13


@given(ips, ips, ports, ports, st.integers(0, 255))
def test_flow_ids_direction_symmetry(sip, dip, sp, dp, proto):
    fwd = helpers.make_record(src_ip=sip, dst_ip=dip, src_port=sp, dst_port=dp, protocol=proto)
    rev = helpers.make_record(src_ip=dip, dst_ip=sip, src_port=dp, dst_port=sp, protocol=proto)
    fids, rids = flow_ids(fwd), flow_ids(rev)
    assert {fids.id_f4, fids.id_b4} == {rids.id_f4, rids.id_b4}
    assert {fids.id_f5, fids.id_b5} == {rids.id_f5, rids.id_b5}
    assert record_key(fwd) == record_key(rev)
    assert id5_key(fids.id_f5) == record_key(fwd)


@given(ips, ips, ports, ports, st.integers(0, 255))
def test_canonical_key_orders_endpoints(sip, dip, sp, dp, proto):
    key = canonical_key(sip, sp, dip, dp, proto)
    assert (key[0], key[1]) <= (key[2], key[3])
    assert key[4] == proto


# --- checksum --------------------------------------------------------------

def test_checksum_accepts_valid_header_and_rejects_corruption():
    frame = helpers.tcp_frame(0x0A000001, 0xC0A80001, 1024, 80)
    header = frame[14:34]
    assert verify_checksum(header)
    corrupt = bytearray(header)
    corrupt[8] ^= 0x01  # flip a TTL bit
    assert not verify_checksum(bytes(corrupt))


def test_corrupted_frame_parses_with_checksum_flag_cleared():
    good = helpers.tcp_frame(0x0A000001, 0xC0A80001, 1024, 80)
    bad = helpers.tcp_frame(0x0A000001, 0xC0A80001, 1024, 80, corrupt_checksum=True)
    assert parse_packet(good, 0).checksum_ok
    assert not parse_packet(bad, 0).checksum_ok


@given(st.binary(min_size=20, max_size=20))
def test_checksum_round_trip_against_reference(raw):
    header = bytearray(raw)
    header[10:12] = b"\x00\x00"
    value = helpers.rfc1071_checksum(bytes(header))
    assert ipv4_checksum(bytes(header)) == value
    header[10:12] = struct.pack(">H", value)
    assert verify_checksum(bytes(header))


# --- parsing ---------------------------------------------------------------

def test_parse_tcp_syn_fixture():
    frame = helpers.ipv4_frame(
        0xC0A80164, 0x08080808, 6,
        helpers.tcp_segment(49152, 443, seq=7, ack=81985529216486895 % 2**32,
                            flags=0x02, window=64240),
    )
    rec = parse_packet(frame, capture_ts=1_500_000, label=0)
    assert rec.capture_ts == 1_500_000
    assert rec.src_ip == 0xC0A80164
    assert rec.dst_ip == 0x08080808
    assert rec.src_port == 49152
    assert rec.dst_port == 443
    assert rec.protocol == 6
    assert rec.ip_total_length == 40
    assert rec.ip_flags_frag == 0x4000
    assert rec.tcp_len == 0
    assert rec.tcp_ack == 81985529216486895 % 2**32
    assert rec.tcp_flags == 0x02
    assert rec.tcp_window == 64240
    assert rec.udp_len == 0
    assert rec.icmp_type == 0
    assert rec.label == 0
    assert rec.checksum_ok


def test_parse_tcp_payload_length():
    frame = helpers.ipv4_frame(1, 2, 6, helpers.tcp_segment(1, 2, payload=b"x" * 123))
    assert parse_packet(frame, 0).tcp_len == 123
    # options enlarge the data offset and shrink the payload
    frame = helpers.ipv4_frame(1, 2, 6, helpers.tcp_segment(1, 2, payload=b"x" * 123, data_offset=32))
    assert parse_packet(frame, 0).tcp_len == 123


def test_parse_udp():
    frame = helpers.ipv4_frame(1, 2, 17, helpers.udp_datagram(5353, 53, b"q" * 30))
    rec = parse_packet(frame, 0)
    assert (rec.src_port, rec.dst_port) == (5353, 53)
    assert rec.udp_len == 38
    assert rec.tcp_len == rec.tcp_ack == rec.tcp_flags == rec.tcp_window == 0


def test_parse_icmp():
    frame = helpers.ipv4_frame(1, 2, 1, helpers.icmp_message(icmp_type=8))
    rec = parse_packet(frame, 0)
    assert rec.icmp_type == 8
    assert rec.src_port == rec.dst_port == 0


def test_parse_other_protocol_has_zero_l4_fields():
    frame = helpers.ipv4_frame(1, 2, 47, b"\x00" * 8)
    rec = parse_packet(frame, 0)
    assert rec.src_port == rec.dst_port == 0
    assert rec.tcp_len == rec.tcp_ack == rec.udp_len == rec.icmp_type == 0


def test_parse_non_first_fragment_has_zero_ports():
    l4 = helpers.tcp_segment(1024, 80)
    frame = helpers.ipv4_frame(1, 2, 6, l4, flags_frag=0x2000 | 100)
    rec = parse_packet(frame, 0)
    assert rec.src_port == rec.dst_port == 0
    assert rec.ip_flags_frag == (0x2000 | 100)


def test_parse_arp_raises():
    with pytest.raises(NotIPv4Error):
        parse_packet(helpers.arp_frame(), 0)


def test_parse_wrong_ip_version_raises():
    frame = bytearray(helpers.tcp_frame(1, 2, 3, 4))
    frame[14] = (6 << 4) | 5
    with pytest.raises(NotIPv4Error):
        parse_packet(bytes(frame), 0)


def test_parse_truncation():
    frame = helpers.tcp_frame(1, 2, 3, 4)
    with pytest.raises(TruncatedFrameError):
        parse_packet(frame[:20], 0)  # mid-IP-header
    with pytest.raises(TruncatedFrameError):
        parse_packet(frame[:40], 0)  # mid-TCP-header
    with pytest.raises(TruncatedFrameError):
        parse_packet(frame[:10], 0)  # mid-Ethernet


def test_parse_tolerates_ethernet_padding():
    frame = helpers.tcp_frame(1, 2, 3, 4) + b"\x00" * 12
    assert parse_packet(frame, 0).ip_total_length == 40


def test_parse_masks_timestamp_to_48_bits():
    frame = helpers.tcp_frame(1, 2, 3, 4)
    assert parse_packet(frame, 2**48 + 5).capture_ts == 5


# --- features --------------------------------------------------------------

def test_feature_vector_order_and_values():
    rec = helpers.make_record(capture_ts=42, ip_total_length=1500, ip_flags_frag=0x4000,
                              tcp_len=1460, tcp_ack=9, tcp_flags=0x18, tcp_window=512,
                              udp_len=0, icmp_type=0)
    assert FEATURE_NAMES == ("timestamp", "packet_length", "ip_flags", "tcp_length",
                             "tcp_ack", "tcp_flags", "tcp_window_size", "udp_length",
                             "icmp_type")
    assert extract_features(rec) == (42, 1500, 0x4000, 1460, 9, 0x18, 512, 0, 0)


def test_packet_length_is_ip_total_length():
    frame = helpers.ipv4_frame(1, 2, 6, helpers.tcp_segment(1, 2, payload=b"y" * 100))
    rec = parse_packet(frame, 0)
    feats = extract_features(rec)
    assert feats[FEATURE_NAMES.index("packet_length")] == 140 == rec.ip_total_length


def test_row_width_arithmetic():
    assert ID_BITS == 104
    assert FEATURE_VECTOR_BITS == 176
    assert len(FEATURE_BITS) == 9
    assert (ID_BITS + FEATURE_VECTOR_BITS) % 8 == 0
    assert (ID_BITS + FEATURE_VECTOR_BITS) // 8 == 35
