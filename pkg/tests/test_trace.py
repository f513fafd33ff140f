import json
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iotsentry.errors import TraceError
from iotsentry.trace import (Direction, PacketRecord, Proto, TcpFlags, TraceMeta, classify_direction, format_flags,
                             parse_flags, read_jsonl, read_pcap, read_trace, sort_stable_by_time, write_jsonl,
                             write_pcap)

CTRL = "10.0.0.1"
META = TraceMeta(CTRL, {"10.0.0.2": "cam", "10.0.0.3": "bulb"})


def rec(ts, src="10.0.0.2", dst=CTRL, sport=49152, dport=8883, proto=Proto.TCP, length=74, flags="S"):
    return PacketRecord(ts, src, dst, sport, dport, proto, length, parse_flags(flags),
                        classify_direction(src, dst, META))


def global_header(endian="<", magic=0xA1B2C3D4, linktype=1):
    return struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)


def tcp_frame(src, dst, sport, dport, flags, total):
    l4 = struct.pack("!HHIIBBHHH", sport, dport, 0, 0, 0x50, flags, 0, 0, 0)
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 40, 0, 0, 64, 6, 0,
                     bytes(map(int, src.split("."))), bytes(map(int, dst.split("."))))
    frame = bytes(12) + b"\x08\x00" + ip + l4
    return frame + bytes(total - len(frame))


def packet(sec, usec, frame, endian="<"):
    return struct.pack(endian + "IIII", sec, usec, len(frame), len(frame)) + frame


# --------------------------------------------------------------------------
# pcap


def test_empty_file_is_malformed(tmp_path):
    p = tmp_path / "e.pcap"
    p.write_bytes(b"")
    with pytest.raises(TraceError) as exc:
        read_pcap(p, META)
    assert exc.value.code == "MALFORMED_HEADER"
    assert exc.value.context["offset"] == 0


def test_header_only_gives_no_records(tmp_path):
    p = tmp_path / "h.pcap"
    p.write_bytes(global_header())
    assert read_pcap(p, META) == []


@pytest.mark.parametrize("endian", ["<", ">"])
def test_handshake_fixture(tmp_path, endian):
    frames = [tcp_frame("10.0.0.2", CTRL, 49152, 8883, 0x02, 74),
              tcp_frame(CTRL, "10.0.0.2", 8883, 49152, 0x12, 74),
              tcp_frame("10.0.0.2", CTRL, 49152, 8883, 0x10, 66)]
    data = global_header(endian) + b"".join(packet(100, 10 * i, f, endian) for i, f in enumerate(frames))
    p = tmp_path / "hs.pcap"
    p.write_bytes(data)
    out = read_pcap(p, META)
    assert [r.tcp_flags for r in out] == [TcpFlags.SYN, TcpFlags.SYN | TcpFlags.ACK, TcpFlags.ACK]
    assert [r.direction for r in out] == [Direction.DEVICE_TO_CONTROLLER, Direction.CONTROLLER_TO_DEVICE,
                                          Direction.DEVICE_TO_CONTROLLER]
    assert [r.length for r in out] == [74, 74, 66]
    assert out[1].ts == pytest.approx(100.00001, abs=1e-9)


def test_truncated_packet_reports_offset(tmp_path):
    frame = tcp_frame("10.0.0.2", CTRL, 1, 2, 0x02, 60)
    p = tmp_path / "t.pcap"
    p.write_bytes(global_header() + packet(1, 0, frame)[:-5])
    with pytest.raises(TraceError) as exc:
        read_pcap(p, META)
    assert exc.value.code == "MALFORMED_HEADER"
    assert exc.value.context["offset"] == 24


def test_nanosecond_and_linktype_rejected(tmp_path):
    p = tmp_path / "n.pcap"
    p.write_bytes(global_header(magic=0xA1B23C4D))
    with pytest.raises(TraceError) as exc:
        read_pcap(p, META)
    assert exc.value.code == "UNSUPPORTED_LINKTYPE"
    p.write_bytes(global_header(linktype=101))
    with pytest.raises(TraceError) as exc:
        read_pcap(p, META)
    assert exc.value.context["linktype"] == 101


def test_non_ip_and_unmapped_frames_skipped(tmp_path):
    arp = bytes(12) + b"\x08\x06" + bytes(28)
    v6 = bytes(12) + b"\x86\xdd" + bytes(40)
    stranger = tcp_frame("9.9.9.9", "8.8.8.8", 1, 2, 0x02, 60)
    good = tcp_frame("10.0.0.3", CTRL, 1, 2, 0x02, 60)
    p = tmp_path / "mix.pcap"
    p.write_bytes(global_header() + b"".join(packet(1, i, f) for i, f in enumerate([arp, v6, stranger, good])))
    from collections import Counter
    c = Counter()
    out = read_pcap(p, META, c)
    assert len(out) == 1 and out[0].src_addr == "10.0.0.3"
    assert c == Counter(non_ip=1, ipv6=1, unattributed=1)


def test_write_pcap_round_trip(tmp_path):
    rng = random.Random(3)
    records = []
    ts = 10.0
    for _ in range(300):
        ts = round(ts + rng.random(), 6)
        proto = rng.choice([Proto.TCP, Proto.UDP])
        flags = format_flags(TcpFlags(rng.randint(0, 63))) if proto is Proto.TCP else ""
        src, dst = rng.choice([("10.0.0.2", CTRL), (CTRL, "10.0.0.3"), ("10.0.0.3", "1.2.3.4")])
        records.append(rec(ts, src, dst, rng.randint(0, 65535), rng.randint(0, 65535), proto,
                           rng.randint(60, 1500), flags))
    for big in (False, True):
        p = tmp_path / f"rt{big}.pcap"
        write_pcap(p, records, big_endian=big)
        back = read_trace(p, META)
        assert len(back) == len(records)
        for a, b in zip(records, back):
            assert b.ts == pytest.approx(a.ts, abs=1e-6)
            assert (b.src_addr, b.dst_addr, b.src_port, b.dst_port, b.proto, b.length, b.tcp_flags, b.direction) == \
                   (a.src_addr, a.dst_addr, a.src_port, a.dst_port, a.proto, a.length, a.tcp_flags, a.direction)


# --------------------------------------------------------------------------
# JSONL


def test_jsonl_line_transcription(tmp_path):
    p = tmp_path / "one.jsonl"
    p.write_text('{"ts":0.0,"src":"10.0.0.2","dst":"10.0.0.1","sport":49152,"dport":8883,'
                 '"proto":"TCP","len":74,"flags":"S"}\n')
    (r,) = read_jsonl(p, META)
    assert r.ts == 0.0 and r.tcp_flags == TcpFlags.SYN
    assert r.direction is Direction.DEVICE_TO_CONTROLLER


def test_jsonl_empty_file(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    assert read_jsonl(p, META) == []


def test_jsonl_errors_carry_location(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"ts":0}\n')
    with pytest.raises(TraceError) as exc:
        read_jsonl(p, META)
    assert exc.value.code == "MISSING_FIELD" and exc.value.context["key"] == "src"
    p.write_text("\n{nope\n")
    with pytest.raises(TraceError) as exc:
        read_jsonl(p, META)
    assert exc.value.code == "PARSE_ERROR" and exc.value.context["line"] == 2


def test_flags_order_insensitive():
    assert parse_flags("AS") == parse_flags("SA") == TcpFlags.SYN | TcpFlags.ACK
    assert format_flags(parse_flags("UPRFAS")) == "SAFRPU"


def test_record_invariants():
    with pytest.raises(ValueError):
        rec(0.0, sport=70000)
    with pytest.raises(ValueError):
        rec(0.0, length=0)
    with pytest.raises(ValueError):
        rec(0.0, proto=Proto.UDP, flags="S")


def test_simulator_trace_reads_back(tmp_path):
    from iotsentry.sim import run_scenario, scenario_s0
    res = run_scenario(scenario_s0(seed=7, duration_ticks=400))
    head = res.records[:100]
    p = tmp_path / "sim.jsonl"
    write_jsonl(p, head)
    back = read_jsonl(p, res.meta)
    assert len(back) == 100
    assert all(a.ts <= b.ts for a, b in zip(back, back[1:]))
    assert [json.loads(line) for line in p.read_text().splitlines()] == head


# --------------------------------------------------------------------------
# ordering and direction properties


def test_sort_stable_examples():
    assert sort_stable_by_time([]) == []
    a, b = rec(2.0), rec(1.0)
    assert sort_stable_by_time([a, b]) == [b, a]


def test_sort_stable_matches_index_oracle():
    rng = random.Random(4)
    records = [rec(float(rng.randint(0, 50)), sport=i) for i in range(1000)]
    rng.shuffle(records)
    oracle = [r for _, r in sorted(enumerate(records), key=lambda ir: (ir[1].ts, ir[0]))]
    assert sort_stable_by_time(records) == oracle


addr = st.sampled_from([CTRL, "10.0.0.2", "10.0.0.3", "1.2.3.4"])


@given(addr, addr)
def test_direction_flips_with_controller(src, dst):
    if src == dst or CTRL not in (src, dst):
        return
    d1 = classify_direction(src, dst, META)
    d2 = classify_direction(dst, src, META)
    if d1 is None:
        assert d2 is None
    else:
        assert {d1, d2} == {Direction.DEVICE_TO_CONTROLLER, Direction.CONTROLLER_TO_DEVICE}


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0, 1e6, allow_nan=False), st.integers(0, 65535), st.integers(0, 65535),
                          st.sampled_from(["TCP", "UDP", "OTHER"]), st.integers(1, 9000),
                          st.sets(st.sampled_from("SAFRPU"))), max_size=30))
def test_jsonl_round_trip_property(tmp_path_factory, rows):
    records = [rec(ts, "10.0.0.3", CTRL, sp, dp, Proto(pr), ln, "".join(sorted(f)) if pr == "TCP" else "")
               for ts, sp, dp, pr, ln, f in rows]
    p = tmp_path_factory.mktemp("rt") / "t.jsonl"
    write_jsonl(p, records)
    assert read_jsonl(p, META) == records
