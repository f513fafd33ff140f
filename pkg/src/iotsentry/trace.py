"""Packet trace ingestion.

Two input formats feed the same pipeline: classic libpcap captures
(Ethernet / IPv4 / TCP or UDP) and a canonical JSON-lines record format
that the simulator writes natively.  Both produce a list of
:class:`PacketRecord` with a controller-relative :class:`Direction`.
"""

from __future__ import annotations

import enum
import json
import socket
import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import TraceError

PCAP_MAGIC = 0xA1B2C3D4
PCAP_MAGIC_NSEC = 0xA1B23C4D
LINKTYPE_ETHERNET = 1
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD
ETHERTYPE_VLAN = 0x8100


class Proto(str, enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    OTHER = "OTHER"


class TcpFlags(enum.IntFlag):
    """TCP control bits, valued as they appear in the header byte."""

    FIN = 0x01
    SYN = 0x02
    RST = 0x04
    PSH = 0x08
    ACK = 0x10
    URG = 0x20


NO_FLAGS = TcpFlags(0)

# canonical JSONL flag letters, written in this order
_FLAG_LETTERS = (
    ("S", TcpFlags.SYN),
    ("A", TcpFlags.ACK),
    ("F", TcpFlags.FIN),
    ("R", TcpFlags.RST),
    ("P", TcpFlags.PSH),
    ("U", TcpFlags.URG),
)


def parse_flags(text: str) -> TcpFlags:
    flags = NO_FLAGS
    lookup = dict(_FLAG_LETTERS)
    for ch in text:
        try:
            flags |= lookup[ch]
        except KeyError:
            raise ValueError(f"unknown TCP flag letter {ch!r}") from None
    return flags


def format_flags(flags: TcpFlags) -> str:
    return "".join(ch for ch, bit in _FLAG_LETTERS if flags & bit)


class Direction(str, enum.Enum):
    DEVICE_TO_CONTROLLER = "DEVICE_TO_CONTROLLER"
    CONTROLLER_TO_DEVICE = "CONTROLLER_TO_DEVICE"
    DEVICE_TO_EXTERNAL = "DEVICE_TO_EXTERNAL"
    EXTERNAL_TO_DEVICE = "EXTERNAL_TO_DEVICE"

    @property
    def outbound(self) -> bool:
        """True when the packet leaves the device side."""
        return self in (Direction.DEVICE_TO_CONTROLLER, Direction.DEVICE_TO_EXTERNAL)


@dataclass(frozen=True, slots=True)
class PacketRecord:
    ts: float
    src_addr: str
    dst_addr: str
    src_port: int
    dst_port: int
    proto: Proto
    length: int
    tcp_flags: TcpFlags
    direction: Direction

    def __post_init__(self):
        if not (0 <= self.src_port <= 65535 and 0 <= self.dst_port <= 65535):
            raise ValueError(f"port out of range: {self.src_port}->{self.dst_port}")
        if self.length < 1:
            raise ValueError(f"length must be positive, got {self.length}")
        if self.tcp_flags and self.proto is not Proto.TCP:
            raise ValueError("TCP flags on a non-TCP record")


@dataclass
class TraceMeta:
    controller_addr: str
    device_map: dict[str, str] = field(default_factory=dict)  # addr -> device id
    record_count: int = 0
    time_span: float = 0.0

    def __post_init__(self):
        ids = list(self.device_map.values())
        if len(ids) != len(set(ids)):
            raise ValueError("device ids in device_map must be unique")
        if self.record_count < 0:
            raise ValueError("record_count must be >= 0")

    def device_of(self, record: PacketRecord) -> Optional[str]:
        """Device the record is attributed to (the non-controller side)."""
        if record.direction.outbound:
            return self.device_map.get(record.src_addr)
        return self.device_map.get(record.dst_addr)

    def summarize(self, records: list[PacketRecord]) -> "TraceMeta":
        span = records[-1].ts - records[0].ts if records else 0.0
        return replace(self, record_count=len(records), time_span=span)


def classify_direction(src: str, dst: str, meta: TraceMeta) -> Optional[Direction]:
    """Direction of a src->dst packet, or None when it must be skipped.

    Device-to-device traffic (both sides mapped, neither the controller) is
    attributed to the sender as DEVICE_TO_EXTERNAL.  Controller<->unmapped
    traffic and fully unmapped traffic carry no device and are skipped.
    """
    ctrl = meta.controller_addr
    src_dev = src in meta.device_map
    dst_dev = dst in meta.device_map
    if src == ctrl and dst_dev:
        return Direction.CONTROLLER_TO_DEVICE
    if dst == ctrl and src_dev:
        return Direction.DEVICE_TO_CONTROLLER
    if src == ctrl or dst == ctrl:
        return None
    if src_dev:
        return Direction.DEVICE_TO_EXTERNAL
    if dst_dev:
        return Direction.EXTERNAL_TO_DEVICE
    return None


# --------------------------------------------------------------------------
# classic pcap


def read_pcap(path, meta: TraceMeta, counters: Optional[Counter] = None) -> list[PacketRecord]:
    """Decode a classic (microsecond) pcap capture with Ethernet link type.

    Frames that are not IPv4, or whose endpoints carry no device, are
    skipped and tallied in ``counters`` (keys ``non_ip``, ``ipv6``,
    ``unattributed``).
    """
    counters = counters if counters is not None else Counter()
    data = Path(path).read_bytes()
    if len(data) < GLOBAL_HEADER_LEN:
        raise TraceError("MALFORMED_HEADER", "truncated global header at offset 0", offset=0)

    magic_le = struct.unpack_from("<I", data, 0)[0]
    if magic_le == PCAP_MAGIC:
        endian = "<"
    elif magic_le == _bswap32(PCAP_MAGIC):
        endian = ">"
    elif magic_le in (PCAP_MAGIC_NSEC, _bswap32(PCAP_MAGIC_NSEC)):
        raise TraceError("UNSUPPORTED_LINKTYPE", "nanosecond-resolution pcap is not supported", linktype="nsec")
    else:
        raise TraceError("MALFORMED_HEADER", f"bad magic 0x{magic_le:08x} at offset 0", offset=0)

    _, _, _, _, _, _, linktype = struct.unpack_from(endian + "IHHiIII", data, 0)
    if linktype != LINKTYPE_ETHERNET:
        raise TraceError("UNSUPPORTED_LINKTYPE", f"link type {linktype} (only Ethernet=1)", linktype=linktype)

    records = []
    offset = GLOBAL_HEADER_LEN
    hdr = struct.Struct(endian + "IIII")
    while offset < len(data):
        if offset + RECORD_HEADER_LEN > len(data):
            raise TraceError("MALFORMED_HEADER", f"truncated packet header at offset {offset}", offset=offset)
        ts_sec, ts_usec, incl_len, orig_len = hdr.unpack_from(data, offset)
        start = offset + RECORD_HEADER_LEN
        if start + incl_len > len(data):
            raise TraceError("MALFORMED_HEADER", f"truncated packet data at offset {offset}", offset=offset)
        frame = data[start:start + incl_len]
        offset = start + incl_len

        rec = _decode_frame(frame, ts_sec + ts_usec / 1e6, orig_len, meta, counters)
        if rec is not None:
            records.append(rec)
    return records


def _bswap32(v: int) -> int:
    return struct.unpack("<I", struct.pack(">I", v))[0]


def _decode_frame(frame: bytes, ts: float, orig_len: int, meta: TraceMeta, counters: Counter):
    if len(frame) < ETH_HEADER_LEN:
        counters["non_ip"] += 1
        return None
    ethertype = struct.unpack_from("!H", frame, 12)[0]
    l3 = ETH_HEADER_LEN
    if ethertype == ETHERTYPE_VLAN and len(frame) >= l3 + 4:
        ethertype = struct.unpack_from("!H", frame, 16)[0]
        l3 += 4
    if ethertype == ETHERTYPE_IPV6:
        counters["ipv6"] += 1
        return None
    if ethertype != ETHERTYPE_IPV4 or len(frame) < l3 + 20:
        counters["non_ip"] += 1
        return None

    ver_ihl, _, _, _, frag, _, ip_proto = struct.unpack_from("!BBHHHBB", frame, l3)
    if ver_ihl >> 4 != 4:
        counters["non_ip"] += 1
        return None
    ihl = (ver_ihl & 0x0F) * 4
    src = socket.inet_ntoa(frame[l3 + 12:l3 + 16])
    dst = socket.inet_ntoa(frame[l3 + 16:l3 + 20])

    direction = classify_direction(src, dst, meta)
    if direction is None:
        counters["unattributed"] += 1
        return None

    l4 = l3 + ihl
    first_fragment = (frag & 0x1FFF) == 0
    sport = dport = 0
    flags = NO_FLAGS
    if ip_proto == 6 and first_fragment and len(frame) >= l4 + 14:
        proto = Proto.TCP
        sport, dport = struct.unpack_from("!HH", frame, l4)
        flags = TcpFlags(frame[l4 + 13] & 0x3F)
    elif ip_proto == 17 and first_fragment and len(frame) >= l4 + 4:
        proto = Proto.UDP
        sport, dport = struct.unpack_from("!HH", frame, l4)
    else:
        proto = Proto.OTHER

    return PacketRecord(ts, src, dst, sport, dport, proto, max(orig_len, 1), flags, direction)


def write_pcap(path, records: Iterable[PacketRecord], big_endian: bool = False) -> None:
    """Serialise records as a classic Ethernet pcap (fixture converter).

    Each frame gets synthetic MAC addresses and zero padding so that the
    frame length equals ``record.length``.
    """
    e = ">" if big_endian else "<"
    out = bytearray(struct.pack(e + "IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET))
    for r in records:
        frame = build_frame(r)
        usec = round(r.ts * 1_000_000)
        out += struct.pack(e + "IIII", usec // 1_000_000, usec % 1_000_000, len(frame), r.length)
        out += frame
    Path(path).write_bytes(bytes(out))


def build_frame(r: PacketRecord) -> bytes:
    if r.proto is Proto.TCP:
        l4 = struct.pack("!HHIIBBHHH", r.src_port, r.dst_port, 0, 0, 5 << 4, int(r.tcp_flags), 65535, 0, 0)
        ip_proto = 6
    elif r.proto is Proto.UDP:
        l4 = struct.pack("!HHHH", r.src_port, r.dst_port, max(r.length - 34, 8), 0)
        ip_proto = 17
    else:
        l4 = b""
        ip_proto = 1
    ip_len = max(r.length - ETH_HEADER_LEN, 20 + len(l4))
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, ip_len, 0, 0, 64, ip_proto, 0,
                     socket.inet_aton(r.src_addr), socket.inet_aton(r.dst_addr))
    eth = b"\x02\x00\x00\x00\x00\x01" + b"\x02\x00\x00\x00\x00\x02" + struct.pack("!H", ETHERTYPE_IPV4)
    frame = eth + ip + l4
    if len(frame) < r.length:
        frame += bytes(r.length - len(frame))
    return frame


# --------------------------------------------------------------------------
# canonical JSONL

JSONL_KEYS = ("ts", "src", "dst", "sport", "dport", "proto", "len", "flags")


def record_from_obj(obj: Mapping, meta: TraceMeta, lineno: int = 0) -> Optional[PacketRecord]:
    for key in JSONL_KEYS:
        if key not in obj:
            raise TraceError("MISSING_FIELD", f"line {lineno}: missing key {key!r}", line=lineno, key=key)
    direction = classify_direction(obj["src"], obj["dst"], meta)
    if direction is None:
        return None
    try:
        return PacketRecord(
            ts=float(obj["ts"]),
            src_addr=obj["src"],
            dst_addr=obj["dst"],
            src_port=int(obj["sport"]),
            dst_port=int(obj["dport"]),
            proto=Proto(obj["proto"]),
            length=int(obj["len"]),
            tcp_flags=parse_flags(obj["flags"]),
            direction=direction,
        )
    except (ValueError, TypeError) as exc:
        raise TraceError("PARSE_ERROR", f"line {lineno}: {exc}", line=lineno) from exc


def record_to_obj(r: PacketRecord) -> dict:
    return {
        "ts": r.ts,
        "src": r.src_addr,
        "dst": r.dst_addr,
        "sport": r.src_port,
        "dport": r.dst_port,
        "proto": r.proto.value,
        "len": r.length,
        "flags": format_flags(r.tcp_flags),
    }


def read_jsonl(path, meta: TraceMeta, counters: Optional[Counter] = None) -> list[PacketRecord]:
    counters = counters if counters is not None else Counter()
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError("PARSE_ERROR", f"line {lineno}: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict):
                raise TraceError("PARSE_ERROR", f"line {lineno}: expected an object", line=lineno)
            rec = record_from_obj(obj, meta, lineno)
            if rec is None:
                counters["unattributed"] += 1
            else:
                records.append(rec)
    return records


def write_jsonl(path, records: Iterable) -> None:
    """Write records (PacketRecord or already-canonical dicts) one per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = r if isinstance(r, dict) else record_to_obj(r)
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_trace(path, meta: TraceMeta, counters: Optional[Counter] = None) -> list[PacketRecord]:
    """Dispatch on file content: pcap magic, else JSONL."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if len(head) == 4 and struct.unpack("<I", head)[0] in (
        PCAP_MAGIC, _bswap32(PCAP_MAGIC), PCAP_MAGIC_NSEC, _bswap32(PCAP_MAGIC_NSEC)
    ):
        return read_pcap(path, meta, counters)
    return read_jsonl(path, meta, counters)


def sort_stable_by_time(records: Iterable[PacketRecord]) -> list[PacketRecord]:
    # list.sort is stable, so equal timestamps keep input order
    return sorted(records, key=lambda r: r.ts)
