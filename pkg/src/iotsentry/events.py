"""Event identification from packet bursts.

A device event shows up on the wire as a short burst of packets.  This
module cuts the time-ordered record stream into per-device bursts,
reduces each burst to a fixed 12-feature vector, learns one signature per
(device, event type) and matches live bursts against those signatures.
Matched events go into an append-only, per-device chronological log.
"""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EventError
from .trace import PacketRecord, TcpFlags, TraceMeta

FEATURE_NAMES = (
    "src_port_mode",
    "dst_port_mode",
    "packet_count",
    "total_bytes",
    "mean_length",
    "length_variance",
    "duration_seconds",
    "syn_count",
    "ack_count",
    "fin_count",
    "rst_count",
    "fraction_outbound",
)
FEATURE_DIM = len(FEATURE_NAMES)
COUNT_FEATURES = (2, 7, 8, 9, 10)

DEFAULT_GAP_THRESHOLD = 1.0
DEFAULT_FLOOR_FRACTION = 0.05
MIN_COUNT_TOLERANCE = 1.0

NO_MATCH = "NO_MATCH"
ANOMALY_CANDIDATE = "ANOMALY_CANDIDATE"

SIGNATURE_DB_VERSION = 1


@dataclass
class Burst:
    device_id: str
    records: list[PacketRecord]

    def __post_init__(self):
        if not self.records:
            raise ValueError("a burst needs at least one record")

    @property
    def start_ts(self) -> float:
        return self.records[0].ts

    @property
    def end_ts(self) -> float:
        return self.records[-1].ts


def segment_bursts(records: Sequence[PacketRecord], meta: TraceMeta,
                   gap_threshold: float = DEFAULT_GAP_THRESHOLD) -> list[Burst]:
    """Greedy per-device gap segmentation.

    A device's burst is closed when the next packet attributed to that
    device arrives ``gap_threshold`` seconds or more after its previous
    one.  Bursts are returned ordered by start time.
    """
    if gap_threshold <= 0:
        raise ValueError("gap_threshold must be positive")
    open_bursts: dict[str, list[PacketRecord]] = {}
    finished: list[tuple[float, int, Burst]] = []
    order = 0

    for rec in records:
        dev = meta.device_of(rec)
        if dev is None:
            continue
        current = open_bursts.get(dev)
        if current is not None and rec.ts - current[-1].ts >= gap_threshold:
            finished.append((current[0].ts, order, Burst(dev, current)))
            order += 1
            current = None
        if current is None:
            open_bursts[dev] = [rec]
        else:
            current.append(rec)

    for dev, recs in open_bursts.items():
        finished.append((recs[0].ts, order, Burst(dev, recs)))
        order += 1
    # ties on start time fall back to device id for a stable order
    finished.sort(key=lambda t: (t[0], t[2].device_id))
    return [b for _, _, b in finished]


def _port_mode(ports: Iterable[int]) -> int:
    counts = Counter(ports)
    best = max(counts.values())
    return min(p for p, c in counts.items() if c == best)


def featurize(burst: Burst) -> np.ndarray:
    recs = burst.records
    lengths = np.fromiter((r.length for r in recs), dtype=float, count=len(recs))
    syn = ack = fin = rst = 0
    outbound = 0
    for r in recs:
        f = r.tcp_flags
        if f:
            syn += bool(f & TcpFlags.SYN)
            ack += bool(f & TcpFlags.ACK)
            fin += bool(f & TcpFlags.FIN)
            rst += bool(f & TcpFlags.RST)
        outbound += r.direction.outbound
    n = len(recs)
    return np.array([
        _port_mode(r.src_port for r in recs),
        _port_mode(r.dst_port for r in recs),
        n,
        lengths.sum(),
        lengths.mean(),
        lengths.var(),
        burst.end_ts - burst.start_ts,
        syn,
        ack,
        fin,
        rst,
        outbound / n,
    ], dtype=float)


@dataclass
class EventSignature:
    event_type: str
    device_id: str
    centroid: np.ndarray
    tolerance: np.ndarray
    sample_count: int

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=float)
        self.tolerance = np.asarray(self.tolerance, dtype=float)
        if self.centroid.shape != (FEATURE_DIM,) or self.tolerance.shape != (FEATURE_DIM,):
            raise EventError("DIMENSION_MISMATCH", f"signature vectors must have {FEATURE_DIM} entries")
        if (self.tolerance < 0).any():
            raise EventError("NEGATIVE_TOLERANCE", f"{self.device_id}/{self.event_type}")
        if self.sample_count < 1:
            raise EventError("EMPTY_INPUT", "sample_count must be >= 1")

    def deviation(self, fv: np.ndarray) -> Optional[float]:
        """Normalised L1 deviation, or None if any feature is out of tolerance."""
        diff = np.abs(np.asarray(fv, dtype=float) - self.centroid)
        if (diff > self.tolerance).any():
            return None
        scaled = self.tolerance > 0
        return float((diff[scaled] / self.tolerance[scaled]).sum())

    def distance(self, fv: np.ndarray) -> float:
        """Normalised L1 distance ignoring the tolerance gate."""
        diff = np.abs(np.asarray(fv, dtype=float) - self.centroid)
        scale = np.where(self.tolerance > 0, self.tolerance, 1.0)
        return float((diff / scale).sum())


def floor_tolerance(centroid: np.ndarray, fraction: float = DEFAULT_FLOOR_FRACTION) -> np.ndarray:
    floor = fraction * np.abs(centroid)
    floor[list(COUNT_FEATURES)] = np.maximum(floor[list(COUNT_FEATURES)], MIN_COUNT_TOLERANCE)
    return floor


def build_signatures(labeled_bursts: Iterable[tuple[Burst, str]],
                     floor_fraction: float = DEFAULT_FLOOR_FRACTION) -> list[EventSignature]:
    """One signature per (device, event type) group.

    The centroid is the per-feature mean; the tolerance is wide enough to
    cover every training burst of the group and never narrower than the
    floor (``floor_fraction`` of the centroid, and 1.0 for count features).
    """
    groups: dict[tuple[str, str], list[np.ndarray]] = defaultdict(list)
    for burst, event_type in labeled_bursts:
        groups[(burst.device_id, event_type)].append(featurize(burst))
    if not groups:
        raise EventError("EMPTY_INPUT", "no labelled bursts to build signatures from")

    sigs = []
    for (dev, etype), rows in sorted(groups.items()):
        X = np.vstack(rows)
        centroid = X.mean(axis=0)
        half_range = (X.max(axis=0) - X.min(axis=0)) / 2
        # the mean need not sit mid-range, so also cover the far extreme
        reach = np.maximum(X.max(axis=0) - centroid, centroid - X.min(axis=0))
        tol = np.maximum(np.maximum(half_range, reach), floor_tolerance(centroid, floor_fraction))
        sigs.append(EventSignature(etype, dev, centroid, tol, len(rows)))
    return sigs


def match_signature(fv: np.ndarray, signatures: Sequence[EventSignature], device_id: str) -> str:
    best = None
    for sig in signatures:
        if sig.device_id != device_id:
            continue
        dev = sig.deviation(fv)
        if dev is None:
            continue
        cand = (dev, sig.event_type)
        if best is None or cand < best:
            best = cand
    return NO_MATCH if best is None else best[1]


def nearest_signature(fv: np.ndarray, signatures: Sequence[EventSignature], device_id: str) -> Optional[str]:
    """Closest event type for the device regardless of tolerance."""
    scored = [(sig.distance(fv), sig.event_type) for sig in signatures if sig.device_id == device_id]
    return min(scored)[1] if scored else None


class SignatureIndex:
    """Signatures grouped by device for fast lookup in the controller loop."""

    def __init__(self, signatures: Sequence[EventSignature]):
        self.signatures = list(signatures)
        self._by_device: dict[str, list[EventSignature]] = defaultdict(list)
        for s in self.signatures:
            self._by_device[s.device_id].append(s)

    def match(self, fv: np.ndarray, device_id: str) -> str:
        return match_signature(fv, self._by_device.get(device_id, ()), device_id)

    def nearest(self, fv: np.ndarray, device_id: str) -> Optional[str]:
        return nearest_signature(fv, self._by_device.get(device_id, ()), device_id)


def save_signatures(path, signatures: Sequence[EventSignature]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format": "iotsentry-signatures", "version": SIGNATURE_DB_VERSION,
                  "dim": FEATURE_DIM, "features": list(FEATURE_NAMES)}
        fh.write(json.dumps(header) + "\n")
        for s in signatures:
            fh.write(json.dumps({
                "event_type": s.event_type,
                "device_id": s.device_id,
                "centroid": s.centroid.tolist(),
                "tolerance": s.tolerance.tolist(),
                "sample_count": s.sample_count,
            }) + "\n")


def load_signatures(path) -> list[EventSignature]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise EventError("EMPTY_INPUT", f"{path}: empty signature database")
    header = json.loads(lines[0])
    if header.get("format") != "iotsentry-signatures":
        raise EventError("BAD_FORMAT", f"{path}: not a signature database")
    if header.get("version") != SIGNATURE_DB_VERSION:
        raise EventError("BAD_FORMAT", f"{path}: unsupported version {header.get('version')}")
    if header.get("dim") != FEATURE_DIM:
        raise EventError("DIMENSION_MISMATCH", f"{path}: dim {header.get('dim')} != {FEATURE_DIM}")
    return [EventSignature(**json.loads(line)) for line in lines[1:] if line.strip()]


# --------------------------------------------------------------------------
# per-device event logs


@dataclass
class EventRecord:
    device_id: str
    event_type: str
    ts: float
    burst: Optional[Burst] = field(default=None, repr=False)
    key: Optional[str] = None
    root_device: Optional[str] = None
    state: object = None
    verdict: str = "PENDING"

    def assign_key(self, root_device: str, key: str) -> None:
        if self.key is not None:
            raise EventError("KEY_IMMUTABLE", f"event already keyed {self.key}")
        self.key = key
        self.root_device = root_device

    @property
    def ref(self) -> Optional[tuple[str, str]]:
        return None if self.key is None else (self.root_device, self.key)

    def log_line(self) -> str:
        key = self.key or "unassigned"
        line = f"key={key} device={self.device_id} event={self.event_type} ts={self.ts:.6f}"
        return line + f" root={self.root_device or '-'} state={json.dumps(self.state)} verdict={self.verdict}"


class EventLog:
    """Chronological log of one device's events."""

    def __init__(self, device_id: str):
        self.device_id = device_id
        self.entries: list[EventRecord] = []

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __reversed__(self):
        return reversed(self.entries)

    def append(self, ev: EventRecord) -> "EventLog":
        if ev.device_id != self.device_id:
            raise EventError("WRONG_DEVICE", f"{ev.device_id} logged to {self.device_id}")
        if self.entries and ev.ts < self.entries[-1].ts:
            raise EventError("OUT_OF_ORDER", f"{self.device_id}: ts {ev.ts} < {self.entries[-1].ts}")
        self.entries.append(ev)
        return self


class LogBook(dict):
    """device id -> EventLog, created on first use."""

    def __missing__(self, device_id):
        log = self[device_id] = EventLog(device_id)
        return log

    def write(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for dev, log in sorted(self.items()):
            with open(out / f"{dev}.log", "w", encoding="utf-8") as fh:
                for ev in log:
                    fh.write(ev.log_line() + "\n")


def append_event_log(log: EventLog, ev: EventRecord) -> EventLog:
    return log.append(ev)


_TOKEN = re.compile(r"(\w+)=(.*?)(?= \w+=|$)")


def parse_log_line(line: str) -> dict:
    """Inverse of EventRecord.log_line for the fixed key=value tokens."""
    out = dict(_TOKEN.findall(line.rstrip("\n")))
    if "state" in out:
        out["state"] = json.loads(out["state"])
    if "ts" in out:
        out["ts"] = float(out["ts"])
    return out
