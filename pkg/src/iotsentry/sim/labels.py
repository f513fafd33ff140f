"""Join detected bursts to the simulator ledger, and replay oracles."""

from __future__ import annotations

import bisect
import copy
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from ..errors import ScenarioError
from ..events import Burst, featurize
from ..models.dataset import Label, LabeledDataset


def load_ledger(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ScenarioError("BAD_LEDGER", f"{path}:{lineno}: {exc.msg}") from None
    return out


def load_truth(path) -> dict:
    return json.loads(Path(path).read_text())


def as_ledger_dicts(ledger) -> list[dict]:
    return [e if isinstance(e, dict) else e.relay_dict() for e in ledger]


class LedgerJoin:
    """Finds the ledger event behind a burst: same device, start times
    within half a tick.  Only events that produced traffic are indexed."""

    def __init__(self, ledger: Sequence[dict], tick_seconds: float, truth: Optional[dict] = None):
        self.window = tick_seconds / 2.0
        wire = None
        if truth is not None:
            wire = {e["id"]: e.get("wire", True) for e in truth["events"]}
        self._ts: dict[str, list[float]] = defaultdict(list)
        self._ids: dict[str, list[int]] = defaultdict(list)
        for ev in sorted(ledger, key=lambda e: (e["ts"], e["id"])):
            if wire is not None and not wire.get(ev["id"], True):
                continue
            self._ts[ev["device"]].append(ev["ts"])
            self._ids[ev["device"]].append(ev["id"])

    def find(self, device: str, ts: float) -> Optional[int]:
        times = self._ts.get(device)
        if not times:
            return None
        lo = bisect.bisect_left(times, ts - self.window - 1e-9)
        hi = bisect.bisect_right(times, ts + self.window + 1e-9)
        if lo >= hi:
            return None
        dists = [abs(times[i] - ts) for i in range(lo, hi)]
        best = min(dists)
        winners = [lo + i for i, d in enumerate(dists) if abs(d - best) <= 1e-9]
        if len(winners) > 1:
            raise ScenarioError("JOIN_AMBIGUOUS", f"{device} burst at {ts} matches ledger events "
                                f"{[self._ids[device][w] for w in winners]}")
        return self._ids[device][winners[0]]


@dataclass
class LabeledBursts:
    bursts: list
    event_ids: list          # ledger id or None per burst
    dataset: LabeledDataset

    def benign_typed(self, ledger: Sequence[dict]) -> list[tuple[Burst, str]]:
        """(burst, event type) for every BENIGN burst with a ledger event."""
        by_id = {e["id"]: e for e in ledger}
        return [(b, by_id[i]["event"]) for b, i, y in zip(self.bursts, self.event_ids, self.dataset.y)
                if i is not None and y == 0]


def label_dataset(bursts: Sequence[Burst], ledger, truth: dict,
                  tick_seconds: Optional[float] = None) -> LabeledBursts:
    """One row per burst, labelled from ground truth; unmatched bursts are ANOMALOUS."""
    ledger = as_ledger_dicts(ledger)
    tick = tick_seconds if tick_seconds is not None else float(truth["tick_seconds"])
    join = LedgerJoin(ledger, tick, truth)
    labels = {e["id"]: e["label"] for e in truth["events"]}
    X, y, ids = [], [], []
    for b in bursts:
        eid = join.find(b.device_id, b.start_ts)
        ids.append(eid)
        lab = Label.ANOMALOUS if eid is None else Label(labels[eid])
        X.append(featurize(b))
        y.append(lab.code)
    Xa = np.vstack(X) if X else np.zeros((0, 12))
    meta = [(b.device_id, b.start_ts, i) for b, i in zip(bursts, ids)]
    return LabeledBursts(list(bursts), ids, LabeledDataset(Xa, np.array(y, dtype=np.int64), meta=meta))


def skipped_events(ledger, truth: dict, isolations: Optional[Mapping[str, float]] = None,
                   dropped: Iterable[int] = ()) -> set[int]:
    """Ledger ids that a correct controller must not let affect state.

    These are wire-visible injected events, events that never reached the
    wire, compromised subtrees, events from a device after its isolation
    time, events the controller dropped at packet level (``dropped``), and
    every descendant of any of those.
    """
    ledger = as_ledger_dicts(ledger)
    isolations = isolations or {}
    dropped = set(dropped)
    info = {e["id"]: e for e in truth["events"]}
    bad = set()
    for inj in truth["injections"]:
        for i, _ in inj.get("affected", []):
            bad.add(i)
    skip = set()
    for ev in sorted(ledger, key=lambda e: e["id"]):
        i = ev["id"]
        t = info[i]
        iso = isolations.get(ev["device"])
        if (t["label"] == Label.ANOMALOUS.value or not t.get("wire", True) or i in bad or i in dropped
                or (ev["cause"] is not None and ev["cause"] in skip)
                or (iso is not None and ev["ts"] >= iso)):
            skip.add(i)
    return skip


def replay_oracle(ledger, truth: dict, initial_states: Mapping[str, object],
                  isolations: Optional[Mapping[str, float]] = None, dropped: Iterable[int] = ()) -> dict:
    """Final device states from replaying history minus the skipped events."""
    ledger = as_ledger_dicts(ledger)
    skip = skipped_events(ledger, truth, isolations, dropped)
    states = {d: copy.deepcopy(s) for d, s in initial_states.items()}
    for ev in sorted(ledger, key=lambda e: e["id"]):
        if ev["id"] not in skip:
            states[ev["device"]] = copy.deepcopy(ev["state"])
    return states
