"""The controller loop: classify bursts, build trees, validate, roll back.

Causality cannot be read off packet headers, so the controller consumes
its own relay log (the simulator's ``ledger.jsonl``): for every exchange
it relayed, the log says which earlier event caused it and what state it
reported.  Each burst is joined to its relay entry by device and start
time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .events import (NO_MATCH, Burst, EventRecord, LogBook, SignatureIndex, featurize)
from .interactions import (DeviceRegistry, EventKey, InteractionLog, InteractionTree, RuleSet,
                           is_origin_anomaly, new_tree, validate_interaction)
from .models.dataset import Label
from .rollback import RecordingActuator, RollbackReport, execute_rollback, plan_rollback
from .sim.labels import LedgerJoin, as_ledger_dicts

DEFAULT_QUIESCENCE = 5.0
DISCARDED = "DISCARDED"
REJECTED = "REJECTED"
UNRELAYED = "UNRELAYED"


@dataclass
class EventVerdict:
    device: str
    ts: float
    ledger_id: Optional[int]
    signature: str
    event_type: Optional[str]
    packet_label: str
    verdict: str
    key: Optional[str] = None
    root: Optional[str] = None
    reason: Optional[str] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ReplayResult:
    verdicts: list = field(default_factory=list)
    rollbacks: list = field(default_factory=list)          # RollbackReport
    inference_ms: list = field(default_factory=list)
    interaction_ms: list = field(default_factory=list)     # validate, plus plan for origin anomalies
    plan_ms: list = field(default_factory=list)
    trees: list = field(default_factory=list)
    isolations: dict = field(default_factory=dict)         # device -> ts

    def count(self, verdict: str) -> int:
        return sum(1 for v in self.verdicts if v.verdict == verdict)

    @property
    def packet_anomalies(self) -> int:
        return sum(1 for v in self.verdicts if v.packet_label == Label.ANOMALOUS.value)

    @property
    def interaction_anomalies(self) -> int:
        return sum(1 for r in self.rollbacks)

    @property
    def dropped(self) -> set[int]:
        """Relay ids of events discarded at packet level."""
        return {v.ledger_id for v in self.verdicts if v.verdict == DISCARDED and v.ledger_id is not None}

    @property
    def no_match(self) -> int:
        return sum(1 for v in self.verdicts if v.signature == NO_MATCH)


class Controller:
    def __init__(self, registry: DeviceRegistry, rules: RuleSet, signatures: SignatureIndex, model,
                 ledger, tick_seconds: float, actuator=None, quiescence: float = DEFAULT_QUIESCENCE):
        self.registry = registry
        self.rules = rules
        self.signatures = signatures
        self.model = model
        self.ledger = {e["id"]: e for e in as_ledger_dicts(ledger)}
        self.join = LedgerJoin(list(self.ledger.values()), tick_seconds)
        self.actuator = actuator if actuator is not None else RecordingActuator()
        self.quiescence = quiescence
        self.logs = LogBook()
        self.interaction_log = InteractionLog()
        self.open_trees: list[InteractionTree] = []
        self.node_of: dict[int, tuple[InteractionTree, EventKey]] = {}
        self._timing_slot: dict[tuple[int, EventKey], int] = {}
        self.result = ReplayResult()

    # -- tree lifecycle -----------------------------------------------------

    def _finalize_idle(self, now: float) -> None:
        idle = [t for t in self.open_trees if t.last_activity + self.quiescence <= now]
        if not idle:
            return
        self.open_trees = [t for t in self.open_trees if t.last_activity + self.quiescence > now]
        idle.sort(key=lambda t: (t.last_activity, t.root_device, t.x))
        for tree in idle:
            self._finalize(tree, now)

    def _finalize(self, tree: InteractionTree, now: float) -> None:
        tree.finalize()
        self.result.trees.append(tree)
        for key in sorted(tree.nodes):
            if not is_origin_anomaly(tree, key):
                continue
            t0 = time.perf_counter()
            plan = plan_rollback(tree, key, self.logs, self.registry)
            elapsed = (time.perf_counter() - t0) * 1e3
            self.result.plan_ms.append(elapsed)
            slot = self._timing_slot.get((id(tree), key))
            if slot is not None:
                self.result.interaction_ms[slot] += elapsed
            report = execute_rollback(plan, self.actuator, self.registry, executed_at=now)
            self.result.rollbacks.append(report)
            self.result.isolations[plan.isolate] = now

    def finish(self, now: Optional[float] = None) -> ReplayResult:
        if now is None:
            now = max((t.last_activity for t in self.open_trees), default=0.0) + self.quiescence
        for tree in sorted(self.open_trees, key=lambda t: (t.last_activity, t.root_device, t.x)):
            self._finalize(tree, now)
        self.open_trees = []
        return self.result

    # -- per burst -----------------------------------------------------------

    def process(self, burst: Burst) -> EventVerdict:
        now = burst.start_ts
        self._finalize_idle(now)
        dev = burst.device_id
        fv = featurize(burst)
        t0 = time.perf_counter()
        code = self.model.predict_code(fv)
        self.result.inference_ms.append((time.perf_counter() - t0) * 1e3)
        label = Label.from_code(code)
        sig = self.signatures.match(fv, dev)
        lid = self.join.find(dev, now)
        entry = self.ledger.get(lid) if lid is not None else None
        if sig != NO_MATCH:
            etype = sig
        elif entry is not None:
            etype = entry["event"]
        else:
            etype = self.signatures.nearest(fv, dev)
        v = EventVerdict(dev, now, lid, sig, etype, label.value, "")
        self.result.verdicts.append(v)

        state = entry["state"] if entry is not None else None
        record = EventRecord(dev, etype or "unknown", now, burst, state=state)
        if label is Label.ANOMALOUS:
            return self._log(v, record, DISCARDED, "packet-level anomaly")
        if entry is None:
            return self._log(v, record, UNRELAYED, "no relay entry")
        rec = self.registry.get(dev)
        if not rec.active:
            return self._log(v, record, REJECTED, "device isolated")

        cause = entry["cause"]
        if cause is None:
            tree = new_tree(self.registry, dev, entry.get("value"), etype, now)
            self.open_trees.append(tree)
            key = tree.root_key
        else:
            parent = self.node_of.get(cause)
            if parent is None or parent[0].finalized:
                return self._log(v, record, REJECTED, "cause not in an open tree")
            tree, pkey = parent
            key = tree.attach(pkey, dev, etype, entry.get("value"), now)
        t0 = time.perf_counter()
        verdict = validate_interaction(tree, key, self.rules, self.registry)
        if key.y > 1:
            self._timing_slot[(id(tree), key)] = len(self.result.interaction_ms)
            self.result.interaction_ms.append((time.perf_counter() - t0) * 1e3)
        self.node_of[lid] = (tree, key)
        self.interaction_log.append(tree, tree.nodes[key])
        # events execute first; rollback repairs anomalies once the tree closes
        self.registry.set_state(dev, state)
        record.assign_key(tree.root_device, str(key))
        v.key, v.root = str(key), tree.root_device
        return self._log(v, record, verdict.value)

    def _log(self, v: EventVerdict, record: EventRecord, verdict: str, reason: Optional[str] = None):
        v.verdict = verdict
        v.reason = reason
        record.verdict = verdict
        self.logs[record.device_id].append(record)
        return v

    def run(self, bursts: Sequence[Burst]) -> ReplayResult:
        for b in bursts:
            self.process(b)
        end = bursts[-1].end_ts if bursts else 0.0
        latest = max([end] + [t.last_activity for t in self.open_trees])
        return self.finish(latest + self.quiescence)


def rollback_summary(reports: Sequence[RollbackReport]) -> list[dict]:
    return [r.to_dict() for r in reports]

