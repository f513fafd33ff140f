"""Restore devices touched by an anomalous subtree and isolate its origin."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Union

from .errors import RollbackError
from .events import EventLog
from .interactions import DeviceRegistry, EventKey, InteractionTree, Verdict, affected_set

INITIAL = "INITIAL"


class Outcome(str, enum.Enum):
    RESTORED = "RESTORED"
    FAILED = "FAILED"


class ActuatorFailure(Exception):
    """Raised by an actuator when a device refuses a state command."""


class Actuator(Protocol):
    def set_state(self, device_id: str, state) -> None: ...


@dataclass
class StableStateEntry:
    device_id: str
    state: object
    source_key: Union[tuple[str, str], str]  # (root_device, "X.Y") or INITIAL
    ts: float

    def to_dict(self) -> dict:
        src = self.source_key if self.source_key == INITIAL else f"{self.source_key[0]}/{self.source_key[1]}"
        return {"device": self.device_id, "state": self.state, "source": src, "ts": self.ts}


@dataclass
class RollbackPlan:
    anomaly_key: EventKey
    root_device: str
    entries: list
    isolate: str
    exclude: frozenset = field(default_factory=frozenset)

    def check(self) -> None:
        if not self.entries:
            raise RollbackError("EMPTY_PLAN", f"plan for {self.root_device}/{self.anomaly_key} has no entries")
        seen = [e.device_id for e in self.entries]
        if len(set(seen)) != len(seen):
            raise RollbackError("DUPLICATE_ENTRY", f"device listed twice in plan: {seen}")
        if self.isolate not in seen:
            raise RollbackError("BAD_PLAN", f"originator {self.isolate} has no entry")


@dataclass
class RollbackReport:
    plan: RollbackPlan
    outcomes: list
    elapsed_ms: float
    executed_at: Optional[float] = None
    reasons: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        entries = []
        for e, o in zip(self.plan.entries, self.outcomes):
            d = e.to_dict()
            d["outcome"] = o.value
            if e.device_id in self.reasons:
                d["reason"] = self.reasons[e.device_id]
            entries.append(d)
        return {"anomaly_key": str(self.plan.anomaly_key), "root_device": self.plan.root_device,
                "isolated": self.plan.isolate, "entries": entries,
                "elapsed_ms": self.elapsed_ms, "executed_at": self.executed_at}


def last_stable_state(device_log: Optional[EventLog], registry: DeviceRegistry, device_id: str,
                      exclude=frozenset()) -> StableStateEntry:
    """Newest VALID log entry whose ref is not excluded, else the initial state."""
    rec = registry.get(device_id)
    if device_log is not None:
        for ev in reversed(device_log):
            if ev.verdict == Verdict.VALID.value and ev.ref is not None and ev.ref not in exclude:
                return StableStateEntry(device_id, ev.state, ev.ref, ev.ts)
    return StableStateEntry(device_id, rec.initial_state, INITIAL, 0.0)


def plan_rollback(tree: InteractionTree, anomaly_key: EventKey, logs: Mapping[str, EventLog],
                  registry: DeviceRegistry) -> RollbackPlan:
    node = tree.node(anomaly_key)
    if node.validation is not Verdict.ANOMALOUS:
        raise RollbackError("NODE_NOT_ANOMALOUS", f"{anomaly_key} is {node.validation.value}")
    affected = affected_set(tree, anomaly_key)
    exclude = frozenset((tree.root_device, str(k)) for k, _ in affected)
    entries, seen = [], set()
    # a device touched twice keeps a single entry at its deepest position
    for _, dev in affected:
        if dev in seen:
            continue
        seen.add(dev)
        entries.append(last_stable_state(logs.get(dev), registry, dev, exclude))
    plan = RollbackPlan(anomaly_key, tree.root_device, entries, node.device_id, exclude)
    plan.check()
    return plan


def execute_rollback(plan: RollbackPlan, actuator: Actuator, registry: DeviceRegistry,
                     executed_at: Optional[float] = None) -> RollbackReport:
    """Send every restore in order, then isolate the originator.

    A failing entry is recorded and the remaining entries still run.
    """
    plan.check()
    t0 = time.perf_counter()
    outcomes, reasons = [], {}
    for entry in plan.entries:
        try:
            actuator.set_state(entry.device_id, entry.state)
        except ActuatorFailure as exc:
            outcomes.append(Outcome.FAILED)
            reasons[entry.device_id] = str(exc)
            continue
        registry.set_state(entry.device_id, entry.state)
        outcomes.append(Outcome.RESTORED)
    registry.isolate(plan.isolate)
    elapsed = (time.perf_counter() - t0) * 1e3
    return RollbackReport(plan, outcomes, elapsed, executed_at, reasons)


class RecordingActuator:
    """Accepts every command and keeps the sequence it was sent."""

    def __init__(self, fail_on=()):
        self.commands: list[tuple[str, object]] = []
        self.fail_on = set(fail_on)

    def set_state(self, device_id: str, state) -> None:
        if device_id in self.fail_on:
            raise ActuatorFailure(f"{device_id} did not acknowledge")
        self.commands.append((device_id, state))
