"""Deterministic discrete-event smart-home simulator.

Devices emit spontaneous events, the virtual controller fires automation
rules when an exchange completes, and every event on the wire becomes a
handshake / command / response / teardown exchange.  Injected anomalies
perturb that stream.  Outputs are a canonical JSONL trace, a ledger of
events with their causes (the controller's relay log) and ground truth.
"""

from __future__ import annotations

import copy
import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..interactions import DeviceRegistry
from ..trace import TraceMeta, record_from_obj
from .scenario import VALUE_TOKEN, AnomalyKind, EventProfile, InjectedAnomaly, ScenarioConfig, save_scenario

CONTROLLER_SERVICE_PORT = 8883
# ghost commands arrive over the device's own session to a vendor cloud,
# bypassing the controller
CLOUD_ADDR = "52.94.0.10"
CLOUD_PORT = 443
CHILD_DELAY = 0.010
SIBLING_STAGGER = 0.005
UDP_RETRY_GAP = 0.2
TCP_BASE_LEN = 66
UDP_BASE_LEN = 42
SYN_LEN = 74


@dataclass
class LedgerEvent:
    id: int
    tick: int
    ts: float
    device: str
    event: str
    cause: Optional[int]
    value: object
    state: object
    wire: bool = True
    # ground truth, not part of the relay log
    label: str = "BENIGN"
    kind: Optional[str] = None
    injection: Optional[int] = None
    depth: int = 0
    end_ts: float = 0.0

    def relay_dict(self) -> dict:
        return {"id": self.id, "tick": self.tick, "ts": self.ts, "device": self.device, "event": self.event,
                "cause": self.cause, "value": self.value, "state": self.state}


@dataclass
class SimResult:
    config: ScenarioConfig
    records: list            # canonical JSONL dicts, time ordered
    ledger: list             # LedgerEvent
    truth: dict
    meta: TraceMeta = None

    def packets(self) -> list:
        """The trace as PacketRecords, as a reader of trace.jsonl would see it."""
        out = []
        for r in self.records:
            rec = record_from_obj(r, self.meta)
            if rec is not None:
                out.append(rec)
        return out

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"trace": out / "trace.jsonl", "ledger": out / "ledger.jsonl", "truth": out / "truth.json",
                 "devices": out / "devices.json", "rules": out / "rules.json", "scenario": out / "scenario.json"}
        with open(paths["trace"], "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(r, separators=(",", ":")) + "\n")
        with open(paths["ledger"], "w", encoding="utf-8") as fh:
            for ev in self.ledger:
                fh.write(json.dumps(ev.relay_dict(), separators=(",", ":")) + "\n")
        paths["truth"].write_text(json.dumps(self.truth, indent=1, sort_keys=True))
        paths["devices"].write_text(json.dumps(self.config.registry().to_dict(), indent=1))
        paths["rules"].write_text(json.dumps({"rules": self.config.rules}, indent=1))
        save_scenario(paths["scenario"], self.config)
        return paths


class _Ports:
    """Small deterministic pools of ephemeral ports per device."""

    def __init__(self, index: int):
        self.device = [40000 + 16 * index + k for k in range(4)]
        self.controller = [50000 + 16 * index + k for k in range(4)]


class HomeSimulator:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.dt = cfg.tick_seconds
        self.rules = cfg.ruleset()
        self.world: DeviceRegistry = cfg.registry()
        self.specs = {d.device_id: d for d in cfg.devices}
        self.ports = {d.device_id: _Ports(i) for i, d in enumerate(cfg.devices)}
        self.busy_until = {d.device_id: -1.0 for d in cfg.devices}
        self.heap: list = []
        self.seq = 0
        self.ledger: list[LedgerEvent] = []
        self.records: list[dict] = []
        self.injection_events: dict[int, list[int]] = {}

    # -- scheduling -------------------------------------------------------

    def push(self, t: float, kind: str, payload) -> None:
        heapq.heappush(self.heap, (t, self.seq, kind, payload))
        self.seq += 1

    def _schedule_roots(self) -> None:
        T = self.cfg.duration_ticks
        for d in self.cfg.devices:
            if not d.roots:
                continue
            names = list(d.roots)
            w = np.array([d.roots[n] for n in names], dtype=float)
            if w.sum() <= 0:
                continue
            if d.interval_ticks:
                ticks = np.arange(0, T, d.interval_ticks)
            else:
                ticks = np.flatnonzero(self.rng.random(T) < d.probability)
            picks = self.rng.choice(len(names), size=len(ticks), p=w / w.sum())
            for t, k in zip(ticks, picks):
                self.push(round(float(t) * self.dt, 6), "root", (d.device_id, names[int(k)]))
        for idx, inj in enumerate(self.cfg.injections):
            self.push(round(inj.tick * self.dt, 6), "inject", idx)

    # -- event construction ---------------------------------------------

    def _profile(self, device: str):
        spec = self.specs[device]
        prof = self.cfg.profile_of(spec)
        return prof, (spec.proto or prof.proto).upper()

    def _draw_value(self, ep: EventProfile):
        v = ep.values
        if v is None:
            return None
        if isinstance(v, dict):
            choices = v["choices"]
            return choices[int(self.rng.integers(len(choices)))]
        lo, hi = v
        return int(self.rng.integers(int(lo), int(hi) + 1))

    def _next_state(self, device: str, ep: EventProfile, value):
        if ep.sets is None:
            return copy.deepcopy(self.world.get(device).state)
        if ep.sets == VALUE_TOKEN:
            return value
        return ep.sets

    def _emit(self, t0: float, device: str, ep: EventProfile, shape: str, device_initiates: bool,
              delay: float = 0.0, via_cloud: bool = False) -> float:
        """Append one exchange's packets; returns the last packet time."""
        prof, proto = self._profile(device)
        ctrl = self.cfg.controller_addr
        dev_addr = self.specs[device].addr
        pools = self.ports[device]
        if via_cloud:
            ia, ip = dev_addr, pools.device[int(self.rng.integers(4))]
            ra, rp = CLOUD_ADDR, CLOUD_PORT
        elif device_initiates:
            ia, ip = dev_addr, pools.device[int(self.rng.integers(4))]
            ra, rp = ctrl, CONTROLLER_SERVICE_PORT
        else:
            ia, ip = ctrl, pools.controller[int(self.rng.integers(4))]
            ra, rp = dev_addr, prof.port
        half = prof.rtt / 2.0
        jit = self.rng.integers(-1, 2, size=2)
        if proto == "TCP":
            base = TCP_BASE_LEN
            cmd, rsp = base + ep.cmd_len + int(jit[0]), base + ep.rsp_len + int(jit[1])
            if shape == "failure":
                plan = [(0, SYN_LEN, "S"), (1, SYN_LEN, "SA"), (0, base, "A"), (1, base, "AR")]
            else:
                plan = [(0, SYN_LEN, "S"), (1, SYN_LEN, "SA"), (0, base, "A"), (0, cmd, "AP"),
                        (1, rsp, "AP"), (0, base, "AF"), (1, base, "AF"), (0, base, "A")]
            delayed_at = 4
        else:
            base = UDP_BASE_LEN
            cmd, rsp = base + ep.cmd_len + int(jit[0]), base + ep.rsp_len + int(jit[1])
            if shape == "failure":
                plan = [(0, cmd, ""), (0, cmd, ""), (0, cmd, "")]
            else:
                plan = [(0, cmd, ""), (1, rsp, ""), (0, base + 8, "")]
            delayed_at = 1
        gaps = half * self.rng.uniform(0.97, 1.03, size=len(plan))
        t = t0
        for i, (side, length, flags) in enumerate(plan):
            if i:
                t += UDP_RETRY_GAP * float(gaps[i] / half) if (proto == "UDP" and shape == "failure") else float(gaps[i])
                if i == delayed_at:
                    t += delay
            ts = round(t, 6)
            src, sp, dst, dp = (ia, ip, ra, rp) if side == 0 else (ra, rp, ia, ip)
            self.records.append({"ts": ts, "src": src, "dst": dst, "sport": sp, "dport": dp,
                                 "proto": proto, "len": int(length), "flags": flags})
        return round(t, 6)

    def _start(self, t: float, device: str, event: str, cause: Optional[int], depth: int,
               inj_idx: Optional[int] = None, value=None, has_value: bool = False) -> LedgerEvent:
        prof, _ = self._profile(device)
        ep = prof.event(event)
        inj = self.cfg.injections[inj_idx] if inj_idx is not None else None
        kind = inj.kind if inj is not None else None
        if not has_value:
            value = self._draw_value(ep)
        state = self._next_state(device, ep, value)
        if kind is AnomalyKind.COMMAND_FAILURE:
            state = copy.deepcopy(self.world.get(device).state)
        ev = LedgerEvent(len(self.ledger), int(t / self.dt + 1e-9), round(t, 6), device, event, cause,
                         value, state, depth=depth)
        if kind is not None and (cause is None or kind is AnomalyKind.COMPROMISED_INTERACTION):
            ev.injection = inj_idx
        # wire footprint
        if kind is AnomalyKind.EVENT_LOSS and ev.injection is not None:
            ev.wire = False
            end = ev.ts
        elif kind is AnomalyKind.GHOST_COMMAND:
            end = self._emit(t, device, ep, "normal", device_initiates=True, via_cloud=True)
        elif kind is AnomalyKind.COMMAND_FAILURE:
            end = self._emit(t, device, ep, "failure", device_initiates=ep.is_report)
        elif kind is AnomalyKind.DELAYED_UPDATE:
            delay = int(inj.params["delay_ticks"]) * self.dt
            end = self._emit(t, device, ep, "normal", device_initiates=ep.is_report, delay=delay)
        else:
            end = self._emit(t, device, ep, "normal", device_initiates=ep.is_report)
        ev.end_ts = end
        if ev.injection is not None and kind is not AnomalyKind.COMPROMISED_INTERACTION:
            ev.kind = kind.value
            ev.label = "ANOMALOUS" if kind.wire_visible else "BENIGN"
        self.ledger.append(ev)
        self.busy_until[device] = end + self.cfg.spacing_seconds
        self.push(end, "complete", ev.id)
        return ev

    # -- handlers ---------------------------------------------------------

    def _busy(self, device: str, t: float) -> bool:
        return self.busy_until[device] > t + 1e-9

    def _on_root(self, t, payload):
        device, event = payload
        if self._busy(device, t):
            return
        self._start(t, device, event, None, 0)

    def _on_inject(self, t, idx):
        inj: InjectedAnomaly = self.cfg.injections[idx]
        device = inj.target_device
        if self._busy(device, t):
            self.push(self.busy_until[device], "inject", idx)
            return
        prof, _ = self._profile(device)
        event = inj.params.get("event")
        if event is None:
            names = sorted(prof.events)
            event = names[int(self.rng.integers(len(names)))]
        has_value = inj.kind is AnomalyKind.FALSE_READING
        ev = self._start(t, device, event, None, 0, idx, inj.params.get("value"), has_value)
        self.injection_events.setdefault(idx, []).append(ev.id)

    def _on_command(self, t, payload):
        device, event, cause, depth, inj_idx = payload
        if self._busy(device, t):
            self.push(self.busy_until[device], "command", payload)
            return
        ev = self._start(t, device, event, cause, depth, inj_idx)
        if inj_idx is not None:
            ev.kind = AnomalyKind.COMPROMISED_INTERACTION.value
            self.injection_events.setdefault(inj_idx, []).append(ev.id)

    def _on_complete(self, t, ev_id):
        ev = self.ledger[ev_id]
        self.world.set_state(ev.device, ev.state)
        inj = self.cfg.injections[ev.injection] if ev.injection is not None else None
        kind = inj.kind if inj is not None else None
        if kind in (AnomalyKind.GHOST_COMMAND, AnomalyKind.COMMAND_FAILURE, AnomalyKind.DELAYED_UPDATE,
                    AnomalyKind.EVENT_LOSS):
            return
        children = []
        if ev.depth < self.cfg.max_depth:
            dev_type = self.world.get(ev.device).device_type
            for rule in self.rules:
                if rule.trigger_event != ev.event or not rule.trigger.matches(ev.device, dev_type):
                    continue
                if rule.condition is not None and not rule.condition.evaluate(ev.value, self.world):
                    continue
                if rule.action.device_id is not None:
                    targets = [rule.action.device_id]
                else:
                    targets = [r.device_id for r in self.world if r.device_type == rule.action.device_type]
                for target in targets:
                    children.append((target, rule.action_event, None))
            if kind is AnomalyKind.COMPROMISED_INTERACTION and ev.cause is None:
                children.append((inj.params["action_device"], inj.params["action_event"], ev.injection))
        for i, (target, event, inj_idx) in enumerate(children):
            start = round(t + CHILD_DELAY + SIBLING_STAGGER * i, 6)
            self.push(start, "command", (target, event, ev.id, ev.depth + 1, inj_idx))

    def run(self) -> SimResult:
        self._schedule_roots()
        handlers = {"root": self._on_root, "inject": self._on_inject,
                    "command": self._on_command, "complete": self._on_complete}
        while self.heap:
            t, _, kind, payload = heapq.heappop(self.heap)
            handlers[kind](t, payload)
        self.records.sort(key=lambda r: r["ts"])
        meta = TraceMeta(self.cfg.controller_addr, {d.addr: d.device_id for d in self.cfg.devices})
        return SimResult(self.cfg, self.records, self.ledger, self._truth(), meta)

    # -- ground truth ----------------------------------------------------

    def _truth(self) -> dict:
        children: dict[int, list[int]] = {}
        for ev in self.ledger:
            if ev.cause is not None:
                children.setdefault(ev.cause, []).append(ev.id)
        injections = []
        for idx, inj in enumerate(self.cfg.injections):
            ids = self.injection_events.get(idx, [])
            rec = inj.to_dict()
            rec["index"] = idx
            rec["event_ids"] = ids
            rec["suppressed"] = inj.kind is AnomalyKind.EVENT_LOSS
            if inj.kind is AnomalyKind.COMPROMISED_INTERACTION:
                child = [i for i in ids if self.ledger[i].cause is not None]
                rec["anomaly_event"] = child[0] if child else None
                affected, stack = [], list(child)
                while stack:
                    i = stack.pop()
                    affected.append(i)
                    stack.extend(children.get(i, []))
                affected.sort(reverse=True)
                rec["affected"] = [[i, self.ledger[i].device] for i in affected]
            injections.append(rec)
        counts = {"BENIGN": 0, "ANOMALOUS": 0}
        for ev in self.ledger:
            if ev.wire:
                counts[ev.label] += 1
        return {
            "scenario": self.cfg.name, "seed": self.cfg.seed, "tick_seconds": self.dt,
            "events": [{"id": ev.id, "label": ev.label, "kind": ev.kind, "wire": ev.wire} for ev in self.ledger],
            "injections": injections,
            "label_counts": counts,
            "world_final_states": self.world.snapshot(),
        }


def run_scenario(cfg: ScenarioConfig) -> SimResult:
    return HomeSimulator(cfg).run()
