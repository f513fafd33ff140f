"""Device registry, keyed interaction trees and rule-based validation."""

from __future__ import annotations

import copy
import enum
import json
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import InteractionError

TYPE_PREFIX = "type:"
STATE_PREFIX = "state:"


class DeviceStatus(str, enum.Enum):
    ACTIVE = "ACTIVE"
    ISOLATED = "ISOLATED"


class Verdict(str, enum.Enum):
    PENDING = "PENDING"
    VALID = "VALID"
    ANOMALOUS = "ANOMALOUS"


_UNSET = object()


@dataclass
class DeviceRecord:
    device_id: str
    device_type: str
    addr: str
    state: object = None
    status: DeviceStatus = DeviceStatus.ACTIVE
    reading_seq: int = 1
    initial_state: object = _UNSET

    def __post_init__(self):
        if not self.device_id:
            raise InteractionError("BAD_DEVICE", "device_id must be non-empty")
        self.status = DeviceStatus(self.status)
        if self.initial_state is _UNSET:
            self.initial_state = copy.deepcopy(self.state)

    @property
    def active(self) -> bool:
        return self.status is DeviceStatus.ACTIVE

    def to_dict(self) -> dict:
        return {"id": self.device_id, "type": self.device_type, "addr": self.addr,
                "state": self.state, "initial_state": self.initial_state,
                "status": self.status.value, "reading_seq": self.reading_seq}


class DeviceRegistry:
    """Devices by id and by address; the single owner of device state."""

    def __init__(self, records: Iterable[DeviceRecord] = (), controller_addr: Optional[str] = None):
        self.devices: dict[str, DeviceRecord] = {}
        self._by_addr: dict[str, str] = {}
        self.controller_addr = controller_addr
        for r in records:
            self.register(r)

    def __len__(self):
        return len(self.devices)

    def __contains__(self, device_id):
        return device_id in self.devices

    def __iter__(self):
        return iter(self.devices.values())

    def register(self, record: DeviceRecord) -> "DeviceRegistry":
        if record.device_id in self.devices:
            raise InteractionError("DUPLICATE_ID", f"device {record.device_id} already registered")
        if record.addr in self._by_addr or record.addr == self.controller_addr:
            raise InteractionError("DUPLICATE_ADDR", f"address {record.addr} already in use")
        record.status = DeviceStatus.ACTIVE
        record.reading_seq = 1
        self.devices[record.device_id] = record
        self._by_addr[record.addr] = record.device_id
        return self

    def get(self, device_id: str) -> DeviceRecord:
        try:
            return self.devices[device_id]
        except KeyError:
            raise InteractionError("UNKNOWN_DEVICE", f"unknown device {device_id}") from None

    def by_addr(self, addr: str) -> Optional[DeviceRecord]:
        dev = self._by_addr.get(addr)
        return None if dev is None else self.devices[dev]

    def address_map(self) -> dict[str, str]:
        return dict(self._by_addr)

    def isolate(self, device_id: str) -> None:
        self.get(device_id).status = DeviceStatus.ISOLATED

    def reactivate(self, device_id: str) -> None:
        self.get(device_id).status = DeviceStatus.ACTIVE

    def set_state(self, device_id: str, state) -> None:
        self.get(device_id).state = state

    def snapshot(self) -> dict[str, object]:
        return {d: copy.deepcopy(r.state) for d, r in self.devices.items()}

    def to_dict(self) -> dict:
        return {"controller": self.controller_addr,
                "devices": [r.to_dict() for r in self.devices.values()]}

    @classmethod
    def from_dict(cls, doc: dict) -> "DeviceRegistry":
        reg = cls(controller_addr=doc.get("controller"))
        for i, d in enumerate(doc.get("devices", [])):
            try:
                rec = DeviceRecord(d["id"], d["type"], d["addr"], d.get("state", d.get("initial_state")))
            except KeyError as exc:
                raise InteractionError("BAD_DEVICE", f"devices[{i}] missing {exc.args[0]}") from None
            if "initial_state" in d:
                rec.initial_state = d["initial_state"]
            reg.register(rec)
            rec.status = DeviceStatus(d.get("status", "ACTIVE"))
        return reg


def register_device(registry: DeviceRegistry, record: DeviceRecord) -> DeviceRegistry:
    return registry.register(record)


def load_registry(path) -> DeviceRegistry:
    return DeviceRegistry.from_dict(json.loads(Path(path).read_text()))


def save_registry(path, registry: DeviceRegistry) -> None:
    Path(path).write_text(json.dumps(registry.to_dict(), indent=1))


# --------------------------------------------------------------------------
# keys and trees

@dataclass(frozen=True, order=True)
class EventKey:
    x: int
    y: int

    def __post_init__(self):
        if self.x < 1 or self.y < 1:
            raise InteractionError("BAD_KEY", f"key parts must be positive, got {self.x}.{self.y}")

    def __str__(self):
        return f"{self.x}.{self.y}"

    @classmethod
    def parse(cls, text: str) -> "EventKey":
        try:
            x, y = text.split(".")
            return cls(int(x), int(y))
        except (ValueError, AttributeError):
            raise InteractionError("BAD_KEY", f"not an X.Y key: {text!r}") from None


@dataclass
class TreeNode:
    key: EventKey
    device_id: str
    event_type: str
    reading_value: object = None
    parent: Optional[EventKey] = None
    children: list = field(default_factory=list)
    validation: Verdict = Verdict.PENDING
    ts: float = 0.0


class InteractionTree:
    """Events caused, directly or transitively, by one root reading."""

    def __init__(self, root_device: str, x: int, event_type: str, reading=None, ts: float = 0.0):
        self.root_device = root_device
        self.x = x
        self.root_key = EventKey(x, 1)
        self.nodes: dict[EventKey, TreeNode] = {
            self.root_key: TreeNode(self.root_key, root_device, event_type, reading, ts=ts)
        }
        self.finalized = False
        self.last_activity = ts

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, key):
        return key in self.nodes

    def node(self, key: EventKey) -> TreeNode:
        try:
            return self.nodes[key]
        except KeyError:
            raise InteractionError("UNKNOWN_KEY", f"{key} not in tree {self.root_device}/{self.x}") from None

    @property
    def next_y(self) -> int:
        return len(self.nodes) + 1

    def attach(self, parent_key: EventKey, device_id: str, event_type: str,
               reading=None, ts: Optional[float] = None) -> EventKey:
        if self.finalized:
            raise InteractionError("TREE_FINALIZED", f"tree {self.root_device}/{self.x} is closed")
        if parent_key not in self.nodes:
            raise InteractionError("UNKNOWN_PARENT", f"{parent_key} not in tree {self.root_device}/{self.x}")
        key = EventKey(self.x, self.next_y)
        ts = self.last_activity if ts is None else ts
        self.nodes[key] = TreeNode(key, device_id, event_type, reading, parent_key, ts=ts)
        self.nodes[parent_key].children.append(key)
        self.last_activity = max(self.last_activity, ts)
        return key

    def depth_of(self, key: EventKey) -> int:
        d, node = 0, self.node(key)
        while node.parent is not None:
            node = self.nodes[node.parent]
            d += 1
        return d

    def depth(self) -> int:
        return max(self.depth_of(k) for k in self.nodes)

    def finalize(self) -> None:
        self.finalized = True


def new_tree(registry: DeviceRegistry, root_device: str, reading=None,
             event_type: str = "reading", ts: float = 0.0) -> InteractionTree:
    rec = registry.get(root_device)
    if not rec.active:
        raise InteractionError("DEVICE_ISOLATED", f"{root_device} is isolated")
    x = rec.reading_seq
    rec.reading_seq += 1
    return InteractionTree(root_device, x, event_type, reading, ts)


def attach_event(tree: InteractionTree, parent_key: EventKey, device_id: str, event_type: str,
                 reading=None, ts: Optional[float] = None) -> EventKey:
    return tree.attach(parent_key, device_id, event_type, reading, ts)


def affected_set(tree: InteractionTree, anomalous_key: EventKey) -> list[tuple[EventKey, str]]:
    """The node and all its descendants, highest y first."""
    start = tree.node(anomalous_key)
    found, stack = [], [start]
    while stack:
        n = stack.pop()
        found.append((n.key, n.device_id))
        stack.extend(tree.nodes[c] for c in n.children)
    found.sort(key=lambda kd: kd[0].y, reverse=True)
    return found


# --------------------------------------------------------------------------
# automation rules

_OPS = {
    "<": operator.lt, "<=": operator.le, "=": operator.eq, "==": operator.eq,
    ">=": operator.ge, ">": operator.gt, "!=": operator.ne,
    "≤": operator.le, "≥": operator.ge, "≠": operator.ne,
}
_ORDERING = {"<", "<=", ">=", ">", "≤", "≥"}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def compare(left, op: str, right) -> bool:
    """Apply a comparator; incompatible operand types evaluate to False."""
    fn = _OPS[op]
    if _is_number(left) and _is_number(right):
        return bool(fn(left, right))
    if type(left) is not type(right) or op in _ORDERING:
        return False
    return bool(fn(left, right))


@dataclass(frozen=True)
class Selector:
    """Either a concrete device id or ``type:<device_type>``."""

    device_id: Optional[str] = None
    device_type: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "Selector":
        if not isinstance(text, str) or not text:
            raise InteractionError("BAD_RULE", f"bad device selector {text!r}")
        if text.startswith(TYPE_PREFIX):
            return cls(device_type=text[len(TYPE_PREFIX):])
        return cls(device_id=text)

    def matches(self, device_id: str, device_type: Optional[str]) -> bool:
        if self.device_id is not None:
            return self.device_id == device_id
        return self.device_type == device_type

    def __str__(self):
        return self.device_id if self.device_id is not None else TYPE_PREFIX + self.device_type


@dataclass(frozen=True)
class Condition:
    field: str
    op: str
    value: object

    def __post_init__(self):
        if self.op not in _OPS:
            raise InteractionError("BAD_RULE", f"unknown comparator {self.op!r}")
        if self.field != "value" and not self.field.startswith(STATE_PREFIX):
            raise InteractionError("BAD_RULE", f"condition field must be 'value' or 'state:<id>', got {self.field!r}")

    def evaluate(self, trigger_reading, registry: DeviceRegistry) -> bool:
        if self.field == "value":
            left = trigger_reading
        else:
            dev = self.field[len(STATE_PREFIX):]
            if dev not in registry:
                return False
            left = registry.get(dev).state
        return compare(left, self.op, self.value)


@dataclass(frozen=True)
class AutomationRule:
    rule_id: str
    trigger: Selector
    trigger_event: str
    action: Selector
    action_event: str
    condition: Optional[Condition] = None

    def __post_init__(self):
        if self.trigger == self.action and self.trigger_event == self.action_event:
            raise InteractionError("SELF_LOOP", f"rule {self.rule_id} triggers itself")

    def licenses(self, parent: TreeNode, child: TreeNode, registry: DeviceRegistry) -> bool:
        if parent.event_type != self.trigger_event or child.event_type != self.action_event:
            return False
        if not self.trigger.matches(parent.device_id, _type_of(registry, parent.device_id)):
            return False
        if not self.action.matches(child.device_id, _type_of(registry, child.device_id)):
            return False
        return self.condition is None or self.condition.evaluate(parent.reading_value, registry)

    def to_dict(self) -> dict:
        d = {"id": self.rule_id,
             "trigger": {"device": str(self.trigger), "event": self.trigger_event},
             "action": {"device": str(self.action), "event": self.action_event}}
        if self.condition is not None:
            d["condition"] = {"field": self.condition.field, "op": self.condition.op,
                              "value": self.condition.value}
        return d


def _type_of(registry: DeviceRegistry, device_id: str) -> Optional[str]:
    rec = registry.devices.get(device_id)
    return None if rec is None else rec.device_type


class RuleSet:
    """Rules indexed by (trigger event, action event)."""

    def __init__(self, rules: Iterable[AutomationRule] = ()):
        self.rules: list[AutomationRule] = []
        self._index: dict[tuple[str, str], list[AutomationRule]] = {}
        for r in rules:
            self.add(r)

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def add(self, rule: AutomationRule) -> None:
        if any(r.rule_id == rule.rule_id for r in self.rules):
            raise InteractionError("BAD_RULE", f"duplicate rule id {rule.rule_id}")
        self.rules.append(rule)
        self._index.setdefault((rule.trigger_event, rule.action_event), []).append(rule)

    def candidates(self, trigger_event: str, action_event: str) -> list[AutomationRule]:
        return self._index.get((trigger_event, action_event), [])

    def licensing_rule(self, parent: TreeNode, child: TreeNode,
                       registry: DeviceRegistry) -> Optional[AutomationRule]:
        for rule in self.candidates(parent.event_type, child.event_type):
            if rule.licenses(parent, child, registry):
                return rule
        return None

    def to_list(self) -> list[dict]:
        return [r.to_dict() for r in self.rules]


def _as_ruleset(rules) -> RuleSet:
    return rules if isinstance(rules, RuleSet) else RuleSet(rules)


def validate_interaction(tree: InteractionTree, key: EventKey, rules, registry: DeviceRegistry) -> Verdict:
    """Root readings are VALID.  A child is VALID when a rule licenses the
    (parent, child) pair under the current registry state.  Descendants of
    an ANOMALOUS node inherit the verdict."""
    node = tree.node(key)
    if node.parent is None:
        verdict = Verdict.VALID
    else:
        parent = tree.nodes[node.parent]
        if parent.validation is Verdict.PENDING:
            raise InteractionError("PARENT_PENDING", f"{node.parent} has not been validated")
        if parent.validation is Verdict.ANOMALOUS:
            verdict = Verdict.ANOMALOUS
        elif _as_ruleset(rules).licensing_rule(parent, node, registry) is not None:
            verdict = Verdict.VALID
        else:
            verdict = Verdict.ANOMALOUS
    node.validation = verdict
    return verdict


def is_origin_anomaly(tree: InteractionTree, key: EventKey) -> bool:
    """ANOMALOUS node whose parent is not (the top of a tainted subtree)."""
    node = tree.node(key)
    if node.validation is not Verdict.ANOMALOUS:
        return False
    return node.parent is None or tree.nodes[node.parent].validation is not Verdict.ANOMALOUS


# --------------------------------------------------------------------------
# rules file

def _selector_of(obj, where: str) -> tuple[Selector, str]:
    if not isinstance(obj, dict):
        raise InteractionError("BAD_RULE", f"{where} must be an object")
    for k in ("device", "event"):
        if k not in obj:
            raise InteractionError("BAD_RULE", f"{where}.{k} is required")
    return Selector.parse(obj["device"]), str(obj["event"])


def rule_from_dict(obj: dict, index: int = 0) -> AutomationRule:
    where = f"rules[{index}]"
    if not isinstance(obj, dict):
        raise InteractionError("BAD_RULE", f"{where} must be an object")
    trig, tev = _selector_of(obj.get("trigger"), f"{where}.trigger")
    act, aev = _selector_of(obj.get("action"), f"{where}.action")
    cond = None
    if obj.get("condition") is not None:
        c = obj["condition"]
        try:
            cond = Condition(str(c["field"]), str(c["op"]), c["value"])
        except (KeyError, TypeError):
            raise InteractionError("BAD_RULE", f"{where}.condition needs field, op and value") from None
    return AutomationRule(str(obj.get("id", f"r{index}")), trig, tev, act, aev, cond)


def rules_from_list(items: Sequence[dict]) -> RuleSet:
    return RuleSet(rule_from_dict(o, i) for i, o in enumerate(items))


def load_rules(path) -> RuleSet:
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml
        doc = yaml.safe_load(text)
    else:
        doc = json.loads(text)
    if isinstance(doc, dict):
        doc = doc.get("rules", [])
    if not isinstance(doc, list):
        raise InteractionError("BAD_RULE", f"{path}: expected a list of rules")
    return rules_from_list(doc)


def save_rules(path, rules: RuleSet) -> None:
    Path(path).write_text(json.dumps({"rules": rules.to_list()}, indent=1))


# --------------------------------------------------------------------------
# interaction log

def interaction_log_line(node: TreeNode) -> str:
    parent = str(node.parent) if node.parent is not None else "-"
    return f"{node.key} parent={parent} device={node.device_id} event={node.event_type} verdict={node.validation.value}"


class InteractionLog:
    """Append-only interaction lines, one stream per root device."""

    def __init__(self):
        self.lines: dict[str, list[str]] = {}

    def append(self, tree: InteractionTree, node: TreeNode) -> None:
        self.lines.setdefault(tree.root_device, []).append(interaction_log_line(node))

    def write(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for root, lines in sorted(self.lines.items()):
            (out / f"{root}.interactions.log").write_text("".join(l + "\n" for l in lines))
