"""Scenario configuration: devices, traffic profiles, rules and injections."""

from __future__ import annotations

import copy
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import InteractionError, ScenarioError
from ..interactions import DeviceRecord, DeviceRegistry, RuleSet, TreeNode, rules_from_list

SCHEMA_VERSION = 1
DEFAULT_TICK = 0.1
CONTROLLER_ADDR = "10.0.0.1"


class AnomalyKind(str, enum.Enum):
    GHOST_COMMAND = "GHOST_COMMAND"
    COMMAND_FAILURE = "COMMAND_FAILURE"
    DELAYED_UPDATE = "DELAYED_UPDATE"
    EVENT_LOSS = "EVENT_LOSS"
    FALSE_READING = "FALSE_READING"
    COMPROMISED_INTERACTION = "COMPROMISED_INTERACTION"

    @property
    def wire_visible(self) -> bool:
        """Whether the injected exchange itself looks wrong on the wire."""
        return self in (AnomalyKind.GHOST_COMMAND, AnomalyKind.COMMAND_FAILURE, AnomalyKind.DELAYED_UPDATE)


REQUIRED_PARAMS = {
    AnomalyKind.DELAYED_UPDATE: ("delay_ticks",),
    AnomalyKind.FALSE_READING: ("value",),
    AnomalyKind.COMPROMISED_INTERACTION: ("action_device", "action_event"),
}


@dataclass
class EventProfile:
    """Wire footprint and state effect of one event type.

    ``initiator`` is who opens the exchange in normal operation.  ``sets``
    is the resulting state: a constant, ``"$value"`` for the event's value,
    or None to leave the state alone.  ``values`` is either ``[lo, hi]``
    (uniform integers) or ``{"choices": [...]}``.
    """

    name: str
    cmd_len: int
    rsp_len: int
    initiator: str = "controller"
    sets: object = None
    values: object = None

    @property
    def is_report(self) -> bool:
        return self.initiator == "device"


VALUE_TOKEN = "$value"


@dataclass
class TrafficProfile:
    device_type: str
    port: int
    proto: str
    rtt: float
    events: dict

    def event(self, name: str) -> EventProfile:
        try:
            return self.events[name]
        except KeyError:
            raise ScenarioError("INVALID_CONFIG", f"{self.device_type} has no event {name!r}") from None


@dataclass
class DeviceSpec:
    device_id: str
    device_type: str
    addr: str
    initial_state: object = None
    probability: float = 0.0      # chance of a spontaneous event per tick
    interval_ticks: int = 0       # or a fixed period; 0 disables
    roots: dict = field(default_factory=dict)  # event -> weight
    proto: Optional[str] = None   # overrides the profile


@dataclass
class InjectedAnomaly:
    kind: AnomalyKind
    target_device: str
    tick: int
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "device": self.target_device, "tick": self.tick, "params": self.params}


@dataclass
class ScenarioConfig:
    name: str
    devices: list
    profiles: dict
    rules: list
    duration_ticks: int
    tick_seconds: float = DEFAULT_TICK
    injections: list = field(default_factory=list)
    seed: int = 0
    controller_addr: str = CONTROLLER_ADDR
    spacing_seconds: float = 1.5
    max_depth: int = 5

    def profile_of(self, spec: DeviceSpec) -> TrafficProfile:
        return self.profiles[spec.device_type]

    def device(self, device_id: str) -> DeviceSpec:
        for d in self.devices:
            if d.device_id == device_id:
                return d
        raise ScenarioError("INVALID_CONFIG", f"unknown device {device_id!r}")

    def ruleset(self) -> RuleSet:
        return rules_from_list(self.rules)

    def registry(self) -> DeviceRegistry:
        reg = DeviceRegistry(controller_addr=self.controller_addr)
        for d in self.devices:
            reg.register(DeviceRecord(d.device_id, d.device_type, d.addr, copy.deepcopy(d.initial_state)))
        return reg

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION, "name": self.name, "seed": self.seed,
            "tick_seconds": self.tick_seconds, "duration_ticks": self.duration_ticks,
            "controller": self.controller_addr, "spacing_seconds": self.spacing_seconds,
            "max_depth": self.max_depth,
            "profiles": {t: {"port": p.port, "proto": p.proto, "rtt": p.rtt,
                             "events": {e.name: {"cmd": e.cmd_len, "rsp": e.rsp_len, "initiator": e.initiator,
                                                 "sets": e.sets, "values": e.values}
                                        for e in p.events.values()}}
                         for t, p in self.profiles.items()},
            "devices": [{"id": d.device_id, "type": d.device_type, "addr": d.addr,
                         "initial_state": d.initial_state, "probability": d.probability,
                         "interval_ticks": d.interval_ticks, "roots": d.roots, "proto": d.proto}
                        for d in self.devices],
            "rules": self.rules,
            "injections": [i.to_dict() for i in self.injections],
        }


# --------------------------------------------------------------------------
# parsing and validation

def _need(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise ScenarioError("INVALID_CONFIG", f"{path}.{key} is required", field=f"{path}.{key}")
    return obj[key]


def _bad(path, msg):
    return ScenarioError("INVALID_CONFIG", f"{path}: {msg}", field=path)


def config_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise _bad("$", "scenario must be a mapping")
    if doc.get("schema") != SCHEMA_VERSION:
        raise _bad("schema", f"expected schema: {SCHEMA_VERSION}, got {doc.get('schema')!r}")
    profiles = {}
    for t, p in (doc.get("profiles") or {}).items():
        path = f"profiles.{t}"
        events = {}
        for name, e in (_need(p, "events", path) or {}).items():
            ep = f"{path}.events.{name}"
            events[name] = EventProfile(name, int(_need(e, "cmd", ep)), int(_need(e, "rsp", ep)),
                                        e.get("initiator", "controller"), e.get("sets"), e.get("values"))
            if events[name].initiator not in ("device", "controller"):
                raise _bad(f"{ep}.initiator", "must be 'device' or 'controller'")
        proto = str(p.get("proto", "TCP")).upper()
        if proto not in ("TCP", "UDP"):
            raise _bad(f"{path}.proto", "must be TCP or UDP")
        profiles[t] = TrafficProfile(t, int(_need(p, "port", path)), proto, float(p.get("rtt", 0.02)), events)
    devices = []
    for i, d in enumerate(doc.get("devices") or []):
        path = f"devices[{i}]"
        spec = DeviceSpec(str(_need(d, "id", path)), str(_need(d, "type", path)), str(_need(d, "addr", path)),
                          d.get("initial_state"), float(d.get("probability", 0.0)),
                          int(d.get("interval_ticks", 0)), dict(d.get("roots") or {}), d.get("proto"))
        devices.append(spec)
    injections = []
    for i, inj in enumerate(doc.get("injections") or []):
        path = f"injections[{i}]"
        try:
            kind = AnomalyKind(_need(inj, "kind", path))
        except ValueError:
            raise _bad(f"{path}.kind", f"unknown anomaly kind {inj.get('kind')!r}") from None
        injections.append(InjectedAnomaly(kind, str(_need(inj, "device", path)), int(_need(inj, "tick", path)),
                                          dict(inj.get("params") or {})))
    tick = float(doc.get("tick_seconds", DEFAULT_TICK))
    cfg = ScenarioConfig(
        name=str(doc.get("name", "scenario")),
        devices=devices, profiles=profiles, rules=list(doc.get("rules") or []),
        duration_ticks=int(doc.get("duration_ticks", 0)), tick_seconds=tick,
        injections=injections, seed=int(doc.get("seed", 0)),
        controller_addr=str(doc.get("controller", CONTROLLER_ADDR)),
        spacing_seconds=float(doc.get("spacing_seconds", 1.5)),
        max_depth=int(doc.get("max_depth", 5)),
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: ScenarioConfig) -> None:
    if not cfg.tick_seconds > 0:
        raise _bad("tick_seconds", "must be > 0")
    if cfg.duration_ticks < 0:
        raise _bad("duration_ticks", "must be >= 0")
    if cfg.spacing_seconds < 0:
        raise _bad("spacing_seconds", "must be >= 0")
    addrs, ids = {cfg.controller_addr}, set()
    for i, d in enumerate(cfg.devices):
        path = f"devices[{i}]"
        if d.device_id in ids:
            raise _bad(f"{path}.id", f"duplicate device id {d.device_id}")
        if d.addr in addrs:
            raise _bad(f"{path}.addr", f"address {d.addr} not unique")
        ids.add(d.device_id)
        addrs.add(d.addr)
        if d.device_type not in cfg.profiles:
            raise _bad(f"{path}.type", f"no traffic profile for {d.device_type}")
        if not 0.0 <= d.probability <= 1.0:
            raise _bad(f"{path}.probability", "must be in [0, 1]")
        if d.interval_ticks < 0:
            raise _bad(f"{path}.interval_ticks", "must be >= 0")
        prof = cfg.profiles[d.device_type]
        for ev, w in d.roots.items():
            if ev not in prof.events:
                raise _bad(f"{path}.roots.{ev}", f"{d.device_type} has no event {ev}")
            if w < 0:
                raise _bad(f"{path}.roots.{ev}", "weight must be >= 0")
        if d.proto is not None and str(d.proto).upper() not in ("TCP", "UDP"):
            raise _bad(f"{path}.proto", "must be TCP or UDP")
    try:
        rules = cfg.ruleset()
    except InteractionError as exc:
        raise _bad("rules", str(exc)) from None
    for i, r in enumerate(rules):
        for sel, ev, part in ((r.trigger, r.trigger_event, "trigger"), (r.action, r.action_event, "action")):
            if sel.device_id is not None:
                if sel.device_id not in ids:
                    raise _bad(f"rules[{i}].{part}.device", f"unknown device {sel.device_id}")
                types = [cfg.device(sel.device_id).device_type]
            else:
                types = [sel.device_type]
                if sel.device_type not in cfg.profiles:
                    raise _bad(f"rules[{i}].{part}.device", f"unknown device type {sel.device_type}")
            if not all(ev in cfg.profiles[t].events for t in types):
                raise _bad(f"rules[{i}].{part}.event", f"event {ev} not defined for {types[0]}")
    for i, inj in enumerate(cfg.injections):
        path = f"injections[{i}]"
        if inj.target_device not in ids:
            raise _bad(f"{path}.device", f"unknown device {inj.target_device}")
        if not 0 <= inj.tick < max(cfg.duration_ticks, 1):
            raise _bad(f"{path}.tick", f"tick {inj.tick} outside [0, {cfg.duration_ticks})")
        for p in REQUIRED_PARAMS.get(inj.kind, ()):
            if p not in inj.params:
                raise _bad(f"{path}.params.{p}", f"{inj.kind.value} needs {p}")
        prof = cfg.profiles[cfg.device(inj.target_device).device_type]
        if "event" in inj.params and inj.params["event"] not in prof.events:
            raise _bad(f"{path}.params.event", f"no event {inj.params['event']}")
        if inj.kind is AnomalyKind.DELAYED_UPDATE and int(inj.params["delay_ticks"]) < 1:
            raise _bad(f"{path}.params.delay_ticks", "must be >= 1")
        if inj.kind is AnomalyKind.COMPROMISED_INTERACTION:
            act = inj.params["action_device"]
            if act not in ids:
                raise _bad(f"{path}.params.action_device", f"unknown device {act}")
            if inj.params["action_event"] not in cfg.profiles[cfg.device(act).device_type].events:
                raise _bad(f"{path}.params.action_event", f"no event {inj.params['action_event']}")


def load_scenario(path) -> ScenarioConfig:
    """Load a scenario file (YAML or JSON) or a builtin name such as ``s1``."""
    text_path = str(path)
    if text_path.lower() in BUILTINS:
        return BUILTINS[text_path.lower()]()
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise
    if p.suffix in (".yaml", ".yml"):
        import yaml
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise _bad("$", f"{p}: {exc}") from None
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise _bad("$", f"{p}: {exc}") from None
    return config_from_dict(doc)


def save_scenario(path, cfg: ScenarioConfig) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=1))


# --------------------------------------------------------------------------
# builtin home

def _ev(name, cmd, rsp, initiator="controller", sets=None, values=None):
    return {"cmd": cmd, "rsp": rsp, "initiator": initiator, "sets": sets, "values": values}


HOME_PROFILES = {
    "smart_bulb": {"port": 6668, "proto": "TCP", "rtt": 0.012, "events": {
        "turn_on": _ev("turn_on", 40, 24, sets="on"),
        "turn_off": _ev("turn_off", 80, 24, sets="off"),
        "set_brightness": _ev("set_brightness", 130, 28, sets=VALUE_TOKEN, values=[10, 100]),
        "color_change": _ev("color_change", 190, 32, sets=VALUE_TOKEN,
                            values={"choices": ["warm", "cool", "red", "blue"]}),
    }},
    "smart_plug": {"port": 9999, "proto": "TCP", "rtt": 0.018, "events": {
        "plug_on": _ev("plug_on", 110, 60, sets=True),
        "plug_off": _ev("plug_off", 160, 60, sets=False),
        "power_report": _ev("power_report", 230, 20, "device", values=[0, 2000]),
    }},
    "thermostat": {"port": 8443, "proto": "TCP", "rtt": 0.025, "events": {
        "temp_reading": _ev("temp_reading", 150, 30, "device", values=[55, 88]),
        "set_heat": _ev("set_heat", 220, 90, sets="heat"),
        "set_cool": _ev("set_cool", 290, 90, sets="cool"),
        "set_off": _ev("set_off", 360, 90, sets="off"),
        "fan_on": _ev("fan_on", 430, 90, sets="fan"),
    }},
    "voice_assistant": {"port": 8009, "proto": "TCP", "rtt": 0.008, "events": {
        "voice_command": _ev("voice_command", 420, 60, "device",
                             values={"choices": ["lights_on", "lights_off", "tea", "morning", "weather", "music"]}),
        "play_media": _ev("play_media", 330, 140, sets="playing"),
        "stop_media": _ev("stop_media", 250, 120, sets="idle"),
        "alarm": _ev("alarm", 520, 140, sets="alarm"),
    }},
    "smart_kettle": {"port": 2000, "proto": "TCP", "rtt": 0.03, "events": {
        "kettle_on": _ev("kettle_on", 64, 36, sets="heating"),
        "kettle_off": _ev("kettle_off", 110, 36, sets="off"),
        "boil_done": _ev("boil_done", 160, 20, "device", sets="boiled"),
        "keep_warm": _ev("keep_warm", 220, 36, sets="warm"),
    }},
}

_BULB_ROOTS = {"turn_on": 3, "turn_off": 3, "set_brightness": 2, "color_change": 1}
_PLUG_ROOTS = {"power_report": 6, "plug_on": 1, "plug_off": 1}


def home_devices(rate: float) -> list[dict]:
    """Twelve devices: four bulbs, five plugs, a thermostat, a voice
    assistant and a kettle.  ``rate`` scales spontaneous activity."""
    devs = []
    for i in range(1, 5):
        d = {"id": f"L{i}", "type": "smart_bulb", "addr": f"10.0.0.{10 + i}", "initial_state": "off",
             "probability": rate, "roots": _BULB_ROOTS}
        if i == 1:
            d["proto"] = "UDP"
        devs.append(d)
    for i in range(1, 6):
        devs.append({"id": f"S{i}", "type": "smart_plug", "addr": f"10.0.0.{20 + i}", "initial_state": False,
                     "probability": rate, "roots": _PLUG_ROOTS})
    devs.append({"id": "T1", "type": "thermostat", "addr": "10.0.0.31", "initial_state": "off",
                 "probability": 1.5 * rate,
                 "roots": {"temp_reading": 8, "set_heat": 1, "set_cool": 1, "set_off": 1, "fan_on": 1}})
    devs.append({"id": "E1", "type": "voice_assistant", "addr": "10.0.0.41", "initial_state": "idle",
                 "probability": 1.5 * rate, "roots": {"voice_command": 6, "play_media": 1, "stop_media": 2}})
    devs.append({"id": "K1", "type": "smart_kettle", "addr": "10.0.0.51", "initial_state": "off",
                 "probability": rate, "roots": {"boil_done": 2, "keep_warm": 1, "kettle_off": 2}})
    return devs


def _rule(rid, tdev, tev, adev, aev, cond=None):
    r = {"id": rid, "trigger": {"device": tdev, "event": tev}, "action": {"device": adev, "event": aev}}
    if cond is not None:
        r["condition"] = {"field": "value", "op": cond[0], "value": cond[1]}
    return r


HOME_RULES = [
    _rule("voice-lights-on-1", "E1", "voice_command", "L1", "turn_on", ("=", "lights_on")),
    _rule("voice-lights-on-2", "E1", "voice_command", "L2", "turn_on", ("=", "lights_on")),
    _rule("voice-lights-off-1", "E1", "voice_command", "L1", "turn_off", ("=", "lights_off")),
    _rule("voice-lights-off-2", "E1", "voice_command", "L2", "turn_off", ("=", "lights_off")),
    _rule("voice-tea", "E1", "voice_command", "K1", "kettle_on", ("=", "tea")),
    _rule("voice-morning", "E1", "voice_command", "L1", "turn_on", ("=", "morning")),
    _rule("hall-light-plug", "L1", "turn_on", "S3", "plug_on"),
    _rule("plug-kettle", "S3", "plug_on", "K1", "kettle_on"),
    _rule("kettle-music", "K1", "kettle_on", "E1", "play_media"),
    _rule("kettle-done", "K1", "boil_done", "E1", "alarm"),
    _rule("too-hot-fan", "T1", "temp_reading", "S1", "plug_on", (">", 78)),
    _rule("too-cold-heater", "T1", "temp_reading", "S2", "plug_on", ("<", 62)),
    _rule("lamp-follow", "L2", "turn_on", "L4", "set_brightness"),
    _rule("overload-alarm", "S5", "power_report", "E1", "alarm", (">", 900)),
    _rule("overload-cutoff", "S4", "power_report", "S4", "plug_off", (">", 1500)),
]

# (action device, action event) pairs used for compromised interactions;
# each has at least one downstream rule so the damage propagates.
PROPAGATING_ACTIONS = [("L1", "turn_on"), ("S3", "plug_on"), ("K1", "kettle_on"), ("L2", "turn_on")]
# secondary targets without downstream rules
LEAF_ACTIONS = [("L3", "turn_on"), ("S1", "plug_on"), ("S2", "plug_on"), ("L4", "set_brightness"),
                ("T1", "set_heat"), ("S5", "plug_on"), ("E1", "play_media"), ("S4", "plug_on")]


def home_doc(name: str, seed: int, duration_ticks: int, rate: float) -> dict:
    return {
        "schema": SCHEMA_VERSION, "name": name, "seed": seed, "tick_seconds": DEFAULT_TICK,
        "duration_ticks": duration_ticks, "controller": CONTROLLER_ADDR,
        "profiles": copy.deepcopy(HOME_PROFILES), "devices": home_devices(rate),
        "rules": copy.deepcopy(HOME_RULES), "injections": [],
    }


def _pick_event(rng, prof: TrafficProfile, reports: Optional[bool]) -> str:
    names = [e for e, p in prof.events.items() if reports is None or p.is_report == reports]
    return names[int(rng.integers(len(names)))]


def _licensed(cfg: ScenarioConfig, rules: RuleSet, root_dev, root_ev, act_dev, act_ev) -> bool:
    reg = cfg.registry()
    parent = TreeNode(None, root_dev, root_ev)
    child = TreeNode(None, act_dev, act_ev)
    # conservative: any rule on this pair counts, whatever its condition
    return any(r.trigger.matches(root_dev, reg.get(root_dev).device_type)
               and r.action.matches(act_dev, reg.get(act_dev).device_type)
               for r in rules.candidates(parent.event_type, child.event_type))


def plan_compromised(cfg: ScenarioConfig, rng, count: int, first_tick: int, last_tick: int) -> list:
    """Compromised interactions with distinct action devices.

    Each injection's root device is never the action device of an earlier
    one, so its root reading is still accepted once earlier originators
    have been isolated.
    """
    rules = cfg.ruleset()
    pool = [a for a in PROPAGATING_ACTIONS] + [a for a in LEAF_ACTIONS]
    order = list(PROPAGATING_ACTIONS) + [pool[len(PROPAGATING_ACTIONS) + i]
                                         for i in rng.permutation(len(LEAF_ACTIONS))]
    if count > len(order):
        raise ScenarioError("INVALID_CONFIG", f"at most {len(order)} compromised interactions per scenario")
    ticks = np.sort(rng.choice(np.arange(first_tick, last_tick), size=count, replace=False))
    used, out = set(), []
    for tick, (act_dev, act_ev) in zip(ticks, order[:count]):
        used.add(act_dev)
        roots = [d for d in cfg.devices if d.device_id not in used and d.roots]
        for _ in range(50):
            root = roots[int(rng.integers(len(roots)))]
            prof = cfg.profile_of(root)
            root_ev = _pick_event(rng, prof, reports=True) if any(
                p.is_report for p in prof.events.values()) else list(root.roots)[0]
            if not _licensed(cfg, rules, root.device_id, root_ev, act_dev, act_ev):
                break
        else:
            raise ScenarioError("INVALID_CONFIG", f"no unlicensed root found for {act_dev}/{act_ev}")
        out.append(InjectedAnomaly(AnomalyKind.COMPROMISED_INTERACTION, root.device_id, int(tick),
                                   {"event": root_ev, "action_device": act_dev, "action_event": act_ev}))
    return out


def _bogus_value(rng, ev: EventProfile):
    lo, hi = ev.values
    span = hi - lo
    if rng.random() < 0.5:
        return int(hi + 1 + rng.integers(max(1, span // 4)))
    return int(lo - 1 - rng.integers(max(1, span // 4)))


def plan_injections(cfg: ScenarioConfig, rng, counts: dict) -> list:
    """Random injections of the requested kinds (COMPROMISED excluded)."""
    out = []
    T = cfg.duration_ticks
    numeric_reports = [(d, e) for d in cfg.devices for e, p in cfg.profile_of(d).events.items()
                       if p.is_report and isinstance(p.values, list)]
    for kind, n in counts.items():
        kind = AnomalyKind(kind)
        for _ in range(int(n)):
            tick = int(rng.integers(0, T))
            if kind is AnomalyKind.FALSE_READING:
                d, e = numeric_reports[int(rng.integers(len(numeric_reports)))]
                out.append(InjectedAnomaly(kind, d.device_id, tick,
                                           {"event": e, "value": _bogus_value(rng, cfg.profile_of(d).events[e])}))
                continue
            d = cfg.devices[int(rng.integers(len(cfg.devices)))]
            prof = cfg.profile_of(d)
            if kind is AnomalyKind.GHOST_COMMAND:
                params = {"event": _pick_event(rng, prof, reports=False)}
            elif kind is AnomalyKind.DELAYED_UPDATE:
                params = {"event": _pick_event(rng, prof, reports=None), "delay_ticks": int(rng.integers(3, 8))}
            else:
                params = {"event": _pick_event(rng, prof, reports=None)}
            out.append(InjectedAnomaly(kind, d.device_id, tick, params))
    return out


S1_DURATION = 42000
S1_RATE = 0.02
S1_COUNTS = {"GHOST_COMMAND": 340, "COMMAND_FAILURE": 330, "DELAYED_UPDATE": 330,
             "EVENT_LOSS": 40, "FALSE_READING": 50}
S1_COMPROMISED = 10


def scenario_s0(seed: int = 7, duration_ticks: int = S1_DURATION) -> ScenarioConfig:
    """Injection-free home with the same devices and rules as S1."""
    return config_from_dict(home_doc("S0", seed, duration_ticks, S1_RATE))


def scenario_s1(seed: int = 42) -> ScenarioConfig:
    cfg = config_from_dict(home_doc("S1", seed, S1_DURATION, S1_RATE))
    rng = np.random.default_rng([seed, 1])
    inj = plan_injections(cfg, rng, S1_COUNTS)
    inj += plan_compromised(cfg, rng, S1_COMPROMISED, 2 * S1_DURATION // 3, S1_DURATION - 200)
    cfg.injections = sorted(inj, key=lambda i: (i.tick, i.kind.value, i.target_device))
    validate_config(cfg)
    return cfg


def scenario_family(seed: int, duration_ticks: int = 6000, compromised: int = 10,
                    counts: Optional[dict] = None) -> ScenarioConfig:
    """A shorter home run with only compromised interactions by default."""
    cfg = config_from_dict(home_doc(f"F{seed}", seed, duration_ticks, S1_RATE))
    rng = np.random.default_rng([seed, 2])
    inj = plan_injections(cfg, rng, counts or {})
    if compromised:
        inj += plan_compromised(cfg, rng, compromised, 50, duration_ticks - 100)
    cfg.injections = sorted(inj, key=lambda i: (i.tick, i.kind.value, i.target_device))
    validate_config(cfg)
    return cfg


def empty_scenario(duration_ticks: int = 100, seed: int = 0) -> ScenarioConfig:
    return config_from_dict({"schema": SCHEMA_VERSION, "name": "empty", "seed": seed,
                             "duration_ticks": duration_ticks, "profiles": {}, "devices": [], "rules": []})


BUILTINS = {"s0": scenario_s0, "s1": scenario_s1, "empty": empty_scenario}
