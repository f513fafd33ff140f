"""Shared fixtures and the acceptance summary hook."""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from iotsentry.events import build_signatures, segment_bursts
from iotsentry.sim import run_scenario
from iotsentry.sim.labels import label_dataset
from iotsentry.sim.scenario import scenario_s0, scenario_s1
from iotsentry.trace import TraceMeta

ACCEPTANCE_TITLES = {
    1: "classifier quality on S1",
    2: "per-event inference latency",
    3: "validate + plan latency",
    4: "rollback correctness over 200 injected anomalies",
    5: "model oracles",
    6: "autoencoder gradient check",
    7: "interaction-tree invariants",
    8: "ingestion round-trips",
    9: "benign closure",
}

_outcomes: dict[int, list[str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    crit = marker.kwargs.get("criterion", marker.args[0] if marker.args else None)
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes.setdefault(crit, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE_TITLES):
        results = _outcomes.get(crit)
        if not results:
            continue
        status = "PASS" if all(r == "passed" for r in results) else "FAIL"
        terminalreporter.write_line(f"{status} criterion {crit}: {ACCEPTANCE_TITLES[crit]} "
                                    f"({results.count('passed')}/{len(results)} checks)")


@dataclass
class ScenarioRun:
    cfg: object
    result: object
    bursts: list
    labeled: object
    directory: object

    @property
    def dataset(self):
        return self.labeled.dataset

    def signatures(self):
        return build_signatures(self.labeled.benign_typed(self.result.ledger_dicts))


def run_and_label(cfg, directory=None) -> ScenarioRun:
    result = run_scenario(cfg)
    if directory is not None:
        result.write(directory)
    registry = cfg.registry()
    meta = TraceMeta(cfg.controller_addr, registry.address_map())
    bursts = segment_bursts(result.packets(), meta)
    labeled = label_dataset(bursts, result.ledger, result.truth, cfg.tick_seconds)
    result.ledger_dicts = [e.relay_dict() for e in result.ledger]
    return ScenarioRun(cfg, result, bursts, labeled, directory)


@pytest.fixture(scope="session")
def s1(tmp_path_factory):
    return run_and_label(scenario_s1(), tmp_path_factory.mktemp("s1"))


@pytest.fixture(scope="session")
def s0(tmp_path_factory):
    return run_and_label(scenario_s0(), tmp_path_factory.mktemp("s0"))


def tiny_doc(**over):
    """Motion sensor M1 driving bulb B1; B2 has no rules."""
    doc = {
        "schema": 1, "name": "tiny", "seed": 3, "duration_ticks": 3000,
        "profiles": {
            "motion_sensor": {"port": 8883, "events": {
                "motion_detected": {"cmd": 90, "rsp": 20, "initiator": "device", "values": [1, 5]}}},
            "smart_bulb": {"port": 5683, "events": {
                "turn_on": {"cmd": 80, "rsp": 40, "sets": "on"},
                "turn_off": {"cmd": 120, "rsp": 40, "sets": "off"}}},
        },
        "devices": [
            {"id": "M1", "type": "motion_sensor", "addr": "10.0.0.2", "initial_state": None,
             "probability": 0.01, "roots": {"motion_detected": 1}},
            {"id": "B1", "type": "smart_bulb", "addr": "10.0.0.3", "initial_state": "off"},
            {"id": "B2", "type": "smart_bulb", "addr": "10.0.0.4", "initial_state": "off"},
        ],
        "rules": [{"id": "r1", "trigger": {"device": "type:motion_sensor", "event": "motion_detected"},
                   "action": {"device": "B1", "event": "turn_on"}}],
        "injections": [],
    }
    doc.update(over)
    return doc
