import pytest

from conftest import run_and_label, tiny_doc
from iotsentry.controller import DISCARDED, REJECTED, Controller
from iotsentry.events import SignatureIndex
from iotsentry.interactions import EventKey
from iotsentry.rollback import RecordingActuator
from iotsentry.sim import config_from_dict
from iotsentry.sim.labels import replay_oracle


class StubModel:
    """Calls every burst benign, or everything anomalous."""

    def __init__(self, everything=False):
        self.everything = everything

    def predict_code(self, fv):
        return 1 if self.everything else 0


def compromised_doc():
    return tiny_doc(injections=[{"kind": "COMPROMISED_INTERACTION", "device": "M1", "tick": 1500,
                                 "params": {"event": "motion_detected", "action_device": "B2",
                                            "action_event": "turn_on"}}])


def controller(run, model, actuator=None):
    return Controller(run.cfg.registry(), run.cfg.ruleset(), SignatureIndex(run.signatures()), model,
                      run.result.ledger_dicts, run.cfg.tick_seconds, actuator or RecordingActuator())


def initial_states(cfg):
    return {d.device_id: d.initial_state for d in cfg.devices}


def test_benign_run_is_all_valid():
    run = run_and_label(config_from_dict(tiny_doc()))
    ctl = controller(run, StubModel())
    res = ctl.run(run.bursts)
    assert res.rollbacks == []
    assert {v.verdict for v in res.verdicts} == {"VALID"}
    assert len(res.verdicts) == len(run.bursts)
    oracle = replay_oracle(run.result.ledger_dicts, run.result.truth, initial_states(run.cfg))
    assert {r.device_id: r.state for r in ctl.registry} == oracle
    roots = [v for v in res.verdicts if v.key.endswith(".1")]
    assert [int(v.key.split(".")[0]) for v in roots] == list(range(1, len(roots) + 1))


def test_compromised_interaction_is_rolled_back():
    run = run_and_label(config_from_dict(compromised_doc()))
    act = RecordingActuator()
    ctl = controller(run, StubModel(), act)
    res = ctl.run(run.bursts)
    (rep,) = res.rollbacks
    assert rep.plan.isolate == "B2"
    assert act.commands == [("B2", "off")]
    assert not ctl.registry.get("B2").active and ctl.registry.get("B2").state == "off"
    assert ctl.registry.get("B1").active
    (bad,) = [v for v in res.verdicts if v.verdict == "ANOMALOUS"]
    assert bad.device == "B2" and bad.root == "M1"
    oracle = replay_oracle(run.result.ledger_dicts, run.result.truth, initial_states(run.cfg), res.isolations)
    assert {r.device_id: r.state for r in ctl.registry} == oracle


def test_packet_anomalies_are_discarded():
    run = run_and_label(config_from_dict(tiny_doc()))
    ctl = controller(run, StubModel(everything=True))
    res = ctl.run(run.bursts)
    assert {v.verdict for v in res.verdicts} == {DISCARDED}
    assert res.trees == [] and res.rollbacks == []
    assert res.dropped == {v.ledger_id for v in res.verdicts}
    assert {r.device_id: r.state for r in ctl.registry} == initial_states(run.cfg)
    oracle = replay_oracle(run.result.ledger_dicts, run.result.truth, initial_states(run.cfg),
                           dropped=res.dropped)
    assert oracle == initial_states(run.cfg)


def test_isolated_device_is_rejected():
    run = run_and_label(config_from_dict(tiny_doc()))
    ctl = controller(run, StubModel())
    ctl.registry.isolate("B1")
    res = ctl.run(run.bursts)
    b1 = [v for v in res.verdicts if v.device == "B1"]
    assert b1 and all(v.verdict == REJECTED for v in b1)
    assert ctl.registry.get("B1").state == "off"


def test_children_of_discarded_roots_are_rejected():
    run = run_and_label(config_from_dict(tiny_doc()))

    class DropMotion(StubModel):
        def predict_code(self, fv):
            return int(fv[1] != 5683 and fv[0] != 5683)

    ctl = controller(run, DropMotion())
    res = ctl.run(run.bursts)
    by_dev = {}
    for v in res.verdicts:
        by_dev.setdefault(v.device, set()).add(v.verdict)
    assert by_dev["M1"] == {DISCARDED}
    assert by_dev["B1"] == {REJECTED}


def test_trees_close_after_quiescence():
    run = run_and_label(config_from_dict(tiny_doc()))
    ctl = controller(run, StubModel())
    first = run.bursts[0]
    ctl.process(first)
    assert len(ctl.open_trees) == 1
    later = [b for b in run.bursts if b.start_ts >= first.start_ts + ctl.quiescence][0]
    ctl.process(later)
    assert ctl.result.trees and ctl.result.trees[0].finalized


def test_replay_is_deterministic():
    run = run_and_label(config_from_dict(compromised_doc()))
    a = controller(run, StubModel()).run(run.bursts)
    b = controller(run, StubModel()).run(run.bursts)
    assert [v.to_dict() for v in a.verdicts] == [v.to_dict() for v in b.verdicts]
    assert [r.to_dict()["entries"] for r in a.rollbacks] == [r.to_dict()["entries"] for r in b.rollbacks]


def test_logs_carry_keys_and_verdicts():
    run = run_and_label(config_from_dict(compromised_doc()))
    ctl = controller(run, StubModel())
    ctl.run(run.bursts)
    b2 = list(ctl.logs["B2"])
    assert [e.verdict for e in b2] == ["ANOMALOUS"]
    assert b2[0].root_device == "M1"
    x = int(b2[0].key.split(".")[0])
    (tree,) = [t for t in ctl.result.trees if t.root_device == "M1" and t.x == x]
    node = tree.nodes[EventKey.parse(b2[0].key)]
    assert node.parent == tree.root_key
    assert sum(len(v) for v in ctl.interaction_log.lines.values()) == sum(len(t.nodes) for t in ctl.result.trees)


@pytest.mark.parametrize("timing", ["inference_ms", "interaction_ms"])
def test_timings_recorded(timing):
    run = run_and_label(config_from_dict(tiny_doc()))
    res = controller(run, StubModel()).run(run.bursts)
    values = getattr(res, timing)
    assert values and all(t >= 0 for t in values)
