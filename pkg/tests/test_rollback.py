import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iotsentry.errors import RollbackError
from iotsentry.events import EventLog, EventRecord
from iotsentry.interactions import (DeviceRecord, DeviceRegistry, RuleSet, Verdict, affected_set, new_tree,
                                    register_device, validate_interaction)
from iotsentry.rollback import (INITIAL, Outcome, RecordingActuator, RollbackPlan, StableStateEntry,
                                execute_rollback, last_stable_state, plan_rollback)

DEVICES = ["M1", "SM1", "B1", "P1", "K1"]


def registry():
    reg = DeviceRegistry()
    for i, d in enumerate(DEVICES):
        register_device(reg, DeviceRecord(d, "generic", f"10.0.0.{i + 2}", f"{d}-init"))
    return reg


def logged(log, root, key, state, ts, verdict="VALID"):
    ev = EventRecord(log.device_id, "set", ts, state=state, verdict=verdict)
    ev.assign_key(root, key)
    log.append(ev)
    return ev


# --------------------------------------------------------------------------
# stable states


def test_empty_log_gives_initial():
    reg = registry()
    e = last_stable_state(EventLog("B1"), reg, "B1")
    assert (e.state, e.source_key) == ("B1-init", INITIAL)
    assert last_stable_state(None, reg, "B1").state == "B1-init"


def test_excluded_entry_is_skipped():
    reg = registry()
    log = EventLog("B1")
    logged(log, "M1", "1.2", "on", 1.0)
    logged(log, "M1", "2.2", "off", 2.0)
    e = last_stable_state(log, reg, "B1", frozenset({("M1", "2.2")}))
    assert (e.state, e.source_key, e.ts) == ("on", ("M1", "1.2"), 1.0)


def test_non_valid_entries_are_skipped():
    reg = registry()
    log = EventLog("B1")
    logged(log, "M1", "1.2", "on", 1.0)
    logged(log, "M1", "2.2", "dim", 2.0, verdict="ANOMALOUS")
    logged(log, "M1", "3.2", "off", 3.0, verdict="PENDING")
    assert last_stable_state(log, reg, "B1").state == "on"


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from(["VALID", "ANOMALOUS", "PENDING"]), st.booleans()), max_size=30))
def test_stable_state_matches_backward_scan(rows):
    reg = registry()
    log = EventLog("B1")
    exclude = set()
    for i, (verdict, excluded) in enumerate(rows):
        logged(log, "M1", f"{i + 1}.2", f"s{i}", float(i), verdict)
        if excluded:
            exclude.add(("M1", f"{i + 1}.2"))
    expect = "B1-init"
    for i in range(len(rows) - 1, -1, -1):
        if rows[i][0] == "VALID" and not rows[i][1]:
            expect = f"s{i}"
            break
    assert last_stable_state(log, reg, "B1", frozenset(exclude)).state == expect


# --------------------------------------------------------------------------
# plans


def branching_tree(reg):
    """Root M1, F=SM1 under it, G=B1 and H=P1 under F, I=K1 under H."""
    tree = new_tree(reg, "M1")
    f = tree.attach(tree.root_key, "SM1", "activate")
    g = tree.attach(f, "B1", "turn_on")
    h = tree.attach(f, "P1", "plug_on")
    i = tree.attach(h, "K1", "kettle_on")
    rules = RuleSet()
    for k in (tree.root_key, f, g, h, i):
        validate_interaction(tree, k, rules, reg)
    return tree, f, g, h, i


def test_branching_tree_plan():
    reg = registry()
    tree, f, g, h, i = branching_tree(reg)
    logs = {d: EventLog(d) for d in DEVICES}
    logged(logs["B1"], "M1", "0.9", "earlier", 0.5)
    plan = plan_rollback(tree, f, logs, reg)
    assert [e.device_id for e in plan.entries] == ["K1", "P1", "B1", "SM1"]
    assert plan.isolate == "SM1"
    assert [e.state for e in plan.entries] == ["K1-init", "P1-init", "earlier", "SM1-init"]
    assert ("M1", str(h)) in plan.exclude and ("M1", str(tree.root_key)) not in plan.exclude


def test_leaf_plan_has_one_entry():
    reg = registry()
    tree = new_tree(reg, "M1")
    leaf = tree.attach(tree.root_key, "K1", "kettle_on")
    validate_interaction(tree, tree.root_key, RuleSet(), reg)
    validate_interaction(tree, leaf, RuleSet(), reg)
    plan = plan_rollback(tree, leaf, {}, reg)
    assert [e.device_id for e in plan.entries] == ["K1"] and plan.isolate == "K1"


def test_plan_errors():
    reg = registry()
    tree, f, g, *_ = branching_tree(reg)
    with pytest.raises(RollbackError) as exc:
        plan_rollback(tree, tree.root_key, {}, reg)
    assert exc.value.code == "NODE_NOT_ANOMALOUS"
    empty = RollbackPlan(f, "M1", [], "SM1")
    with pytest.raises(RollbackError) as exc:
        execute_rollback(empty, RecordingActuator(), reg)
    assert exc.value.code == "EMPTY_PLAN"


def test_repeated_device_gets_single_entry():
    reg = registry()
    tree = new_tree(reg, "M1")
    a = tree.attach(tree.root_key, "SM1", "activate")
    b = tree.attach(a, "B1", "turn_on")
    tree.attach(b, "SM1", "activate")
    for k in sorted(tree.nodes, key=lambda k: k.y):
        validate_interaction(tree, k, RuleSet(), reg)
    plan = plan_rollback(tree, a, {}, reg)
    assert [e.device_id for e in plan.entries] == ["SM1", "B1"]


# --------------------------------------------------------------------------
# execution


def test_execute_restores_in_order_then_isolates():
    reg = registry()
    tree, f, *_ = branching_tree(reg)
    for d in DEVICES:
        reg.set_state(d, "tampered")
    act = RecordingActuator()
    rep = execute_rollback(plan_rollback(tree, f, {}, reg), act, reg, executed_at=9.0)
    assert act.commands == [("K1", "K1-init"), ("P1", "P1-init"), ("B1", "B1-init"), ("SM1", "SM1-init")]
    assert rep.outcomes == [Outcome.RESTORED] * 4
    assert not reg.get("SM1").active
    assert all(reg.get(d).active for d in DEVICES if d != "SM1")
    assert reg.get("M1").state == "tampered"
    d = rep.to_dict()
    assert d["isolated"] == "SM1" and d["executed_at"] == 9.0 and len(d["entries"]) == 4


def test_failure_does_not_stop_remaining_entries():
    reg = registry()
    tree, f, *_ = branching_tree(reg)
    act = RecordingActuator(fail_on={"P1"})
    rep = execute_rollback(plan_rollback(tree, f, {}, reg), act, reg)
    assert rep.outcomes == [Outcome.RESTORED, Outcome.FAILED, Outcome.RESTORED, Outcome.RESTORED]
    assert [c[0] for c in act.commands] == ["K1", "B1", "SM1"]
    assert "P1" in rep.to_dict()["entries"][1]["reason"]
    assert not reg.get("SM1").active


def test_execution_is_idempotent():
    reg = registry()
    tree, f, *_ = branching_tree(reg)
    plan = plan_rollback(tree, f, {}, reg)
    execute_rollback(plan, RecordingActuator(), reg)
    first = reg.snapshot()
    execute_rollback(plan, RecordingActuator(), reg)
    assert reg.snapshot() == first


def test_check_rejects_bad_plans():
    e = StableStateEntry("B1", "x", INITIAL, 0.0)
    reg = registry()
    tree, f, *_ = branching_tree(reg)
    with pytest.raises(RollbackError) as exc:
        RollbackPlan(f, "M1", [e, e], "B1").check()
    assert exc.value.code == "DUPLICATE_ENTRY"
    with pytest.raises(RollbackError):
        RollbackPlan(f, "M1", [e], "K1").check()


@settings(max_examples=60)
@given(st.lists(st.integers(0, 1000), min_size=1, max_size=25), st.integers(0, 1000), st.integers(0, 1000))
def test_isolation_contained_to_originator(parents, pick, seed):
    reg = registry()
    rng = random.Random(seed)
    tree = new_tree(reg, "M1")
    keys = [tree.root_key]
    for p in parents:
        keys.append(tree.attach(keys[p % len(keys)], rng.choice(DEVICES[1:]), "set"))
    rules = RuleSet()
    for k in keys:
        validate_interaction(tree, k, rules, reg)
    target = keys[1 + pick % (len(keys) - 1)]
    assert tree.nodes[target].validation is Verdict.ANOMALOUS
    plan = plan_rollback(tree, target, {}, reg)
    rep = execute_rollback(plan, RecordingActuator(), reg)
    touched = {dev for _, dev in affected_set(tree, target)}
    assert {e.device_id for e in plan.entries} == touched
    assert [d for d in DEVICES if not reg.get(d).active] == [tree.nodes[target].device_id]
    assert all(o is Outcome.RESTORED for o in rep.outcomes)
