"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import sys
import time
from collections import Counter
from pathlib import Path
from typing import Optional

from . import __version__
from .bench import ResourceSampler, base_report, config_digest, require_events, summarize_ms
from .controller import Controller
from .errors import ModelError, SentryError
from .events import (DEFAULT_GAP_THRESHOLD, FEATURE_DIM, NO_MATCH, SignatureIndex, build_signatures, featurize,
                     load_signatures, save_signatures, segment_bursts)
from .interactions import load_registry, load_rules, save_registry
from .models import MODEL_KINDS, Label, evaluate, load_model, save_model, train_model
from .models.metrics import confusion, metrics_from_counts
from .rollback import RecordingActuator
from .sim.engine import run_scenario
from .sim.labels import LedgerJoin, label_dataset, load_ledger, load_truth, replay_oracle
from .sim.scenario import BUILTINS, load_scenario
from .trace import TraceMeta, read_trace

IO_EXIT = 10


# --------------------------------------------------------------------------
# input resolution

def _sibling(args, attr: str, name: str, required: bool = True) -> Optional[Path]:
    """Explicit flag, else a file of the given name next to the trace."""
    value = getattr(args, attr, None)
    if value:
        return Path(value)
    guess = Path(args.trace).with_name(name)
    if guess.exists() or required:
        return guess
    return None


def _load_trace(args):
    registry = load_registry(_sibling(args, "registry", "devices.json"))
    meta = TraceMeta(registry.controller_addr, registry.address_map())
    records = read_trace(args.trace, meta)
    bursts = segment_bursts(records, meta, args.gap_threshold)
    return registry, bursts


def _inputs(args, *attrs) -> list:
    return [getattr(args, a, None) for a in attrs]


def _settings(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "format")}


def _with_means_guarded(metrics: dict) -> dict:
    n = metrics.get("_n", None)
    metrics.pop("_n", None)
    if n is not None and n < 30:
        metrics["mean_inference_ms"] = None
    return metrics


# --------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> dict:
    name = str(args.scenario).lower()
    if args.seed is not None and name in BUILTINS:
        cfg = BUILTINS[name](seed=args.seed)
    else:
        cfg = load_scenario(args.scenario)
        if args.seed is not None:
            cfg.seed = args.seed
    result = run_scenario(cfg)
    paths = result.write(args.out)
    report = base_report("simulate", config_digest(_settings(args), _inputs(args, "scenario")))
    report["counts"] = {"events": len(result.ledger), "packets": len(result.records),
                        "injections": len(cfg.injections), **{k.lower(): v for k, v in
                                                              result.truth["label_counts"].items()}}
    report["artifacts"] = {k: str(v) for k, v in paths.items()}
    return report


def cmd_extract(args) -> dict:
    _, bursts = _load_trace(args)
    ledger = load_ledger(_sibling(args, "ledger", "ledger.jsonl"))
    truth_path = _sibling(args, "truth", "truth.json", required=False)
    if truth_path is not None:
        typed = label_dataset(bursts, ledger, load_truth(truth_path), args.tick).benign_typed(ledger)
    else:
        join = LedgerJoin(ledger, args.tick)
        by_id = {e["id"]: e for e in ledger}
        typed = []
        for b in bursts:
            i = join.find(b.device_id, b.start_ts)
            if i is not None:
                typed.append((b, by_id[i]["event"]))
    sigs = build_signatures(typed)
    save_signatures(args.out, sigs)
    report = base_report("extract-signatures",
                         config_digest(_settings(args), _inputs(args, "trace", "ledger", "truth", "registry")))
    report["counts"] = {"bursts": len(bursts), "training_bursts": len(typed), "signatures": len(sigs)}
    report["artifacts"] = {"signatures": str(args.out)}
    return report


def _hyperparameters(args) -> dict:
    kind = args.model_kind
    hp = {}
    if kind == "knn" and args.k is not None:
        hp["k"] = args.k
    if kind in ("dtree", "rforest") and args.max_depth is not None:
        hp["max_depth"] = args.max_depth
    if kind == "rforest" and args.n_trees is not None:
        hp["n_trees"] = args.n_trees
    if kind == "autoenc":
        for flag, name in (("hidden", "h"), ("epochs", "epochs"), ("learning_rate", "learning_rate")):
            if getattr(args, flag) is not None:
                hp[name] = getattr(args, flag)
    return hp


def cmd_train(args) -> dict:
    if args.model_kind not in MODEL_KINDS:
        raise ModelError("MODEL_KIND_UNKNOWN", f"unknown model kind {args.model_kind!r}; "
                         f"choose from {', '.join(MODEL_KINDS)}")
    _, bursts = _load_trace(args)
    ledger = load_ledger(_sibling(args, "ledger", "ledger.jsonl"))
    truth = load_truth(_sibling(args, "truth", "truth.json"))
    data = label_dataset(bursts, ledger, truth, args.tick).dataset
    train, test = data.split(args.train_fraction, args.seed)
    model = train_model(args.model_kind, train, seed=args.seed, **_hyperparameters(args))
    save_model(args.out, model)
    report = base_report("train", config_digest(_settings(args), _inputs(args, "trace", "ledger", "truth")))
    if len(test):
        m = evaluate(model, test).to_dict()
        m["_n"] = len(test)
        report["metrics"] = _with_means_guarded(m)
    report["counts"] = {"rows": len(data), "train_rows": len(train), "test_rows": len(test)}
    report["artifacts"] = {"model": str(args.out)}
    return report


def _load_model_and_signatures(args):
    sigs = load_signatures(args.signatures)
    model = load_model(args.model, expected_dim=FEATURE_DIM)
    return model, SignatureIndex(sigs)


def cmd_detect(args) -> dict:
    model, sigs = _load_model_and_signatures(args)
    _, bursts = _load_trace(args)
    ledger_path = _sibling(args, "ledger", "ledger.jsonl", required=False)
    ledger = load_ledger(ledger_path) if ledger_path is not None else []
    join = LedgerJoin(ledger, args.tick)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preds, timings, discarded, no_match = [], [], set(), 0
    with open(out / "verdicts.jsonl", "w", encoding="utf-8") as fh:
        for b in bursts:
            fv = featurize(b)
            t0 = time.perf_counter()
            code = model.predict_code(fv)
            timings.append((time.perf_counter() - t0) * 1e3)
            preds.append(code)
            lid = join.find(b.device_id, b.start_ts) if ledger else None
            if code and lid is not None:
                discarded.add(lid)
            sig = sigs.match(fv, b.device_id)
            no_match += sig == NO_MATCH
            fh.write(json.dumps({"device": b.device_id, "ts": b.start_ts, "ledger_id": lid, "signature": sig,
                                 "verdict": Label.from_code(code).value}) + "\n")
    if ledger:
        with open(out / "ledger.jsonl", "w", encoding="utf-8") as fh:
            for e in ledger:
                fh.write(json.dumps({**e, "discarded": e["id"] in discarded}, separators=(",", ":")) + "\n")
    report = base_report("detect", config_digest(_settings(args), _inputs(args, "trace", "model", "signatures")))
    report["timing"] = {"inference_ms": summarize_ms(timings)}
    report["counts"] = {"events": len(bursts), "anomalous": int(sum(preds)), "no_match": no_match}
    truth_path = _sibling(args, "truth", "truth.json", required=False)
    if truth_path is not None and ledger:
        y = label_dataset(bursts, ledger, load_truth(truth_path), args.tick).dataset.y
        m = metrics_from_counts(*confusion(y, preds), timings_ms=timings).to_dict()
        m["_n"] = len(timings)
        report["metrics"] = _with_means_guarded(m)
    report["artifacts"] = {"verdicts": str(out / "verdicts.jsonl")}
    return report


def _replay(args):
    model, sigs = _load_model_and_signatures(args)
    registry, bursts = _load_trace(args)
    rules = load_rules(_sibling(args, "rules", "rules.json"))
    ledger = load_ledger(_sibling(args, "ledger", "ledger.jsonl"))
    return model, sigs, registry, bursts, rules, ledger


def _replay_report(command, args, ctl: Controller, res, ledger, bursts) -> dict:
    report = base_report(command, config_digest(
        _settings(args), _inputs(args, "trace", "model", "signatures", "rules", "ledger", "registry")))
    report["timing"] = {"inference_ms": summarize_ms(res.inference_ms),
                        "validate_plan_ms": summarize_ms(res.interaction_ms)}
    verdicts = Counter(v.verdict for v in res.verdicts)
    report["counts"] = {"events": len(bursts), "packet_anomalies": res.packet_anomalies,
                        "interaction_anomalies": res.interaction_anomalies, "rollbacks": len(res.rollbacks),
                        "no_match": res.no_match, **{f"verdict_{k.lower()}": n for k, n in verdicts.items()}}
    report["rollbacks"] = [r.to_dict() for r in res.rollbacks]
    truth_path = _sibling(args, "truth", "truth.json", required=False)
    if truth_path is not None:
        truth = load_truth(truth_path)
        initial = {r.device_id: r.initial_state for r in ctl.registry}
        oracle = replay_oracle(ledger, truth, initial, res.isolations, res.dropped)
        report["counts"]["oracle_mismatches"] = sum(
            1 for d, s in oracle.items() if ctl.registry.get(d).state != s)
        report["counts"]["injected_interaction_anomalies"] = sum(
            1 for i in truth["injections"] if i["kind"] == "COMPROMISED_INTERACTION")
    return report


def cmd_replay(args) -> dict:
    model, sigs, registry, bursts, rules, ledger = _replay(args)
    ctl = Controller(registry, rules, sigs, model, ledger, args.tick, RecordingActuator(),
                     args.quiescence)
    res = ctl.run(bursts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "final_state.json").write_text(json.dumps(
        {r.device_id: {"state": r.state, "status": r.status.value} for r in ctl.registry}, indent=1))
    (out / "rollbacks.json").write_text(json.dumps([r.to_dict() for r in res.rollbacks], indent=1))
    with open(out / "verdicts.jsonl", "w", encoding="utf-8") as fh:
        for v in res.verdicts:
            fh.write(json.dumps(v.to_dict()) + "\n")
    ctl.logs.write(out / "logs")
    ctl.interaction_log.write(out / "interactions")
    save_registry(out / "devices.json", ctl.registry)
    report = _replay_report("replay", args, ctl, res, ledger, bursts)
    report["artifacts"] = {"final_state": str(out / "final_state.json"), "rollbacks": str(out / "rollbacks.json"),
                           "verdicts": str(out / "verdicts.jsonl"), "logs": str(out / "logs"),
                           "interactions": str(out / "interactions"), "registry": str(out / "devices.json")}
    return report


def cmd_bench(args) -> dict:
    model, sigs, registry, bursts, rules, ledger = _replay(args)
    require_events(len(bursts))
    ctl = Controller(registry, rules, sigs, model, ledger, args.tick, RecordingActuator(), args.quiescence)
    with ResourceSampler() as sampler:
        res = ctl.run(bursts)
    report = _replay_report("bench", args, ctl, res, ledger, bursts)
    report["resources"] = sampler.summary()
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1))
        report["artifacts"] = {"report": str(args.out)}
    return report


def _set_status(args, isolate: bool) -> dict:
    path = Path(args.registry)
    registry = load_registry(path)
    (registry.isolate if isolate else registry.reactivate)(args.device)
    save_registry(args.out or path, registry)
    report = base_report("isolate" if isolate else "reactivate", config_digest(_settings(args)))
    report["counts"] = {"isolated": sum(1 for r in registry if not r.active)}
    report["artifacts"] = {"registry": str(args.out or path)}
    return report


def cmd_isolate(args) -> dict:
    return _set_status(args, True)


def cmd_reactivate(args) -> dict:
    return _set_status(args, False)


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iotsentry",
                                description="Detect, attribute and roll back anomalous IoT device interactions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trace=True):
        sp.add_argument("--format", choices=["json"], default="json", help="report format")
        if trace:
            sp.add_argument("--trace", required=True, help="pcap or canonical JSONL trace")
            sp.add_argument("--registry", help="device registry JSON (default: devices.json next to the trace)")
            sp.add_argument("--ledger", help="controller relay log (default: ledger.jsonl next to the trace)")
            sp.add_argument("--gap-threshold", type=float, default=DEFAULT_GAP_THRESHOLD,
                            help="seconds of silence that close a burst")
            sp.add_argument("--tick", type=float, default=0.1, help="simulator tick used for relay-log joins")
        return sp

    sp = common(sub.add_parser("simulate", help="run a scenario and write trace, ledger and truth"), trace=False)
    sp.add_argument("--scenario", required=True, help="scenario file, or builtin name s0 / s1 / empty")
    sp.add_argument("--seed", type=int, help="override the scenario seed")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("extract-signatures", help="learn per-(device, event) signatures"))
    sp.add_argument("--truth", help="ground truth; when given only BENIGN bursts are used")
    sp.add_argument("--out", required=True, help="signature database file")
    sp.set_defaults(func=cmd_extract)

    sp = common(sub.add_parser("train", help="train a classifier on labelled bursts"))
    sp.add_argument("--truth", help="ground truth (default: truth.json next to the trace)")
    sp.add_argument("--model-kind", required=True, help="one of " + ", ".join(MODEL_KINDS))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--train-fraction", type=float, default=0.7)
    sp.add_argument("--k", type=int)
    sp.add_argument("--max-depth", type=int)
    sp.add_argument("--n-trees", type=int)
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--out", required=True, help="model file")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("detect", help="per-event packet-level verdicts"))
    sp.add_argument("--model", required=True)
    sp.add_argument("--signatures", required=True)
    sp.add_argument("--truth", help="ground truth for metrics")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_detect)

    for name, func, helptext in (("replay", cmd_replay, "full pipeline with rollback"),
                                 ("bench", cmd_bench, "time inference and validation, sample resources")):
        sp = common(sub.add_parser(name, help=helptext))
        sp.add_argument("--model", required=True)
        sp.add_argument("--signatures", required=True)
        sp.add_argument("--rules", help="automation rules (default: rules.json next to the trace)")
        sp.add_argument("--truth", help="ground truth for the state oracle")
        sp.add_argument("--quiescence", type=float, default=5.0, help="seconds before a tree closes")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=(name == "replay"),
                        help="output directory" if name == "replay" else "report file")
        sp.set_defaults(func=func)

    for name, func in (("isolate", cmd_isolate), ("reactivate", cmd_reactivate)):
        sp = common(sub.add_parser(name, help=f"{name} a device in a registry file"), trace=False)
        sp.add_argument("--registry", required=True)
        sp.add_argument("--device", required=True)
        sp.add_argument("--out", help="write the registry here instead of in place")
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = args.func(args)
    except SentryError as exc:
        print(f"error: {exc.qualified_code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return IO_EXIT
    print(json.dumps(report, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
