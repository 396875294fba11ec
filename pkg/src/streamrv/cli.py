"""Command-line front end: run monitors over trace files, cross-check the
online engine against the reference evaluator, generate synthetic traffic,
and summarize flow batches.

Exit codes for `run`: 0 no violation, 1 violations observed, 2 engine or
usage error.  A violation is any Boolean output named with suffix `_ok`
resolving false, or a returned verdict of false.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import ddos
from .engine import EngineError, Monitor, Poison
from .logstore import (
    Event,
    ExternalAdapterRetriever,
    FileBackedLogStore,
    StoreRetriever,
    decode_event_line,
    encode_event,
)
from .offline import Err, run_offline
from .spec_io import SpecIOError, load_spec
from .specmodel import Initializer, RunSpecOnLog, SpecValidationError, walk
from .specs_builtin import builtin_names, builtin_spec
from .values import wire_encode


class CliError(Exception):
    pass


def _load_spec_arg(name_or_path: str):
    if name_or_path in builtin_names():
        return builtin_spec(name_or_path)
    p = Path(name_or_path)
    if not p.exists():
        raise CliError(
            f"unknown spec {name_or_path!r}; builtins: {', '.join(builtin_names())}"
        )
    return load_spec(p.read_text()), ddos.ddos_registry()


def _read_events(path: str):
    fh = sys.stdin if path == "-" else open(path)
    try:
        events = []
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                ev = decode_event_line(line)
            except Exception as e:
                raise CliError(f"{path}:{lineno}: {e}") from e
            if ev.instant != len(events):
                raise CliError(f"{path}:{lineno}: expected instant {len(events)}, got {ev.instant}")
            events.append(ev)
        return events
    finally:
        if fh is not sys.stdin:
            fh.close()


def _store_names(spec) -> set:
    names = set()
    for _, _, e in spec.outputs:
        for n in walk(e):
            if isinstance(n, RunSpecOnLog):
                names.add(n.store)
            init = getattr(n, "init", None)
            if isinstance(init, Initializer):
                names.add(init.store)
    return names


def _bind_retrievers(spec, store_dir, adapter):
    """Self store plus one file-backed store per referenced name."""
    needed = _store_names(spec)
    if not needed:
        return None, {}
    if store_dir is None:
        raise CliError(
            f"spec references stores {sorted(needed)}; pass --log-store <dir>"
        )
    d = Path(store_dir)
    d.mkdir(parents=True, exist_ok=True)
    log_store = FileBackedLogStore(d / "self.log")
    retrievers = {}
    for name in needed:
        path = d / "self.log" if name == "self" else d / f"{name}.log"
        if name != "self" and not path.exists():
            raise CliError(f"store {name!r} expects an event file at {path}")
        if adapter:
            retrievers[name] = ExternalAdapterRetriever(adapter, str(path))
        elif name != "self":
            retrievers[name] = StoreRetriever(FileBackedLogStore(path))
    return log_store, retrievers


def _is_violation(name, value, out_types):
    return name.endswith("_ok") and value is False


def cmd_run(args) -> int:
    spec, registry = _load_spec_arg(args.spec)
    events = _read_events(args.input)
    log_store, retrievers = _bind_retrievers(spec, args.log_store, args.adapter)
    m = Monitor(spec, registry, log_store=log_store, retrievers=retrievers)

    report = sys.stdout if args.report is None else open(args.report, "w")
    violations = 0
    poisons = 0
    try:
        def emit(resolved):
            nonlocal violations, poisons
            for t, n, v in resolved:
                if isinstance(v, Poison):
                    poisons += 1
                    print(f"error instant={t} stream={n} {v.message}", file=report)
                    continue
                bad = _is_violation(n, v, None)
                violations += bad
                if args.output == "full":
                    print(json.dumps({"instant": t, "stream": n, "value": wire_encode(v)}), file=report)
                elif bad:
                    print(f"violation instant={t} stream={n}", file=report)

        for ev in events:
            emit(m.step(ev).resolved)
        out = m.finish()
        emit(out.resolved)
        if out.verdict_set:
            v = out.verdict
            print(f"verdict {json.dumps(wire_encode(v)) if not isinstance(v, Poison) else 'error'}", file=report)
            if v is False:
                violations += 1
        print(
            f"done instants={len(events)} violations={violations} errors={poisons}",
            file=report,
        )
    finally:
        if report is not sys.stdout:
            report.close()
    return 1 if violations else 0


def _normalize(v):
    if isinstance(v, (Poison, Err)):
        return ("<error>",)
    if isinstance(v, dict):
        return {k: _normalize(x) for k, x in v.items()}
    if isinstance(v, tuple):
        return tuple(_normalize(x) for x in v)
    return v


def cmd_oracle_check(args) -> int:
    spec, registry = _load_spec_arg(args.spec)
    events = _read_events(args.input)
    trace = [ev.bindings for ev in events]

    from .logstore import InMemoryLogStore

    m = Monitor(spec, registry, log_store=InMemoryLogStore())
    online = {n: {} for n in m.vs.spec.output_names()}
    for ev in events:
        for t, n, v in m.step(ev).resolved:
            online[n][t] = v
    for t, n, v in m.finish().resolved:
        online[n][t] = v

    offline = run_offline(spec, trace, registry)
    for n in sorted(online):
        for t in range(len(trace)):
            a = _normalize(online[n].get(t))
            b = _normalize(offline.outputs[n][t])
            if a != b:
                print(f"divergence at instant={t} stream={n}: online={a!r} offline={b!r}")
                return 1
    print(f"pass: {len(online)} streams x {len(trace)} instants identical")
    return 0


def cmd_gen_traffic(args) -> int:
    trace, gt = ddos.generate_traffic(args.profile, args.flows, args.seed)
    with open(args.out, "w") as fh:
        for i, f in enumerate(trace):
            fh.write(encode_event(Event(i, f.bindings())) + "\n")
    with open(args.out + ".truth.json", "w") as fh:
        json.dump(gt.to_doc(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(trace)} flows to {args.out} (+ ground truth sidecar)")
    return 0


def cmd_summarize(args) -> int:
    events = _read_events(args.input)
    flows = [
        ddos.FlowRecord(
            ev.bindings["startTime"],
            ev.bindings["endTime"],
            ev.bindings["srcAddr"],
            ev.bindings["dstAddr"],
            ev.bindings["srcPort"],
            ev.bindings["dstPort"],
            ev.bindings["protocol"],
            ev.bindings["packets"],
            ev.bindings["bytes"],
        )
        for ev in events
    ]
    summaries = ddos.summarize(flows)
    with open(args.out, "w") as fh:
        for i, s in enumerate(summaries):
            fh.write(encode_event(Event(i, s.bindings())) + "\n")
    print(f"wrote {len(summaries)} batch summaries to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streamrv", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a monitor over an event trace")
    r.add_argument("--spec", required=True, help="builtin name or spec file path")
    r.add_argument("--input", required=True, help="event trace path, or - for stdin")
    r.add_argument("--log-store", help="directory for event log stores (enables retroactive specs)")
    r.add_argument("--adapter", help="external adapter command for past retrieval")
    r.add_argument("--output", choices=["full", "verdicts"], default="verdicts")
    r.add_argument("--report", help="report path (default: stdout)")
    r.set_defaults(fn=cmd_run)

    o = sub.add_parser("oracle-check", help="diff online engine against the reference evaluator")
    o.add_argument("--spec", required=True)
    o.add_argument("--input", required=True)
    o.set_defaults(fn=cmd_oracle_check)

    g = sub.add_parser("gen-traffic", help="generate a synthetic flow trace")
    g.add_argument("--profile", required=True, choices=["d1", "d2", "d3", "d4"])
    g.add_argument("--flows", required=True, type=int)
    g.add_argument("--seed", required=True, type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_traffic)

    s = sub.add_parser("summarize", help="aggregate a flow trace into batch summaries")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, SpecIOError, SpecValidationError, EngineError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
