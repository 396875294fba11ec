"""Shared test machinery: seeded trace generators per builtin spec, paired
online/offline runs, and value normalization for comparing error markers."""

from __future__ import annotations

import random

from streamrv.engine import Monitor, Poison
from streamrv.logstore import Event, InMemoryLogStore, StoreRetriever
from streamrv.offline import Err, run_offline
from streamrv.specs_builtin import builtin_names, builtin_spec
from streamrv import ddos

ERROR = ("<error>",)


def normalize(v):
    """Collapse engine poisons and oracle error markers into one token so the
    two evaluators can be compared structurally."""
    if isinstance(v, (Poison, Err)):
        return ERROR
    if isinstance(v, dict):
        return {k: normalize(x) for k, x in v.items()}
    if isinstance(v, tuple):
        return tuple(normalize(x) for x in v)
    return v


def run_engine(spec, registry, trace, stores=None, stats=None):
    """Full online run; returns {stream: [value per instant]} plus the monitor."""
    retrievers = None
    if stores:
        retrievers = {
            name: StoreRetriever(InMemoryLogStore([Event(i, b) for i, b in enumerate(evs)]))
            for name, evs in stores.items()
        }
    m = Monitor(spec, registry, log_store=InMemoryLogStore(), retrievers=retrievers, stats=stats)
    outs = {n: {} for n in m.vs.spec.output_names()}
    for i, b in enumerate(trace):
        for t, n, v in m.step(Event(i, b)).resolved:
            outs[n][t] = v
    for t, n, v in m.finish().resolved:
        outs[n][t] = v
    streams = {n: [outs[n][t] for t in range(len(trace))] for n in outs}
    return streams, m


def run_pair(name, trace, stores=None):
    """(normalized engine streams, normalized oracle streams) for a builtin."""
    spec, registry = builtin_spec(name)
    eng, _ = run_engine(spec, registry, trace, stores=stores)
    off = run_offline(spec, trace, registry, stores=stores)
    e = {n: [normalize(v) for v in vs] for n, vs in eng.items()}
    o = {n: [normalize(v) for v in vs] for n, vs in off.outputs.items()}
    return e, o


def first_divergence(a, b):
    for n in sorted(a):
        for t, (x, y) in enumerate(zip(a[n], b[n])):
            if x != y:
                return (n, t, x, y)
    return None


# ---------------------------------------------------------------------------
# Trace generators


def _gen_altitude(rng, n):
    return [{"altitude": round(rng.uniform(0.0, 600.0), 2)} for _ in range(n)]


def _gen_dyn_altitude(rng, n):
    out = []
    for _ in range(n):
        th = round(rng.uniform(50.0, 150.0), 1) if rng.random() < 0.1 else -1.0
        out.append({"altitude": round(rng.uniform(0.0, 200.0), 2), "threshold": th})
    return out


def _gen_cross(rng, n):
    return [
        {"r": round(rng.uniform(0.0, 10.0), 2), "s": round(rng.uniform(0.0, 10.0), 2)}
        for _ in range(n)
    ]


def _gen_handshake(rng, n):
    hosts = ["a", "b", "c"]
    msgs = ["SYN", "SYN/ACK", "ACK"]
    out = []
    i = 0
    while i < n:
        if rng.random() < 0.6:
            # a mostly-complete handshake, sometimes truncated or reordered
            x, y = rng.sample(hosts, 2)
            seq = [
                {"src": x, "dst": y, "msg": "SYN"},
                {"src": y, "dst": x, "msg": "SYN/ACK"},
                {"src": x, "dst": y, "msg": "ACK"},
            ]
            if rng.random() < 0.3:
                seq = seq[: rng.randint(1, 2)]
            if rng.random() < 0.2:
                rng.shuffle(seq)
            for ev in seq[: n - i]:
                out.append(ev)
                i += 1
        else:
            x, y = rng.sample(hosts, 2)
            out.append({"src": x, "dst": y, "msg": rng.choice(msgs)})
            i += 1
    return out


def _gen_files(rng, n):
    files = ["f1", "f2", "f3", "f4"]
    return [
        {"fileId": rng.choice(files), "op": rng.choice(["create", "rw", "close", "rw"])}
        for _ in range(n)
    ]


def _gen_packetflow(rng, n, attack_at=None):
    out = []
    attack_at = attack_at if attack_at is not None else (rng.randrange(n // 2, n) if rng.random() < 0.5 and n > 20 else None)
    for i in range(n):
        if attack_at is not None and i >= attack_at:
            out.append(
                {"srcAddr": f"s{i % 8}", "dstAddr": "victim", "packets": rng.randint(40, 80)}
            )
        else:
            out.append(
                {
                    "srcAddr": f"s{rng.randrange(30)}",
                    "dstAddr": f"d{rng.randrange(12)}",
                    "packets": rng.randint(1, 6),
                }
            )
    return out


def _gen_flows(rng, n):
    """Small flow mix: benign traffic plus an occasional malformed-UDP burst
    so suspect discovery and retro install paths are exercised."""
    out = []
    burst = rng.random() < 0.6
    burst_at = rng.randrange(max(n // 2, 1)) if burst else n + 1
    t = 0.0
    for i in range(n):
        t += rng.uniform(0.01, 0.4)
        if burst and burst_at <= i < burst_at + max(n // 8, 6):
            pk = rng.randint(400, 900)
            out.append(
                {
                    "startTime": round(t, 3),
                    "endTime": round(t + 0.1, 3),
                    "srcAddr": f"bot{rng.randrange(9)}",
                    "dstAddr": "victim",
                    "srcPort": rng.randint(1024, 60000),
                    "dstPort": 0,
                    "protocol": "UDP",
                    "packets": pk,
                    "bytes": pk * 64,
                }
            )
        else:
            pk = rng.randint(1, 8)
            out.append(
                {
                    "startTime": round(t, 3),
                    "endTime": round(t + rng.uniform(0.0, 1.0), 3),
                    "srcAddr": f"src{rng.randrange(40)}",
                    "dstAddr": f"dst{rng.randrange(15)}",
                    "srcPort": rng.randint(1024, 60000),
                    "dstPort": rng.choice([80, 443, 0, 53]),
                    "protocol": rng.choice(["TCP", "UDP", "ICMP"]),
                    "packets": pk,
                    "bytes": pk * rng.randint(40, 800),
                }
            )
    return out


def gen_trace(name, rng, n):
    """Seeded random input trace for a builtin spec.

    Returns (trace, stores): the event bindings and any named log stores the
    spec needs (only ddos-s3 uses one).
    """
    if name in ("altitude", "paramaltitude"):
        return _gen_altitude(rng, n), None
    if name in ("dyn-altitude", "dyn-altitude-init"):
        return _gen_dyn_altitude(rng, n), None
    if name == "crossspec":
        return _gen_cross(rng, n), None
    if name == "handshake":
        return _gen_handshake(rng, n), None
    if name in ("openfiles", "retro-openfiles"):
        return _gen_files(rng, n), None
    if name == "packetflow":
        return _gen_packetflow(rng, n), None
    if name in ("ddos-s1", "ddos-s2"):
        return _gen_flows(rng, n), None
    if name == "ddos-s3":
        flows = _gen_flows(rng, max(n * 10, 30))
        batches = max(n, 1)
        per = max(len(flows) // batches, 1)
        strace = []
        for b in range(batches):
            lo, hi = b * per, min((b + 1) * per, len(flows))
            if lo >= hi:
                break
            strace.append(
                {
                    "file_id": f"batch{b}",
                    "markers": tuple(ddos.batch_markers(flows[lo:hi])),
                    "flowFrom": lo,
                    "flowTo": hi,
                }
            )
        return strace, {"flows": flows}
    raise KeyError(name)


ALL_BUILTINS = builtin_names()
