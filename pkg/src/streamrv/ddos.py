"""Network-flow DDoS detection: attack configuration, the three monitor
constructions, a synthetic traffic generator, and independent batch oracles.

A destination is considered attacked for a given attack class when its
volume marker (packets or bits per second) strictly exceeds t0 and the
number of distinct sources contacting it strictly exceeds t1.  Three
equivalent monitors detect this:

  S1  tracks a distinct-source instance per destination address seen;
  S2  installs a single instance per attack only when the volume marker
      first exceeds t0, recovering that address's past from the log;
  S3  consumes one summary event per batch and analyzes the batch's flows
      with a nested monitor only when a summary marker exceeds t0.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, List, Optional, Tuple

from .functions import FuncDef, Registry
from .specmodel import (
    Apply,
    Const,
    Initializer,
    MOver,
    Now,
    Offset,
    Over,
    PARAM,
    ParametricStreamDef,
    RunSpecOnLog,
    Specification,
)
from .specs_builtin import A, C, EMPTY_SET, N, O, example_registry
from .values import BOOL, FLOAT, INT, TEXT, ANY, map_t, opt_t, set_t, list_t

FLOW_FIELDS = [
    ("startTime", FLOAT),
    ("endTime", FLOAT),
    ("srcAddr", TEXT),
    ("dstAddr", TEXT),
    ("srcPort", INT),
    ("dstPort", INT),
    ("protocol", TEXT),
    ("packets", INT),
    ("bytes", INT),
]

BATCH_SECONDS = 300.0


@dataclass(frozen=True)
class FlowRecord:
    start_time: float
    end_time: float
    src_addr: str
    dst_addr: str
    src_port: int
    dst_port: int
    protocol: str
    packets: int
    bytes: int

    def bindings(self) -> dict:
        return {
            "startTime": self.start_time,
            "endTime": self.end_time,
            "srcAddr": self.src_addr,
            "dstAddr": self.dst_addr,
            "srcPort": self.src_port,
            "dstPort": self.dst_port,
            "protocol": self.protocol,
            "packets": self.packets,
            "bytes": self.bytes,
        }


@dataclass(frozen=True)
class AttackSpec:
    id: int
    name: str
    filter: dict  # conjunctive equality over flow fields
    marker_kind: str  # "pps" | "bps"
    t0: float
    t1: int


@dataclass
class BatchSummary:
    file_id: str
    markers: List[Tuple[int, float]]  # (attackId, maxVolume), ordered by id
    flow_from: int  # index range of the batch in the flow store
    flow_to: int

    def bindings(self) -> dict:
        return {
            "file_id": self.file_id,
            "markers": tuple((i, v) for i, v in self.markers),
            "flowFrom": self.flow_from,
            "flowTo": self.flow_to,
        }


def load_attacks() -> List[AttackSpec]:
    raw = json.loads(resources.files("streamrv").joinpath("data/attacks.json").read_text())
    out = [
        AttackSpec(d["id"], d["name"], d["filter"], d["marker"], float(d["t0"]), int(d["t1"]))
        for d in raw
    ]
    assert [a.id for a in out] == list(range(14))
    return out


# ---------------------------------------------------------------------------
# Independent batch-level oracles (no stream machinery)


def flow_matches(flow: dict, filt: dict) -> bool:
    return all(flow.get(k) == v for k, v in filt.items())


def marker_rate(info: dict, kind: str) -> float:
    """Volume rate of one destination: packets or bits over the observed
    window, with a one second floor for degenerate windows."""
    volume = info["packets"] if kind == "pps" else info["bits"]
    return volume / max(info["end"] - info["start"], 1.0)


def max_dest_address(cur_addr: str, cur_accesses: int, prev_addr: str, prev_accesses: int) -> str:
    if prev_addr == "" or cur_accesses > prev_accesses:
        return cur_addr
    return prev_addr


def entropy_bruteforce(flows: List[dict]) -> Dict[str, int]:
    """Distinct-source count per destination over a full batch."""
    srcs: Dict[str, set] = {}
    for f in flows:
        srcs.setdefault(f["dstAddr"], set()).add(f["srcAddr"])
    return {d: len(s) for d, s in srcs.items()}


def batch_markers(flows: List[dict], attacks: Optional[List[AttackSpec]] = None) -> List[Tuple[int, float]]:
    """Per attack: maximum volume rate over any destination in the batch."""
    attacks = attacks or load_attacks()
    markers = []
    for a in attacks:
        infos: Dict[str, dict] = {}
        for f in flows:
            if flow_matches(f, a.filter):
                e = infos.get(f["dstAddr"])
                if e is None:
                    infos[f["dstAddr"]] = {
                        "packets": f["packets"],
                        "bits": f["bytes"] * 8,
                        "start": f["startTime"],
                        "end": f["endTime"],
                    }
                else:
                    e["packets"] += f["packets"]
                    e["bits"] += f["bytes"] * 8
                    e["start"] = min(e["start"], f["startTime"])
                    e["end"] = max(e["end"], f["endTime"])
        best = max((marker_rate(i, a.marker_kind) for i in infos.values()), default=0.0)
        markers.append((a.id, best))
    return markers


# ---------------------------------------------------------------------------
# Registered stream functions


def _flow_upd(state, src, dst, packets, bytes_, start, end, kind):
    """Fold one matching flow into an attack's per-destination bookkeeping."""
    hist = dict(state["hist"]) if state else {}
    info = dict(state["info"]) if state else {}
    hist[dst] = hist.get(dst, 0) + 1
    e = info.get(dst)
    if e is None:
        e = {"packets": packets, "bits": bytes_ * 8, "start": start, "end": end}
    else:
        e = {
            "packets": e["packets"] + packets,
            "bits": e["bits"] + bytes_ * 8,
            "start": min(e["start"], start),
            "end": max(e["end"], end),
        }
    info[dst] = e
    prev = state["maxaddr"] if state else ""
    maxaddr = max_dest_address(dst, hist[dst], prev, hist.get(prev, 0))
    return {
        "hist": hist,
        "info": info,
        "maxaddr": maxaddr,
        "rate": marker_rate(e, kind),
    }


def _state_rate(state):
    return state["rate"] if state else 0.0


def _state_max(state):
    return state["maxaddr"] if state else ""


def ddos_registry() -> Registry:
    r = example_registry()
    r.register(
        FuncDef(
            "flowUpd",
            8,
            _flow_upd,
            ((map_t(TEXT, ANY), TEXT, TEXT, INT, INT, FLOAT, FLOAT, TEXT), map_t(TEXT, ANY)),
        )
    )
    r.register(FuncDef("stateRate", 1, _state_rate, ((map_t(TEXT, ANY),), FLOAT)))
    r.register(FuncDef("stateMax", 1, _state_max, ((map_t(TEXT, ANY),), TEXT)))
    return r


# ---------------------------------------------------------------------------
# Spec construction


def _matches_expr(filt: dict):
    conj = None
    for k, v in sorted(filt.items()):
        test = A("==", N(k), C(v))
        conj = test if conj is None else A("and", conj, test)
    return conj if conj is not None else C(True)


def _volume_streams(a: AttackSpec, i: str):
    """matches/state/exceeded/maxaddr streams shared by S1 and S2."""
    st_prev = O(f"state_{i}", -1, {})
    return [
        (f"matches_{i}", BOOL, _matches_expr(a.filter)),
        (
            f"state_{i}",
            map_t(TEXT, ANY),
            A(
                "ite",
                N(f"matches_{i}"),
                A(
                    "flowUpd",
                    st_prev,
                    N("srcAddr"),
                    N("dstAddr"),
                    N("packets"),
                    N("bytes"),
                    N("startTime"),
                    N("endTime"),
                    C(a.marker_kind),
                ),
                st_prev,
            ),
        ),
        # once the volume marker exceeds t0 the attack stays under suspicion
        (
            f"exceeded_{i}",
            BOOL,
            A(
                "or",
                O(f"exceeded_{i}", -1, False),
                A(">", A("stateRate", N(f"state_{i}")), C(a.t0)),
            ),
        ),
        (f"maxaddr_{i}", TEXT, A("stateMax", N(f"state_{i}"))),
    ]


def _verdict_streams(a: AttackSpec, i: str):
    v_prev = O(f"victim_{i}", -1, "")
    return [
        (
            f"attacked_{i}",
            BOOL,
            A("and", N(f"exceeded_{i}"), A(">", N(f"ent_{i}"), C(a.t1))),
        ),
        (f"alarm_{i}", BOOL, A("or", O(f"alarm_{i}", -1, False), N(f"attacked_{i}"))),
        (
            f"victim_{i}",
            TEXT,
            A(
                "ite",
                A("==", v_prev, C("")),
                A("ite", N(f"attacked_{i}"), N(f"maxaddr_{i}"), C("")),
                v_prev,
            ),
        ),
    ]


def _srcs_pdef(i: str) -> ParametricStreamDef:
    return ParametricStreamDef(
        f"srcs_{i}",
        TEXT,
        set_t(TEXT),
        A("insert", N("srcAddr"), Offset(f"srcs_{i}", -1, Const(EMPTY_SET))),
    )


def _step_set(i: str):
    # only the current destination's instance advances, and only on a match
    return A("ite", N(f"matches_{i}"), A("insert", N("dstAddr"), C(EMPTY_SET)), C(EMPTY_SET))


def build_s1(attacks: Optional[List[AttackSpec]] = None) -> Tuple[Specification, Registry]:
    """Brute force: one distinct-source instance per destination seen."""
    attacks = attacks or load_attacks()
    outputs = [("dests", set_t(TEXT), A("insert", N("dstAddr"), O("dests", -1, EMPTY_SET)))]
    pdefs = []
    alarms = []
    for a in attacks:
        i = str(a.id)
        pdefs.append(_srcs_pdef(i))
        outputs += _volume_streams(a, i)
        outputs.append(
            (f"sets_{i}", map_t(TEXT, set_t(TEXT)), Over(f"srcs_{i}", N("dests"), updating=_step_set(i)))
        )
        outputs.append(
            (
                f"ent_{i}",
                INT,
                A(
                    "ite",
                    A("mapMember", N(f"maxaddr_{i}"), N(f"sets_{i}")),
                    A("size", A("!", N(f"sets_{i}"), N(f"maxaddr_{i}"))),
                    C(0),
                ),
            )
        )
        outputs += _verdict_streams(a, i)
        alarms.append(N(f"alarm_{i}"))
    outputs.append(("ddos_ok", BOOL, A("not", _any(alarms))))
    spec = Specification("ddos-s1", inputs=list(FLOW_FIELDS), outputs=outputs, parametric=pdefs)
    return spec, ddos_registry()


def _retro_init(a: AttackSpec) -> Initializer:
    filt = tuple(sorted(a.filter.items())) + (("dstAddr", "{param}"),)
    return Initializer(filter_template=filt)


def build_s2(
    attacks: Optional[List[AttackSpec]] = None, name: str = "ddos-s2", store: str = "self"
) -> Tuple[Specification, Registry]:
    """Retroactive: a single suspect instance per attack, installed when the
    volume marker first exceeds t0 and fed its past from the log."""
    attacks = attacks or load_attacks()
    outputs = []
    pdefs = []
    alarms = []
    for a in attacks:
        i = str(a.id)
        pdefs.append(_srcs_pdef(i))
        outputs += _volume_streams(a, i)
        outputs.append(
            (
                f"suspect_{i}",
                opt_t(TEXT),
                A("ite", N(f"exceeded_{i}"), A("just", N(f"maxaddr_{i}")), C(None)),
            )
        )
        init = _retro_init(a)
        if store != "self":
            init = Initializer(init.filter_template, store=store)
        outputs.append(
            (
                f"sent_{i}",
                opt_t(set_t(TEXT)),
                MOver(f"srcs_{i}", N(f"suspect_{i}"), updating=_step_set(i), init=init),
            )
        )
        outputs.append((f"ent_{i}", INT, A("size", A("fromMaybe", C(EMPTY_SET), N(f"sent_{i}")))))
        outputs += _verdict_streams(a, i)
        alarms.append(N(f"alarm_{i}"))
    outputs.append(("ddos_ok", BOOL, A("not", _any(alarms))))
    spec = Specification(name, inputs=list(FLOW_FIELDS), outputs=outputs, parametric=pdefs)
    return spec, ddos_registry()


def _any(exprs):
    acc = None
    for e in exprs:
        acc = e if acc is None else A("or", acc, e)
    return acc if acc is not None else C(False)


def _batch_analyzer(a: AttackSpec) -> Specification:
    """Nested per-batch, per-attack monitor; behaves as S2 over the batch's
    filtered flows and returns (alarm, victim) at the end of the batch."""
    spec, _ = build_s2([a], name=f"batch-{a.name}")
    i = str(a.id)
    outputs = list(spec.outputs) + [
        ("verdict", ANY, A("pair", N(f"alarm_{i}"), N(f"victim_{i}"))),
        ("never", BOOL, C(False)),
    ]
    return Specification(
        spec.name,
        inputs=list(FLOW_FIELDS),
        outputs=outputs,
        parametric=list(spec.parametric),
        return_clause=("verdict", "never"),
    )


SUMMARY_FIELDS = [
    ("file_id", TEXT),
    ("markers", list_t(ANY)),
    ("flowFrom", INT),
    ("flowTo", INT),
]


def build_s3(attacks: Optional[List[AttackSpec]] = None) -> Tuple[Specification, Registry]:
    """Aggregated: one summary event per batch; a nested analysis runs over
    the batch's flows (store "flows") only when a marker exceeds t0."""
    attacks = attacks or load_attacks()
    outputs = []
    alarms = []
    for a in attacks:
        i = str(a.id)
        outputs.append(
            (f"trig_{i}", BOOL, A(">", A("snd", A("index", N("markers"), C(a.id))), C(a.t0)))
        )
        outputs.append(
            (
                f"res_{i}",
                ANY,
                A(
                    "ite",
                    N(f"trig_{i}"),
                    RunSpecOnLog(
                        _batch_analyzer(a),
                        C({k: v for k, v in a.filter.items()}),
                        N("flowFrom"),
                        N("flowTo"),
                        store="flows",
                    ),
                    C((False, "")),
                ),
            )
        )
        outputs.append((f"attacked_{i}", BOOL, A("fst", N(f"res_{i}"))))
        outputs.append((f"victim_{i}", TEXT, A("snd", N(f"res_{i}"))))
        alarms.append(N(f"attacked_{i}"))
    outputs.append(("ddos_ok", BOOL, A("not", _any(alarms))))
    spec = Specification("ddos-s3", inputs=list(SUMMARY_FIELDS), outputs=outputs)
    return spec, ddos_registry()


def builtin(name: str) -> Tuple[Specification, Registry]:
    if name == "ddos-s1":
        return build_s1()
    if name == "ddos-s2":
        return build_s2()
    if name == "ddos-s3":
        return build_s3()
    raise KeyError(name)


# ---------------------------------------------------------------------------
# Synthetic traffic


@dataclass
class GroundTruth:
    attacks: List[dict] = field(default_factory=list)  # {"attack","victim","batch","instant"}

    def to_doc(self):
        return {"attacks": self.attacks}


def _benign_flow(rng: random.Random, t: float, n_src: int, n_dst: int) -> FlowRecord:
    proto = rng.choice(["TCP", "TCP", "UDP", "ICMP"])
    packets = rng.randint(1, 8)
    return FlowRecord(
        start_time=round(t, 3),
        end_time=round(t + rng.uniform(0.0, 2.0), 3),
        src_addr=f"src{rng.randrange(n_src)}",
        dst_addr=f"dst{rng.randrange(n_dst)}",
        src_port=rng.randint(1024, 60000),
        dst_port=rng.choice([80, 443, 8080, 22, 25]),
        protocol=proto,
        packets=packets,
        bytes=packets * rng.randint(40, 1200),
    )


def _malformed_noise(rng: random.Random, t: float, idx: int) -> FlowRecord:
    # isolated malformed-UDP flows: low volume, unique destinations
    return FlowRecord(
        start_time=round(t, 3),
        end_time=round(t + 0.5, 3),
        src_addr=f"src{rng.randrange(400)}",
        dst_addr=f"noise{idx}",
        src_port=rng.randint(1024, 60000),
        dst_port=0,
        protocol="UDP",
        packets=1,
        bytes=64,
    )


def _attack_flows(rng: random.Random, base_t: float, victim: str, count: int) -> List[FlowRecord]:
    # flood well above 2000 pps from more than 5 sources within a short window
    out = []
    span = 10.0
    per = max(int(math.ceil(2000.0 * span * 4 / count)), 1)
    for j in range(count):
        t = base_t + span * j / count
        out.append(
            FlowRecord(
                start_time=round(t, 3),
                end_time=round(t + 0.2, 3),
                src_addr=f"bot{j % 8}",
                dst_addr=victim,
                src_port=rng.randint(1024, 60000),
                dst_port=0,
                protocol="UDP",
                packets=per,
                bytes=per * 64,
            )
        )
    return out


def generate_traffic(profile: str, flows: int, seed: int) -> Tuple[List[FlowRecord], GroundTruth]:
    """Deterministic synthetic flow traces.

    d1: one malformed-UDP attack, at most 1% of flows are attack flows.
    d2: benign with sparse malformed-UDP noise, no attack.
    d3: benign, many sources over 100 destinations, no malformed traffic.
    d4: five equal batches, exactly one of them attacked as in d1.
    """
    if flows < 1:
        raise ValueError("flows must be >= 1")
    rng = random.Random((profile, flows, seed).__repr__())
    gt = GroundTruth()
    if profile == "d4":
        per = flows // 5
        attacked_batch = rng.randrange(5)
        out: List[FlowRecord] = []
        for b in range(5):
            sub_profile = "d1" if b == attacked_batch else "d2"
            batch, sub_gt = generate_traffic(sub_profile, per, seed * 5 + b)
            shifted = [
                FlowRecord(
                    f.start_time + b * BATCH_SECONDS,
                    f.end_time + b * BATCH_SECONDS,
                    f.src_addr,
                    f.dst_addr,
                    f.src_port,
                    f.dst_port,
                    f.protocol,
                    f.packets,
                    f.bytes,
                )
                for f in batch
            ]
            for a in sub_gt.attacks:
                gt.attacks.append({**a, "batch": b, "instant": a["instant"] + b * per})
            out.extend(shifted)
        _assert_ground_truth(out, gt)
        return out, gt

    if profile == "d1":
        n_attack = max(flows // 100, 8)
        victim = "victim66"
    elif profile == "d2":
        n_attack = 0
        victim = None
    elif profile == "d3":
        n_attack = 0
        victim = None
    else:
        raise ValueError(f"unknown traffic profile {profile!r}")

    n_src = 2000 if profile == "d3" else 400
    n_dst = 100 if profile == "d3" else 180
    n_noise = 0 if profile == "d3" else max(flows // 5000, 1)

    n_benign = flows - n_attack - n_noise
    records: List[Tuple[float, FlowRecord]] = []
    for k in range(n_benign):
        t = BATCH_SECONDS * k / flows
        records.append((t, _benign_flow(rng, t, n_src, n_dst)))
    for k in range(n_noise):
        t = BATCH_SECONDS * rng.random() * 0.9
        records.append((t, _malformed_noise(rng, t, k)))
    if n_attack:
        base_t = BATCH_SECONDS * 0.6
        for f in _attack_flows(rng, base_t, victim, n_attack):
            records.append((f.start_time, f))
    records.sort(key=lambda p: (p[0], p[1].src_addr))
    trace = [f for _, f in records]
    if victim is not None:
        instant = next(i for i, f in enumerate(trace) if f.dst_addr == victim)
        gt.attacks.append({"attack": 0, "victim": victim, "batch": 0, "instant": instant})
    _assert_ground_truth(trace, gt)
    return trace, gt


def _assert_ground_truth(trace: List[FlowRecord], gt: GroundTruth):
    """Generator self-check: the embedded attacks, and nothing else, exceed
    their thresholds batch-wise."""
    attacks = load_attacks()
    flows = [f.bindings() for f in trace]
    batches: Dict[int, List[dict]] = {}
    for f in flows:
        batches.setdefault(int(f["startTime"] // BATCH_SECONDS), []).append(f)
    expect = {(a["batch"], a["attack"]): a["victim"] for a in gt.attacks}
    for b, batch in sorted(batches.items()):
        ent = entropy_bruteforce(
            [f for f in batch]
        )
        for a in attacks:
            matching = [f for f in batch if flow_matches(f, a.filter)]
            infos: Dict[str, dict] = {}
            for f in matching:
                e = infos.setdefault(
                    f["dstAddr"],
                    {"packets": 0, "bits": 0, "start": f["startTime"], "end": f["endTime"]},
                )
                e["packets"] += f["packets"]
                e["bits"] += f["bytes"] * 8
                e["start"] = min(e["start"], f["startTime"])
                e["end"] = max(e["end"], f["endTime"])
            m_ent = entropy_bruteforce(matching)
            hot = {
                d
                for d, i in infos.items()
                if marker_rate(i, a.marker_kind) > a.t0 and m_ent.get(d, 0) > a.t1
            }
            want = expect.get((b, a.id))
            assert hot == ({want} if want is not None else set()), (
                f"batch {b} attack {a.id}: detected {hot!r}, expected {want!r}"
            )
            if want is not None:
                n_attack = len([f for f in matching if f["dstAddr"] == want])
                assert n_attack <= max(len(batch) // 100, 10), "attack volume above 1%"


def summarize(trace: List[FlowRecord], attacks: Optional[List[AttackSpec]] = None) -> List[BatchSummary]:
    """Aggregate a flow trace into per-batch summary events with 14 markers
    and the batch's index range in the flow store."""
    attacks = attacks or load_attacks()
    summaries = []
    start = 0
    flows = [f.bindings() for f in trace]
    while start < len(flows):
        b = int(flows[start]["startTime"] // BATCH_SECONDS)
        end = start
        while end < len(flows) and int(flows[end]["startTime"] // BATCH_SECONDS) == b:
            end += 1
        summaries.append(
            BatchSummary(
                file_id=f"batch{b}",
                markers=batch_markers(flows[start:end], attacks),
                flow_from=start,
                flow_to=end,
            )
        )
        start = end
    return summaries
