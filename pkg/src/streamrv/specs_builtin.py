"""Named example specifications shipped with the command line.

Each builtin couples a specification with the function registry it needs.
The library covers plain bounded-future monitoring, nested execution over
slices, static and dynamic parametrization, subtracing, and retroactive
initialization; the DDoS monitors live in their own module and are exposed
here under the ddos-* names.
"""

from __future__ import annotations

from typing import List, Tuple

from .functions import EvalError, FuncDef, Registry, builtin_registry
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
    RunSpec,
    RunSpecOnLog,
    Slice,
    Specification,
    static_instance,
)
from .values import BOOL, FLOAT, INT, TEXT, list_t, map_t, opt_t, set_t, ANY

# sliding-window analysis parameters
WINDOW = 100
WINDOW_PACKETS = 300
WINDOW_SOURCES = 5


def A(fn, *args):
    return Apply(fn, tuple(args))


def C(v):
    return Const(v)


def N(s):
    return Now(s)


def O(s, k, d):
    return Offset(s, k, Const(d))


EMPTY_SET = frozenset()


# ---------------------------------------------------------------------------
# Domain functions used by the examples


def _hs_pair(src, dst, msg):
    # canonical (initiator, responder) pair regardless of direction
    if msg == "SYN/ACK":
        return (dst, src)
    return (src, dst)


_HS_NEXT = {
    ("Start", "SYN"): "SynSent",
    ("SynSent", "SYN/ACK"): "SynAcked",
    ("SynAcked", "ACK"): "Done",
}


def _hs_step(msg, st):
    return _HS_NEXT.get((st, msg), "Error")


def _file_step(op, st):
    if st == "Error":
        return "Error"
    if op == "create":
        return "Open"
    if op == "close":
        return "Closed"
    if op == "rw":
        return "Open" if st == "Open" else "Error"
    raise EvalError(f"unknown file operation {op!r}")


def _pkt_merge(new, old):
    return (new[0] + old[0], new[1] | old[1])


def _heavy_traffic(m):
    for cnt, srcs in m.values():
        if cnt > WINDOW_PACKETS and len(srcs) > WINDOW_SOURCES:
            return True
    return False


def example_registry() -> Registry:
    r = builtin_registry()
    r.register(FuncDef("hsPair", 3, _hs_pair, ((TEXT, TEXT, TEXT), list_t(TEXT))))
    r.register(FuncDef("hsStep", 2, _hs_step, ((TEXT, TEXT), TEXT)))
    r.register(FuncDef("fileStep", 2, _file_step, ((TEXT, TEXT), TEXT)))
    r.register(FuncDef("pktMerge", 2, _pkt_merge, ((ANY, ANY), ANY)))
    r.register(FuncDef("heavyTraffic", 1, _heavy_traffic, ((map_t(TEXT, ANY),), BOOL)))
    return r


# ---------------------------------------------------------------------------
# Specifications


def _altitude() -> Specification:
    return Specification(
        "altitude",
        inputs=[("altitude", FLOAT)],
        outputs=[("alt_ok", BOOL, A("<", N("altitude"), C(100.0)))],
    )


def _paramaltitude() -> Specification:
    pd = ParametricStreamDef("below", FLOAT, BOOL, A("<", N("altitude"), PARAM))
    base = Specification("paramaltitude", inputs=[("altitude", FLOAT)], outputs=[], parametric=[pd])
    return Specification(
        "paramaltitude",
        inputs=[("altitude", FLOAT)],
        outputs=[
            static_instance(base, "below", 100.0, "alt100_ok"),
            static_instance(base, "below", 500.0, "alt500_ok"),
        ],
        parametric=[pd],
    )


def _cross_inner() -> Specification:
    return Specification(
        "crossinner",
        inputs=[("r", FLOAT), ("s", FLOAT)],
        outputs=[
            ("n", INT, A("+", O("n", -1, 0), C(1))),
            ("below", BOOL, A("<", N("r"), N("s"))),
            ("cross", BOOL, A("and", A(">", N("n"), C(1)), A("!=", O("below", -1, False), N("below")))),
        ],
        return_clause=("cross", "cross"),
    )


def _crossspec() -> Specification:
    inner = _cross_inner()
    return Specification(
        "crossspec",
        inputs=[("r", FLOAT), ("s", FLOAT)],
        outputs=[
            ("willCross", BOOL, RunSpec(inner, (("r", Slice("r", 50)), ("s", Slice("s", 50))))),
        ],
    )


def _handshake() -> Specification:
    pd = ParametricStreamDef(
        "hs", list_t(TEXT), TEXT, A("hsStep", N("msg"), O("hs", -1, "Start"))
    )
    cur = A("hsPair", N("src"), N("dst"), N("msg"))
    # a finished pair stays alive for one more instant, then is dropped
    drop_done = A(
        "ite",
        A("==", O("msg", -1, ""), C("ACK")),
        A("delete", O("cur_pair", -1, ("", "")), O("params", -1, EMPTY_SET)),
        O("params", -1, EMPTY_SET),
    )
    return Specification(
        "handshake",
        inputs=[("src", TEXT), ("dst", TEXT), ("msg", TEXT)],
        outputs=[
            ("cur_pair", list_t(TEXT), cur),
            ("params", set_t(list_t(TEXT)), A("insert", N("cur_pair"), drop_done)),
            (
                "states",
                map_t(list_t(TEXT), TEXT),
                Over("hs", N("params"), updating=A("insert", N("cur_pair"), C(EMPTY_SET))),
            ),
            ("hs_ok", BOOL, A("not", A("listContains", C("Error"), A("elems", N("states"))))),
        ],
        parametric=[pd],
    )


_FILE_PDEF = lambda: ParametricStreamDef(
    "fileState", TEXT, TEXT, A("fileStep", N("op"), O("fileState", -1, "NE"))
)


def _openfiles() -> Specification:
    return Specification(
        "openfiles",
        inputs=[("fileId", TEXT), ("op", TEXT)],
        outputs=[
            ("params", set_t(TEXT), A("insert", N("fileId"), O("params", -1, EMPTY_SET))),
            (
                "states",
                map_t(TEXT, TEXT),
                Over("fileState", N("params"), updating=A("insert", N("fileId"), C(EMPTY_SET))),
            ),
            ("files_ok", BOOL, A("not", A("listContains", C("Error"), A("elems", N("states"))))),
        ],
        parametric=[_FILE_PDEF()],
    )


def _retro_openfiles() -> Specification:
    # instances appear only once a file is read or written; their create/close
    # history is recovered from the log at that point
    return Specification(
        "retro-openfiles",
        inputs=[("fileId", TEXT), ("op", TEXT)],
        outputs=[
            (
                "params",
                set_t(TEXT),
                A(
                    "ite",
                    A("==", N("op"), C("rw")),
                    A("insert", N("fileId"), O("params", -1, EMPTY_SET)),
                    O("params", -1, EMPTY_SET),
                ),
            ),
            (
                "states",
                map_t(TEXT, TEXT),
                Over(
                    "fileState",
                    N("params"),
                    updating=A("insert", N("fileId"), C(EMPTY_SET)),
                    init=Initializer((("fileId", "{param}"),)),
                ),
            ),
            ("files_ok", BOOL, A("not", A("listContains", C("Error"), A("elems", N("states"))))),
        ],
        parametric=[_FILE_PDEF()],
    )


def _first_positive_threshold() -> Tuple[str, object, object]:
    prev = O("mth", -1, None)
    expr = A(
        "ite",
        A("isJust", prev),
        prev,
        A("ite", A(">", N("threshold"), C(0.0)), A("just", N("threshold")), C(None)),
    )
    return ("mth", opt_t(FLOAT), expr)


def _dyn_altitude() -> Specification:
    pd = ParametricStreamDef("okc", FLOAT, BOOL, A("<=", N("altitude"), PARAM))
    return Specification(
        "dyn-altitude",
        inputs=[("altitude", FLOAT), ("threshold", FLOAT)],
        outputs=[
            _first_positive_threshold(),
            ("ok", opt_t(BOOL), MOver("okc", N("mth"))),
            ("alt_ok", BOOL, A("fromMaybe", C(True), N("ok"))),
        ],
        parametric=[pd],
    )


def _dyn_altitude_init() -> Specification:
    pd = ParametricStreamDef(
        "oks", FLOAT, BOOL, A("and", A("<=", N("altitude"), PARAM), O("oks", -1, True))
    )
    return Specification(
        "dyn-altitude-init",
        inputs=[("altitude", FLOAT), ("threshold", FLOAT)],
        outputs=[
            _first_positive_threshold(),
            ("ok", opt_t(BOOL), MOver("oks", N("mth"), init=Initializer())),
            ("alt_ok", BOOL, A("fromMaybe", C(True), N("ok"))),
        ],
        parametric=[pd],
    )


def _packet_window() -> Specification:
    finer = Specification(
        "windowcheck",
        inputs=[("srcAddr", TEXT), ("dstAddr", TEXT), ("packets", INT)],
        outputs=[
            (
                "acc",
                map_t(TEXT, ANY),
                A(
                    "insertWith",
                    C("pktMerge"),
                    N("dstAddr"),
                    A("pair", N("packets"), A("insert", N("srcAddr"), C(EMPTY_SET))),
                    O("acc", -1, {}),
                ),
            ),
            ("under_attack", BOOL, A("heavyTraffic", N("acc"))),
        ],
        return_clause=("under_attack", "under_attack"),
    )
    frm = A("max", A("-", N("counter"), C(WINDOW)), C(0))
    return Specification(
        "packetflow",
        inputs=[("srcAddr", TEXT), ("dstAddr", TEXT), ("packets", INT)],
        outputs=[
            ("counter", INT, A("+", O("counter", -1, 0), C(1))),
            (
                "pf_ok",
                BOOL,
                A("not", RunSpecOnLog(finer, C({}), frm, N("counter"))),
            ),
        ],
    )


_BUILDERS = {
    "altitude": _altitude,
    "paramaltitude": _paramaltitude,
    "crossspec": _crossspec,
    "handshake": _handshake,
    "openfiles": _openfiles,
    "retro-openfiles": _retro_openfiles,
    "dyn-altitude": _dyn_altitude,
    "dyn-altitude-init": _dyn_altitude_init,
    "packetflow": _packet_window,
}

_DDOS_NAMES = ("ddos-s1", "ddos-s2", "ddos-s3")


def builtin_names() -> List[str]:
    return sorted(_BUILDERS) + list(_DDOS_NAMES)


def builtin_spec(name: str) -> Tuple[Specification, Registry]:
    """Look up a builtin by name; returns the spec and its registry."""
    if name in _BUILDERS:
        return _BUILDERS[name](), example_registry()
    if name in _DDOS_NAMES:
        from . import ddos

        return ddos.builtin(name)
    raise KeyError(f"unknown builtin spec {name!r}")
