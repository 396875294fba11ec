"""JSON (de)serialization of specifications.

The document form is the exchange format for the command line and the basis
of the content hash that ties a frozen monitor state to its specification.
"""

from __future__ import annotations

import hashlib
import json

from .specmodel import (
    Apply,
    Const,
    Initializer,
    MOver,
    Now,
    Offset,
    Over,
    Param,
    PARAM,
    ParametricStreamDef,
    RunSpec,
    RunSpecOnLog,
    Slice,
    Specification,
    ValidatedSpec,
    When,
    WhenFilter,
)
from .values import ty_from_doc, ty_to_doc, wire_encode, _wire_decode_untyped


class SpecIOError(Exception):
    pass


def _const_to_doc(v):
    # tagged so container kinds survive the roundtrip (a bare JSON array is
    # ambiguous between a set and a list)
    if v is None or type(v) in (bool, int, float, str):
        return v
    if type(v) is frozenset:
        from .values import sorted_elems

        return {"set": [_const_to_doc(x) for x in sorted_elems(v)]}
    if type(v) is tuple:
        return {"list": [_const_to_doc(x) for x in v]}
    if type(v) is dict:
        from .values import sorted_items

        return {"map": [[_const_to_doc(k), _const_to_doc(w)] for k, w in sorted_items(v)]}
    raise SpecIOError(f"cannot serialize constant {v!r}")


def _const_from_doc(doc):
    if doc is None or type(doc) in (bool, int, float, str):
        return doc
    if type(doc) is dict and len(doc) == 1:
        (tag, body), = doc.items()
        if tag == "set":
            return frozenset(_const_from_doc(x) for x in body)
        if tag == "list":
            return tuple(_const_from_doc(x) for x in body)
        if tag == "map":
            return {_const_from_doc(k): _const_from_doc(w) for k, w in body}
    raise SpecIOError(f"malformed constant document {doc!r}")


def expr_to_doc(e) -> dict:
    t = type(e)
    if t is Const:
        return {"op": "const", "value": _const_to_doc(e.value)}
    if t is Param:
        return {"op": "param"}
    if t is Apply:
        return {"op": "apply", "fn": e.fn, "args": [expr_to_doc(a) for a in e.args]}
    if t is Offset:
        return {"op": "offset", "stream": e.stream, "k": e.k, "default": expr_to_doc(e.default)}
    if t is Now:
        return {"op": "now", "stream": e.stream}
    if t is Slice:
        return {"op": "slice", "stream": e.stream, "n": e.n}
    if t is RunSpec:
        return {
            "op": "runSpec",
            "spec": spec_to_doc(e.spec),
            "inputs": [[n, expr_to_doc(x)] for n, x in e.inputs],
        }
    if t is RunSpecOnLog:
        return {
            "op": "runSpecOnLog",
            "spec": spec_to_doc(e.spec),
            "filter": expr_to_doc(e.filter),
            "from": expr_to_doc(e.frm),
            "to": None if e.to is None else expr_to_doc(e.to),
            "store": e.store,
        }
    if t in (Over, MOver, When):
        doc = {"op": t.__name__.lower(), "pstream": e.pstream}
        if t is MOver:
            doc["param"] = expr_to_doc(e.param)
        else:
            doc["params"] = expr_to_doc(e.params)
        if t is When:
            doc["cond"] = expr_to_doc(e.cond)
        else:
            upd = e.updating
            if isinstance(upd, WhenFilter):
                doc["updatingWhen"] = expr_to_doc(upd.cond)
            elif upd is not None:
                doc["updating"] = expr_to_doc(upd)
        if e.init is not None:
            doc["init"] = init_to_doc(e.init)
        return doc
    raise SpecIOError(f"cannot serialize node {e!r}")


def expr_from_doc(doc) -> object:
    op = doc["op"]
    if op == "const":
        return Const(_const_from_doc(doc["value"]))
    if op == "param":
        return PARAM
    if op == "apply":
        return Apply(doc["fn"], tuple(expr_from_doc(a) for a in doc["args"]))
    if op == "offset":
        return Offset(doc["stream"], doc["k"], expr_from_doc(doc["default"]))
    if op == "now":
        return Now(doc["stream"])
    if op == "slice":
        return Slice(doc["stream"], doc["n"])
    if op == "runSpec":
        return RunSpec(
            spec_from_doc(doc["spec"]),
            tuple((n, expr_from_doc(x)) for n, x in doc["inputs"]),
        )
    if op == "runSpecOnLog":
        return RunSpecOnLog(
            spec_from_doc(doc["spec"]),
            expr_from_doc(doc["filter"]),
            expr_from_doc(doc["from"]),
            None if doc.get("to") is None else expr_from_doc(doc["to"]),
            doc.get("store", "self"),
        )
    init = init_from_doc(doc["init"]) if "init" in doc else None
    if op == "when":
        return When(doc["pstream"], expr_from_doc(doc["params"]), expr_from_doc(doc["cond"]), init)
    updating = None
    if "updatingWhen" in doc:
        updating = WhenFilter(expr_from_doc(doc["updatingWhen"]))
    elif "updating" in doc:
        updating = expr_from_doc(doc["updating"])
    if op == "over":
        return Over(doc["pstream"], expr_from_doc(doc["params"]), updating, init)
    if op == "mover":
        return MOver(doc["pstream"], expr_from_doc(doc["param"]), updating, init)
    raise SpecIOError(f"unknown expression op {op!r}")


def init_to_doc(init: Initializer) -> dict:
    doc = {"filter": {k: _const_to_doc(v) for k, v in init.filter_template}}
    if init.store != "self":
        doc["store"] = init.store
    if init.command is not None:
        doc["command"] = init.command
    return doc


def init_from_doc(doc) -> Initializer:
    return Initializer(
        filter_template=tuple(sorted((k, _const_from_doc(v)) for k, v in doc["filter"].items())),
        store=doc.get("store", "self"),
        command=doc.get("command"),
    )


def spec_to_doc(spec) -> dict:
    if isinstance(spec, ValidatedSpec):
        spec = spec.spec
    doc = {
        "name": spec.name,
        "inputs": [[n, ty_to_doc(t)] for n, t in spec.inputs],
        "outputs": [[n, ty_to_doc(t), expr_to_doc(e)] for n, t, e in spec.outputs],
    }
    if spec.parametric:
        doc["parametric"] = [
            {
                "name": p.name,
                "paramType": ty_to_doc(p.param_type),
                "valueType": ty_to_doc(p.value_type),
                "body": expr_to_doc(p.body),
            }
            for p in spec.parametric
        ]
    if spec.return_clause is not None:
        doc["return"] = {"value": spec.return_clause[0], "when": spec.return_clause[1]}
    return doc


def spec_from_doc(doc) -> Specification:
    try:
        rc = None
        if "return" in doc:
            rc = (doc["return"]["value"], doc["return"]["when"])
        return Specification(
            name=doc["name"],
            inputs=[(n, ty_from_doc(t)) for n, t in doc["inputs"]],
            outputs=[(n, ty_from_doc(t), expr_from_doc(e)) for n, t, e in doc["outputs"]],
            parametric=[
                ParametricStreamDef(
                    name=p["name"],
                    param_type=ty_from_doc(p["paramType"]),
                    value_type=ty_from_doc(p["valueType"]),
                    body=expr_from_doc(p["body"]),
                )
                for p in doc.get("parametric", [])
            ],
            return_clause=rc,
        )
    except (KeyError, TypeError) as e:
        raise SpecIOError(f"malformed specification document: {e!r}") from e


def dump_spec(spec) -> str:
    """Canonical single-line JSON; equal specs serialize byte-identically."""
    return json.dumps(spec_to_doc(spec), sort_keys=True, separators=(",", ":"))


def load_spec(text: str) -> Specification:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecIOError(f"not valid JSON: {e}") from e
    return spec_from_doc(doc)


def spec_hash(spec) -> str:
    return hashlib.sha256(dump_spec(spec).encode()).hexdigest()
