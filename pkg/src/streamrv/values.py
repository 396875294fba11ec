"""Runtime value universe: orderable, structurally-equal dynamic values.

Values are plain Python data with fixed conventions:

  bool / int / float / str   scalars
  None or the bare value     optionals (absent / present)
  frozenset                  sets
  tuple                      lists and pairs
  dict                       maps and records (never mutated in place)

Every value admits a total order through :func:`value_key`, so set and map
iteration is always ascending and serialization of equal values is
byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Tuple

Value = Any

_RANK = {
    type(None): 0,
    bool: 1,
    int: 2,
    float: 3,
    str: 4,
    tuple: 5,
    frozenset: 6,
    dict: 7,
}


class ValueError_(Exception):
    """A value is outside the supported universe."""


def value_key(v: Value):
    """Total-order sort key over the whole value universe."""
    t = type(v)
    rank = _RANK.get(t)
    if rank is None:
        raise ValueError_(f"unsupported runtime value: {v!r} ({t.__name__})")
    if rank <= 4:
        return (rank, v)
    if t is tuple:
        return (5, tuple(value_key(x) for x in v))
    if t is frozenset:
        return (6, tuple(sorted(value_key(x) for x in v)))
    return (7, tuple(sorted((value_key(k), value_key(w)) for k, w in v.items())))


def sorted_elems(s: Iterable[Value]) -> list:
    return sorted(s, key=value_key)


def sorted_items(m: dict) -> list:
    return sorted(m.items(), key=lambda kv: value_key(kv[0]))


# ---------------------------------------------------------------------------
# Types of the data theory


@dataclass(frozen=True)
class Ty:
    kind: str  # bool int float text unit any var opt set list map
    args: Tuple["Ty", ...] = ()
    var: str = ""

    def __repr__(self):
        if self.kind == "var":
            return f"'{self.var}"
        if not self.args:
            return self.kind
        return f"{self.kind}<{', '.join(map(repr, self.args))}>"


BOOL = Ty("bool")
INT = Ty("int")
FLOAT = Ty("float")
TEXT = Ty("text")
UNIT = Ty("unit")
ANY = Ty("any")


def opt_t(t: Ty) -> Ty:
    return Ty("opt", (t,))


def set_t(t: Ty) -> Ty:
    return Ty("set", (t,))


def list_t(t: Ty) -> Ty:
    return Ty("list", (t,))


def map_t(k: Ty, v: Ty) -> Ty:
    return Ty("map", (k, v))


def tvar(name: str) -> Ty:
    return Ty("var", (), name)


def _resolve(t: Ty, subst: dict) -> Ty:
    while t.kind == "var" and t.var in subst:
        t = subst[t.var]
    return t


def unify(a: Ty, b: Ty, subst: dict) -> bool:
    """Best-effort unification; `any` unifies with everything."""
    a = _resolve(a, subst)
    b = _resolve(b, subst)
    if a.kind == "any" or b.kind == "any":
        return True
    if a.kind == "var":
        subst[a.var] = b
        return True
    if b.kind == "var":
        subst[b.var] = a
        return True
    if a.kind != b.kind or len(a.args) != len(b.args):
        return False
    return all(unify(x, y, subst) for x, y in zip(a.args, b.args))


def apply_subst(t: Ty, subst: dict) -> Ty:
    t = _resolve(t, subst)
    if t.args:
        return Ty(t.kind, tuple(apply_subst(a, subst) for a in t.args), t.var)
    return t


def infer_value_type(v: Value) -> Ty:
    t = type(v)
    if t is bool:
        return BOOL
    if t is int:
        return INT
    if t is float:
        return FLOAT
    if t is str:
        return TEXT
    if v is None:
        return opt_t(ANY)
    if t is frozenset:
        for x in v:
            return set_t(infer_value_type(x))
        return set_t(ANY)
    if t is tuple:
        for x in v:
            return list_t(infer_value_type(x))
        return list_t(ANY)
    if t is dict:
        for k, w in v.items():
            return map_t(infer_value_type(k), infer_value_type(w))
        return map_t(ANY, ANY)
    raise ValueError_(f"unsupported runtime value: {v!r}")


def check_value(v: Value, t: Ty) -> bool:
    """Does value v inhabit type t?  `any` admits everything."""
    k = t.kind
    if k == "any" or k == "var":
        return True
    if k == "bool":
        return type(v) is bool
    if k == "int":
        return type(v) is int
    if k == "float":
        return type(v) is float
    if k == "text":
        return type(v) is str
    if k == "unit":
        return v == ()
    if k == "opt":
        return v is None or check_value(v, t.args[0])
    if k == "set":
        return type(v) is frozenset and all(check_value(x, t.args[0]) for x in v)
    if k == "list":
        return type(v) is tuple and all(check_value(x, t.args[0]) for x in v)
    if k == "map":
        return type(v) is dict and all(
            check_value(a, t.args[0]) and check_value(b, t.args[1]) for a, b in v.items()
        )
    raise ValueError_(f"unknown type kind {k!r}")


def ty_to_doc(t: Ty):
    if t.kind == "var":
        return {"kind": "var", "var": t.var}
    if not t.args:
        return t.kind
    return {"kind": t.kind, "args": [ty_to_doc(a) for a in t.args]}


def ty_from_doc(doc) -> Ty:
    if isinstance(doc, str):
        return Ty(doc)
    if doc["kind"] == "var":
        return tvar(doc["var"])
    return Ty(doc["kind"], tuple(ty_from_doc(a) for a in doc.get("args", [])))


# ---------------------------------------------------------------------------
# Wire format


def wire_encode(v: Value):
    """Encode a value for the line-delimited event wire format."""
    t = type(v)
    if v is None or t in (bool, int, float, str):
        return v
    if t is frozenset:
        return [wire_encode(x) for x in sorted_elems(v)]
    if t is tuple:
        return [wire_encode(x) for x in v]
    if t is dict:
        out = {}
        for k, w in sorted_items(v):
            out[k if type(k) is str else repr(wire_encode(k))] = wire_encode(w)
        return out
    raise ValueError_(f"unsupported runtime value: {v!r}")


class WireError(Exception):
    pass


def wire_decode(doc, t: Ty) -> Value:
    """Decode a JSON document into a value of the given type."""
    k = t.kind
    if k == "any":
        return _wire_decode_untyped(doc)
    if k == "bool":
        if type(doc) is not bool:
            raise WireError(f"expected bool, got {doc!r}")
        return doc
    if k == "int":
        if type(doc) is bool or type(doc) is not int:
            raise WireError(f"expected int, got {doc!r}")
        return doc
    if k == "float":
        if type(doc) is bool or type(doc) not in (int, float):
            raise WireError(f"expected float, got {doc!r}")
        return float(doc)
    if k == "text":
        if type(doc) is not str:
            raise WireError(f"expected text, got {doc!r}")
        return doc
    if k == "opt":
        return None if doc is None else wire_decode(doc, t.args[0])
    if k == "set":
        if type(doc) is not list:
            raise WireError(f"expected array, got {doc!r}")
        return frozenset(wire_decode(x, t.args[0]) for x in doc)
    if k == "list":
        if type(doc) is not list:
            raise WireError(f"expected array, got {doc!r}")
        return tuple(wire_decode(x, t.args[0]) for x in doc)
    if k == "map":
        if type(doc) is not dict:
            raise WireError(f"expected object, got {doc!r}")
        if t.args[0].kind not in ("text", "any"):
            raise WireError(f"cannot decode map keyed by {t.args[0]!r}")
        return {k2: wire_decode(v2, t.args[1]) for k2, v2 in doc.items()}
    raise WireError(f"cannot decode type {t!r}")


def _wire_decode_untyped(doc) -> Value:
    if doc is None or type(doc) in (bool, int, float, str):
        return doc
    if type(doc) is list:
        return tuple(_wire_decode_untyped(x) for x in doc)
    if type(doc) is dict:
        return {k: _wire_decode_untyped(v) for k, v in doc.items()}
    raise WireError(f"cannot decode {doc!r}")
