"""Registered pure functions usable inside stream expressions.

The registry is built once and then read-only; evaluation contexts only look
functions up by name.  All function implementations are module-level so that
frozen monitor states pickle by reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

from .values import (
    ANY,
    BOOL,
    FLOAT,
    INT,
    TEXT,
    Ty,
    list_t,
    map_t,
    opt_t,
    set_t,
    sorted_elems,
    sorted_items,
    tvar,
    value_key,
)


class EvalError(Exception):
    """Raised by a function when its arguments are outside its domain."""


class RegistrationError(Exception):
    pass


@dataclass(frozen=True)
class FuncDef:
    name: str
    arity: int
    fn: Callable
    sig: Optional[Tuple[Tuple[Ty, ...], Ty]] = None
    needs_registry: bool = False
    lazy: bool = False  # evaluator decides argument evaluation (ite, and, or)


class Registry:
    def __init__(self):
        self._defs: dict[str, FuncDef] = {}

    def register(self, d: FuncDef) -> "Registry":
        prev = self._defs.get(d.name)
        if prev is not None and (prev.arity != d.arity or prev.sig != d.sig):
            raise RegistrationError(
                f"function {d.name!r} already registered with a different signature"
            )
        self._defs[d.name] = d
        return self

    def get(self, name: str) -> FuncDef:
        try:
            return self._defs[name]
        except KeyError:
            raise EvalError(f"unknown function {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._defs

    def names(self):
        return sorted(self._defs)


def register_function(reg: Registry, d: FuncDef) -> Registry:
    return reg.register(d)


# ---------------------------------------------------------------------------
# Builtin implementations

_A = tvar("a")
_B = tvar("b")


def _not(x):
    return not x


def _and(x, y):
    return x and y


def _or(x, y):
    return x or y


def _implies(x, y):
    return (not x) or y


def _eq(x, y):
    # bool is not an int in the value universe, even though Python coerces
    if (type(x) is bool) is not (type(y) is bool):
        return False
    return x == y


def _neq(x, y):
    return not _eq(x, y)


def _lt(x, y):
    return value_key(x) < value_key(y)


def _le(x, y):
    return value_key(x) <= value_key(y)


def _gt(x, y):
    return value_key(x) > value_key(y)


def _ge(x, y):
    return value_key(x) >= value_key(y)


def _add(x, y):
    return x + y


def _sub(x, y):
    return x - y


def _mul(x, y):
    return x * y


def _div(x, y):
    if y == 0:
        raise EvalError("division by zero")
    return x / y


def _idiv(x, y):
    if y == 0:
        raise EvalError("division by zero")
    return x // y


def _mod(x, y):
    if y == 0:
        raise EvalError("modulo by zero")
    return x % y


def _neg(x):
    return -x


def _abs(x):
    return abs(x)


def _min(x, y):
    return min(x, y, key=value_key)


def _max(x, y):
    return max(x, y, key=value_key)


def _to_float(x):
    return float(x)


def _to_int(x):
    return int(x)


def _ite(c, t, e):
    # evaluated lazily by the engine; kept callable for completeness
    return t if c else e


def _insert_with(reg: Registry, fname, k, v, m):
    cmb = reg.get(fname)
    out = dict(m)
    if k in out:
        out[k] = cmb.fn(v, out[k])
    else:
        out[k] = v
    return out


def _elems(m):
    return tuple(v for _, v in sorted_items(m))


def _keys(m):
    return tuple(k for k, _ in sorted_items(m))


def _map_size(m):
    return len(m)


def _lookup(m, k):
    if k not in m:
        raise EvalError(f"map lookup miss: {k!r}")
    return m[k]


def _map_member(k, m):
    return k in m


def _map_insert(k, v, m):
    out = dict(m)
    out[k] = v
    return out


def _map_delete(k, m):
    if k not in m:
        return m
    out = dict(m)
    del out[k]
    return out


def _insert(x, s):
    return s | {x}


def _delete(x, s):
    return s - {x}


def _member(x, s):
    return x in s


def _size(c):
    return len(c)


def _union(a, b):
    return a | b


def _intersection(a, b):
    return a & b


def _difference(a, b):
    return a - b


def _maximum(xs):
    if not xs:
        raise EvalError("maximum of empty list")
    return max(xs, key=value_key)


def _minimum(xs):
    if not xs:
        raise EvalError("minimum of empty list")
    return min(xs, key=value_key)


def _length(xs):
    return len(xs)


def _index(xs, i):
    if not 0 <= i < len(xs):
        raise EvalError(f"list index {i} out of range")
    return xs[i]


def _contains(x, xs):
    return x in xs


def _append(xs, ys):
    return xs + ys


def _just(v):
    if v is None:
        raise EvalError("cannot wrap the empty optional")
    return v


def _is_nothing(v):
    return v is None


def _is_just(v):
    return v is not None


def _from_maybe(d, v):
    return d if v is None else v


def _pair(a, b):
    return (a, b)


def _fst(p):
    return p[0]


def _snd(p):
    return p[1]


def _field(r, name):
    if name not in r:
        raise EvalError(f"no field {name!r}")
    return r[name]


def _concat(a, b):
    return a + b


def _opt_to_set(v):
    return frozenset() if v is None else frozenset((v,))


def _single_opt_value(m):
    """Project the unique value out of a size<=1 map, as an optional."""
    if not m:
        return None
    if len(m) > 1:
        raise EvalError("expected a map of size <= 1")
    return next(iter(m.values()))


def builtin_registry() -> Registry:
    """The base data theory shared by every specification."""
    r = Registry()
    a, b = _A, _B

    def f(name, arity, fn, args=None, ret=None, **kw):
        sig = (tuple(args), ret) if args is not None else None
        r.register(FuncDef(name, arity, fn, sig, **kw))

    f("not", 1, _not, [BOOL], BOOL)
    f("and", 2, _and, [BOOL, BOOL], BOOL, lazy=True)
    f("or", 2, _or, [BOOL, BOOL], BOOL, lazy=True)
    f("implies", 2, _implies, [BOOL, BOOL], BOOL)
    f("ite", 3, _ite, [BOOL, a, a], a, lazy=True)

    f("==", 2, _eq, [a, a], BOOL)
    f("!=", 2, _neq, [a, a], BOOL)
    f("<", 2, _lt, [a, a], BOOL)
    f("<=", 2, _le, [a, a], BOOL)
    f(">", 2, _gt, [a, a], BOOL)
    f(">=", 2, _ge, [a, a], BOOL)

    f("+", 2, _add, [a, a], a)
    f("-", 2, _sub, [a, a], a)
    f("*", 2, _mul, [a, a], a)
    f("/", 2, _div, [FLOAT, FLOAT], FLOAT)
    f("idiv", 2, _idiv, [INT, INT], INT)
    f("mod", 2, _mod, [INT, INT], INT)
    f("neg", 1, _neg, [a], a)
    f("abs", 1, _abs, [a], a)
    f("min", 2, _min, [a, a], a)
    f("max", 2, _max, [a, a], a)
    f("toFloat", 1, _to_float, [INT], FLOAT)
    f("toInt", 1, _to_int, [FLOAT], INT)

    f("insertWith", 4, _insert_with, [TEXT, a, b, map_t(a, b)], map_t(a, b), needs_registry=True)
    f("elems", 1, _elems, [map_t(a, b)], list_t(b))
    f("keys", 1, _keys, [map_t(a, b)], list_t(a))
    f("mapSize", 1, _map_size, [map_t(a, b)], INT)
    f("!", 2, _lookup, [map_t(a, b), a], b)
    f("mapMember", 2, _map_member, [a, map_t(a, b)], BOOL)
    f("mapInsert", 3, _map_insert, [a, b, map_t(a, b)], map_t(a, b))
    f("mapDelete", 2, _map_delete, [a, map_t(a, b)], map_t(a, b))

    f("insert", 2, _insert, [a, set_t(a)], set_t(a))
    f("delete", 2, _delete, [a, set_t(a)], set_t(a))
    f("member", 2, _member, [a, set_t(a)], BOOL)
    f("size", 1, _size, [ANY], INT)
    f("union", 2, _union, [set_t(a), set_t(a)], set_t(a))
    f("intersection", 2, _intersection, [set_t(a), set_t(a)], set_t(a))
    f("difference", 2, _difference, [set_t(a), set_t(a)], set_t(a))

    f("maximum", 1, _maximum, [list_t(a)], a)
    f("minimum", 1, _minimum, [list_t(a)], a)
    f("length", 1, _length, [list_t(a)], INT)
    f("index", 2, _index, [list_t(a), INT], a)
    f("listContains", 2, _contains, [a, list_t(a)], BOOL)
    f("append", 2, _append, [list_t(a), list_t(a)], list_t(a))

    f("just", 1, _just, [a], opt_t(a))
    f("isNothing", 1, _is_nothing, [opt_t(a)], BOOL)
    f("isJust", 1, _is_just, [opt_t(a)], BOOL)
    f("fromMaybe", 2, _from_maybe, [a, opt_t(a)], a)

    f("pair", 2, _pair, [a, b], ANY)
    f("fst", 1, _fst, [ANY], ANY)
    f("snd", 1, _snd, [ANY], ANY)
    f("field", 2, _field, [map_t(TEXT, ANY), TEXT], ANY)
    f("concat", 2, _concat, [TEXT, TEXT], TEXT)

    f("optToSet", 1, _opt_to_set, [opt_t(a)], set_t(a))
    f("singleOptValue", 1, _single_opt_value, [map_t(b, a)], opt_t(a))
    return r
