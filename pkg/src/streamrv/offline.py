"""Reference evaluator: full-trace, batch, no windowing.

This module recomputes every output over a complete trace with plain
recursive evaluation and per-instance subtrace replay.  It shares the
expression syntax with the incremental engine but none of its machinery
(no frontiers, no eviction, no resumable state), so agreement between the
two is meaningful evidence of correctness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .functions import Registry, builtin_registry
from .logstore import matches_filter
from .specmodel import (
    Apply,
    Const,
    MOver,
    Now,
    Offset,
    Over,
    Param,
    RunSpec,
    RunSpecOnLog,
    Slice,
    When,
    WhenFilter,
    substitute_param,
    validate,
)
from .values import Value, sorted_elems


@dataclass(frozen=True)
class Err:
    """Evaluation error placeholder; structural position matters, the
    message is informational only."""

    reason: str = ""


@dataclass
class OfflineResult:
    outputs: Dict[str, List[Value]]
    verdict: Optional[Value] = None
    verdict_set: bool = False


class _Instance:
    """One parameter instance: a local subtrace and its value history."""

    def __init__(self, body, input_names, reg):
        self.body = body
        self.input_names = input_names
        self._reg = reg
        self.trace: List[dict] = []
        self.vals: List[Value] = []

    def feed(self, bindings: dict):
        t = len(self.trace)
        self.trace.append({n: bindings[n] for n in self.input_names})
        self.vals.append(self._eval(self.body, t))

    def last(self):
        return self.vals[-1]

    def _eval(self, e, t):
        c = type(e)
        if c is Const:
            return e.value
        if c is Now:
            return self._ref(e.stream, t)
        if c is Offset:
            u = t + e.k
            if u < 0 or u >= len(self.trace):
                return self._eval(e.default, t)
            return self._ref(e.stream, u)
        if c is Slice:
            if e.n != 1:
                return Err("slice inside a parametric body")
            return (self._ref(e.stream, t),)
        if c is Apply:
            return _apply(self._reg, e, t, self._eval)
        return Err(f"unsupported node in parametric body: {c.__name__}")

    def _ref(self, name, u):
        if name in self.trace[u]:
            return self.trace[u][name]
        return self.vals[u]  # self-recursive reference


def _apply(reg: Registry, e: Apply, t, ev):
    try:
        d = reg.get(e.fn)
    except Exception as ex:
        return Err(str(ex))
    if d.lazy:
        c = ev(e.args[0], t)
        if type(c) is Err:
            return c
        if d.name == "ite":
            return ev(e.args[1] if c else e.args[2], t)
        if d.name == "and":
            return False if c is False else ev(e.args[1], t)
        if d.name == "or":
            return True if c is True else ev(e.args[1], t)
        return Err(f"unknown lazy function {d.name!r}")
    vals = [ev(a, t) for a in e.args]
    for v in vals:
        if type(v) is Err:
            return v
    try:
        if d.needs_registry:
            return d.fn(reg, *vals)
        return d.fn(*vals)
    except Exception as ex:
        return Err(str(ex))


class _OverRun:
    """Sequential lifecycle replay of one parametrized expression."""

    def __init__(self, ctx, node):
        self.ctx = ctx
        self.node = node
        self.pd = ctx.vs.spec.pdef(node.pstream)
        self.live: Dict[Value, _Instance] = {}
        self.results: List[Value] = []

    def at(self, t):
        while len(self.results) <= t:
            self.results.append(self._step(len(self.results)))
        return self.results[t]

    def _step(self, t):
        ctx, node = self.ctx, self.node
        kind = type(node)
        if kind is MOver:
            opt = ctx.eval(node.param, t)
            if type(opt) is Err:
                return opt
            now = frozenset() if opt is None else frozenset((opt,))
        else:
            now = ctx.eval(node.params, t)
            if type(now) is Err:
                return now

        if kind is When:
            upd_cond = node.cond
        elif isinstance(node.updating, WhenFilter):
            upd_cond = node.updating.cond
        else:
            upd_cond = None

        if upd_cond is not None:
            selected = set()
            for p in now:
                c = ctx.eval(substitute_param(upd_cond, p), t)
                if type(c) is Err:
                    return c
                if c is True:
                    selected.add(p)
        elif getattr(node, "updating", None) is not None:
            upd = ctx.eval(node.updating, t)
            if type(upd) is Err:
                return upd
            selected = upd & now
        else:
            selected = now

        for p in list(self.live):
            if p not in now:
                del self.live[p]

        names = ctx.input_names
        broken = {}
        for p in sorted_elems(now - set(self.live)):
            inst = _Instance(substitute_param(self.pd.body, p), names, ctx.registry)
            if node.init is not None:
                filt = node.init.materialize(p)
                past = ctx.store_events(node.init.store)
                if past is None:
                    broken[p] = Err(f"store {node.init.store!r} not provided")
                    self.live[p] = inst
                    continue
                for ev in past[:t] if node.init.store == "self" else past:
                    if matches_filter(ev, filt):
                        try:
                            inst.feed(ev)
                        except KeyError as ex:
                            broken[p] = Err(f"retrieved event lacks input {ex}")
                            break
                if p in broken:
                    self.live[p] = inst
                    continue
            self.live[p] = inst

        bindings = ctx.trace[t]
        for p in sorted_elems(selected):
            if p not in broken:
                self.live[p].feed(bindings)

        result = {}
        for p, inst in self.live.items():
            if p in broken:
                result[p] = broken[p]
            elif inst.vals:
                result[p] = inst.last()

        if kind is MOver:
            if not result:
                return None
            if len(result) > 1:
                return Err("several instances under a single-parameter expression")
            return next(iter(result.values()))
        return result


class _Ctx:
    def __init__(self, vs, registry, trace, stores):
        self.vs = vs
        self.registry = registry
        self.trace = trace  # list of bindings dicts
        self.stores = stores or {}
        self.input_names = vs.spec.input_names()
        self.exprs = {n: e for n, _, e in vs.spec.outputs}
        self.memo: Dict[tuple, Value] = {}
        self.overs: Dict[int, _OverRun] = {}

    def store_events(self, name) -> Optional[List[dict]]:
        if name == "self":
            return self.trace
        return self.stores.get(name)

    def value(self, name, t):
        if name in self.exprs:
            key = (name, t)
            if key not in self.memo:
                self.memo[key] = self.eval(self.exprs[name], t)
            return self.memo[key]
        return self.trace[t][name]

    def eval(self, e, t):
        c = type(e)
        if c is Const:
            return e.value
        if c is Param:
            return Err("unbound parameter symbol")
        if c is Now:
            return self.value(e.stream, t)
        if c is Offset:
            u = t + e.k
            if u < 0 or u >= len(self.trace):
                return self.eval(e.default, t)
            return self.value(e.stream, u)
        if c is Slice:
            vals = []
            for u in range(t, min(t + e.n, len(self.trace))):
                v = self.value(e.stream, u)
                if type(v) is Err:
                    return v
                vals.append(v)
            return tuple(vals)
        if c is Apply:
            return _apply(self.registry, e, t, self.eval)
        if c in (Over, MOver, When):
            run = self.overs.get(id(e))
            if run is None:
                run = self.overs[id(e)] = _OverRun(self, e)
            return run.at(t)
        if c is RunSpec:
            return self._run_nested(e, t)
        if c is RunSpecOnLog:
            return self._run_on_log(e, t)
        return Err(f"unsupported node {c.__name__}")

    def _run_nested(self, node, t):
        lists = {}
        for name, expr in node.inputs:
            v = self.eval(expr, t)
            if type(v) is Err:
                return v
            lists[name] = v
        lens = {len(v) for v in lists.values()}
        if len(lens) > 1:
            return Err("ragged nested inputs")
        n = lens.pop() if lens else 0
        sub = [{k: lists[k][i] for k in lists} for i in range(n)]
        return _verdict_of(node.spec, sub, self.registry, self.stores)

    def _run_on_log(self, node, t):
        events = self.store_events(node.store)
        if events is None:
            return Err(f"store {node.store!r} not provided")
        filt = self.eval(node.filter, t)
        if type(filt) is Err:
            return filt
        frm = self.eval(node.frm, t)
        if type(frm) is Err:
            return frm
        if node.to is None:
            to = t + 1 if node.store == "self" else len(events)
        else:
            to = self.eval(node.to, t)
            if type(to) is Err:
                return to
        if type(frm) is not int or type(to) is not int or not 0 <= frm <= to <= len(events):
            return Err(f"log range [{frm!r},{to!r}) out of bounds")
        try:
            sub = [ev for ev in events[frm:to] if matches_filter(ev, filt)]
        except Exception as ex:
            return Err(f"bad log filter: {ex}")
        nested_names = node.spec.input_names()
        try:
            sub = [{n: ev[n] for n in nested_names} for ev in sub]
        except KeyError as ex:
            return Err(f"fetched event lacks input {ex}")
        return _verdict_of(node.spec, sub, self.registry, self.stores)


def _verdict_of(spec, trace, registry, stores):
    res = run_offline(spec, trace, registry, stores=stores)
    if not res.verdict_set:
        return Err("nested specification produced no verdict")
    return res.verdict


def run_offline(
    spec,
    trace: List[dict],
    registry: Optional[Registry] = None,
    stores: Optional[Dict[str, List[dict]]] = None,
) -> OfflineResult:
    """Evaluate a spec over a complete trace of input bindings.

    `stores` maps store names to full event binding lists for retroactive
    retrieval; the trace itself always backs the "self" store.
    """
    registry = registry or builtin_registry()
    vs = validate(spec, registry)
    ctx = _Ctx(vs, registry, trace, stores)
    n = len(trace)
    outputs = {name: [] for name in vs.spec.output_names()}
    order = [name for name in vs.order if name in outputs]
    for t in range(n):
        for name in order:
            ctx.value(name, t)
    for name, _, _ in vs.spec.outputs:
        outputs[name] = [ctx.value(name, t) for t in range(n)]

    res = OfflineResult(outputs)
    rc = vs.spec.return_clause
    if rc is not None and n > 0:
        val, cond = rc
        for t in range(n):
            c = ctx.value(cond, t) if cond in outputs else trace[t][cond]
            if c is True:
                res.verdict = ctx.value(val, t) if val in outputs else trace[t][val]
                res.verdict_set = True
                break
        else:
            res.verdict = ctx.value(val, n - 1) if val in outputs else trace[n - 1][val]
            res.verdict_set = True
    return res
