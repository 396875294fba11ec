"""Incremental online evaluation of validated specifications.

One event per logical instant; every output instant is resolved as soon as
its transitive dependencies are available within the bounded window, so
memory stays independent of the trace length (growing only with live
parameter instances).
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import dynamic_param as dp
from .functions import EvalError, Registry, builtin_registry
from .logstore import Event, InMemoryLogStore, PastRetriever, StoreRetriever
from .specmodel import (
    Apply,
    Const,
    Now,
    Offset,
    Over,
    Param,
    RunSpec,
    RunSpecOnLog,
    Slice,
    Specification,
    ValidatedSpec,
    WhenFilter,
    desugar,
    instantiate,
    substitute_param,
    validate,
)
from .values import Value, check_value


class EngineError(Exception):
    pass


class InstantMismatch(EngineError):
    pass


class NoVerdict(EngineError):
    pass


class ThawError(EngineError):
    pass


class _Unavail:
    __slots__ = ()

    def __repr__(self):
        return "<unavailable>"


UNAVAIL = _Unavail()


@dataclass(frozen=True)
class Poison:
    """An evaluation error attached to (stream, instant); carried as a value
    so one bad event does not kill a long-running monitor."""

    stream: str
    instant: int
    message: str


@dataclass
class StepOutput:
    resolved: List[Tuple[int, str, Value]] = field(default_factory=list)
    verdict: Optional[Value] = None
    verdict_set: bool = False


def _new_stats() -> dict:
    return {"events": 0, "nested_events": 0, "installs": 0, "replayed_events": 0}


class Monitor:
    """Resumable evaluation state of one (possibly parametrized) monitor."""

    def __init__(
        self,
        vspec: ValidatedSpec,
        registry: Optional[Registry] = None,
        log_store=None,
        retrievers: Optional[Dict[str, PastRetriever]] = None,
        stats: Optional[dict] = None,
    ):
        registry = registry or builtin_registry()
        self.vs = desugar(validate(vspec, registry), registry)
        self.registry = registry
        self.log_store = log_store
        self.retrievers: Dict[str, PastRetriever] = dict(retrievers or {})
        if log_store is not None and "self" not in self.retrievers:
            self.retrievers["self"] = StoreRetriever(log_store)
        self.stats = stats if stats is not None else _new_stats()

        spec = self.vs.spec
        self.input_names = spec.input_names()
        self._input_types = dict(spec.inputs)
        self._exprs = {n: e for n, _, e in spec.outputs}
        self._decl_index = {n: i for i, (n, _, _) in enumerate(spec.outputs)}
        self._order = [n for n, _, _ in spec.outputs]

        self.ingested = 0
        self.trace_len: Optional[int] = None
        self.in_vals: Dict[str, Dict[int, Value]] = {n: {} for n in self.input_names}
        self.out_vals: Dict[str, Dict[int, Value]] = {n: {} for n in self._order}
        self.frontier: Dict[str, int] = {n: 0 for n in self._order}
        self.last: Dict[str, Value] = {}
        self.over_states: Dict[int, dp.OverState] = {}
        self.rc_ptr = 0
        self.returned: Optional[Value] = None
        self.has_returned = False
        self._evict_from = 0
        self._compiled = {n: self._compile(e, n) for n, e in self._exprs.items()}

    # compiled closures are rebuilt on unpickling
    def __getstate__(self):
        state = dict(self.__dict__)
        del state["_compiled"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._compiled = {n: self._compile(e, n) for n, e in self._exprs.items()}

    # -- public API --------------------------------------------------------

    @property
    def next_instant(self) -> int:
        return self.ingested

    def step(self, ev: Event) -> StepOutput:
        if self.trace_len is not None:
            raise EngineError("monitor already finished")
        if ev.instant != self.ingested:
            raise InstantMismatch(f"expected instant {self.ingested}, got {ev.instant}")
        if set(ev.bindings) != set(self.input_names):
            raise EngineError(
                f"event bindings {sorted(ev.bindings)} do not match inputs {sorted(self.input_names)}"
            )
        for n, t in self._input_types.items():
            if not check_value(ev.bindings[n], t):
                raise EngineError(f"binding {n!r} at instant {ev.instant} is not a {t!r}: {ev.bindings[n]!r}")
        if self.log_store is not None:
            self.log_store.append(Event(ev.instant, dict(ev.bindings)))
        for n in self.input_names:
            self.in_vals[n][ev.instant] = ev.bindings[n]
            self.last[n] = ev.bindings[n]
        self.ingested += 1
        self.stats["events"] += 1
        out = self._resolve_loop()
        self._evict()
        self._assert_window()
        return out

    def finish(self) -> StepOutput:
        if self.trace_len is None:
            self.trace_len = self.ingested
        out = self._resolve_loop()
        for n in self._order:
            if self.frontier[n] != self.trace_len:
                raise EngineError(f"output {n!r} stuck at instant {self.frontier[n]} at end of trace")
        rc = self.vs.spec.return_clause
        if rc is not None and not self.has_returned:
            val, _ = rc
            if self.trace_len == 0:
                raise NoVerdict(f"trace ended with no value on return stream {val!r}")
            self.returned = self.last[val]
            self.has_returned = True
        if self.has_returned:
            out.verdict = self.returned
            out.verdict_set = True
        return out

    def last_value(self, name: str) -> Value:
        return self.last.get(name)

    def max_live_instances(self) -> int:
        """Peak live instance count over any single parametrized expression."""
        return max((s.max_live for s in self.over_states.values()), default=0)

    # -- resolution --------------------------------------------------------

    def _resolve_loop(self) -> StepOutput:
        out = StepOutput()
        limit = self.trace_len if self.trace_len is not None else self.ingested
        progress = True
        while progress:
            progress = False
            for name in self._order:
                while self.frontier[name] < limit:
                    t = self.frontier[name]
                    v = self._resolve_out(name, t)
                    if v is UNAVAIL:
                        break
                    self.frontier[name] = t + 1
                    self.last[name] = v
                    out.resolved.append((t, name, v))
                    progress = True
        self._scan_return(out)
        out.resolved.sort(key=lambda r: (r[0], self._decl_index[r[1]]))
        return out

    def _scan_return(self, out: StepOutput):
        rc = self.vs.spec.return_clause
        if rc is None or self.has_returned:
            return
        val, cond = rc
        limit = min(self._avail(cond), self._avail(val))
        while self.rc_ptr < limit:
            t = self.rc_ptr
            c = self._lookup(cond, t)
            if c is True:
                self.returned = self._lookup(val, t)
                self.has_returned = True
                out.verdict = self.returned
                out.verdict_set = True
                return
            self.rc_ptr += 1

    def _avail(self, name: str) -> int:
        if name in self.frontier:
            return self.frontier[name]
        return self.ingested

    def _lookup(self, name: str, t: int) -> Value:
        if name in self.out_vals:
            return self.out_vals[name][t]
        return self.in_vals[name][t]

    def _resolve_out(self, name: str, t: int) -> Value:
        memo = self.out_vals[name]
        if t in memo:
            return memo[t]
        try:
            v = self._compiled[name](t)
        except EngineError:
            raise
        except Exception as e:  # evaluation errors poison, never abort
            v = Poison(name, t, str(e))
        if v is not UNAVAIL:
            memo[t] = v
        return v

    def _resolve(self, name: str, t: int) -> Value:
        if name in self.out_vals:
            return self._resolve_out(name, t)
        vals = self.in_vals[name]
        if t in vals:
            return vals[t]
        if t >= self.ingested:
            return UNAVAIL
        raise EngineError(f"input {name!r} at instant {t} already left the window")

    # -- expression evaluation --------------------------------------------

    def _compile(self, e, out: str):
        """Close each output expression over its evaluation plan once, so the
        per-instant hot path skips node dispatch."""
        cls = type(e)
        if cls is Const:
            v = e.value
            return lambda t: v
        if cls is Now:
            s = e.stream
            resolve = self._resolve
            return lambda t: resolve(s, t)
        if cls is Offset:
            s, k = e.stream, e.k
            dflt = self._compile(e.default, out)
            resolve = self._resolve

            def offset(t):
                u = t + k
                if u < 0 or (self.trace_len is not None and u >= self.trace_len):
                    return dflt(t)
                if u >= self.ingested:
                    return UNAVAIL
                return resolve(s, u)

            return offset
        if cls is Apply:
            d = self.registry.get(e.fn)
            if d.lazy:
                cond = self._compile(e.args[0], out)
                if d.name == "ite":
                    yes = self._compile(e.args[1], out)
                    no = self._compile(e.args[2], out)

                    def ite(t):
                        c = cond(t)
                        if c is UNAVAIL or type(c) is Poison:
                            return c
                        return yes(t) if c else no(t)

                    return ite
                rhs = self._compile(e.args[1], out)
                stop = d.name == "or"

                def shortcut(t):
                    c = cond(t)
                    if c is UNAVAIL or type(c) is Poison:
                        return c
                    if c is stop:
                        return stop
                    return rhs(t)

                if d.name in ("and", "or"):
                    return shortcut
                raise EngineError(f"unknown lazy function {d.name!r}")
            args = tuple(self._compile(a, out) for a in e.args)
            fn, needs, reg = d.fn, d.needs_registry, self.registry

            def apply(t):
                vals = []
                for a in args:
                    v = a(t)
                    if v is UNAVAIL:
                        return UNAVAIL
                    vals.append(v)
                for v in vals:
                    if type(v) is Poison:
                        return v
                try:
                    return fn(reg, *vals) if needs else fn(*vals)
                except Exception as ex:
                    return Poison(out, t, str(ex))

            return apply
        if cls is Slice:
            s, n = e.stream, e.n
            resolve = self._resolve

            def slice_(t):
                end = t + n
                if self.trace_len is not None:
                    end = min(end, self.trace_len)
                elif end > self.ingested:
                    return UNAVAIL
                vals = []
                for u in range(t, end):
                    v = resolve(s, u)
                    if v is UNAVAIL:
                        return UNAVAIL
                    if type(v) is Poison:
                        return v
                    vals.append(v)
                return tuple(vals)

            return slice_
        if cls is Over:
            return lambda t: self._eval_over(e, t, out)
        if cls is RunSpec:
            return lambda t: self._eval_runspec(e, t, out)
        if cls is RunSpecOnLog:
            return lambda t: self._eval_runlog(e, t, out)
        if cls is Param:
            return lambda t: Poison(out, t, "unbound parameter symbol")
        raise EngineError(f"cannot compile node {e!r}")

    def _eval(self, e, t: int, out: str) -> Value:
        cls = type(e)
        if cls is Const:
            return e.value
        if cls is Now:
            return self._resolve(e.stream, t)
        if cls is Offset:
            u = t + e.k
            if u < 0 or (self.trace_len is not None and u >= self.trace_len):
                return self._eval(e.default, t, out)
            if u >= self.ingested:
                return UNAVAIL
            return self._resolve(e.stream, u)
        if cls is Apply:
            d = self.registry.get(e.fn)
            if d.lazy:
                return self._eval_lazy(d, e, t, out)
            vals = []
            for a in e.args:
                v = self._eval(a, t, out)
                if v is UNAVAIL:
                    return UNAVAIL
                vals.append(v)
            for v in vals:
                if type(v) is Poison:
                    return v
            try:
                if d.needs_registry:
                    return d.fn(self.registry, *vals)
                return d.fn(*vals)
            except Exception as ex:
                return Poison(out, t, str(ex))
        if cls is Slice:
            end = t + e.n
            if self.trace_len is not None:
                end = min(end, self.trace_len)
            elif end > self.ingested:
                return UNAVAIL
            vals = []
            for u in range(t, end):
                v = self._resolve(e.stream, u)
                if v is UNAVAIL:
                    return UNAVAIL
                if type(v) is Poison:
                    return v
                vals.append(v)
            return tuple(vals)
        if cls is Over:
            return self._eval_over(e, t, out)
        if cls is RunSpec:
            return self._eval_runspec(e, t, out)
        if cls is RunSpecOnLog:
            return self._eval_runlog(e, t, out)
        if cls is Param:
            return Poison(out, t, "unbound parameter symbol")
        raise EngineError(f"cannot evaluate node {e!r}")

    def _eval_lazy(self, d, e, t: int, out: str) -> Value:
        c = self._eval(e.args[0], t, out)
        if c is UNAVAIL or type(c) is Poison:
            return c
        if d.name == "ite":
            return self._eval(e.args[1] if c else e.args[2], t, out)
        if d.name == "and":
            if c is False:
                return False
            return self._eval(e.args[1], t, out)
        if d.name == "or":
            if c is True:
                return True
            return self._eval(e.args[1], t, out)
        raise EngineError(f"unknown lazy function {d.name!r}")

    def _eval_over(self, node: Over, t: int, out: str) -> Value:
        state = self.over_states.setdefault(node.node_id, dp.OverState())
        if state.cache_t == t:
            return state.cache_result
        if t != state.next_t:
            raise EngineError(
                f"parametrized expression in {out!r} evaluated out of order "
                f"(instant {t}, expected {state.next_t})"
            )
        now = self._eval(node.params, t, out)
        if now is UNAVAIL or type(now) is Poison:
            return now
        updating = None
        if isinstance(node.updating, WhenFilter):
            updating_set = set()
            for p in now:
                c = self._eval(substitute_param(node.updating.cond, p), t, out)
                if c is UNAVAIL:
                    return UNAVAIL
                if type(c) is Poison:
                    return c
                if c is True:
                    updating_set.add(p)
            updating = frozenset(updating_set)
        elif node.updating is not None:
            updating = self._eval(node.updating, t, out)
            if updating is UNAVAIL or type(updating) is Poison:
                return updating
        ev = Event(t, {n: self.in_vals[n][t] for n in self.input_names})
        pd = self.vs.spec.pdef(node.pstream)

        def make(p):
            self.stats["installs"] += 1
            return Monitor(instantiate(self.vs, pd, p), self.registry, stats=self.stats)

        def value_of(inst):
            return inst.last_value(node.pstream)

        retr = self.retrievers.get(node.init.store) if node.init is not None else None
        try:
            result = dp.eval_over(
                state,
                now,
                updating,
                ev,
                make,
                value_of,
                init=node.init,
                retriever=retr,
                on_install_error=lambda p, ex: Poison(out, t, f"install of {p!r} failed: {ex}"),
            )
        except EngineError:
            raise
        except Exception as ex:
            result = Poison(out, t, str(ex))
        state.cache_t = t
        state.cache_result = result
        state.next_t = t + 1
        return result

    def _eval_runspec(self, node: RunSpec, t: int, out: str) -> Value:
        lists = {}
        for name, expr in node.inputs:
            v = self._eval(expr, t, out)
            if v is UNAVAIL:
                return UNAVAIL
            if type(v) is Poison:
                return v
            lists[name] = v
        lengths = {len(v) for v in lists.values()}
        if len(lengths) > 1:
            return Poison(out, t, f"ragged nested inputs: {sorted(lengths)}")
        try:
            return run_nested(
                node.spec, lists, self.registry, retrievers=self.retrievers, stats=self.stats
            )
        except NoVerdict:
            return Poison(out, t, "nested specification produced no verdict")
        except EngineError as ex:
            return Poison(out, t, str(ex))

    def _eval_runlog(self, node: RunSpecOnLog, t: int, out: str) -> Value:
        retr = self.retrievers.get(node.store)
        if retr is None:
            return Poison(out, t, f"no retriever bound for store {node.store!r}")
        filt = self._eval(node.filter, t, out)
        if filt is UNAVAIL or type(filt) is Poison:
            return filt
        frm = self._eval(node.frm, t, out)
        if frm is UNAVAIL or type(frm) is Poison:
            return frm
        if node.to is None:
            # the monitor's own log "so far" is deterministic per instant
            to = t + 1 if node.store == "self" else retr.end()
        else:
            to = self._eval(node.to, t, out)
            if to is UNAVAIL or type(to) is Poison:
                return to
        try:
            fetched = retr.fetch_filtered(frm, to, filt)
        except Exception as ex:
            return Poison(out, t, f"log retrieval failed: {ex}")
        try:
            return run_nested_events(
                node.spec, fetched, self.registry, stats=self.stats
            )
        except NoVerdict:
            return Poison(out, t, "nested specification produced no verdict")
        except EngineError as ex:
            return Poison(out, t, str(ex))

    # -- housekeeping ------------------------------------------------------

    def _evict(self):
        horizon = min(self.frontier.values(), default=self.ingested)
        if self.vs.spec.return_clause is not None:
            horizon = min(horizon, self.rc_ptr)
        keep_from = horizon - self.vs.max_back
        for t in range(self._evict_from, keep_from):
            for vals in self.in_vals.values():
                vals.pop(t, None)
            for vals in self.out_vals.values():
                vals.pop(t, None)
        if keep_from > self._evict_from:
            self._evict_from = keep_from

    def _assert_window(self):
        bound = self.vs.max_back + self.vs.max_fwd + 1
        for n, vals in self.in_vals.items():
            assert len(vals) <= bound, f"window of input {n!r} exceeded {bound}"
        for n, vals in self.out_vals.items():
            assert len(vals) <= bound, f"window of output {n!r} exceeded {bound}"


def start(vspec: ValidatedSpec, registry: Optional[Registry] = None, **kw) -> Monitor:
    return Monitor(vspec, registry, **kw)


# ---------------------------------------------------------------------------
# Nested execution


def run_nested(
    spec,
    inputs: Dict[str, tuple],
    registry: Optional[Registry] = None,
    retrievers=None,
    stats=None,
) -> Value:
    """Run a spec over explicit input lists, returning at the first true of
    its condition stream (or the last value at the end)."""
    vs = validate(spec, registry)
    names = vs.spec.input_names()
    missing = set(names) - set(inputs)
    if missing:
        raise EngineError(f"nested inputs missing: {sorted(missing)}")
    lengths = {len(inputs[n]) for n in names} or {0}
    if len(lengths) > 1:
        raise EngineError(f"ragged nested inputs: {sorted(lengths)}")
    n = lengths.pop()
    events = [Event(i, {name: inputs[name][i] for name in names}) for i in range(n)]
    return run_nested_events(vs, events, registry, retrievers=retrievers, stats=stats)


def run_nested_events(spec, events, registry=None, retrievers=None, stats=None) -> Value:
    vs = validate(spec, registry)
    if vs.spec.return_clause is None:
        raise EngineError(f"spec {vs.name!r} has no return clause")
    names = vs.spec.input_names()
    try:
        local = [
            Event(i, {n: ev.bindings[n] for n in names}) for i, ev in enumerate(events)
        ]
    except KeyError as e:
        raise EngineError(f"fetched event lacks input {e}") from None
    store = InMemoryLogStore()
    m = Monitor(
        vs,
        registry,
        log_store=store,
        retrievers=dict(retrievers or {}),
        stats=stats,
    )
    m.retrievers["self"] = StoreRetriever(store)
    for ev in local:
        out = m.step(ev)
        if stats is not None:
            stats["nested_events"] += 1
        if out.verdict_set:
            return out.verdict
    return m.finish().verdict


# ---------------------------------------------------------------------------
# Freeze / thaw


FREEZE_VERSION = 1


@dataclass(frozen=True)
class FrozenMonitor:
    version: int
    spec_hash: str
    blob: bytes


def freeze(m: Monitor) -> FrozenMonitor:
    from .spec_io import spec_hash

    return FrozenMonitor(FREEZE_VERSION, spec_hash(m.vs.spec), pickle.dumps(m))


def thaw(f: FrozenMonitor) -> Monitor:
    from .spec_io import spec_hash

    if f.version != FREEZE_VERSION:
        raise ThawError(f"frozen state version {f.version}, engine supports {FREEZE_VERSION}")
    m = pickle.loads(f.blob)
    if spec_hash(m.vs.spec) != f.spec_hash:
        raise ThawError("frozen state does not match its declared spec hash")
    return m
