"""Specification abstract syntax, type checking, and well-formedness.

A specification is the classic triple (inputs, outputs, defining equations),
optionally extended with parametric stream definitions, a return clause for
nested use, and the dynamic-parametrization expression forms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple, Union

from .functions import Registry, builtin_registry
from .values import (
    ANY,
    BOOL,
    Ty,
    Value,
    apply_subst,
    check_value,
    infer_value_type,
    list_t,
    map_t,
    opt_t,
    set_t,
    unify,
)


# ---------------------------------------------------------------------------
# Expression nodes


@dataclass(frozen=True)
class Const:
    value: Value


@dataclass(frozen=True)
class Param:
    """The bound parameter symbol inside a parametric stream body."""


PARAM = Param()


@dataclass(frozen=True)
class Apply:
    fn: str
    args: Tuple["Expr", ...]


@dataclass(frozen=True)
class Offset:
    stream: str
    k: int
    default: "Expr"


@dataclass(frozen=True)
class Now:
    stream: str


@dataclass(frozen=True)
class Slice:
    stream: str
    n: int


@dataclass(frozen=True)
class Initializer:
    """How a freshly discovered instance recovers its past.

    filter_template values equal to "{param}" are replaced by the concrete
    parameter at install time.  `store` names the log store to read from
    ("self" is the monitor's own trace log).  `command`, when set, forces
    retrieval through an external adapter process.
    """

    filter_template: Tuple[Tuple[str, Value], ...] = ()
    store: str = "self"
    command: Optional[str] = None

    def materialize(self, param: Value) -> dict:
        return {k: (param if v == "{param}" else v) for k, v in self.filter_template}


@dataclass(eq=False)
class RunSpec:
    spec: "Specification"
    inputs: Tuple[Tuple[str, "Expr"], ...]
    node_id: int = -1


@dataclass(eq=False)
class RunSpecOnLog:
    """Run a nested spec over events fetched from a log store.

    The filter expression evaluates to a map of field -> required value; the
    from/to expressions give the instant range ("to" of None means store end).
    """

    spec: "Specification"
    filter: "Expr"
    frm: "Expr"
    to: Optional["Expr"]
    store: str = "self"
    node_id: int = -1


@dataclass(frozen=True)
class WhenFilter:
    """Updating filter evaluated per live parameter (desugared `when`)."""

    cond: "Expr"  # contains Param


@dataclass(eq=False)
class Over:
    pstream: str
    params: "Expr"  # set-valued
    updating: Union["Expr", WhenFilter, None] = None
    init: Optional[Initializer] = None
    node_id: int = -1


@dataclass(eq=False)
class MOver:
    pstream: str
    param: "Expr"  # optional-valued
    updating: Union["Expr", WhenFilter, None] = None
    init: Optional[Initializer] = None
    node_id: int = -1


@dataclass(eq=False)
class When:
    pstream: str
    params: "Expr"
    cond: "Expr"  # contains Param
    init: Optional[Initializer] = None
    node_id: int = -1


Expr = Union[Const, Param, Apply, Offset, Now, Slice, RunSpec, RunSpecOnLog, Over, MOver, When]

_STATEFUL_NODES = (RunSpec, RunSpecOnLog, Over, MOver, When)


@dataclass
class ParametricStreamDef:
    name: str
    param_type: Ty
    value_type: Ty
    body: Expr  # references the parameter through Param, may reference itself


@dataclass
class Specification:
    name: str
    inputs: List[Tuple[str, Ty]]
    outputs: List[Tuple[str, Ty, Expr]]
    parametric: List[ParametricStreamDef] = field(default_factory=list)
    return_clause: Optional[Tuple[str, str]] = None  # (value stream, cond stream)

    def input_names(self) -> List[str]:
        return [n for n, _ in self.inputs]

    def output_names(self) -> List[str]:
        return [n for n, _, _ in self.outputs]

    def pdef(self, name: str) -> ParametricStreamDef:
        for p in self.parametric:
            if p.name == name:
                return p
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass(frozen=True)
class Diagnostic:
    code: str  # CyclicDependency TypeMismatch UndeclaredStream IllFormedDefault ...
    message: str
    stream: str = ""

    def __str__(self):
        where = f" [{self.stream}]" if self.stream else ""
        return f"{self.code}{where}: {self.message}"


class SpecValidationError(Exception):
    def __init__(self, diagnostics: List[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(map(str, diagnostics)))


@dataclass
class ValidatedSpec:
    spec: Specification
    max_back: int
    max_fwd: int
    order: List[str]  # output evaluation order (0-offset topological)
    stream_types: Dict[str, Ty]
    stateful: frozenset  # outputs whose equations hold stateful nodes
    pdef_types: Dict[str, Ty]  # parametric stream name -> value type

    @property
    def name(self):
        return self.spec.name


# ---------------------------------------------------------------------------
# Tree walking helpers


def walk(e: Expr):
    yield e
    if type(e) is Apply:
        for a in e.args:
            yield from walk(a)
    elif type(e) is Offset:
        yield from walk(e.default)
    elif type(e) is RunSpec:
        for _, a in e.inputs:
            yield from walk(a)
    elif type(e) is RunSpecOnLog:
        yield from walk(e.filter)
        yield from walk(e.frm)
        if e.to is not None:
            yield from walk(e.to)
    elif type(e) is Over:
        yield from walk(e.params)
        if isinstance(e.updating, WhenFilter):
            yield from walk(e.updating.cond)
        elif e.updating is not None:
            yield from walk(e.updating)
    elif type(e) is MOver:
        yield from walk(e.param)
        if isinstance(e.updating, WhenFilter):
            yield from walk(e.updating.cond)
        elif e.updating is not None:
            yield from walk(e.updating)
    elif type(e) is When:
        yield from walk(e.params)
        yield from walk(e.cond)


def substitute_param(e: Expr, value: Value) -> Expr:
    """Instantiate a parametric body at a concrete parameter.

    Shared by static instantiation and the runtime install path so the two
    cannot diverge.
    """
    t = type(e)
    if t is Param:
        return Const(value)
    if t is Apply:
        return Apply(e.fn, tuple(substitute_param(a, value) for a in e.args))
    if t is Offset:
        return Offset(e.stream, e.k, substitute_param(e.default, value))
    return e


def rename_stream(e: Expr, old: str, new: str) -> Expr:
    t = type(e)
    if t is Apply:
        return Apply(e.fn, tuple(rename_stream(a, old, new) for a in e.args))
    if t is Offset:
        return Offset(new if e.stream == old else e.stream, e.k, rename_stream(e.default, old, new))
    if t is Now:
        return Now(new if e.stream == old else e.stream)
    if t is Slice:
        return Slice(new if e.stream == old else e.stream, e.n)
    return e


def _offsets_of(e: Expr):
    """Yield (stream, min_k, max_k) references of an expression, this level only.

    Over/RunSpec sub-expressions are included; nested spec bodies are not
    (they run over their own traces).
    """
    for n in walk(e):
        t = type(n)
        if t is Now:
            yield (n.stream, 0, 0)
        elif t is Offset:
            yield (n.stream, n.k, n.k)
        elif t is Slice:
            yield (n.stream, 0, n.n - 1)


# ---------------------------------------------------------------------------
# Validation


def _check_default(e: Expr, out: str, diags: List[Diagnostic]):
    for n in walk(e):
        if type(n) in (Offset, Now, Slice) or isinstance(n, _STATEFUL_NODES):
            diags.append(
                Diagnostic(
                    "IllFormedDefault",
                    "offset defaults may only contain constants and pure applications",
                    out,
                )
            )
            return


class _Checker:
    """Single-spec type and dependency analysis, collecting all diagnostics."""

    def __init__(self, spec: Specification, registry: Registry):
        self.spec = spec
        self.registry = registry
        self.diags: List[Diagnostic] = []
        self.types: Dict[str, Ty] = {}
        for n, t in spec.inputs:
            self.types[n] = t
        for n, t, _ in spec.outputs:
            if n in self.types:
                self.diags.append(Diagnostic("DuplicateStream", f"stream {n!r} declared twice", n))
            self.types[n] = t
        self.pdefs = {p.name: p for p in spec.parametric}
        self._fresh = itertools.count()

    def err(self, code, msg, stream=""):
        self.diags.append(Diagnostic(code, msg, stream))

    def freshen(self, t: Ty, mapping: dict) -> Ty:
        if t.kind == "var":
            if t.var not in mapping:
                mapping[t.var] = Ty("var", (), f"_{next(self._fresh)}")
            return mapping[t.var]
        if t.args:
            return Ty(t.kind, tuple(self.freshen(a, mapping) for a in t.args), t.var)
        return t

    def infer(self, e: Expr, out: str, param_type: Optional[Ty]) -> Ty:
        t = type(e)
        if t is Const:
            try:
                return infer_value_type(e.value)
            except Exception:
                self.err("TypeMismatch", f"unsupported constant {e.value!r}", out)
                return ANY
        if t is Param:
            if param_type is None:
                self.err("UndeclaredStream", "parameter symbol outside a parametric body", out)
                return ANY
            return param_type
        if t is Apply:
            if e.fn not in self.registry:
                self.err("UnknownFunction", f"function {e.fn!r} is not registered", out)
                for a in e.args:
                    self.infer(a, out, param_type)
                return ANY
            d = self.registry.get(e.fn)
            if len(e.args) != d.arity:
                self.err("TypeMismatch", f"{e.fn!r} expects {d.arity} arguments, got {len(e.args)}", out)
            arg_tys = [self.infer(a, out, param_type) for a in e.args]
            if d.sig is None:
                return ANY
            mapping: dict = {}
            want = [self.freshen(x, mapping) for x in d.sig[0]]
            ret = self.freshen(d.sig[1], mapping)
            subst: dict = {}
            for got, exp in zip(arg_tys, want):
                if not unify(got, exp, subst):
                    self.err(
                        "TypeMismatch",
                        f"{e.fn!r} argument expects {exp!r}, got {got!r}",
                        out,
                    )
            return apply_subst(ret, subst)
        if t in (Offset, Now, Slice):
            name = e.stream
            if name not in self.types:
                self.err("UndeclaredStream", f"stream {name!r} is not declared", out)
                return ANY
            st = self.types[name]
            if t is Now:
                return st
            if t is Offset:
                _check_default(e.default, out, self.diags)
                dt = self.infer(e.default, out, param_type)
                if not unify(dt, st, {}):
                    self.err("TypeMismatch", f"default of {name}[{e.k}] has type {dt!r}, stream has {st!r}", out)
                return st
            if e.n < 1:
                self.err("TypeMismatch", f"slice length must be >= 1, got {e.n}", out)
            return list_t(st)
        if t is RunSpec:
            nested = validate(e.spec, self.registry, _collect=self.diags)
            if nested is not None and nested.spec.return_clause is None:
                self.err("TypeMismatch", f"nested spec {e.spec.name!r} has no return clause", out)
            declared = dict(e.spec.inputs)
            for name, expr in e.inputs:
                it = self.infer(expr, out, param_type)
                if name not in declared:
                    self.err("UndeclaredStream", f"nested spec has no input {name!r}", out)
                elif not unify(it, list_t(declared[name]), {}):
                    self.err("TypeMismatch", f"nested input {name!r} expects {list_t(declared[name])!r}, got {it!r}", out)
            missing = set(declared) - {n for n, _ in e.inputs}
            if missing:
                self.err("TypeMismatch", f"nested inputs not supplied: {sorted(missing)}", out)
            if nested is not None and e.spec.return_clause is not None:
                return nested.stream_types[e.spec.return_clause[0]]
            return ANY
        if t is RunSpecOnLog:
            nested = validate(e.spec, self.registry, _collect=self.diags)
            if nested is not None and nested.spec.return_clause is None:
                self.err("TypeMismatch", f"nested spec {e.spec.name!r} has no return clause", out)
            self.infer(e.filter, out, param_type)
            if not unify(self.infer(e.frm, out, param_type), Ty("int"), {}):
                self.err("TypeMismatch", "log range start must be an int", out)
            if e.to is not None and not unify(self.infer(e.to, out, param_type), Ty("int"), {}):
                self.err("TypeMismatch", "log range end must be an int", out)
            if nested is not None and e.spec.return_clause is not None:
                return nested.stream_types[e.spec.return_clause[0]]
            return ANY
        if t in (Over, MOver, When):
            if e.pstream not in self.pdefs:
                self.err("UndeclaredStream", f"parametric stream {e.pstream!r} is not declared", out)
                return ANY
            pd = self.pdefs[e.pstream]
            if t is Over or t is When:
                pt = self.infer(e.params, out, param_type)
                if not unify(pt, set_t(pd.param_type), {}):
                    self.err("TypeMismatch", f"parameter set expects {set_t(pd.param_type)!r}, got {pt!r}", out)
            else:
                pt = self.infer(e.param, out, param_type)
                if not unify(pt, opt_t(pd.param_type), {}):
                    self.err("TypeMismatch", f"parameter expects {opt_t(pd.param_type)!r}, got {pt!r}", out)
            upd = getattr(e, "updating", None)
            if isinstance(upd, WhenFilter):
                ct = self.infer(upd.cond, out, pd.param_type)
                if not unify(ct, BOOL, {}):
                    self.err("TypeMismatch", "updating condition must be boolean", out)
            elif upd is not None:
                ut = self.infer(upd, out, param_type)
                if not unify(ut, set_t(pd.param_type), {}):
                    self.err("TypeMismatch", f"updating set expects {set_t(pd.param_type)!r}, got {ut!r}", out)
            if t is When:
                ct = self.infer(e.cond, out, pd.param_type)
                if not unify(ct, BOOL, {}):
                    self.err("TypeMismatch", "when condition must be boolean", out)
            if t is MOver:
                return opt_t(pd.value_type)
            return map_t(pd.param_type, pd.value_type)
        raise TypeError(f"unknown expression node {e!r}")


def _assign_node_ids(spec: Specification):
    counter = itertools.count()
    for _, _, e in spec.outputs:
        for n in walk(e):
            if isinstance(n, _STATEFUL_NODES):
                n.node_id = next(counter)


def validate(
    spec: Union[Specification, ValidatedSpec],
    registry: Optional[Registry] = None,
    _collect: Optional[List[Diagnostic]] = None,
) -> ValidatedSpec:
    """Check well-formedness and annotate the spec for evaluation.

    Raises SpecValidationError carrying every diagnostic found; validating an
    already validated spec returns it unchanged.
    """
    if isinstance(spec, ValidatedSpec):
        return spec
    registry = registry or builtin_registry()
    ck = _Checker(spec, registry)

    declared = set(ck.types)
    for name, ty, expr in spec.outputs:
        got = ck.infer(expr, name, None)
        if not unify(got, ty, {}):
            ck.err("TypeMismatch", f"output {name!r} declared {ty!r} but defined as {got!r}", name)

    # parametric bodies: inputs + self only, no future references
    for pd in spec.parametric:
        refs = {s for s, _, _ in _offsets_of(pd.body)}
        bad = refs - set(spec.input_names()) - {pd.name}
        for s in sorted(bad):
            ck.err("UndeclaredStream", f"parametric body may only reference inputs or itself, found {s!r}", pd.name)
        fwd = max((hi for _, _, hi in _offsets_of(pd.body)), default=0)
        if fwd > 0:
            ck.err("TypeMismatch", "parametric bodies must not reference the future", pd.name)
        # the body may reference the stream it defines
        shadowed = ck.types.get(pd.name)
        ck.types[pd.name] = pd.value_type
        got = ck.infer(pd.body, pd.name, pd.param_type)
        if shadowed is None:
            del ck.types[pd.name]
        else:
            ck.types[pd.name] = shadowed
        if not unify(got, pd.value_type, {}):
            ck.err("TypeMismatch", f"parametric stream {pd.name!r} declared {pd.value_type!r} but defined as {got!r}", pd.name)

    # undeclared refs + offset bounds over all defining equations
    max_back = 0
    max_fwd = 0
    zero_edges: Dict[str, set] = {n: set() for n, _, _ in spec.outputs}
    out_names = set(spec.output_names())
    stateful = set()
    fwd_into: Dict[str, int] = {}
    for name, _, expr in spec.outputs:
        if any(isinstance(n, _STATEFUL_NODES) for n in walk(expr)):
            stateful.add(name)
        for s, lo, hi in _offsets_of(expr):
            if s not in declared:
                ck.err("UndeclaredStream", f"stream {s!r} is not declared", name)
                continue
            max_back = max(max_back, -lo if lo < 0 else 0)
            max_fwd = max(max_fwd, hi if hi > 0 else 0)
            if s in out_names:
                if lo <= 0 <= hi:
                    zero_edges[name].add(s)
                if hi > 0:
                    fwd_into[s] = max(fwd_into.get(s, 0), hi)

    for s in sorted(fwd_into):
        if s in stateful:
            ck.err(
                "CyclicDependency",
                f"future reference into {s!r}, whose equation is stateful (over/nested)",
                s,
            )

    # zero-offset cycles + evaluation order
    order: List[str] = []
    state: Dict[str, int] = {}
    stack: List[str] = []
    cycle: Optional[List[str]] = None

    def dfs(n: str):
        nonlocal cycle
        state[n] = 1
        stack.append(n)
        for m in sorted(zero_edges.get(n, ())):
            if state.get(m, 0) == 1:
                if cycle is None:
                    cycle = stack[stack.index(m):] + [m]
            elif state.get(m, 0) == 0:
                dfs(m)
        stack.pop()
        state[n] = 2
        order.append(n)

    for n, _, _ in spec.outputs:
        if state.get(n, 0) == 0:
            dfs(n)
    if cycle is not None:
        ck.err("CyclicDependency", "zero-offset dependency cycle: " + " -> ".join(cycle))

    if spec.return_clause is not None:
        val, cond = spec.return_clause
        for s in (val, cond):
            if s not in declared:
                ck.err("UndeclaredStream", f"return clause references undeclared stream {s!r}")
        if cond in ck.types and not unify(ck.types[cond], BOOL, {}):
            ck.err("TypeMismatch", f"return condition {cond!r} must be boolean")

    if ck.diags:
        if _collect is not None:
            _collect.extend(ck.diags)
            return None  # type: ignore[return-value]
        raise SpecValidationError(ck.diags)

    _assign_node_ids(spec)
    return ValidatedSpec(
        spec=spec,
        max_back=max_back,
        max_fwd=max_fwd,
        order=order,
        stream_types=dict(ck.types),
        stateful=frozenset(stateful),
        pdef_types={p.name: p.value_type for p in spec.parametric},
    )


def diagnose(spec: Specification, registry: Optional[Registry] = None) -> List[Diagnostic]:
    """All diagnostics of a spec; empty when the spec is well-formed."""
    try:
        validate(spec, registry)
        return []
    except SpecValidationError as e:
        return e.diagnostics


# ---------------------------------------------------------------------------
# Desugaring


def _desugar_expr(e: Expr) -> Expr:
    t = type(e)
    if t is Apply:
        return Apply(e.fn, tuple(_desugar_expr(a) for a in e.args))
    if t is Offset:
        return Offset(e.stream, e.k, _desugar_expr(e.default))
    if t is MOver:
        over = Over(
            pstream=e.pstream,
            params=Apply("optToSet", (_desugar_expr(e.param),)),
            updating=e.updating if isinstance(e.updating, WhenFilter) or e.updating is None
            else _desugar_expr(e.updating),
            init=e.init,
        )
        return Apply("singleOptValue", (over,))
    if t is When:
        return Over(
            pstream=e.pstream,
            params=_desugar_expr(e.params),
            updating=WhenFilter(_desugar_expr(e.cond)),
            init=e.init,
        )
    if t is Over:
        return Over(
            pstream=e.pstream,
            params=_desugar_expr(e.params),
            updating=e.updating if isinstance(e.updating, WhenFilter) or e.updating is None
            else _desugar_expr(e.updating),
            init=e.init,
        )
    if t is RunSpec:
        return RunSpec(e.spec, tuple((n, _desugar_expr(x)) for n, x in e.inputs))
    if t is RunSpecOnLog:
        return RunSpecOnLog(
            e.spec,
            _desugar_expr(e.filter),
            _desugar_expr(e.frm),
            None if e.to is None else _desugar_expr(e.to),
            e.store,
        )
    return e


def desugar(vs: ValidatedSpec, registry: Optional[Registry] = None) -> ValidatedSpec:
    """Rewrite MOver into Over + optional projection and When into Over with a
    per-parameter updating filter.  Semantics-preserving; idempotent."""
    spec = vs.spec
    if not any(type(n) in (MOver, When) for _, _, e in spec.outputs for n in walk(e)):
        return vs
    new = Specification(
        name=spec.name,
        inputs=list(spec.inputs),
        outputs=[(n, t, _desugar_expr(e)) for n, t, e in spec.outputs],
        parametric=list(spec.parametric),
        return_clause=spec.return_clause,
    )
    return validate(new, registry)


# ---------------------------------------------------------------------------
# Parametric instantiation


def instantiate(vs: ValidatedSpec, pdef: ParametricStreamDef, p: Value) -> ValidatedSpec:
    """Build the closed single-output spec for one parameter instance.

    The instance observes the root's inputs (or a selected subtrace of them)
    and defines exactly the instantiated stream.
    """
    body = substitute_param(pdef.body, p)
    spec = Specification(
        name=f"{pdef.name}<{p!r}>",
        inputs=list(vs.spec.inputs),
        outputs=[(pdef.name, pdef.value_type, body)],
    )
    # the template was checked during root validation; annotations carry over
    back = max((-lo for _, lo, _ in _offsets_of(body) if lo < 0), default=0)
    return ValidatedSpec(
        spec=spec,
        max_back=back,
        max_fwd=0,
        order=[pdef.name],
        stream_types={**{n: t for n, t in vs.spec.inputs}, pdef.name: pdef.value_type},
        stateful=frozenset(),
        pdef_types={},
    )


def static_instance(vs_or_spec, pstream: str, p: Value, out_name: Optional[str] = None):
    """Statically instantiate a parametric stream as an output equation.

    Returns an (name, type, expr) triple suitable for Specification.outputs;
    uses the same substitution as the dynamic install path.
    """
    spec = vs_or_spec.spec if isinstance(vs_or_spec, ValidatedSpec) else vs_or_spec
    pd = spec.pdef(pstream)
    name = out_name or f"{pstream}<{p!r}>"
    body = substitute_param(pd.body, p)
    if name != pstream:
        body = rename_stream(body, pstream, name)
    return (name, pd.value_type, body)
