"""Runtime for dynamically parametrized streams.

Tracks one resumable monitor instance per live parameter and applies the
three-case lifecycle at every instant:

  removal   p in prev \\ now   -> instance deleted
  continue  p in prev & now    -> stepped iff p is in the updating set
  install   p in now \\ prev   -> fresh instance, optionally brought up to
                                  date by replaying its retrieved past

Instances see their own local trace: retrieved past events first (local
instants 0..m-1), then every selected root event.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Tuple

from .logstore import Event, IntegrityError, PastRetriever
from .values import Value, sorted_elems


class InstallError(Exception):
    pass


@dataclass
class OverState:
    """Per-Over-node state owned by the enclosing monitor."""

    prev_params: FrozenSet = frozenset()
    instances: Dict[Value, object] = field(default_factory=dict)  # param -> instance monitor
    projected: Dict[Value, Value] = field(default_factory=dict)  # param -> last stream value
    next_t: int = 0
    cache_t: int = -1
    cache_result: Optional[dict] = None
    max_live: int = 0


def lifecycle_partition(prev: FrozenSet, now: FrozenSet) -> Tuple[FrozenSet, FrozenSet, FrozenSet]:
    """The three-case partition (removed, continued, installed)."""
    return prev - now, prev & now, now - prev


def subtrace_filter(now_params: FrozenSet, updating: Optional[FrozenSet]) -> FrozenSet:
    """Parameters whose instances process the current event.

    No updating clause means every live instance sees every event; an
    explicit set is clamped to the live parameters.
    """
    if updating is None:
        return now_params
    return updating & now_params


def install_with_past(
    instance,
    init,
    retriever: Optional[PastRetriever],
    param: Value,
    up_to: int,
) -> int:
    """Replay the retrieved past of `param` into a fresh instance.

    Returns the number of replayed events; the instance's next local instant
    equals that count.  An empty fetch leaves the instance fresh (forward
    semantics).
    """
    if init is None:
        return 0
    if retriever is None:
        raise InstallError(
            f"initializer for {param!r} needs a past retriever (store {init.store!r} not bound)"
        )
    try:
        events = retriever.fetch(init, param, 0, up_to)
    except Exception as e:
        raise InstallError(f"past retrieval failed for {param!r}: {e}") from e
    names = instance.input_names
    prev = -1
    for i, fev in enumerate(events):
        if fev.instant <= prev:
            raise InstallError(f"retrieved events out of order for {param!r}")
        prev = fev.instant
        try:
            bindings = {n: fev.bindings[n] for n in names}
        except KeyError as e:
            raise InstallError(f"retrieved event {fev.instant} lacks input {e}") from None
        instance.step(Event(i, bindings))
    return len(events)


def eval_over(
    state: OverState,
    now_params: FrozenSet,
    updating: Optional[FrozenSet],
    ev: Event,
    make_instance: Callable[[Value], object],
    value_of: Callable[[object], Value],
    init=None,
    retriever: Optional[PastRetriever] = None,
    on_install_error: Optional[Callable[[Value, Exception], Value]] = None,
) -> Dict[Value, Value]:
    """One lifecycle step; returns the projected param -> value map.

    The returned map holds exactly the live instances that have resolved a
    value: a freshly installed instance with an empty past that is not
    selected by `updating` stays absent until it first processes an event.
    """
    removed, _, installed = lifecycle_partition(state.prev_params, now_params)
    for p in removed:
        state.instances.pop(p, None)
        state.projected.pop(p, None)

    selected = subtrace_filter(now_params, updating)
    broken = {}
    for p in sorted_elems(installed):
        inst = make_instance(p)
        try:
            install_with_past(inst, init, retriever, p, ev.instant)
        except InstallError as e:
            if on_install_error is None:
                raise
            broken[p] = on_install_error(p, e)
            state.instances[p] = inst
            continue
        state.instances[p] = inst
        if inst.ingested > 0:
            state.projected[p] = value_of(inst)

    names = None
    for p in sorted_elems(selected):
        if p in broken:
            continue
        inst = state.instances[p]
        if names is None:
            names = inst.input_names
        inst.step(Event(inst.ingested, {n: ev.bindings[n] for n in names}))
        state.projected[p] = value_of(inst)

    state.prev_params = now_params
    state.max_live = max(state.max_live, len(state.instances))
    result = dict(state.projected)
    result.update(broken)
    return result
