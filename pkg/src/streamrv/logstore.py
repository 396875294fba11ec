"""Durable event logging and indexed retrieval of past subtraces.

Stores hold the event wire format, one record per line:

    {"instant": <int>, "streams": {"<input>": <value>, ...}}

File-backed stores keep a sidecar offset table (`<store>.idx`) mapping every
Kth instant to a byte offset so range fetches seek instead of scanning.
External retrieval spawns an adapter process speaking the same format on
stdout; its output is verified, never trusted.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .values import Value, wire_encode, _wire_decode_untyped

INDEX_STRIDE = 1024


@dataclass
class Event:
    instant: int
    bindings: Dict[str, Value]


class IntegrityError(Exception):
    pass


class FilterError(Exception):
    pass


class AdapterError(Exception):
    pass


def encode_event(ev: Event) -> str:
    streams = {k: wire_encode(v) for k, v in sorted(ev.bindings.items())}
    return json.dumps({"instant": ev.instant, "streams": streams}, separators=(",", ":"))


def decode_event_line(line: str) -> Event:
    doc = json.loads(line)
    if type(doc) is not dict or "instant" not in doc or "streams" not in doc:
        raise IntegrityError(f"malformed event record: {line[:80]!r}")
    return Event(int(doc["instant"]), {k: _wire_decode_untyped(v) for k, v in doc["streams"].items()})


def _check_filter(filt: Optional[dict]):
    if filt is None:
        return
    if type(filt) is not dict:
        raise FilterError(f"filter must be a field->value map, got {filt!r}")
    for k, v in filt.items():
        if type(k) is not str:
            raise FilterError(f"filter field names must be text, got {k!r}")
        if type(v) in (dict,):
            raise FilterError(f"filter values must be scalars or membership sets, got {v!r}")


def matches_filter(bindings: Dict[str, Value], filt: Optional[dict]) -> bool:
    """Conjunctive field equality / membership over event bindings."""
    if not filt:
        return True
    for k, want in filt.items():
        got = bindings.get(k, _MISSING)
        if got is _MISSING:
            return False
        if type(want) in (frozenset, tuple, list, set):
            if got not in want:
                return False
        elif got != want:
            return False
    return True


_MISSING = object()


class InMemoryLogStore:
    """Append-only in-process store; the default oracle/test backend."""

    def __init__(self, events: Optional[List[Event]] = None):
        self.events: List[Event] = []
        for ev in events or []:
            self.append(ev)

    def __len__(self):
        return len(self.events)

    def append(self, ev: Event):
        if ev.instant != len(self.events):
            raise IntegrityError(f"append instant {ev.instant}, store size {len(self.events)}")
        self.events.append(ev)

    def fetch(self, frm: int, to: int, filt: Optional[dict] = None) -> List[Event]:
        if not 0 <= frm <= to <= len(self.events):
            raise IntegrityError(f"fetch range [{frm},{to}) outside store of size {len(self.events)}")
        _check_filter(filt)
        return [ev for ev in self.events[frm:to] if matches_filter(ev.bindings, filt)]


class FileBackedLogStore:
    """Append-only line-delimited file plus an instant->byte-offset index.

    One writer per store; appends are flushed before the owning step
    completes.  Reopening an existing store recovers the size from the file.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.idx_path = Path(str(path) + ".idx")
        self.size = 0
        self._index: List[int] = []  # byte offset of instant i*INDEX_STRIDE
        self._fh = None
        if self.path.exists():
            self._recover()
        else:
            self.path.touch()

    def _recover(self):
        self._index = []
        if self.idx_path.exists():
            for line in self.idx_path.read_text().splitlines():
                if line.strip():
                    self._index.append(int(line.split()[1]))
        pos = self._index[-1] if self._index else 0
        count = (len(self._index) - 1) * INDEX_STRIDE if self._index else 0
        with open(self.path, "rb") as fh:
            fh.seek(pos)
            for raw in fh:
                if raw.strip():
                    if count % INDEX_STRIDE == 0 and count // INDEX_STRIDE >= len(self._index):
                        self._index.append(pos)
                    pos += len(raw)
                    count += 1
                else:
                    pos += len(raw)
        self.size = count
        self._rewrite_index()

    def _rewrite_index(self):
        with open(self.idx_path, "w") as fh:
            for i, off in enumerate(self._index):
                fh.write(f"{i * INDEX_STRIDE} {off}\n")

    def __len__(self):
        return self.size

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def append(self, ev: Event):
        if ev.instant != self.size:
            raise IntegrityError(f"append instant {ev.instant}, store size {self.size}")
        if self._fh is None:
            self._fh = open(self.path, "ab")
        if self.size % INDEX_STRIDE == 0:
            self._index.append(self._fh.seek(0, os.SEEK_END))
            with open(self.idx_path, "a") as ix:
                ix.write(f"{self.size} {self._index[-1]}\n")
        self._fh.write(encode_event(ev).encode() + b"\n")
        self._fh.flush()
        self.size += 1

    def fetch(self, frm: int, to: int, filt: Optional[dict] = None) -> List[Event]:
        if not 0 <= frm <= to <= self.size:
            raise IntegrityError(f"fetch range [{frm},{to}) outside store of size {self.size}")
        _check_filter(filt)
        if frm == to:
            return []
        self.close()
        block = frm // INDEX_STRIDE
        start = self._index[block] if block < len(self._index) else 0
        out: List[Event] = []
        with open(self.path, "rb") as fh:
            fh.seek(start)
            instant = block * INDEX_STRIDE
            for raw in fh:
                if not raw.strip():
                    continue
                if instant >= to:
                    break
                if instant >= frm:
                    ev = decode_event_line(raw.decode())
                    if ev.instant != instant:
                        raise IntegrityError(f"store corrupt: expected instant {instant}, found {ev.instant}")
                    if matches_filter(ev.bindings, filt):
                        out.append(ev)
                instant += 1
        return out

    # frozen monitors must not capture open file handles
    def __getstate__(self):
        return {"path": str(self.path)}

    def __setstate__(self, state):
        self.__init__(state["path"])


# ---------------------------------------------------------------------------
# External adapter protocol


@dataclass(frozen=True)
class AdapterRequest:
    command: str  # base command line, standard arguments are appended
    store_path: str
    frm: int
    to: int
    filter: Optional[dict] = None


def run_external_adapter(req: AdapterRequest) -> List[Event]:
    """Spawn the adapter and parse its line-delimited event output.

    The adapter contract: arguments `--store --from --to --filter`, one event
    record per line on stdout, diagnostics on stderr, exit 0 on success.
    Output order and range are verified; on failure nothing is returned.
    """
    argv = shlex.split(req.command) + [
        "--store", str(req.store_path),
        "--from", str(req.frm),
        "--to", str(req.to),
        "--filter", json.dumps(req.filter or {}, separators=(",", ":"), sort_keys=True),
    ]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except OSError as e:
        raise AdapterError(f"cannot spawn adapter {argv[0]!r}: {e}") from e
    if proc.returncode != 0:
        raise AdapterError(
            f"adapter exited {proc.returncode}: {proc.stderr.strip()[:500]}"
        )
    events: List[Event] = []
    for i, line in enumerate(proc.stdout.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            events.append(decode_event_line(line))
        except Exception as e:
            raise AdapterError(f"malformed adapter output at line {i}: {e}") from e
    verify_fetched(events, req.frm, req.to, gap_free=not req.filter)
    return events


def verify_fetched(events: List[Event], frm: int, to: int, gap_free: bool = False):
    """Order/range integrity of a retrieved subtrace."""
    prev = None
    for ev in events:
        if not frm <= ev.instant < to:
            raise IntegrityError(f"fetched instant {ev.instant} outside [{frm},{to})")
        if prev is not None and ev.instant <= prev:
            raise IntegrityError(f"fetched events out of order at instant {ev.instant}")
        if gap_free and prev is not None and ev.instant != prev + 1:
            raise IntegrityError(f"gap in unfiltered fetch between {prev} and {ev.instant}")
        prev = ev.instant


# ---------------------------------------------------------------------------
# Past retrievers (the capability handed to the dynamic-param runtime)


class PastRetriever:
    """fetch(initializer, param, from, to) -> ordered event list."""

    def fetch(self, init, param: Value, frm: int, to: int) -> List[Event]:
        raise NotImplementedError

    def fetch_filtered(self, frm: int, to: int, filt: Optional[dict]) -> List[Event]:
        """Range fetch with an already-materialized filter."""
        raise NotImplementedError

    def end(self) -> Optional[int]:
        """Store size if known (used for open-ended ranges)."""
        return None


class StoreRetriever(PastRetriever):
    def __init__(self, store):
        self.store = store

    def fetch(self, init, param, frm, to):
        filt = init.materialize(param) if init is not None else None
        return self.fetch_filtered(frm, to, filt)

    def fetch_filtered(self, frm, to, filt):
        events = self.store.fetch(frm, to, filt or None)
        verify_fetched(events, frm, to, gap_free=not filt)
        return events

    def end(self):
        return len(self.store)


class ExternalAdapterRetriever(PastRetriever):
    def __init__(self, command: str, store_path: str, size_hint=None):
        self.command = command
        self.store_path = str(store_path)
        self._size_hint = size_hint

    def fetch(self, init, param, frm, to):
        filt = init.materialize(param) if init is not None else None
        return self.fetch_filtered(frm, to, filt)

    def fetch_filtered(self, frm, to, filt):
        return run_external_adapter(
            AdapterRequest(self.command, self.store_path, frm, to, filt or None)
        )

    def end(self):
        if self._size_hint is not None:
            return self._size_hint
        # count lines of the store file; adapters do not report sizes
        n = 0
        with open(self.store_path, "rb") as fh:
            for raw in fh:
                if raw.strip():
                    n += 1
        return n
