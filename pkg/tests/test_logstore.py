import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamrv.logstore import (
    Event,
    FileBackedLogStore,
    FilterError,
    InMemoryLogStore,
    INDEX_STRIDE,
    IntegrityError,
    StoreRetriever,
    decode_event_line,
    encode_event,
    matches_filter,
    verify_fetched,
)
from streamrv.specmodel import Initializer


def _events(n, rng=None):
    rng = rng or random.Random(0)
    return [
        Event(i, {"k": rng.choice("abc"), "n": rng.randrange(5), "f": round(rng.random(), 3)})
        for i in range(n)
    ]


def test_append_then_fetch_is_identity():
    evs = _events(20)
    s = InMemoryLogStore(evs)
    assert s.fetch(0, 20) == evs
    assert s.fetch(5, 11) == evs[5:11]
    assert s.fetch(3, 3) == []


def test_append_gap_is_an_integrity_error():
    s = InMemoryLogStore()
    s.append(Event(0, {"k": "a"}))
    with pytest.raises(IntegrityError):
        s.append(Event(2, {"k": "b"}))
    with pytest.raises(IntegrityError):
        s.append(Event(0, {"k": "b"}))


def test_fetch_range_validation():
    s = InMemoryLogStore(_events(5))
    with pytest.raises(IntegrityError):
        s.fetch(0, 6)
    with pytest.raises(IntegrityError):
        s.fetch(-1, 3)
    with pytest.raises(IntegrityError):
        s.fetch(4, 2)


def test_equality_and_membership_filters():
    evs = _events(30)
    s = InMemoryLogStore(evs)
    eq = s.fetch(0, 30, {"k": "a"})
    assert eq == [e for e in evs if e.bindings["k"] == "a"]
    mem = s.fetch(0, 30, {"k": frozenset({"a", "b"}), "n": (1, 2, 3)})
    assert mem == [e for e in evs if e.bindings["k"] in "ab" and e.bindings["n"] in (1, 2, 3)]


def test_filter_on_missing_field_matches_nothing():
    s = InMemoryLogStore(_events(5))
    assert s.fetch(0, 5, {"absent": 1}) == []


def test_filter_validation():
    s = InMemoryLogStore(_events(2))
    with pytest.raises(FilterError):
        s.fetch(0, 2, {"k": {"nested": 1}})
    with pytest.raises(FilterError):
        s.fetch(0, 2, [("k", "a")])


def test_file_backed_matches_in_memory(tmp_path):
    evs = _events(200)
    mem = InMemoryLogStore(evs)
    fb = FileBackedLogStore(tmp_path / "s.log")
    for ev in evs:
        fb.append(ev)
    for frm, to, filt in [(0, 200, None), (17, 164, None), (0, 200, {"k": "b"}), (50, 50, None)]:
        assert fb.fetch(frm, to, filt) == mem.fetch(frm, to, filt)


def test_file_backed_reopen_recovers_size_and_contents(tmp_path):
    evs = _events(INDEX_STRIDE + 50)
    path = tmp_path / "s.log"
    fb = FileBackedLogStore(path)
    for ev in evs:
        fb.append(ev)
    fb.close()

    again = FileBackedLogStore(path)
    assert len(again) == len(evs)
    assert again.fetch(0, len(evs)) == evs
    # appends continue where the log left off
    again.append(Event(len(evs), {"k": "a", "n": 0, "f": 0.0}))
    assert len(again) == len(evs) + 1


def test_file_backed_reopen_without_index(tmp_path):
    evs = _events(INDEX_STRIDE + 10)
    path = tmp_path / "s.log"
    fb = FileBackedLogStore(path)
    for ev in evs:
        fb.append(ev)
    fb.close()
    fb.idx_path.unlink()

    again = FileBackedLogStore(path)
    assert len(again) == len(evs)
    assert again.fetch(INDEX_STRIDE, INDEX_STRIDE + 5) == evs[INDEX_STRIDE : INDEX_STRIDE + 5]
    # the index sidecar is rebuilt on recovery
    assert fb.idx_path.exists()


def test_index_assisted_fetch_crosses_stride_boundary(tmp_path):
    n = 3 * INDEX_STRIDE + 7
    evs = [Event(i, {"n": i}) for i in range(n)]
    fb = FileBackedLogStore(tmp_path / "s.log")
    for ev in evs:
        fb.append(ev)
    lo, hi = INDEX_STRIDE - 3, 2 * INDEX_STRIDE + 4
    assert fb.fetch(lo, hi) == evs[lo:hi]
    assert fb.fetch(n - 1, n) == [evs[-1]]


def test_corrupt_log_is_detected(tmp_path):
    path = tmp_path / "s.log"
    fb = FileBackedLogStore(path)
    for ev in _events(5):
        fb.append(ev)
    fb.close()
    lines = path.read_text().splitlines()
    lines[2] = lines[2].replace('"instant":2', '"instant":7')
    path.write_text("\n".join(lines) + "\n")
    fb2 = FileBackedLogStore(path)
    with pytest.raises(IntegrityError):
        fb2.fetch(0, 5)


def test_verify_fetched():
    ok = [Event(2, {}), Event(4, {})]
    verify_fetched(ok, 0, 10)
    with pytest.raises(IntegrityError):
        verify_fetched(ok, 0, 10, gap_free=True)
    with pytest.raises(IntegrityError):
        verify_fetched([Event(4, {}), Event(2, {})], 0, 10)
    with pytest.raises(IntegrityError):
        verify_fetched([Event(11, {})], 0, 10)
    verify_fetched([Event(2, {}), Event(3, {}), Event(4, {})], 2, 5, gap_free=True)


def test_store_retriever_materializes_initializer_filter():
    evs = [
        Event(0, {"k": "a", "n": 1}),
        Event(1, {"k": "b", "n": 2}),
        Event(2, {"k": "a", "n": 3}),
    ]
    r = StoreRetriever(InMemoryLogStore(evs))
    init = Initializer((("k", "{param}"),))
    assert r.fetch(init, "a", 0, 3) == [evs[0], evs[2]]
    assert r.fetch(init, "b", 0, 2) == [evs[1]]
    assert r.end() == 3


def test_event_wire_roundtrip():
    ev = Event(3, {"s": frozenset({"b", "a"}), "t": (1, 2), "x": 1.5, "b": True})
    line = encode_event(ev)
    doc = json.loads(line)
    assert doc["instant"] == 3
    back = decode_event_line(line)
    assert back.instant == 3
    assert back.bindings["x"] == 1.5 and back.bindings["b"] is True


def test_decode_rejects_malformed_lines():
    with pytest.raises(IntegrityError):
        decode_event_line('{"streams":{}}')
    with pytest.raises(Exception):
        decode_event_line("not json")


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 40),
    st.integers(0, 40),
    st.one_of(st.none(), st.dictionaries(st.sampled_from(["k", "n"]), st.sampled_from(["a", "b", 1, 2]), max_size=2)),
)
def test_fetch_agrees_with_naive_scan(a, b, filt):
    evs = _events(40, random.Random(9))
    s = InMemoryLogStore(evs)
    lo, hi = min(a, b), max(a, b)
    expect = [e for e in evs[lo:hi] if matches_filter(e.bindings, filt)]
    assert s.fetch(lo, hi, filt) == expect
