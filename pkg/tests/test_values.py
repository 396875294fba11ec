import json

import pytest

from streamrv.values import (
    ANY,
    BOOL,
    FLOAT,
    INT,
    TEXT,
    ValueError_,
    WireError,
    check_value,
    infer_value_type,
    list_t,
    map_t,
    opt_t,
    set_t,
    sorted_elems,
    ty_from_doc,
    ty_to_doc,
    unify,
    value_key,
    wire_decode,
    wire_encode,
)


def test_value_key_total_order_across_kinds():
    vals = [None, False, True, 0, 3, 1.5, "a", "b", (1, 2), frozenset({2, 1}), {"k": 1}]
    ordered = sorted(vals, key=value_key)
    # kinds group together in rank order
    assert ordered[0] is None
    assert ordered[-1] == {"k": 1}
    assert sorted(ordered, key=value_key) == ordered


def test_value_key_rejects_foreign_objects():
    with pytest.raises(ValueError_):
        value_key(object())


def test_sorted_elems_is_deterministic():
    s = frozenset({"b", "a", "c"})
    assert sorted_elems(s) == ["a", "b", "c"]
    assert sorted_elems(frozenset({3, 1, 2})) == [1, 2, 3]


def test_bool_is_not_int_in_ordering():
    # True and 1 are distinct values: bool ranks before int
    assert value_key(True) != value_key(1)
    assert sorted([1, True, 0, False], key=value_key) == [False, True, 0, 1]


def test_check_value():
    assert check_value(1, INT)
    assert not check_value(True, INT)
    assert not check_value(1, BOOL)
    assert check_value(None, opt_t(TEXT))
    assert check_value("x", opt_t(TEXT))
    assert check_value(frozenset({"a"}), set_t(TEXT))
    assert not check_value(("a",), set_t(TEXT))
    assert check_value({"a": 1}, map_t(TEXT, INT))
    assert check_value((1, 2, 3), list_t(INT))
    assert check_value({"a": (1, "x")}, map_t(TEXT, ANY))


def test_infer_value_type():
    assert infer_value_type(1.0) == FLOAT
    assert infer_value_type(frozenset({1})) == set_t(INT)
    assert infer_value_type(()) == list_t(ANY)


def test_unify_any_and_vars():
    from streamrv.values import tvar

    s = {}
    assert unify(tvar("a"), INT, s)
    assert unify(tvar("a"), INT, s)
    assert not unify(set_t(INT), set_t(TEXT), {})
    assert unify(ANY, set_t(TEXT), {})


def test_ty_doc_roundtrip():
    for t in (BOOL, opt_t(set_t(INT)), map_t(TEXT, list_t(FLOAT))):
        assert ty_from_doc(json.loads(json.dumps(ty_to_doc(t)))) == t


def test_wire_roundtrip_typed():
    cases = [
        (True, BOOL),
        (42, INT),
        (1.5, FLOAT),
        ("hi", TEXT),
        (None, opt_t(INT)),
        (7, opt_t(INT)),
        (frozenset({"b", "a"}), set_t(TEXT)),
        ((1, 2, 3), list_t(INT)),
        ({"x": frozenset({1})}, map_t(TEXT, set_t(INT))),
    ]
    for v, t in cases:
        doc = json.loads(json.dumps(wire_encode(v)))
        assert wire_decode(doc, t) == v


def test_wire_encode_sets_are_sorted():
    assert wire_encode(frozenset({"c", "a", "b"})) == ["a", "b", "c"]
    a = json.dumps(wire_encode({"k": frozenset({2, 1})}), sort_keys=True)
    b = json.dumps(wire_encode({"k": frozenset({1, 2})}), sort_keys=True)
    assert a == b


def test_wire_decode_type_errors():
    with pytest.raises(WireError):
        wire_decode("x", INT)
    with pytest.raises(WireError):
        wire_decode(1, BOOL)
    with pytest.raises(WireError):
        wire_decode({"a": 1}, set_t(INT))
