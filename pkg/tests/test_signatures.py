"""Standalone tests for signature comparison."""
import os
import sys

from hypothesis import given, settings, strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from fixtures import fn, method, pcall, vcall  # noqa: E402
from config.settings import get_property_examples  # noqa: E402
from services.signatures import (  # noqa: E402
    POINTERS_INTERCHANGEABLE,
    callsite_signature,
    function_signature,
    match_safe,
    match_src,
    match_strict,
    safe_key,
    strict_key,
)
from services.type_expr import parse_type  # noqa: E402

TYPE_TEXTS = ["i32", "i64", "ptr(char)", "ptr(i8)", "ptr(ptr(char))", "named(Span)", "f64"]


def _sigs(cs, f):
    return callsite_signature(cs), function_signature(f)


def test_pointer_types_interchange_only_for_safe():
    cs, f = _sigs(pcall("cs", ["ptr(char)", "i32"]), fn("g", params=["ptr(i8)", "i32"]))
    assert match_safe(cs, f)
    assert not match_src(cs, f)


def test_pointer_never_stands_in_for_a_value():
    cs, f = _sigs(pcall("cs", ["ptr(char)"]), fn("g", params=["i64"]))
    assert not match_safe(cs, f)


def test_arity_must_match():
    cs, f = _sigs(pcall("cs", ["i32"]), fn("g", params=["i32", "i32"]))
    assert not match_safe(cs, f)


def test_return_type_is_ignored():
    cs, f = _sigs(pcall("cs", ["i32"], returns=True), fn("g", params=["i32"], ret="void"))
    assert match_src(cs, f)


def test_strict_wants_the_name():
    cs = callsite_signature(vcall("cs", "A", 0, args=["i32"], name="draw"))
    assert match_strict(cs, function_signature(method("A", "draw", ["i32"])))
    assert not match_strict(cs, function_signature(method("A", "paint", ["i32"])))
    assert not match_strict(callsite_signature(pcall("cs", ["i32"])), function_signature(method("A", "draw", ["i32"])))


def test_strict_pointer_switch():
    cs = callsite_signature(vcall("cs", "A", 0, args=["ptr(char)"], name="f"))
    f = function_signature(method("A", "f", ["ptr(i8)"]))
    assert not match_strict(cs, f)
    assert match_strict(cs, f, pointers=POINTERS_INTERCHANGEABLE)


def test_variadic_functions_match_nothing():
    cs, f = _sigs(pcall("cs", ["ptr(char)"]), fn("printf", params=["ptr(char)", "..."]))
    assert not match_safe(cs, f)
    assert not match_src(cs, f)


def test_keys_group_what_the_predicates_read():
    a = tuple(parse_type(t) for t in ["ptr(char)", "i32"])
    b = tuple(parse_type(t) for t in ["ptr(i8)", "i32"])
    assert safe_key(a) == safe_key(b)
    assert strict_key("f", a) != strict_key("f", b)
    assert strict_key("f", a, POINTERS_INTERCHANGEABLE) == strict_key("f", b, POINTERS_INTERCHANGEABLE)


@settings(max_examples=get_property_examples(), deadline=None)
@given(
    args=st.lists(st.sampled_from(TYPE_TEXTS), max_size=3),
    params=st.lists(st.sampled_from(TYPE_TEXTS), max_size=3),
    cs_name=st.sampled_from(["f", "g"]),
    fn_name=st.sampled_from(["f", "g"]),
)
def test_strict_implies_src_implies_safe(args, params, cs_name, fn_name):
    cs = callsite_signature(vcall("cs", "A", 0, args=args, name=cs_name))
    f = function_signature(method("A", fn_name, params))
    if match_strict(cs, f):
        assert match_src(cs, f)
    if match_src(cs, f):
        assert match_safe(cs, f)
    if match_safe(cs, f):
        assert safe_key(cs.param_types) == safe_key(f.param_types)


if __name__ == "__main__":
    tests = [
        test_pointer_types_interchange_only_for_safe,
        test_pointer_never_stands_in_for_a_value,
        test_arity_must_match,
        test_return_type_is_ignored,
        test_strict_wants_the_name,
        test_strict_pointer_switch,
        test_variadic_functions_match_nothing,
        test_keys_group_what_the_predicates_read,
        test_strict_implies_src_implies_safe,
    ]
    for test in tests:
        test()
        print(f"PASS {test.__name__}")
