"""Small hand-built programs shared by the test files.

Each builder returns a `ProgramFacts` that passes `validate_facts`; the tests
that need a broken program break one of these on purpose.
"""
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "cfi_surface"))

from services.facts_model import (  # noqa: E402
    BaseRef,
    Callsite,
    CallsiteKind,
    ClassRecord,
    EntryKind,
    FunctionRecord,
    ProgramFacts,
    SourceLoc,
    VTableEntry,
    VTableRecord,
)
from services.type_expr import parse_type, split_params  # noqa: E402

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def golden_path(name):
    return os.path.join(GOLDEN_DIR, name)


def fn(fid, name=None, params=(), ret="void", owner=None, virtual=False, pure=False, direct_calls=0, line=1):
    parsed, variadic = split_params(params)
    return FunctionRecord(
        id=fid,
        name=name or fid.split("::")[-1],
        params=parsed,
        return_type=parse_type(ret),
        owning_class=owner,
        is_variadic=variadic,
        is_virtual=virtual or pure,
        is_pure_virtual=pure,
        source_loc=SourceLoc(f"{(owner or 'free').lower()}.cc", line, 1),
        direct_calls=direct_calls,
    )


def method(owner, name, params=(), ret="void", pure=False):
    return fn(f"{owner}::{name}", name, params, ret, owner=owner, virtual=True, pure=pure)


def cls(cid, *bases, virtual=True):
    return ClassRecord(cid, cid, tuple(BaseRef(b) for b in bases), virtual)


def table(owner, order, path, slots):
    """`slots` is a list of function ids; `None` is a pure slot, `("thunk", id)` a thunk."""
    entries = [VTableEntry(EntryKind.OFFSET)] if order > 0 else []
    for i, slot in enumerate(slots):
        if slot is None:
            entries.append(VTableEntry(EntryKind.PURE, None, i))
        elif isinstance(slot, tuple):
            entries.append(VTableEntry(EntryKind.THUNK, slot[1], i))
        else:
            entries.append(VTableEntry(EntryKind.FUNCTION, slot, i))
    return VTableRecord(f"{owner}.vt{order}", owner, order, tuple(path), tuple(entries))


def vcall(csid, static, idx, order=0, args=(), name=None, returns=False, enclosing=None):
    return Callsite(
        id=csid,
        kind=CallsiteKind.VIRTUAL_DISPATCH,
        args=split_params(args)[0],
        returns_used=returns,
        source_loc=SourceLoc("main.cc", 10, 5),
        callee_name_hint=name,
        static_class=static,
        table_order=order,
        entry_index=idx,
        enclosing_function=enclosing,
    )


def pcall(csid, args=(), returns=False, enclosing=None, name=None):
    return Callsite(
        id=csid,
        kind=CallsiteKind.FUNCTION_POINTER,
        args=split_params(args)[0],
        returns_used=returns,
        source_loc=SourceLoc("main.cc", 20, 5),
        callee_name_hint=name,
        enclosing_function=enclosing,
    )


def minimal_program():
    """One class, one virtual function, one table, one callsite."""
    return ProgramFacts.build(
        [cls("A")],
        [method("A", "f")],
        [table("A", 0, ["A"], ["A::f"])],
        [vcall("cs0", "A", 0, name="f")],
    )


def chain_program():
    """A -> B -> C, each overriding f; plus D : C without an override."""
    return ProgramFacts.build(
        [cls("A"), cls("B", "A"), cls("C", "B"), cls("D", "C")],
        [method("A", "f"), method("B", "f"), method("C", "f")],
        [
            table("A", 0, ["A"], ["A::f"]),
            table("B", 0, ["B", "A"], ["B::f"]),
            table("C", 0, ["C", "B", "A"], ["C::f"]),
            table("D", 0, ["D", "C", "B", "A"], ["C::f"]),
        ],
        [vcall("csA", "A", 0, name="f"), vcall("csC", "C", 0, name="f")],
    )


def multiple_inheritance_program():
    """D : A, B with no overrides. The A-path callsite is where the two sub-hierarchy policies differ."""
    return ProgramFacts.build(
        [cls("A"), cls("B"), cls("D", "A", "B")],
        [method("A", "f"), method("B", "g")],
        [
            table("A", 0, ["A"], ["A::f"]),
            table("B", 0, ["B"], ["B::g"]),
            table("D", 0, ["D", "A"], ["A::f"]),
            table("D", 1, ["D", "B"], ["B::g"]),
        ],
        [vcall("csA", "A", 0, name="f"), vcall("csB", "B", 0, name="g")],
    )


def override_program():
    """A(f); B : A overrides f; C : B doesn't."""
    return ProgramFacts.build(
        [cls("A"), cls("B", "A"), cls("C", "B")],
        [method("A", "f"), method("B", "f")],
        [
            table("A", 0, ["A"], ["A::f"]),
            table("B", 0, ["B", "A"], ["B::f"]),
            table("C", 0, ["C", "B", "A"], ["B::f"]),
        ],
        [vcall("cs0", "A", 0, name="f")],
    )


def free_functions_program(functions, callsites):
    return ProgramFacts.build([], functions, [], callsites)
