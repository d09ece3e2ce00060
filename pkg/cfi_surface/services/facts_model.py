"""The whole-program snapshot every analysis reads, and the rules it must obey.

A `ProgramFacts` is what a compiler front end would have collected at link time:
classes and their bases, functions and their types, one virtual table per class
sub-object, and the indirect callsites. It is built once, never mutated, and
iterates every collection in ascending id order, so anything computed from it
is reproducible byte for byte.

`validate_facts` is the gate between a facts file and the analyses. Problems
are returned as `Diagnostic`s rather than raised, because a facts file usually
has several at once and the person fixing the extractor wants all of them. The
contract downstream modules rely on: if the list is empty, every hierarchy
builder, policy and metric runs on these facts without raising.

Vtable layout model, as the validator understands it:

  * a table's `base_path` starts at its owning class and walks direct bases to
    the class that introduced the table; a one-element path is an origin table;
  * entries are `function`, `thunk` (a `this`-adjusting entry whose
    `function_id` is the function it lands in), `pure` (no function), or
    `offset` (bookkeeping, no function and no slot index);
  * slot indices count function, thunk and pure entries only, densely from 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Tuple

import networkx as nx

from services.type_expr import TypeExpr

FORMAT_VERSION = 1


class SourceLoc(NamedTuple):
    file: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


NO_LOC = SourceLoc("", 0, 0)


class EntryKind(str, Enum):
    FUNCTION = "function"
    THUNK = "thunk"
    OFFSET = "offset"
    PURE = "pure"


class CallsiteKind(str, Enum):
    VIRTUAL_DISPATCH = "virtual_dispatch"
    FUNCTION_POINTER = "function_pointer"


@dataclass(frozen=True)
class FunctionRecord:
    id: str
    name: str
    params: Tuple[TypeExpr, ...]
    return_type: TypeExpr
    owning_class: Optional[str] = None
    is_variadic: bool = False
    is_virtual: bool = False
    is_pure_virtual: bool = False
    source_loc: SourceLoc = NO_LOC
    # Direct calls the extractor saw; only RTR reads it.
    direct_calls: int = 0


class BaseRef(NamedTuple):
    class_id: str
    is_virtual_base: bool = False


@dataclass(frozen=True)
class ClassRecord:
    id: str
    name: str
    bases: Tuple[BaseRef, ...] = ()
    is_virtual_class: bool = False

    @property
    def base_ids(self) -> Tuple[str, ...]:
        return tuple(b.class_id for b in self.bases)


@dataclass(frozen=True)
class VTableEntry:
    kind: EntryKind
    function_id: Optional[str] = None
    entry_index: Optional[int] = None


@dataclass(frozen=True)
class VTableRecord:
    id: str
    owning_class: str
    order: int
    base_path: Tuple[str, ...]
    entries: Tuple[VTableEntry, ...]

    @cached_property
    def slots(self) -> Tuple[VTableEntry, ...]:
        """Function-relevant entries in slot order; offsets are left out."""
        indexed = [e for e in self.entries if e.kind != EntryKind.OFFSET]
        return tuple(sorted(indexed, key=lambda e: (e.entry_index is None, e.entry_index or 0)))

    @property
    def slot_count(self) -> int:
        return len(self.slots)


@dataclass(frozen=True)
class Callsite:
    id: str
    kind: CallsiteKind
    args: Tuple[TypeExpr, ...] = ()
    returns_used: bool = False
    source_loc: SourceLoc = NO_LOC
    callee_name_hint: Optional[str] = None
    static_class: Optional[str] = None
    table_order: Optional[int] = None
    entry_index: Optional[int] = None
    enclosing_function: Optional[str] = None

    @property
    def is_virtual(self) -> bool:
        return self.kind == CallsiteKind.VIRTUAL_DISPATCH


def _by_id(records: Iterable) -> Mapping[str, object]:
    ordered = sorted(records, key=lambda r: r.id)
    return MappingProxyType({r.id: r for r in ordered})


@dataclass(frozen=True)
class ProgramFacts:
    """Id-indexed, id-ordered, read-only. Build with `ProgramFacts.build`."""
    classes: Mapping[str, ClassRecord]
    functions: Mapping[str, FunctionRecord]
    vtables: Mapping[str, VTableRecord]
    callsites: Mapping[str, Callsite]
    format_version: int = FORMAT_VERSION

    @classmethod
    def build(
        cls,
        classes: Iterable[ClassRecord] = (),
        functions: Iterable[FunctionRecord] = (),
        vtables: Iterable[VTableRecord] = (),
        callsites: Iterable[Callsite] = (),
        format_version: int = FORMAT_VERSION,
    ) -> "ProgramFacts":
        """Order every collection by id. Later records with a repeated id win;
        the facts reader rejects repeats before it gets here."""
        return cls(
            classes=_by_id(classes),
            functions=_by_id(functions),
            vtables=_by_id(vtables),
            callsites=_by_id(callsites),
            format_version=format_version,
        )

    @cached_property
    def tables_by_class(self) -> Mapping[str, Tuple[VTableRecord, ...]]:
        """Each class's vtable set, in sub-object order."""
        grouped: Dict[str, List[VTableRecord]] = {}
        for t in self.vtables.values():
            grouped.setdefault(t.owning_class, []).append(t)
        return MappingProxyType({
            cid: tuple(sorted(ts, key=lambda t: (t.order, t.id))) for cid, ts in sorted(grouped.items())
        })

    def table_of(self, class_id: str, order: int) -> Optional[VTableRecord]:
        for t in self.tables_by_class.get(class_id, ()):
            if t.order == order:
                return t
        return None

    @property
    def virtual_functions(self) -> Tuple[FunctionRecord, ...]:
        return tuple(f for f in self.functions.values() if f.is_virtual)

    @property
    def virtual_callsites(self) -> Tuple[Callsite, ...]:
        return tuple(c for c in self.callsites.values() if c.is_virtual)


class GadgetFlags(NamedTuple):
    fwd: bool = False
    ret: bool = False


NO_GADGETS = GadgetFlags()


@dataclass(frozen=True)
class GadgetAnnotations:
    """Which functions an external gadget finder flagged. Absent means neither."""
    flags: Mapping[str, GadgetFlags] = field(default_factory=dict)

    def __getitem__(self, function_id: str) -> GadgetFlags:
        return self.flags.get(function_id, NO_GADGETS)

    def unknown_ids(self, facts: ProgramFacts) -> List[str]:
        return sorted(fid for fid in self.flags if fid not in facts.functions)


# --------------------------------------------------------------------- validation

class Diagnostic(NamedTuple):
    code: str
    subject_id: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}({self.subject_id}): {self.message}"


def validate_facts(facts: ProgramFacts) -> List[Diagnostic]:
    """Every invariant violation in `facts`, in a stable order. Empty means valid."""
    out: List[Diagnostic] = []
    classes, functions = facts.classes, facts.functions

    def add(code: str, subject: str, message: str) -> None:
        out.append(Diagnostic(code, subject, message))

    # Classes: references, then cycles. Virtual-ness is only checked on an
    # acyclic hierarchy, where the inherited closure is well defined.
    for c in classes.values():
        for b in c.bases:
            if b.class_id not in classes:
                add("DANGLING_CLASS_REF", b.class_id, f"class {c.id} names unknown base {b.class_id}")
    cyclic = _inheritance_cycles(facts)
    for members in cyclic:
        add("INHERITANCE_CYCLE", members[0], f"classes {', '.join(members)} inherit from each other")

    for f in functions.values():
        if f.owning_class is not None and f.owning_class not in classes:
            add("DANGLING_CLASS_REF", f.owning_class, f"function {f.id} is owned by unknown class")
        if f.is_pure_virtual and not f.is_virtual:
            add("PURE_NOT_VIRTUAL", f.id, "pure virtual function is not marked virtual")
        if f.is_virtual and f.owning_class is None:
            add("VIRTUAL_WITHOUT_CLASS", f.id, "virtual function has no owning class")
        if f.direct_calls < 0:
            add("NEGATIVE_DIRECT_CALLS", f.id, "direct call count is negative")

    if not cyclic:
        computed = _virtual_closure(facts)
        for c in classes.values():
            if c.is_virtual_class != computed.get(c.id, False):
                add(
                    "VIRTUAL_CLASS_MISMATCH", c.id,
                    f"is_virtual_class is {c.is_virtual_class} but the inheritance closure says "
                    f"{computed.get(c.id, False)}",
                )

    _validate_vtables(facts, add)
    _validate_callsites(facts, add)
    return out


def _inheritance_cycles(facts: ProgramFacts) -> List[List[str]]:
    """Each group of classes that inherit from one another in a loop, sorted."""
    graph = nx.DiGraph()
    graph.add_nodes_from(facts.classes)
    for c in facts.classes.values():
        graph.add_edges_from((c.id, b) for b in c.base_ids if b in facts.classes)
    cycles = [
        sorted(component)
        for component in nx.strongly_connected_components(graph)
        if len(component) > 1 or graph.has_edge(next(iter(component)), next(iter(component)))
    ]
    return sorted(cycles)


def _virtual_closure(facts: ProgramFacts) -> Dict[str, bool]:
    defines = {f.owning_class for f in facts.functions.values() if f.is_virtual}
    memo: Dict[str, bool] = {}

    def visit(cid: str) -> bool:
        # Post-order without recursion: hierarchies can be thousands deep.
        stack = [cid]
        while stack:
            node = stack[-1]
            if node in memo:
                stack.pop()
                continue
            pending = [b for b in facts.classes[node].base_ids if b in facts.classes and b not in memo]
            if pending:
                stack.extend(pending)
                continue
            memo[node] = node in defines or any(
                memo.get(b, False) for b in facts.classes[node].base_ids
            )
            stack.pop()
        return memo[cid]

    for cid in facts.classes:
        visit(cid)
    return memo


def _validate_vtables(facts: ProgramFacts, add) -> None:
    classes, functions = facts.classes, facts.functions
    seen_orders: Dict[Tuple[str, int], str] = {}
    paths = {(t.owning_class, t.base_path) for t in facts.vtables.values()}

    for t in facts.vtables.values():
        owner = classes.get(t.owning_class)
        if owner is None:
            add("DANGLING_CLASS_REF", t.owning_class, f"vtable {t.id} is owned by unknown class")
        elif not owner.is_virtual_class:
            add("VTABLE_OF_NON_VIRTUAL_CLASS", t.id, f"class {t.owning_class} is not virtual")

        key = (t.owning_class, t.order)
        if t.order < 0:
            add("NEGATIVE_TABLE_ORDER", t.id, f"order {t.order} is negative")
        if key in seen_orders:
            add("DUPLICATE_TABLE_ORDER", t.id, f"{t.owning_class} already has table {seen_orders[key]} at order {t.order}")
        else:
            seen_orders[key] = t.id

        _validate_base_path(t, classes, paths, add)

        indices = []
        for e in t.entries:
            if e.kind in (EntryKind.FUNCTION, EntryKind.THUNK):
                target = functions.get(e.function_id) if e.function_id else None
                if e.function_id is None:
                    add("ENTRY_WITHOUT_FUNCTION", t.id, f"{e.kind.value} entry has no function")
                elif target is None:
                    add("DANGLING_FUNCTION_REF", e.function_id, f"vtable {t.id} points at unknown function")
                elif not target.is_virtual:
                    add("ENTRY_TARGET_NOT_VIRTUAL", e.function_id, f"vtable {t.id} points at a non-virtual function")
                elif target.is_pure_virtual:
                    add("ENTRY_TARGET_PURE", e.function_id, f"vtable {t.id} has a callable entry for a pure function")
            elif e.function_id is not None:
                add("ENTRY_UNEXPECTED_FUNCTION", t.id, f"{e.kind.value} entry names function {e.function_id}")

            if e.kind == EntryKind.OFFSET:
                if e.entry_index is not None:
                    add("OFFSET_ENTRY_INDEXED", t.id, "offset entries do not occupy a function slot")
            elif e.entry_index is None:
                add("SPARSE_ENTRY_INDEX", t.id, f"{e.kind.value} entry has no slot index")
            else:
                indices.append(e.entry_index)
        if sorted(indices) != list(range(len(indices))):
            add("SPARSE_ENTRY_INDEX", t.id, f"slot indices {sorted(indices)} are not 0..{len(indices) - 1}")


def _validate_base_path(t: VTableRecord, classes, paths, add) -> None:
    path = t.base_path
    if not path or path[0] != t.owning_class:
        add("BAD_BASE_PATH", t.id, f"base_path must start with owning class {t.owning_class}")
        return
    for derived, base in zip(path, path[1:]):
        rec = classes.get(derived)
        if base not in classes:
            add("DANGLING_CLASS_REF", base, f"vtable {t.id} base_path names unknown class")
            return
        if rec is None or base not in rec.base_ids:
            add("BAD_BASE_PATH", t.id, f"{base} is not a direct base of {derived}")
            return
    if len(path) > 1 and (path[1], path[1:]) not in paths:
        add("ORPHAN_VTABLE_PATH", t.id, f"no table of {path[1]} has base_path {list(path[1:])}")


def _validate_callsites(facts: ProgramFacts, add) -> None:
    for cs in facts.callsites.values():
        if cs.enclosing_function is not None and cs.enclosing_function not in facts.functions:
            add("DANGLING_FUNCTION_REF", cs.enclosing_function, f"callsite {cs.id} names unknown enclosing function")
        dispatch = (cs.static_class, cs.table_order, cs.entry_index)
        if cs.kind == CallsiteKind.FUNCTION_POINTER:
            if any(v is not None for v in dispatch):
                add("POINTER_CALLSITE_HAS_DISPATCH", cs.id, "function-pointer callsites carry no dispatch coordinates")
            continue

        if any(v is None for v in dispatch):
            add("VIRTUAL_CALLSITE_INCOMPLETE", cs.id, "virtual dispatch needs static_class, table_order and entry_index")
            continue
        owner = facts.classes.get(cs.static_class)
        if owner is None:
            add("DANGLING_CLASS_REF", cs.static_class, f"callsite {cs.id} dispatches on unknown class")
            continue
        if not owner.is_virtual_class:
            add("CALLSITE_CLASS_NOT_VIRTUAL", cs.id, f"class {cs.static_class} is not virtual")
            continue
        table = facts.table_of(cs.static_class, cs.table_order)
        if table is None:
            add("CALLSITE_TABLE_MISSING", cs.id, f"{cs.static_class} has no table at order {cs.table_order}")
        elif not 0 <= cs.entry_index < table.slot_count:
            add("CALLSITE_SLOT_MISSING", cs.id, f"table {table.id} has no slot {cs.entry_index}")
