"""A second, deliberately naive implementation of every policy.

Used only to check `PolicyEngine`. It shares no code with the engine, the
hierarchy builders or the signature module: types are compared by their
printed spelling, islands come from a hand-rolled union-find, and
sub-hierarchies from a plain breadth-first walk. It only caches what it
derives from the facts themselves (parent links, class children), never a
target set. Slow on purpose; correctness is all it is for.
"""
from __future__ import annotations

from collections import deque
from typing import Dict, List, Optional, Set

from config.policies import PolicyId
from services.facts_model import Callsite, EntryKind, FunctionRecord, ProgramFacts, VTableRecord
from services.policy_engine import (
    ARITY_AT_MOST,
    OVERFLOW_EXCLUDE,
    MissingNameHint,
    PolicyNotApplicable,
    PolicyOptions,
    TargetSet,
)

_VIRTUAL_ONLY = {
    PolicyId.ALL_VTABLES, PolicyId.VTABLE_ISLAND, PolicyId.SUB_HIERARCHY, PolicyId.STRICT_SUB_HIERARCHY,
}


def _slot_function(table: VTableRecord, index: int) -> Optional[str]:
    for e in table.entries:
        if e.kind != EntryKind.OFFSET and e.entry_index == index:
            return None if e.kind == EntryKind.PURE else e.function_id
    return None


def _slot_count(table: VTableRecord) -> int:
    return sum(1 for e in table.entries if e.kind != EntryKind.OFFSET)


def _spell(types) -> List[str]:
    return [str(t) for t in types]


def _loose(spelling: str) -> str:
    return "ptr" if spelling.startswith("ptr(") else spelling


class Oracle:
    def __init__(self, facts: ProgramFacts, options: Optional[PolicyOptions] = None):
        self.facts = facts
        self.options = options or PolicyOptions()
        self._children: Optional[Dict[str, List[str]]] = None
        self._table_parent: Optional[Dict[str, Optional[str]]] = None
        self._union: Optional[Dict[str, str]] = None

    # --- derived relations ---

    def children(self) -> Dict[str, List[str]]:
        if self._children is None:
            kids: Dict[str, List[str]] = {cid: [] for cid in self.facts.classes}
            for c in self.facts.classes.values():
                for b in c.bases:
                    kids.setdefault(b.class_id, []).append(c.id)
            self._children = kids
        return self._children

    def table_parent(self) -> Dict[str, Optional[str]]:
        if self._table_parent is None:
            parents: Dict[str, Optional[str]] = {}
            tables = list(self.facts.vtables.values())
            for t in tables:
                parents[t.id] = None
                if len(t.base_path) < 2:
                    continue
                owner = self.facts.classes[t.owning_class]
                for p in tables:
                    if p.owning_class == t.base_path[1] and p.owning_class in owner.base_ids \
                            and list(p.base_path) == list(t.base_path[1:]):
                        parents[t.id] = p.id
                        break
            self._table_parent = parents
        return self._table_parent

    def _find(self, x: str) -> str:
        parent = self._union
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def island_root(self, table_id: str) -> str:
        if self._union is None:
            self._union = {t: t for t in self.facts.vtables}
            pairs = [(t, p) for t, p in self.table_parent().items() if p is not None]
            first_of_class: Dict[str, str] = {}
            for t in self.facts.vtables.values():
                if t.owning_class in first_of_class:
                    pairs.append((t.id, first_of_class[t.owning_class]))
                else:
                    first_of_class[t.owning_class] = t.id
            for a, b in pairs:
                ra, rb = self._find(a), self._find(b)
                if ra != rb:
                    self._union[max(ra, rb)] = min(ra, rb)
        return self._find(table_id)

    def derived_classes(self, root: str) -> Set[str]:
        seen, queue = {root}, deque([root])
        while queue:
            for child in self.children().get(queue.popleft(), []):
                if child not in seen:
                    seen.add(child)
                    queue.append(child)
        return seen

    def derived_tables(self, root: str) -> Set[str]:
        parent = self.table_parent()
        found = {root}
        changed = True
        while changed:
            changed = False
            for t, p in parent.items():
                if p in found and t not in found:
                    found.add(t)
                    changed = True
        return found

    # --- policies ---

    def _callable(self) -> List[FunctionRecord]:
        return [
            f for f in self.facts.functions.values()
            if not f.is_pure_virtual and (f.is_virtual or not self.options.virtual_targets_only)
        ]

    def _at_slot(self, tables, index: int) -> Set[str]:
        out = set()
        for t in tables:
            if _slot_count(t) > index:
                fid = _slot_function(t, index)
                if fid is not None:
                    out.add(fid)
        return out

    def _all_vtables(self) -> Set[str]:
        out = set()
        for t in self.facts.vtables.values():
            out |= {e.function_id for e in t.entries if e.kind in (EntryKind.FUNCTION, EntryKind.THUNK)}
        return out

    def targets(self, policy: PolicyId, cs: Callsite) -> TargetSet:
        policy = PolicyId(policy)
        if policy in _VIRTUAL_ONLY and not cs.is_virtual:
            raise PolicyNotApplicable(f"{cs.id} is not a virtual dispatch")
        facts, opts = self.facts, self.options
        args = _spell(cs.args)
        members: Set[str] = set()

        if policy == PolicyId.BIN_TYPES:
            provided = len(args)
            if provided > opts.bin_types_max_args:
                if opts.bin_types_overflow == OVERFLOW_EXCLUDE:
                    raise PolicyNotApplicable(f"{cs.id} passes too many arguments")
                provided = opts.bin_types_max_args
            for f in self._callable():
                n = len(f.params)
                fits = n <= provided if opts.bin_types_arity == ARITY_AT_MOST else n >= provided
                if fits and not (cs.returns_used and str(f.return_type) == "void"):
                    members.add(f.id)

        elif policy in (PolicyId.SAFE_SRC_TYPES, PolicyId.SRC_TYPES):
            loose = policy == PolicyId.SAFE_SRC_TYPES
            for f in self._callable():
                params = _spell(f.params)
                if f.is_variadic or len(params) != len(args):
                    continue
                if all(a == p or (loose and _loose(a) == _loose(p) == "ptr") for a, p in zip(args, params)):
                    members.add(f.id)

        elif policy == PolicyId.STRICT_SRC_TYPES:
            if cs.callee_name_hint is None:
                raise MissingNameHint(f"{cs.id} has no callee name hint")
            loose = opts.strict_pointers == "interchangeable"
            in_tables = self._all_vtables()
            for f in facts.functions.values():
                if not f.is_virtual or f.is_pure_virtual or f.is_variadic or f.id not in in_tables:
                    continue
                params = _spell(f.params)
                if f.name != cs.callee_name_hint or len(params) != len(args):
                    continue
                if all(a == p or (loose and _loose(a) == _loose(p) == "ptr") for a, p in zip(args, params)):
                    members.add(f.id)

        elif policy == PolicyId.ALL_VTABLES:
            members = self._all_vtables()

        else:
            start = next(
                t for t in facts.vtables.values()
                if t.owning_class == cs.static_class and t.order == cs.table_order
            )
            if policy == PolicyId.VTABLE_ISLAND:
                island = self.island_root(start.id)
                tables = [t for t in facts.vtables.values() if self.island_root(t.id) == island]
            elif policy == PolicyId.SUB_HIERARCHY:
                classes = self.derived_classes(cs.static_class)
                tables = [t for t in facts.vtables.values() if t.owning_class in classes]
            else:
                derived = self.derived_tables(start.id)
                tables = [t for t in facts.vtables.values() if t.id in derived]
            members = self._at_slot(tables, cs.entry_index)

        return TargetSet(cs.id, policy, frozenset(members))


def oracle_targets(policy: PolicyId, cs: Callsite, facts: ProgramFacts,
                   options: Optional[PolicyOptions] = None) -> TargetSet:
    return Oracle(facts, options).targets(policy, cs)
