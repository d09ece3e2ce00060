"""The eight CFI policies as target-set computations over one program.

Each `eval_*` answers one question: under this policy, which functions may the
callsite legitimately reach? The answer is a `TargetSet` of distinct,
callable function ids. Pure-virtual slots never contribute, and a thunk counts
as the function it lands in.

    (1) bin types          arity and a void/non-void bit, as a binary-only tool sees them
    (2) safe src types     source parameter types, any pointer matches any pointer
    (3) src types          exact source parameter types
    (4) strict src types   exact types plus the unqualified callee name, virtual targets only
    (5) all vtables        every function any vtable points at
    (6) vtable island      the dispatched slot across the static class's island
    (7) sub-hierarchy      the dispatched slot across every table of every derived class
    (8) strict sub-hier.   the dispatched slot across the tables derived from the one table used

(1)-(3) apply to every indirect callsite, (5)-(8) to virtual dispatch only. (4)
accepts any callsite that carries a name hint; reports only run it on virtual
dispatch.

Adding a policy means adding a catalogue entry in `config.policies` and an
`eval_*` method here. Writing the method comes down to five questions:

  1. Which program primitives does it read (functions, types, tables, classes)?
  2. How do those primitives nest (a slot in a table in a class's vtable set)?
  3. What hierarchy does it need (none, islands, class or table descendants)?
  4. What is the matching rule between a callsite and a candidate?
  5. What is counted: distinct functions, so thunks and duplicates collapse.

Results are cached by the part of the callsite the policy reads (an arity, a
signature shape, a slot in a sub-hierarchy), and callsites with the same key
share one frozenset. That keeps a 50,000-callsite program to a few thousand
distinct sets.

Two rules have alternative readings and are switches on `PolicyOptions`:
the direction of the Bin types arity test, and whether Strict src types treats
pointer types as interchangeable. The defaults come from `config.settings`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Tuple

from config.policies import PolicyId, get_policy_config
from config.settings import (
    get_bin_types_arity,
    get_bin_types_max_args,
    get_bin_types_overflow,
    get_strict_pointers,
)
from services.facts_model import Callsite, FunctionRecord, ProgramFacts
from services.hierarchy import (
    ClassHierarchy,
    VTableHierarchy,
    build_class_hierarchy,
    build_vtable_hierarchy,
    resolve_entry,
)
from services.signatures import POINTERS_EXACT, safe_key, src_key, strict_key
from services.type_expr import is_void

logger = logging.getLogger(__name__)

ARITY_AT_MOST = "at-most"
ARITY_AT_LEAST = "at-least"
OVERFLOW_CAP = "cap"
OVERFLOW_EXCLUDE = "exclude"


class PolicyNotApplicable(ValueError):
    """The callsite is outside the policy's reach, e.g. a function pointer under a class-based policy."""


class MissingNameHint(PolicyNotApplicable):
    """Strict src types needs the callee's unqualified name and the callsite has none."""


class NotDerived(ValueError):
    """The dynamic class given for a dispatch is not the static class or derived from it."""


@dataclass(frozen=True)
class PolicyOptions:
    bin_types_max_args: int = 6
    bin_types_arity: str = ARITY_AT_MOST
    bin_types_overflow: str = OVERFLOW_CAP
    strict_pointers: str = POINTERS_EXACT
    # Restrict (1)-(3) to virtual targets, for comparison with the class-based policies.
    virtual_targets_only: bool = False

    @classmethod
    def from_env(cls, **overrides) -> "PolicyOptions":
        values = dict(
            bin_types_max_args=get_bin_types_max_args(),
            bin_types_arity=get_bin_types_arity(),
            bin_types_overflow=get_bin_types_overflow(),
            strict_pointers=get_strict_pointers(),
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class TargetSet(NamedTuple):
    callsite_id: str
    policy: PolicyId
    members: FrozenSet[str]

    @property
    def size(self) -> int:
        return len(self.members)


class PolicyEngine:
    """Evaluates policies for the callsites of one program.

    Builds the class and vtable hierarchies once (or takes prebuilt ones) and
    caches target sets per policy key. Not thread-safe while caches fill; share
    finished results, not the engine.
    """

    def __init__(
        self,
        facts: ProgramFacts,
        options: Optional[PolicyOptions] = None,
        class_hierarchy: Optional[ClassHierarchy] = None,
        vtable_hierarchy: Optional[VTableHierarchy] = None,
    ):
        self.facts = facts
        self.options = options or PolicyOptions()
        self.classes = class_hierarchy or build_class_hierarchy(facts)
        self.vtables = vtable_hierarchy or build_vtable_hierarchy(facts)
        self._cache: Dict[Tuple, FrozenSet[str]] = {}
        self._index: Dict[str, Dict[Tuple, FrozenSet[str]]] = {}
        self._evaluators: Dict[PolicyId, Callable[[Callsite], TargetSet]] = {
            PolicyId.BIN_TYPES: self.eval_bin_types,
            PolicyId.SAFE_SRC_TYPES: self.eval_safe_src_types,
            PolicyId.SRC_TYPES: self.eval_src_types,
            PolicyId.STRICT_SRC_TYPES: self.eval_strict_src_types,
            PolicyId.ALL_VTABLES: self.eval_all_vtables,
            PolicyId.VTABLE_ISLAND: self.eval_vtable_island,
            PolicyId.SUB_HIERARCHY: self.eval_sub_hierarchy,
            PolicyId.STRICT_SUB_HIERARCHY: self.eval_strict_sub_hierarchy,
        }

    # --- dispatch ---

    def evaluate(self, policy: PolicyId, cs: Callsite) -> TargetSet:
        return self._evaluators[PolicyId(policy)](cs)

    def applies(self, policy: PolicyId, cs: Callsite) -> bool:
        """Whether `evaluate` would return a set rather than raise."""
        policy = PolicyId(policy)
        if policy == PolicyId.STRICT_SRC_TYPES:
            return cs.callee_name_hint is not None
        if policy == PolicyId.BIN_TYPES and self.options.bin_types_overflow == OVERFLOW_EXCLUDE:
            return len(cs.args) <= self.options.bin_types_max_args
        return cs.is_virtual or not get_policy_config(policy).virtual_only

    def _memo(self, key: Tuple, compute: Callable[[], Iterable[str]]) -> FrozenSet[str]:
        found = self._cache.get(key)
        if found is None:
            found = frozenset(compute())
            self._cache[key] = found
        return found

    def _require_virtual(self, policy: PolicyId, cs: Callsite) -> None:
        if not cs.is_virtual:
            raise PolicyNotApplicable(f"{policy.label} applies to virtual dispatch only; {cs.id} is a {cs.kind.value} callsite")

    # --- candidate pools ---

    def _candidates(self) -> Iterable[FunctionRecord]:
        only_virtual = self.options.virtual_targets_only
        return (
            f for f in self.facts.functions.values()
            if not f.is_pure_virtual and (f.is_virtual or not only_virtual)
        )

    def _grouped(self, name: str, key_of: Callable[[FunctionRecord], Optional[Tuple]],
                 pool: Iterable[FunctionRecord]) -> Dict[Tuple, FrozenSet[str]]:
        index = self._index.get(name)
        if index is None:
            groups: Dict[Tuple, List[str]] = {}
            for f in pool:
                key = key_of(f)
                if key is not None:
                    groups.setdefault(key, []).append(f.id)
            index = {k: frozenset(v) for k, v in groups.items()}
            self._index[name] = index
        return index

    def vtable_targets(self) -> FrozenSet[str]:
        """Every callable function some vtable slot resolves to."""
        def scan():
            for t in self.facts.vtables.values():
                for i in range(t.slot_count):
                    fid = resolve_entry(self.facts, t.id, i)
                    if fid is not None:
                        yield fid
        return self._memo(("all-vtables",), scan)

    # --- (1)-(4): type-based ---

    def eval_bin_types(self, cs: Callsite) -> TargetSet:
        opts = self.options
        provided = len(cs.args)
        if provided > opts.bin_types_max_args:
            if opts.bin_types_overflow == OVERFLOW_EXCLUDE:
                raise PolicyNotApplicable(
                    f"{cs.id} passes {provided} arguments, more than the {opts.bin_types_max_args} Bin types can see"
                )
            provided = opts.bin_types_max_args

        def compute():
            for f in self._candidates():
                arity = len(f.params)
                ok = arity <= provided if opts.bin_types_arity == ARITY_AT_MOST else arity >= provided
                if ok and not (cs.returns_used and is_void(f.return_type)):
                    yield f.id

        members = self._memo((PolicyId.BIN_TYPES, provided, cs.returns_used), compute)
        return TargetSet(cs.id, PolicyId.BIN_TYPES, members)

    def eval_safe_src_types(self, cs: Callsite) -> TargetSet:
        index = self._grouped(
            "safe", lambda f: None if f.is_variadic else safe_key(f.params), self._candidates(),
        )
        return TargetSet(cs.id, PolicyId.SAFE_SRC_TYPES, index.get(safe_key(cs.args), frozenset()))

    def eval_src_types(self, cs: Callsite) -> TargetSet:
        index = self._grouped(
            "src", lambda f: None if f.is_variadic else src_key(f.params), self._candidates(),
        )
        return TargetSet(cs.id, PolicyId.SRC_TYPES, index.get(src_key(cs.args), frozenset()))

    def eval_strict_src_types(self, cs: Callsite) -> TargetSet:
        if cs.callee_name_hint is None:
            raise MissingNameHint(f"{cs.id} has no callee name hint")
        pointers = self.options.strict_pointers
        in_tables = self.vtable_targets()
        index = self._grouped(
            "strict",
            lambda f: None if f.is_variadic or f.id not in in_tables else strict_key(f.name, f.params, pointers),
            (f for f in self.facts.functions.values() if f.is_virtual and not f.is_pure_virtual),
        )
        key = strict_key(cs.callee_name_hint, cs.args, pointers)
        return TargetSet(cs.id, PolicyId.STRICT_SRC_TYPES, index.get(key, frozenset()))

    # --- (5)-(8): class- and table-based ---

    def _slot_targets(self, table_ids: Iterable[str], entry_index: int) -> Iterable[str]:
        for tid in table_ids:
            if self.facts.vtables[tid].slot_count > entry_index:
                fid = resolve_entry(self.facts, tid, entry_index)
                if fid is not None:
                    yield fid

    def eval_all_vtables(self, cs: Callsite) -> TargetSet:
        self._require_virtual(PolicyId.ALL_VTABLES, cs)
        return TargetSet(cs.id, PolicyId.ALL_VTABLES, self.vtable_targets())

    def eval_vtable_island(self, cs: Callsite) -> TargetSet:
        self._require_virtual(PolicyId.VTABLE_ISLAND, cs)
        table = self.facts.table_of(cs.static_class, cs.table_order)
        island = self.vtables.island_of[table.id]
        members = self._memo(
            (PolicyId.VTABLE_ISLAND, island, cs.entry_index),
            lambda: self._slot_targets(self.vtables.islands[island], cs.entry_index),
        )
        return TargetSet(cs.id, PolicyId.VTABLE_ISLAND, members)

    def eval_sub_hierarchy(self, cs: Callsite) -> TargetSet:
        self._require_virtual(PolicyId.SUB_HIERARCHY, cs)

        def compute():
            for cid in sorted(self.classes.descendants(cs.static_class)):
                yield from self._slot_targets(
                    (t.id for t in self.facts.tables_by_class.get(cid, ())), cs.entry_index,
                )

        members = self._memo((PolicyId.SUB_HIERARCHY, cs.static_class, cs.entry_index), compute)
        return TargetSet(cs.id, PolicyId.SUB_HIERARCHY, members)

    def eval_strict_sub_hierarchy(self, cs: Callsite) -> TargetSet:
        self._require_virtual(PolicyId.STRICT_SUB_HIERARCHY, cs)
        root = self.facts.table_of(cs.static_class, cs.table_order)
        members = self._memo(
            (PolicyId.STRICT_SUB_HIERARCHY, root.id, cs.entry_index),
            lambda: self._slot_targets(sorted(self.vtables.descendants(root.id)), cs.entry_index),
        )
        return TargetSet(cs.id, PolicyId.STRICT_SUB_HIERARCHY, members)

    # --- benign execution ---

    def benign_dispatch_target(self, cs: Callsite, dynamic_class: str) -> Optional[str]:
        """What the dispatch at `cs` calls when the object's dynamic type is `dynamic_class`.

        Uses the dynamic class's copy of the table the callsite dispatches
        through. None when the slot is pure, or when the facts give the class
        no copy of that table.
        """
        self._require_virtual(PolicyId.SUB_HIERARCHY, cs)
        if dynamic_class not in self.classes.descendants(cs.static_class):
            raise NotDerived(f"{dynamic_class} is not derived from {cs.static_class}")
        root = self.facts.table_of(cs.static_class, cs.table_order)
        copies = [
            t for t in self.facts.tables_by_class.get(dynamic_class, ())
            if t.id in self.vtables.descendants(root.id)
        ]
        if not copies:
            logger.debug("%s has no copy of %s; no dispatch target", dynamic_class, root.id)
            return None
        table = copies[0]
        if table.slot_count <= cs.entry_index:
            return None
        return resolve_entry(self.facts, table.id, cs.entry_index)


def benign_dispatch_target(facts: ProgramFacts, cs: Callsite, dynamic_class: str,
                           engine: Optional[PolicyEngine] = None) -> Optional[str]:
    return (engine or PolicyEngine(facts)).benign_dispatch_target(cs, dynamic_class)
