"""Class and vtable hierarchies, islands, sub-hierarchies, and slot resolution.

Two graphs, both with edges pointing from base to derived:

  class hierarchy   one node per class, an edge per direct base.
  vtable hierarchy  one node per table of a virtual class. Table `t` of class D
                    is the child of table `p` of class B when B is a direct base
                    of D and `t.base_path[1:] == p.base_path`. In other words,
                    `t` is the copy of `p` that D carries for its B sub-object.
                    Each table has at most one parent; following parents ends
                    at the table's root, the origin table with a one-element
                    base_path. The root's owning class is the table's vtable
                    type.

Islands are the connected pieces of the vtable hierarchy with direction
ignored. One object carries every table of its class, so the tables of one
class's vtable set are joined too: a class that derives from two otherwise
unrelated families merges them into one island. Without that link the
dispatched slot of a derived object could fall outside its own island.

Sub-hierarchies are reflexive: the root is a member of its own sub-hierarchy.
Descendant sets are computed once per root and cached on the hierarchy object,
so repeated policy evaluations over one program share them.
"""
from __future__ import annotations

import logging
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Tuple

import networkx as nx

from services.facts_model import EntryKind, ProgramFacts

logger = logging.getLogger(__name__)


class EntryIndexOutOfRange(IndexError):
    """A slot index past the end of a table's function slots."""


class SubHierarchy(NamedTuple):
    root: str
    members: FrozenSet[str]


class _Closure:
    """Base for both hierarchies: a DiGraph plus memoized descendant sets."""

    def __init__(self, graph: nx.DiGraph):
        self.graph = graph
        self._descendants: Dict[str, FrozenSet[str]] = {}

    def descendants(self, node: str) -> FrozenSet[str]:
        """`node` and everything derived from it."""
        cached = self._descendants.get(node)
        if cached is None:
            cached = frozenset(nx.descendants(self.graph, node)) | {node}
            self._descendants[node] = cached
        return cached

    def edges(self) -> FrozenSet[Tuple[str, str]]:
        return frozenset(self.graph.edges())

    def __contains__(self, node: str) -> bool:
        return node in self.graph


class ClassHierarchy(_Closure):
    pass


class VTableHierarchy(_Closure):
    def __init__(self, graph: nx.DiGraph, islands: List[Tuple[str, ...]], roots: Dict[str, str],
                 owners: Dict[str, str]):
        super().__init__(graph)
        self.islands = islands
        self.island_of = {t: i for i, members in enumerate(islands) for t in members}
        self.root_of = roots
        self._owners = owners

    def vtable_type(self, table_id: str) -> str:
        """The class that introduced the table's root."""
        return self._owners[self.root_of[table_id]]


def build_class_hierarchy(facts: ProgramFacts) -> ClassHierarchy:
    graph = nx.DiGraph()
    graph.add_nodes_from(facts.classes)
    for c in facts.classes.values():
        graph.add_edges_from((base, c.id) for base in c.base_ids)
    logger.info("Class hierarchy: %d classes, %d edges", graph.number_of_nodes(), graph.number_of_edges())
    return ClassHierarchy(graph)


def build_vtable_hierarchy(facts: ProgramFacts) -> VTableHierarchy:
    tables = [
        t for t in facts.vtables.values()
        if t.owning_class in facts.classes and facts.classes[t.owning_class].is_virtual_class
    ]
    by_path: Dict[Tuple[str, Tuple[str, ...]], str] = {}
    for t in tables:
        by_path.setdefault((t.owning_class, t.base_path), t.id)

    graph = nx.DiGraph()
    graph.add_nodes_from(t.id for t in tables)
    for t in tables:
        if len(t.base_path) > 1:
            parent = by_path.get((t.base_path[1], t.base_path[1:]))
            if parent is not None:
                graph.add_edge(parent, t.id)

    roots: Dict[str, str] = {}
    for node in nx.topological_sort(graph):
        preds = list(graph.predecessors(node))
        roots[node] = roots[preds[0]] if preds else node

    joined = graph.to_undirected(as_view=False)
    for members in facts.tables_by_class.values():
        ids = [t.id for t in members if t.id in graph]
        joined.add_edges_from(zip(ids, ids[1:]))
    islands = sorted((tuple(sorted(c)) for c in nx.connected_components(joined)), key=lambda c: c[0])

    owners = {t.id: t.owning_class for t in tables}
    logger.info(
        "Vtable hierarchy: %d tables, %d edges, %d islands",
        graph.number_of_nodes(), graph.number_of_edges(), len(islands),
    )
    return VTableHierarchy(graph, islands, roots, owners)


def find_islands(vh: VTableHierarchy) -> List[Tuple[str, ...]]:
    """The partition of table ids into islands, each sorted, ordered by first id."""
    return list(vh.islands)


def class_sub_hierarchy(ch: ClassHierarchy, root: str) -> SubHierarchy:
    return SubHierarchy(root, ch.descendants(root))


def vtable_sub_hierarchy(vh: VTableHierarchy, root: str) -> SubHierarchy:
    return SubHierarchy(root, vh.descendants(root))


def vtable_set(facts: ProgramFacts, class_id: str) -> List[str]:
    """A class's tables, primary first. Empty for a non-virtual class."""
    return [t.id for t in facts.tables_by_class.get(class_id, ())]


def resolve_entry(facts: ProgramFacts, vtable_id: str, entry_index: int) -> Optional[str]:
    """The function a slot calls: its own for `function`, the landing function
    for `thunk`, None for `pure`."""
    table = facts.vtables[vtable_id]
    if not 0 <= entry_index < table.slot_count:
        raise EntryIndexOutOfRange(f"{vtable_id} has {table.slot_count} slots, no slot {entry_index}")
    entry = table.slots[entry_index]
    if entry.kind == EntryKind.PURE:
        return None
    return entry.function_id
