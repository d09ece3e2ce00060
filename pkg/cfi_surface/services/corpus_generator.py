"""Deterministic synthetic programs for tests, sweeps and scale probes.

`generate_corpus(config)` is a pure function of its config: one
`random.Random(seed)` drives every choice, in a fixed order, so the same
config always writes the same facts bytes. Every corpus it produces passes
`validate_facts` with no diagnostics.

Layout follows the usual Itanium shape, simplified:

  * a virtual class with no virtual base gets one origin table, its own new
    virtuals in declaration order;
  * otherwise its primary table extends the primary of its first virtual base
    (same slots, overrides swapped in, new virtuals appended), and every other
    table it inherits becomes a secondary table that starts with an offset
    entry and uses thunks for the functions the class overrides;
  * an override replaces the inherited function in every table that holds it.

Secondary tables multiply under multiple inheritance, so a base is skipped
when taking it would give the class more than `max_tables_per_class` tables.
"""
from __future__ import annotations

import logging
import random
from typing import Dict, List, NamedTuple, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from config.settings import get_tables_per_class
from services.facts_model import (
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
from services.type_expr import VOID, TypeExpr, is_void, parse_type

logger = logging.getLogger(__name__)

METHOD_NAMES = (
    "run", "draw", "update", "reset", "size", "get", "set", "visit", "apply", "close",
    "open", "read", "write", "flush", "clone", "hash", "compare", "dispatch", "notify", "handle",
)
FREE_NAMES = ("callback", "handler", "hook", "compare", "alloc", "release", "log", "parse", "emit", "step")

DEFAULT_TYPE_WEIGHTS = {
    "i32": 6, "i64": 3, "u8": 1, "u32": 2, "u64": 2, "bool": 2, "char": 1, "f32": 1, "f64": 2,
    "ptr(i8)": 3, "ptr(char)": 2, "ptr(i32)": 1, "ptr(named(Node))": 2, "ptr(ptr(char))": 1,
    "named(Span)": 1,
}
DEFAULT_ARITY_WEIGHTS = [4, 6, 5, 3, 2, 1, 1, 1, 1]


class InfeasibleConfig(ValueError):
    """The config asks for something no program can have, e.g. callsites without functions."""


class GeneratorConfig(BaseModel):
    seed: int = Field(0, ge=0, le=2**64 - 1)
    n_classes: int = Field(20, ge=0)
    n_free_functions: int = Field(10, ge=0)
    n_callsites: int = Field(100, ge=0)
    max_bases: int = Field(2, ge=1)
    p_override: float = Field(0.5, ge=0, le=1)
    p_virtual_callsite: float = Field(0.7, ge=0, le=1)
    max_params: int = Field(4, ge=0, le=8)
    p_virtual_class: float = Field(0.8, ge=0, le=1)
    max_new_virtuals: int = Field(3, ge=1)
    p_pure: float = Field(0.0, ge=0, le=1)
    p_variadic: float = Field(0.05, ge=0, le=1)
    p_virtual_inheritance: float = Field(0.1, ge=0, le=1)
    p_root_class: float = Field(0.3, ge=0, le=1)
    p_void_return: float = Field(0.4, ge=0, le=1)
    max_tables_per_class: int = Field(default_factory=get_tables_per_class, ge=1)
    type_weights: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_TYPE_WEIGHTS))
    arity_weights: List[float] = Field(default_factory=lambda: list(DEFAULT_ARITY_WEIGHTS))

    @field_validator("type_weights")
    @classmethod
    def _types(cls, v: Dict[str, float]) -> Dict[str, float]:
        if not v or all(w <= 0 for w in v.values()):
            raise ValueError("type_weights needs at least one positive weight")
        for text, w in v.items():
            if w < 0:
                raise ValueError(f"negative weight for {text}")
            if is_void(parse_type(text)):
                raise ValueError("void is a return type only; it cannot be weighted as a parameter")
        return v

    @field_validator("arity_weights")
    @classmethod
    def _arities(cls, v: List[float]) -> List[float]:
        if any(w < 0 for w in v):
            raise ValueError("arity weights must be non-negative")
        return v

    @model_validator(mode="after")
    def _some_arity(self) -> "GeneratorConfig":
        if not any(w > 0 for w in self._arity_table()):
            raise ValueError("no arity between 0 and max_params has a positive weight")
        return self

    def _arity_table(self) -> List[float]:
        weights = list(self.arity_weights[: self.max_params + 1])
        return weights + [1.0] * (self.max_params + 1 - len(weights))


class _Slot(NamedTuple):
    kind: EntryKind
    function_id: Optional[str]  # what the slot calls; None for pure
    decl_id: str  # the function that introduced the slot


class _Table(NamedTuple):
    id: str
    owner: str
    order: int
    base_path: Tuple[str, ...]
    slots: List[_Slot]


class _Builder:
    def __init__(self, config: GeneratorConfig):
        self.config = config
        self.rng = random.Random(config.seed)
        self.type_pool = [parse_type(t) for t in config.type_weights]
        self.type_weights = list(config.type_weights.values())
        self.arity_weights = config._arity_table()
        self.classes: List[ClassRecord] = []
        self.functions: Dict[str, FunctionRecord] = {}
        self.tables: Dict[str, List[_Table]] = {}
        self.width = max(4, len(str(max(config.n_classes - 1, 0))))

    # --- random pieces ---

    def _type(self) -> TypeExpr:
        return self.rng.choices(self.type_pool, weights=self.type_weights)[0]

    def _params(self) -> Tuple[TypeExpr, ...]:
        arity = self.rng.choices(range(len(self.arity_weights)), weights=self.arity_weights)[0]
        return tuple(self._type() for _ in range(arity))

    def _return(self) -> TypeExpr:
        return VOID if self.rng.random() < self.config.p_void_return else self._type()

    def _loc(self, file: str) -> SourceLoc:
        return SourceLoc(file, self.rng.randint(1, 4000), self.rng.randint(1, 80))

    def _direct_calls(self) -> int:
        return self.rng.choice((0, 0, 1, 1, 2, 3, 5))

    def _unique_id(self, base: str) -> str:
        if base not in self.functions:
            return base
        k = 2
        while f"{base}#{k}" in self.functions:
            k += 1
        return f"{base}#{k}"

    def _add_function(self, record: FunctionRecord) -> FunctionRecord:
        self.functions[record.id] = record
        return record

    # --- classes and tables ---

    def build_class(self, index: int) -> None:
        cfg, rng = self.config, self.rng
        cid = f"C{index:0{self.width}d}"
        file = f"src/{cid.lower()}.cc"

        bases: List[BaseRef] = []
        if index > 0 and rng.random() >= cfg.p_root_class:
            k = rng.randint(1, min(cfg.max_bases, index))
            for b in rng.sample(range(index), k):
                bases.append(BaseRef(self.classes[b].id, rng.random() < cfg.p_virtual_inheritance))

        # Only bases whose tables still fit are kept as virtual-table contributors.
        virtual_bases: List[str] = []
        kept: List[BaseRef] = []
        budget = cfg.max_tables_per_class
        for b in bases:
            tables = self.tables.get(b.class_id, [])
            if not tables:
                kept.append(b)
                continue
            if len(tables) > budget:
                continue
            budget -= len(tables)
            virtual_bases.append(b.class_id)
            kept.append(b)

        n_new = 0
        if index == 0 or rng.random() < cfg.p_virtual_class:
            n_new = rng.randint(1, cfg.max_new_virtuals)
        is_virtual = n_new > 0 or bool(virtual_bases)
        self.classes.append(ClassRecord(cid, f"Class{index}", tuple(kept), is_virtual))

        if is_virtual:
            self._build_tables(cid, file, virtual_bases, n_new)
        for _ in range(rng.randint(0, 2)):
            name = rng.choice(METHOD_NAMES)
            self._add_function(FunctionRecord(
                id=self._unique_id(f"{cid}::{name}"),
                name=name,
                owning_class=cid,
                params=self._params(),
                return_type=self._return(),
                is_variadic=rng.random() < cfg.p_variadic,
                source_loc=self._loc(file),
                direct_calls=self._direct_calls(),
            ))

    def _build_tables(self, cid: str, file: str, virtual_bases: List[str], n_new: int) -> None:
        rng, cfg = self.rng, self.config
        inherited: List[_Table] = []
        for b in virtual_bases:
            inherited.extend(self.tables[b])

        # One decision per inherited function: every slot holding it is overridden together.
        overrides: Dict[str, str] = {}
        for table in inherited:
            for slot in table.slots:
                key = slot.function_id or slot.decl_id
                if key in overrides:
                    continue
                if rng.random() < cfg.p_override:
                    decl = self.functions[slot.decl_id]
                    override = self._add_function(FunctionRecord(
                        id=self._unique_id(f"{cid}::{decl.name}"),
                        name=decl.name,
                        owning_class=cid,
                        params=decl.params,
                        return_type=decl.return_type,
                        is_virtual=True,
                        source_loc=self._loc(file),
                        direct_calls=self._direct_calls(),
                    ))
                    overrides[key] = override.id
                else:
                    overrides[key] = ""

        def carry(slot: _Slot, primary: bool) -> _Slot:
            replacement = overrides.get(slot.function_id or slot.decl_id)
            if not replacement:
                return slot
            return _Slot(EntryKind.FUNCTION if primary else EntryKind.THUNK, replacement, slot.decl_id)

        new_slots = []
        for _ in range(n_new):
            name = rng.choice(METHOD_NAMES)
            pure = rng.random() < cfg.p_pure
            f = self._add_function(FunctionRecord(
                id=self._unique_id(f"{cid}::{name}"),
                name=name,
                owning_class=cid,
                params=self._params(),
                return_type=self._return(),
                is_virtual=True,
                is_pure_virtual=pure,
                source_loc=self._loc(file),
                direct_calls=0 if pure else self._direct_calls(),
            ))
            new_slots.append(_Slot(EntryKind.PURE, None, f.id) if pure else _Slot(EntryKind.FUNCTION, f.id, f.id))

        own: List[_Table] = []
        if not virtual_bases:
            own.append(_Table(f"{cid}.vt0", cid, 0, (cid,), new_slots))
        else:
            first = self.tables[virtual_bases[0]]
            primary = first[0]
            own.append(_Table(
                f"{cid}.vt0", cid, 0, (cid,) + primary.base_path,
                [carry(s, True) for s in primary.slots] + new_slots,
            ))
            for table in inherited:
                if table is primary:
                    continue
                order = len(own)
                own.append(_Table(
                    f"{cid}.vt{order}", cid, order, (cid,) + table.base_path,
                    [carry(s, False) for s in table.slots],
                ))
        self.tables[cid] = own

    # --- functions and callsites ---

    def build_free_function(self, index: int) -> None:
        name = self.rng.choice(FREE_NAMES)
        self._add_function(FunctionRecord(
            id=f"fn{index:05d}",
            name=name,
            params=self._params(),
            return_type=self._return(),
            is_variadic=self.rng.random() < self.config.p_variadic,
            source_loc=self._loc("src/free.cc"),
            direct_calls=self._direct_calls(),
        ))

    def build_callsites(self) -> List[Callsite]:
        cfg, rng = self.config, self.rng
        if cfg.n_callsites == 0:
            return []
        callable_fns = [f for f in self.functions.values() if not f.is_pure_virtual]
        if not callable_fns:
            raise InfeasibleConfig(f"{cfg.n_callsites} callsites requested but the program has no callable functions")
        dispatchable = [
            (t, i) for tables in self.tables.values() for t in tables for i in range(len(t.slots))
        ]
        ids = sorted(f.id for f in callable_fns)

        out = []
        for n in range(cfg.n_callsites):
            cid = f"cs{n:06d}"
            encloser = self.functions[rng.choice(ids)]
            loc = self._loc(encloser.source_loc.file or "src/main.cc")
            if dispatchable and rng.random() < cfg.p_virtual_callsite:
                table, idx = rng.choice(dispatchable)
                decl = self.functions[table.slots[idx].decl_id]
                out.append(Callsite(
                    id=cid,
                    kind=CallsiteKind.VIRTUAL_DISPATCH,
                    args=decl.params,
                    returns_used=not is_void(decl.return_type) and rng.random() < 0.5,
                    source_loc=loc,
                    callee_name_hint=decl.name,
                    static_class=table.owner,
                    table_order=table.order,
                    entry_index=idx,
                    enclosing_function=encloser.id,
                ))
                continue
            target = rng.choice(callable_fns)
            args, returns = target.params, not is_void(target.return_type) and rng.random() < 0.6
            if target.is_variadic:
                args = args + tuple(self._type() for _ in range(rng.randint(0, 2)))
            if rng.random() < 0.3:
                args, returns = self._params(), rng.random() < 0.5
            out.append(Callsite(
                id=cid,
                kind=CallsiteKind.FUNCTION_POINTER,
                args=args,
                returns_used=returns,
                source_loc=loc,
                enclosing_function=encloser.id,
            ))
        return out

    def vtable_records(self) -> List[VTableRecord]:
        records = []
        for tables in self.tables.values():
            for t in tables:
                entries = [VTableEntry(EntryKind.OFFSET)] if t.order > 0 else []
                entries += [VTableEntry(s.kind, s.function_id, i) for i, s in enumerate(t.slots)]
                records.append(VTableRecord(t.id, t.owner, t.order, t.base_path, tuple(entries)))
        return records


def generate_corpus(config: GeneratorConfig) -> ProgramFacts:
    builder = _Builder(config)
    for i in range(config.n_classes):
        builder.build_class(i)
    for i in range(config.n_free_functions):
        builder.build_free_function(i)
    callsites = builder.build_callsites()
    facts = ProgramFacts.build(builder.classes, builder.functions.values(), builder.vtable_records(), callsites)
    logger.info(
        "Generated corpus seed=%d: %d classes, %d functions, %d vtables, %d callsites",
        config.seed, len(facts.classes), len(facts.functions), len(facts.vtables), len(facts.callsites),
    )
    return facts
