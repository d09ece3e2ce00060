"""Reading and writing `.cfifacts.json` files and gadget annotation files.

The facts file is JSON so it can be diffed, reviewed and checked in as a
golden file. Everything about its layout is fixed so that writing is
canonical: keys in one order, collections ascending by id, every optional
field present (as `null` when absent), two-space indentation, UTF-8, and a
trailing newline. Two facts built in different orders therefore write the same
bytes, and `write(parse(write(f))) == write(f)`.

    {
      "format_version": 1,
      "classes":   [{"id", "name", "bases": [{"class_id", "is_virtual_base"}], "is_virtual_class"}],
      "functions": [{"id", "name", "owning_class", "params", "return_type",
                     "is_virtual", "is_pure_virtual", "source_loc", "direct_calls"}],
      "vtables":   [{"id", "owning_class", "order", "base_path",
                     "entries": [{"kind", "function_id", "entry_index"}]}],
      "callsites": [{"id", "kind", "source_loc", "args", "returns_used", "callee_name_hint",
                     "static_class", "table_order", "entry_index", "enclosing_function"}]
    }

Types use the canonical spellings from `type_expr`; a variadic function ends
its `params` with "...".

Reading is structural only: it checks shape, types, version and duplicate ids,
and leaves referential integrity to `validate_facts`, which reports every
problem at once instead of stopping at the first.
"""
from __future__ import annotations

import json
import logging
from decimal import Decimal
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from config.policies import UnknownPolicy, resolve_policy
from services.metrics import PolicyAggregates
from services.facts_model import (
    FORMAT_VERSION,
    BaseRef,
    Callsite,
    CallsiteKind,
    ClassRecord,
    EntryKind,
    FunctionRecord,
    GadgetAnnotations,
    GadgetFlags,
    ProgramFacts,
    SourceLoc,
    VTableEntry,
    VTableRecord,
)
from services.type_expr import MalformedType, parse_type, print_params, split_params

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = ("format_version", "classes", "functions", "vtables", "callsites")


class FactsFormatError(ValueError):
    """The document is not a well-formed facts file. Carries a position when JSON itself failed."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class VersionMismatch(FactsFormatError):
    """`format_version` is missing or is not one this reader understands."""


class GadgetFileError(ValueError):
    """The gadget annotations are malformed or name functions the facts don't have."""


# --- Wire models (file contracts) ---

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True)


class SourceLocModel(_Strict):
    file: str
    line: int = Field(ge=0)
    column: int = Field(ge=0)


class BaseModelRef(_Strict):
    class_id: str = Field(min_length=1)
    is_virtual_base: bool = False


class ClassModel(_Strict):
    id: str = Field(min_length=1)
    name: str
    bases: List[BaseModelRef] = []
    is_virtual_class: bool


class FunctionModel(_Strict):
    id: str = Field(min_length=1)
    name: str
    owning_class: Optional[str] = None
    params: List[str]
    return_type: str
    is_virtual: bool = False
    is_pure_virtual: bool = False
    source_loc: Optional[SourceLocModel] = None
    direct_calls: int = 0

    @field_validator("return_type")
    @classmethod
    def _return_type(cls, v: str) -> str:
        parse_type(v)
        return v

    @field_validator("params")
    @classmethod
    def _params(cls, v: List[str]) -> List[str]:
        split_params(v)
        return v


class EntryModel(_Strict):
    kind: EntryKind
    function_id: Optional[str] = None
    entry_index: Optional[int] = None

    @field_validator("kind", mode="before")
    @classmethod
    def _kind(cls, v: Any) -> Any:
        # Strict mode won't coerce a plain string into the enum on its own.
        return EntryKind(v) if isinstance(v, str) else v


class VTableModel(_Strict):
    id: str = Field(min_length=1)
    owning_class: str
    order: int
    base_path: List[str]
    entries: List[EntryModel]


class CallsiteModel(_Strict):
    id: str = Field(min_length=1)
    kind: CallsiteKind
    source_loc: Optional[SourceLocModel] = None
    args: List[str] = []
    returns_used: bool = False
    callee_name_hint: Optional[str] = None
    static_class: Optional[str] = None
    table_order: Optional[int] = None
    entry_index: Optional[int] = None
    enclosing_function: Optional[str] = None

    @field_validator("kind", mode="before")
    @classmethod
    def _kind(cls, v: Any) -> Any:
        return CallsiteKind(v) if isinstance(v, str) else v

    @field_validator("args")
    @classmethod
    def _args(cls, v: List[str]) -> List[str]:
        params, variadic = split_params(v)
        if variadic:
            raise ValueError("a callsite passes concrete arguments; '...' is not one")
        return v


class FactsDocument(_Strict):
    format_version: int
    classes: List[ClassModel] = []
    functions: List[FunctionModel] = []
    vtables: List[VTableModel] = []
    callsites: List[CallsiteModel] = []


class GadgetFlagsModel(_Strict):
    fwd: bool = False
    ret: bool = False


# --- Reading ---

def _loads(data: Union[bytes, str]) -> Any:
    try:
        text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    except UnicodeDecodeError as e:
        raise FactsFormatError(f"not UTF-8: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FactsFormatError(f"invalid JSON: {e.msg}", e.lineno, e.colno) from e


def _loc(m: Optional[SourceLocModel]) -> SourceLoc:
    return SourceLoc(m.file, m.line, m.column) if m else SourceLoc("", 0, 0)


def _unique(kind: str, ids: List[str]) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise FactsFormatError(f"duplicate {kind} id {i!r}")
        seen.add(i)


def _schema_error(e: ValidationError) -> FactsFormatError:
    first = e.errors()[0]
    where = ".".join(str(p) for p in first.get("loc", ()))
    return FactsFormatError(f"{where}: {first.get('msg')} ({e.error_count()} problem(s) in total)")


def parse_facts(data: Union[bytes, str]) -> ProgramFacts:
    """Decode a facts document. Run `validate_facts` on the result before analysing it."""
    doc = _loads(data)
    if not isinstance(doc, dict):
        raise FactsFormatError("top level must be a JSON object")
    version = doc.get("format_version")
    if version is None:
        raise VersionMismatch("format_version is missing")
    if isinstance(version, bool) or version != FORMAT_VERSION:
        raise VersionMismatch(f"format_version {version!r} is not supported (expected {FORMAT_VERSION})")
    unknown = sorted(set(doc) - set(TOP_LEVEL_KEYS))
    if unknown:
        raise FactsFormatError(f"unknown top-level keys: {', '.join(unknown)}")

    try:
        parsed = FactsDocument.model_validate(doc)
    except ValidationError as e:
        raise _schema_error(e) from e

    for kind, items in (("class", parsed.classes), ("function", parsed.functions),
                        ("vtable", parsed.vtables), ("callsite", parsed.callsites)):
        _unique(kind, [i.id for i in items])

    classes = [
        ClassRecord(
            id=c.id,
            name=c.name,
            bases=tuple(BaseRef(b.class_id, b.is_virtual_base) for b in c.bases),
            is_virtual_class=c.is_virtual_class,
        )
        for c in parsed.classes
    ]
    functions = []
    for f in parsed.functions:
        params, variadic = split_params(f.params)
        functions.append(FunctionRecord(
            id=f.id,
            name=f.name,
            owning_class=f.owning_class,
            params=params,
            is_variadic=variadic,
            return_type=parse_type(f.return_type),
            is_virtual=f.is_virtual,
            is_pure_virtual=f.is_pure_virtual,
            source_loc=_loc(f.source_loc),
            direct_calls=f.direct_calls,
        ))
    vtables = [
        VTableRecord(
            id=t.id,
            owning_class=t.owning_class,
            order=t.order,
            base_path=tuple(t.base_path),
            entries=tuple(VTableEntry(e.kind, e.function_id, e.entry_index) for e in t.entries),
        )
        for t in parsed.vtables
    ]
    callsites = [
        Callsite(
            id=c.id,
            kind=c.kind,
            source_loc=_loc(c.source_loc),
            args=split_params(c.args)[0],
            returns_used=c.returns_used,
            callee_name_hint=c.callee_name_hint,
            static_class=c.static_class,
            table_order=c.table_order,
            entry_index=c.entry_index,
            enclosing_function=c.enclosing_function,
        )
        for c in parsed.callsites
    ]
    facts = ProgramFacts.build(classes, functions, vtables, callsites, format_version=parsed.format_version)
    logger.info(
        "Parsed facts: %d classes, %d functions, %d vtables, %d callsites",
        len(facts.classes), len(facts.functions), len(facts.vtables), len(facts.callsites),
    )
    return facts


# --- Writing ---

def _loc_doc(loc: SourceLoc) -> Dict[str, Any]:
    return {"file": loc.file, "line": loc.line, "column": loc.column}


def facts_to_document(facts: ProgramFacts) -> Dict[str, Any]:
    """The canonical document as plain JSON values, keys in file order."""
    return {
        "format_version": facts.format_version,
        "classes": [
            {
                "id": c.id,
                "name": c.name,
                "bases": [{"class_id": b.class_id, "is_virtual_base": b.is_virtual_base} for b in c.bases],
                "is_virtual_class": c.is_virtual_class,
            }
            for c in facts.classes.values()
        ],
        "functions": [
            {
                "id": f.id,
                "name": f.name,
                "owning_class": f.owning_class,
                "params": print_params(f.params, f.is_variadic),
                "return_type": str(f.return_type),
                "is_virtual": f.is_virtual,
                "is_pure_virtual": f.is_pure_virtual,
                "source_loc": _loc_doc(f.source_loc),
                "direct_calls": f.direct_calls,
            }
            for f in facts.functions.values()
        ],
        "vtables": [
            {
                "id": t.id,
                "owning_class": t.owning_class,
                "order": t.order,
                "base_path": list(t.base_path),
                "entries": [
                    {"kind": e.kind.value, "function_id": e.function_id, "entry_index": e.entry_index}
                    for e in t.entries
                ],
            }
            for t in facts.vtables.values()
        ],
        "callsites": [
            {
                "id": c.id,
                "kind": c.kind.value,
                "source_loc": _loc_doc(c.source_loc),
                "args": [str(a) for a in c.args],
                "returns_used": c.returns_used,
                "callee_name_hint": c.callee_name_hint,
                "static_class": c.static_class,
                "table_order": c.table_order,
                "entry_index": c.entry_index,
                "enclosing_function": c.enclosing_function,
            }
            for c in facts.callsites.values()
        ],
    }


def write_facts(facts: ProgramFacts) -> bytes:
    text = json.dumps(facts_to_document(facts), indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


# --- Gadget annotations ---

def parse_gadgets(data: Union[bytes, str]) -> GadgetAnnotations:
    """`{"<function id>": {"fwd": bool, "ret": bool}, ...}`; missing flags are false."""
    try:
        doc = _loads(data)
    except FactsFormatError as e:
        raise GadgetFileError(str(e)) from e
    if not isinstance(doc, dict):
        raise GadgetFileError("gadget annotations must be a JSON object keyed by function id")
    flags = {}
    for fid, raw in sorted(doc.items()):
        try:
            m = GadgetFlagsModel.model_validate(raw)
        except ValidationError as e:
            raise GadgetFileError(f"{fid}: {e.errors()[0].get('msg')}") from e
        flags[fid] = GadgetFlags(m.fwd, m.ret)
    return GadgetAnnotations(flags)


def check_gadgets(gadgets: GadgetAnnotations, facts: ProgramFacts) -> None:
    unknown = gadgets.unknown_ids(facts)
    if unknown:
        shown = ", ".join(unknown[:5]) + (", ..." if len(unknown) > 5 else "")
        raise GadgetFileError(f"{len(unknown)} gadget annotation(s) name unknown functions: {shown}")


# --- Normalized aggregates (input to `rank`) ---

class AggregatesFileError(ValueError):
    """The aggregates file is not a policy -> {avg, sd, p90} mapping, or a `programs` map of them."""


class AggregateModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    avg: Decimal
    sd: Decimal = Decimal(0)
    p90: Decimal = Decimal(0)


def _program_aggregates(name: str, raw: Any) -> List[PolicyAggregates]:
    if not isinstance(raw, dict) or not raw:
        raise AggregatesFileError(f"{name}: expected a non-empty object keyed by policy")
    out = []
    for token, values in raw.items():
        try:
            policy = resolve_policy(token)
            m = AggregateModel.model_validate(values)
        except UnknownPolicy as e:
            raise AggregatesFileError(f"{name}: {e}") from e
        except ValidationError as e:
            raise AggregatesFileError(f"{name}.{token}: {e.errors()[0].get('msg')}") from e
        out.append(PolicyAggregates(policy, m.avg, m.sd, m.p90))
    if len({a.policy for a in out}) != len(out):
        raise AggregatesFileError(f"{name}: a policy appears twice")
    return out


def parse_aggregates(data: Union[bytes, str]) -> List[List[PolicyAggregates]]:
    """One list of aggregates per program.

        {"1": {"avg": 55.1, "sd": 18.62, "p90": 81.8}, "strict-src-types": {...}}
        {"programs": {"JS": {...}, "TS": {...}}}
    """
    try:
        doc = _loads(data)
    except FactsFormatError as e:
        raise AggregatesFileError(str(e)) from e
    if not isinstance(doc, dict):
        raise AggregatesFileError("aggregates must be a JSON object")
    if set(doc) == {"programs"}:
        programs = doc["programs"]
        if not isinstance(programs, dict) or not programs:
            raise AggregatesFileError("programs must be a non-empty object keyed by program name")
        return [_program_aggregates(name, raw) for name, raw in programs.items()]
    return [_program_aggregates("aggregates", doc)]
