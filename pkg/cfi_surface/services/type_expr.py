"""The textual type grammar every facts file uses for parameters and returns.

    void | bool | char | i8|i16|i32|i64 | u8|u16|u32|u64 | f32|f64
    | ptr(<type>) | named(<identifier>)

Each type has exactly one spelling: no whitespace, no aliases. That is what lets
the facts writer be canonical and lets signatures compare as plain tuples:
two parameters are the same type exactly when their printed forms are equal.

`ptr` is the only constructor that nests, so a type is always a run of `ptr(`
prefixes around one base type. Parsing exploits that and stays iterative: a
machine-generated facts file with a very deep pointer chain cannot exhaust the
recursion limit.

The variadic marker `...` is not a type. It may only end a parameter list, and
`split_params` is the one place that recognizes it.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, List, Tuple, Union

VARIADIC_MARKER = "..."

PRIMITIVES = (
    "void", "bool", "char",
    "i8", "i16", "i32", "i64",
    "u8", "u16", "u32", "u64",
    "f32", "f64",
)
_PRIMITIVE_SET = frozenset(PRIMITIVES)

# Qualified C++ names (`ns::Widget`) and template-ish spellings are accepted;
# parentheses, commas and whitespace are not, since they would make the printed
# form ambiguous.
_IDENTIFIER_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_:<>.$]*")
_WORD_RE = re.compile(r"[a-z][a-z0-9]*")


class MalformedType(ValueError):
    """The text is not a canonical type expression. `offset` is the byte at fault."""

    def __init__(self, message: str, text: str, offset: int):
        super().__init__(f"{message} at offset {offset} in {text!r}")
        self.text = text
        self.offset = offset


@dataclass(frozen=True)
class Primitive:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Pointer:
    pointee: "TypeExpr"

    def __str__(self) -> str:
        # Iterative for the same reason parsing is.
        depth, base = 0, self
        while isinstance(base, Pointer):
            depth, base = depth + 1, base.pointee
        return "ptr(" * depth + str(base) + ")" * depth


@dataclass(frozen=True)
class Named:
    identifier: str

    def __str__(self) -> str:
        return f"named({self.identifier})"


TypeExpr = Union[Primitive, Pointer, Named]

VOID = Primitive("void")


def is_pointer(t: TypeExpr) -> bool:
    return isinstance(t, Pointer)


def is_void(t: TypeExpr) -> bool:
    return t == VOID


def print_type(t: TypeExpr) -> str:
    return str(t)


def parse_type(text: str) -> TypeExpr:
    """Parse the canonical spelling of a type; anything else is `MalformedType`."""
    if not isinstance(text, str):
        raise MalformedType("expected a string", repr(text), 0)
    pos = 0
    depth = 0
    while text.startswith("ptr(", pos):
        depth += 1
        pos += 4

    base, pos = _parse_base(text, pos)

    for _ in range(depth):
        if pos >= len(text) or text[pos] != ")":
            raise MalformedType("expected ')'", text, pos)
        pos += 1
    if pos != len(text):
        raise MalformedType("unexpected trailing input", text, pos)

    result: TypeExpr = base
    for _ in range(depth):
        result = Pointer(result)
    return result


def _parse_base(text: str, pos: int) -> Tuple[TypeExpr, int]:
    if text.startswith("named(", pos):
        start = pos + 6
        m = _IDENTIFIER_RE.match(text, start)
        if not m:
            raise MalformedType("expected an identifier", text, start)
        end = m.end()
        if end >= len(text) or text[end] != ")":
            raise MalformedType("expected ')'", text, end)
        return Named(m.group(0)), end + 1

    m = _WORD_RE.match(text, pos)
    if not m:
        raise MalformedType("expected a type", text, pos)
    word = m.group(0)
    if word not in _PRIMITIVE_SET:
        raise MalformedType(f"unknown type {word!r}", text, pos)
    return Primitive(word), m.end()


def split_params(texts: Iterable[str]) -> Tuple[Tuple[TypeExpr, ...], bool]:
    """Parse a parameter list, peeling off a trailing variadic marker.

    Returns the fixed parameters and whether the list was variadic. `void` is
    not a parameter type; an empty list already spells "takes nothing".
    """
    items: List[str] = list(texts)
    variadic = bool(items) and items[-1] == VARIADIC_MARKER
    if variadic:
        items.pop()
    params = []
    for i, text in enumerate(items):
        if text == VARIADIC_MARKER:
            raise MalformedType("variadic marker must be the last parameter", text, 0)
        t = parse_type(text)
        if is_void(t):
            raise MalformedType(f"parameter {i} cannot be void", text, 0)
        params.append(t)
    return tuple(params), variadic


def print_params(params: Iterable[TypeExpr], variadic: bool = False) -> List[str]:
    out = [str(t) for t in params]
    if variadic:
        out.append(VARIADIC_MARKER)
    return out
