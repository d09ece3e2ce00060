"""Callsite and function signatures, and the three ways policies compare them.

    match_strict  ⇒  match_src  ⇒  match_safe

`match_safe` lets any pointer stand in for any other pointer; `match_src`
wants the exact types; `match_strict` additionally wants the same unqualified
name. None of them looks at the return type. A variadic function has no fixed
arity, so it matches none of them; the Bin types policy counts variadics by
their fixed parameters and does not go through this module.

The `*_key` helpers give the part of a signature each predicate actually reads.
Two callsites with equal keys get equal target sets, which is what the policy
engine caches on.
"""
from __future__ import annotations

from typing import NamedTuple, Optional, Tuple

from services.facts_model import Callsite, FunctionRecord
from services.type_expr import TypeExpr, is_pointer, is_void

# Stands in for every pointer type once pointers are interchangeable.
ANY_POINTER = "ptr(*)"

POINTERS_EXACT = "exact"
POINTERS_INTERCHANGEABLE = "interchangeable"


class SignatureKey(NamedTuple):
    param_types: Tuple[TypeExpr, ...]
    return_is_void: bool
    name: Optional[str] = None
    is_variadic: bool = False

    @property
    def arity(self) -> int:
        return len(self.param_types)


def callsite_signature(cs: Callsite) -> SignatureKey:
    return SignatureKey(
        param_types=tuple(cs.args),
        return_is_void=not cs.returns_used,
        name=cs.callee_name_hint,
    )


def function_signature(f: FunctionRecord) -> SignatureKey:
    return SignatureKey(
        param_types=tuple(f.params),
        return_is_void=is_void(f.return_type),
        name=f.name,
        is_variadic=f.is_variadic,
    )


def _same_or_both_pointers(a: TypeExpr, b: TypeExpr) -> bool:
    return a == b or (is_pointer(a) and is_pointer(b))


def _params_match(cs_sig: SignatureKey, fn_sig: SignatureKey, interchange_pointers: bool) -> bool:
    if fn_sig.is_variadic or cs_sig.arity != fn_sig.arity:
        return False
    if interchange_pointers:
        return all(_same_or_both_pointers(a, b) for a, b in zip(cs_sig.param_types, fn_sig.param_types))
    return cs_sig.param_types == fn_sig.param_types


def match_safe(cs_sig: SignatureKey, fn_sig: SignatureKey) -> bool:
    return _params_match(cs_sig, fn_sig, interchange_pointers=True)


def match_src(cs_sig: SignatureKey, fn_sig: SignatureKey) -> bool:
    return _params_match(cs_sig, fn_sig, interchange_pointers=False)


def match_strict(cs_sig: SignatureKey, fn_sig: SignatureKey, pointers: str = POINTERS_EXACT) -> bool:
    """Same name, same arity, same parameter types.

    `pointers="interchangeable"` relaxes the types to the `match_safe` rule; the
    name test stays exact either way.
    """
    if cs_sig.name is None or fn_sig.name is None or cs_sig.name != fn_sig.name:
        return False
    return _params_match(cs_sig, fn_sig, interchange_pointers=pointers == POINTERS_INTERCHANGEABLE)


# --- grouping keys ---

def safe_key(params: Tuple[TypeExpr, ...]) -> Tuple[object, ...]:
    return tuple(ANY_POINTER if is_pointer(t) else t for t in params)


def src_key(params: Tuple[TypeExpr, ...]) -> Tuple[object, ...]:
    return tuple(params)


def strict_key(name: str, params: Tuple[TypeExpr, ...], pointers: str = POINTERS_EXACT) -> Tuple[object, ...]:
    shape = safe_key(params) if pointers == POINTERS_INTERCHANGEABLE else src_key(params)
    return (name, shape)
