from enum import Enum
from typing import List

from pydantic import BaseModel


class PolicyId(str, Enum):
    """The eight modeled policies, in report order. Values are the CLI tokens."""
    BIN_TYPES = "bin-types"
    SAFE_SRC_TYPES = "safe-src-types"
    SRC_TYPES = "src-types"
    STRICT_SRC_TYPES = "strict-src-types"
    ALL_VTABLES = "all-vtables"
    VTABLE_ISLAND = "vtable-island"
    SUB_HIERARCHY = "sub-hierarchy"
    STRICT_SUB_HIERARCHY = "strict-sub-hierarchy"

    @property
    def config(self) -> "PolicyConfig":
        return get_policy_config(self)

    @property
    def number(self) -> int:
        return self.config.number

    @property
    def label(self) -> str:
        return self.config.label


APPLIES_ALL_INDIRECT = "all-indirect"
APPLIES_VIRTUAL_ONLY = "virtual-only"

BASELINE_ALL_FUNCTIONS = "all-functions"
BASELINE_VIRTUAL_FUNCTIONS = "virtual-functions"


class UnknownPolicy(ValueError):
    """A policy token or number that is not in the catalogue."""


class PolicyConfig(BaseModel):
    """One modeled CFI policy."""
    id: PolicyId
    number: int  # column number in every report
    label: str  # report label
    defense: str  # the deployed defense the policy models
    applicability: str  # APPLIES_ALL_INDIRECT | APPLIES_VIRTUAL_ONLY
    default_baseline: str  # what `--baseline auto` normalizes against
    summary: str

    @property
    def virtual_only(self) -> bool:
        return self.applicability == APPLIES_VIRTUAL_ONLY


# A new policy is one entry here plus one `eval_*` method on the engine; the
# engine module's docstring lists the questions each entry has to answer.
POLICY_CONFIGS: List[PolicyConfig] = [
    PolicyConfig(
        id=PolicyId.BIN_TYPES,
        number=1,
        label="Bin types",
        defense="TypeArmor",
        applicability=APPLIES_ALL_INDIRECT,
        default_baseline=BASELINE_ALL_FUNCTIONS,
        summary="Targets consume at most as many arguments as the callsite prepares (up to six); "
                "a callsite that uses the result only reaches non-void targets.",
    ),
    PolicyConfig(
        id=PolicyId.SAFE_SRC_TYPES,
        number=2,
        label="Safe src types",
        defense="Safe IFCC",
        applicability=APPLIES_ALL_INDIRECT,
        default_baseline=BASELINE_ALL_FUNCTIONS,
        summary="Parameter count and types match; all pointer types are interchangeable; return ignored.",
    ),
    PolicyConfig(
        id=PolicyId.SRC_TYPES,
        number=3,
        label="Src types",
        defense="IFCC/MCFI",
        applicability=APPLIES_ALL_INDIRECT,
        default_baseline=BASELINE_ALL_FUNCTIONS,
        summary="Parameter count and exact types match; return and name ignored.",
    ),
    PolicyConfig(
        id=PolicyId.STRICT_SRC_TYPES,
        number=4,
        label="Strict src types",
        defense="vTrust",
        applicability=APPLIES_VIRTUAL_ONLY,
        default_baseline=BASELINE_ALL_FUNCTIONS,
        summary="Unqualified name, parameter count and exact types match a virtual function.",
    ),
    PolicyConfig(
        id=PolicyId.ALL_VTABLES,
        number=5,
        label="All vTables",
        defense="vTint",
        applicability=APPLIES_VIRTUAL_ONLY,
        default_baseline=BASELINE_VIRTUAL_FUNCTIONS,
        summary="Any function some vtable entry points at.",
    ),
    PolicyConfig(
        id=PolicyId.VTABLE_ISLAND,
        number=6,
        label="vTable hierarchy",
        defense="Marx",
        applicability=APPLIES_VIRTUAL_ONLY,
        default_baseline=BASELINE_VIRTUAL_FUNCTIONS,
        summary="The dispatched slot in every table of the static class's vtable island.",
    ),
    PolicyConfig(
        id=PolicyId.SUB_HIERARCHY,
        number=7,
        label="Sub-hierarchy",
        defense="VTV",
        applicability=APPLIES_VIRTUAL_ONLY,
        default_baseline=BASELINE_VIRTUAL_FUNCTIONS,
        summary="The dispatched slot in every table of every class derived from the static class.",
    ),
    PolicyConfig(
        id=PolicyId.STRICT_SUB_HIERARCHY,
        number=8,
        label="Strict sub-hierarchy",
        defense="ShrinkWrap",
        applicability=APPLIES_VIRTUAL_ONLY,
        default_baseline=BASELINE_VIRTUAL_FUNCTIONS,
        summary="The dispatched slot in the tables derived from the one table the callsite uses.",
    ),
]

_BY_ID = {config.id: config for config in POLICY_CONFIGS}


def get_policy_config(policy: PolicyId) -> PolicyConfig:
    """Get the catalogue entry for a policy."""
    return _BY_ID[PolicyId(policy)]


def resolve_policy(token: str) -> PolicyId:
    """A policy from its CLI token, enum name, or number ("7", "sub-hierarchy", "SUB_HIERARCHY")."""
    text = str(token).strip()
    for config in POLICY_CONFIGS:
        if text in (config.id.value, config.id.name, str(config.number)):
            return config.id
    raise UnknownPolicy(f"unknown policy {token!r}; expected one of "
                        + ", ".join(c.id.value for c in POLICY_CONFIGS))


def parse_policy_list(text: str) -> List[PolicyId]:
    """`all`, or a comma-separated list; duplicates dropped, report order kept."""
    if text.strip().lower() == "all":
        return [c.id for c in POLICY_CONFIGS]
    wanted = {resolve_policy(part) for part in text.split(",") if part.strip()}
    if not wanted:
        raise UnknownPolicy("no policies selected")
    return [c.id for c in POLICY_CONFIGS if c.id in wanted]
