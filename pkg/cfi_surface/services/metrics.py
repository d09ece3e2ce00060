"""Calltarget reduction and friends: turning target sets into report numbers.

    CTR   sum over callsites of |targets|
    RTR   sum over return sites of how many callsites may return into them
    fCGA  sum over callsites of targets flagged as forward gadgets
    bCGA  sum over return sites of return targets inside ret-gadget functions

Aggregates over the per-callsite sizes follow fixed rules so numbers can be
compared across runs and tools:

  * p90 is the ceil(0.9 n)-th smallest value (1-based), i.e. the smallest value
    that at least 90% of the values do not exceed;
  * the median of an even count is the lower middle value;
  * SD is the population form (divide by n);
  * the average is kept exact (a Fraction) until it is printed;
  * an empty distribution has n = 0 and every aggregate 0.

Normalized numbers are percentages of a baseline, the count an unprotected
program would allow, rounded half-up to two places. Rounding happens once, at
the end, from exact values.

Return sites are every function with a body, i.e. everything but pure virtual
declarations. A function's return targets are the callsites whose target set
under the chosen forward policy contains it, plus its recorded direct calls.
"""
from __future__ import annotations

import logging
import statistics
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

from config.policies import (
    BASELINE_ALL_FUNCTIONS,
    BASELINE_VIRTUAL_FUNCTIONS,
    PolicyId,
    resolve_policy,
)
from services.facts_model import Callsite, GadgetAnnotations, ProgramFacts
from services.policy_engine import PolicyEngine, PolicyNotApplicable, TargetSet

logger = logging.getLogger(__name__)

SCOPE_VIRTUAL = "virtual"
SCOPE_ALL = "all"
BASELINE_AUTO = "auto"

TWO_PLACES = Decimal("0.01")
Number = Union[int, float, Fraction, Decimal]


class BaselineZero(ZeroDivisionError):
    """Normalizing against a baseline of zero functions."""


# --- distributions ---

class Distribution(NamedTuple):
    values: Tuple[int, ...]
    n: int
    min: int
    max: int
    median: int
    average: Fraction
    sd: float
    p90: int


def p90_index(n: int) -> int:
    """1-based rank of the 90th percentile among n sorted values."""
    return (9 * n + 9) // 10


def distribution(values: Sequence[int]) -> Distribution:
    vals = tuple(values)
    n = len(vals)
    if n == 0:
        return Distribution((), 0, 0, 0, 0, Fraction(0), 0.0, 0)
    ordered = sorted(vals)
    return Distribution(
        values=vals,
        n=n,
        min=ordered[0],
        max=ordered[-1],
        median=ordered[(n - 1) // 2],
        average=Fraction(sum(vals), n),
        sd=statistics.pstdev(vals),
        p90=ordered[p90_index(n) - 1],
    )


def round_half_up(value: Number, places: int = 2) -> Decimal:
    exact = Fraction(value)
    quantum = Decimal(1).scaleb(-places)
    with localcontext() as ctx:
        ctx.prec = 60
        return (Decimal(exact.numerator) / Decimal(exact.denominator)).quantize(quantum, rounding=ROUND_HALF_UP)


def normalize(value: Number, baseline: Number) -> Decimal:
    """100 * value / baseline, rounded half-up to two decimals."""
    if baseline == 0:
        raise BaselineZero("cannot normalize against a baseline of 0")
    return round_half_up(Fraction(value) * 100 / Fraction(baseline))


# --- CTR ---

def ctr(target_sets: Iterable[TargetSet]) -> Tuple[int, Distribution]:
    ordered = sorted(target_sets, key=lambda ts: ts.callsite_id)
    dist = distribution([ts.size for ts in ordered])
    return sum(dist.values), dist


def fcga(target_sets: Iterable[TargetSet], gadgets: GadgetAnnotations) -> int:
    per_set: Dict[FrozenSet[str], int] = {}
    total = 0
    for ts in target_sets:
        count = per_set.get(ts.members)
        if count is None:
            count = sum(1 for fid in ts.members if gadgets[fid].fwd)
            per_set[ts.members] = count
        total += count
    return total


# --- RTR ---

@dataclass(frozen=True)
class ReturnRelation:
    """Which callsites each return site may return to, under one forward policy.

    Callsites with the same target set are kept together, so the relation stays
    as small as the number of distinct target sets.
    """
    policy: PolicyId
    return_sites: Tuple[str, ...]
    groups: Tuple[Tuple[FrozenSet[str], Tuple[str, ...]], ...]
    direct_calls: Mapping[str, int]
    enclosing: Mapping[str, Optional[str]]

    def counts(self) -> Dict[str, int]:
        counts = {fid: self.direct_calls.get(fid, 0) for fid in self.return_sites}
        for members, callsites in self.groups:
            for fid in members:
                if fid in counts:
                    counts[fid] += len(callsites)
        return counts


def return_relation(facts: ProgramFacts, forward_policy: Union[PolicyId, str],
                    engine: Optional[PolicyEngine] = None,
                    target_sets: Optional[Iterable[TargetSet]] = None) -> ReturnRelation:
    policy = forward_policy if isinstance(forward_policy, PolicyId) else resolve_policy(forward_policy)
    if target_sets is None:
        engine = engine or PolicyEngine(facts)
        target_sets = [
            engine.evaluate(policy, cs) for cs in facts.callsites.values() if engine.applies(policy, cs)
        ]
    grouped: Dict[FrozenSet[str], List[str]] = {}
    for ts in target_sets:
        grouped.setdefault(ts.members, []).append(ts.callsite_id)
    return ReturnRelation(
        policy=policy,
        return_sites=tuple(f.id for f in facts.functions.values() if not f.is_pure_virtual),
        groups=tuple((members, tuple(sorted(ids))) for members, ids in grouped.items()),
        direct_calls={f.id: f.direct_calls for f in facts.functions.values()},
        enclosing={cs.id: cs.enclosing_function for cs in facts.callsites.values()},
    )


def rtr(facts: ProgramFacts, forward_policy: Union[PolicyId, str],
        engine: Optional[PolicyEngine] = None,
        relation: Optional[ReturnRelation] = None) -> Tuple[int, Distribution]:
    relation = relation or return_relation(facts, forward_policy, engine)
    counts = relation.counts()
    dist = distribution([counts[fid] for fid in relation.return_sites])
    return sum(dist.values), dist


def bcga(relation: ReturnRelation, gadgets: GadgetAnnotations) -> int:
    """Return targets sitting in ret-gadget functions, summed over return sites.

    A callsite without an enclosing function contributes nothing.
    """
    total = 0
    for members, callsites in relation.groups:
        flagged = sum(
            1 for cs in callsites
            if relation.enclosing.get(cs) is not None and gadgets[relation.enclosing[cs]].ret
        )
        if flagged:
            total += flagged * len(members)
    return total


# --- ranking ---

class PolicyAggregates(NamedTuple):
    policy: PolicyId
    avg: Decimal
    sd: Decimal
    p90: Decimal


class Ranking(NamedTuple):
    order: Tuple[PolicyId, ...]
    trace: Tuple[str, ...]


def _sort_key(a: PolicyAggregates):
    return (a.avg, a.p90, a.sd, a.policy.number)


def rank(per_policy_aggregates: Iterable[PolicyAggregates]) -> Ranking:
    """Best (smallest normalized average) first; ties by 90p, then SD, then policy number."""
    ordered = sorted(per_policy_aggregates, key=_sort_key)
    trace = []
    for a, b in zip(ordered, ordered[1:]):
        head = f"{a.policy.label} before {b.policy.label}:"
        if a.avg != b.avg:
            trace.append(f"{head} lower average ({a.avg} < {b.avg})")
        elif a.p90 != b.p90:
            trace.append(f"{head} equal average {a.avg}, lower 90p ({a.p90} < {b.p90})")
        elif a.sd != b.sd:
            trace.append(f"{head} equal average and 90p, lower SD ({a.sd} < {b.sd})")
        else:
            trace.append(f"{head} equal average, 90p and SD; policy order ({a.policy.number} < {b.policy.number})")
    return Ranking(tuple(a.policy for a in ordered), tuple(trace))


def mean_aggregates(programs: Iterable[Iterable[PolicyAggregates]]) -> List[PolicyAggregates]:
    """Per-policy means across programs, rounded half-up to two decimals.

    A policy missing from some programs is averaged over the programs that have it.
    """
    sums: Dict[PolicyId, List[Fraction]] = {}
    seen: Counter = Counter()
    for program in programs:
        for a in program:
            acc = sums.setdefault(a.policy, [Fraction(0)] * 3)
            acc[0] += Fraction(a.avg)
            acc[1] += Fraction(a.sd)
            acc[2] += Fraction(a.p90)
            seen[a.policy] += 1
    return [
        PolicyAggregates(p, *(round_half_up(total / seen[p]) for total in sums[p]))
        for p in sorted(sums, key=lambda p: p.number)
    ]


# --- whole-program report ---

class Census(NamedTuple):
    classes: int
    virtual_classes: int
    functions: int
    virtual_functions: int
    vtables: int
    islands: int
    virtual_callsites: int
    pointer_callsites: int


class NormalizedDistribution(NamedTuple):
    min: Decimal
    p90: Decimal
    max: Decimal
    median: Decimal
    avg: Decimal
    sd: Decimal


@dataclass
class PolicyResult:
    policy: PolicyId
    scope: str
    evaluated: int
    skipped: int
    ctr_total: int
    distribution: Distribution
    baseline: str
    baseline_count: int
    normalized: Optional[NormalizedDistribution]
    target_sets: List[TargetSet] = field(default_factory=list, repr=False)
    rtr_total: Optional[int] = None
    rtr_distribution: Optional[Distribution] = None
    fcga: Optional[int] = None
    bcga: Optional[int] = None


@dataclass
class MetricsReport:
    census: Census
    results: List[PolicyResult]
    ranking: Ranking

    def result(self, policy: PolicyId) -> PolicyResult:
        return next(r for r in self.results if r.policy == policy)


def census(facts: ProgramFacts, engine: PolicyEngine) -> Census:
    virtual = facts.virtual_callsites
    return Census(
        classes=len(facts.classes),
        virtual_classes=sum(1 for c in facts.classes.values() if c.is_virtual_class),
        functions=len(facts.functions),
        virtual_functions=len(facts.virtual_functions),
        vtables=len(facts.vtables),
        islands=len(engine.vtables.islands),
        virtual_callsites=len(virtual),
        pointer_callsites=len(facts.callsites) - len(virtual),
    )


def baseline_for(policy: PolicyId, baseline: str, virtual_targets_only: bool = False) -> str:
    if baseline != BASELINE_AUTO:
        return baseline
    if virtual_targets_only and not policy.config.virtual_only:
        return BASELINE_VIRTUAL_FUNCTIONS
    return policy.config.default_baseline


def baseline_count(facts: ProgramFacts, baseline: str) -> int:
    if baseline == BASELINE_VIRTUAL_FUNCTIONS:
        return len(facts.virtual_functions)
    if baseline == BASELINE_ALL_FUNCTIONS:
        return len(facts.functions)
    raise ValueError(f"unknown baseline {baseline!r}")


def _normalized(dist: Distribution, count: int) -> Optional[NormalizedDistribution]:
    if count == 0:
        return None
    return NormalizedDistribution(
        min=normalize(dist.min, count),
        p90=normalize(dist.p90, count),
        max=normalize(dist.max, count),
        median=normalize(dist.median, count),
        avg=normalize(dist.average, count),
        sd=normalize(Fraction(dist.sd), count),
    )


def scoped_callsites(facts: ProgramFacts, policy: PolicyId, scope: str) -> Tuple[Callsite, ...]:
    """Class-based policies only ever see virtual dispatch."""
    if scope == SCOPE_ALL and not policy.config.virtual_only:
        return tuple(facts.callsites.values())
    return facts.virtual_callsites


def analyze_program(
    facts: ProgramFacts,
    policies: Sequence[PolicyId],
    engine: Optional[PolicyEngine] = None,
    scope: str = SCOPE_VIRTUAL,
    baseline: str = BASELINE_AUTO,
    gadgets: Optional[GadgetAnnotations] = None,
    with_rtr: bool = False,
) -> MetricsReport:
    engine = engine or PolicyEngine(facts)
    results = []
    for policy in policies:
        evaluated: List[TargetSet] = []
        skipped = 0
        for cs in scoped_callsites(facts, policy, scope):
            try:
                evaluated.append(engine.evaluate(policy, cs))
            except PolicyNotApplicable as e:
                skipped += 1
                logger.debug("Skipping %s under %s: %s", cs.id, policy.value, e)
        if skipped:
            logger.warning("%s: %d callsite(s) skipped as not applicable", policy.label, skipped)

        total, dist = ctr(evaluated)
        kind = baseline_for(policy, baseline, engine.options.virtual_targets_only)
        count = baseline_count(facts, kind)
        if count == 0:
            logger.warning("%s: baseline %s is 0; normalized values omitted", policy.label, kind)
        result = PolicyResult(
            policy=policy,
            scope=SCOPE_ALL if scope == SCOPE_ALL and not policy.config.virtual_only else SCOPE_VIRTUAL,
            evaluated=len(evaluated),
            skipped=skipped,
            ctr_total=total,
            distribution=dist,
            baseline=kind,
            baseline_count=count,
            normalized=_normalized(dist, count),
            target_sets=evaluated,
        )
        if gadgets is not None:
            result.fcga = fcga(evaluated, gadgets)
        if with_rtr or gadgets is not None:
            # RTR always follows the forward edges of every indirect callsite the policy accepts.
            relation = return_relation(facts, policy, engine)
            if with_rtr:
                result.rtr_total, result.rtr_distribution = rtr(facts, policy, relation=relation)
            if gadgets is not None:
                result.bcga = bcga(relation, gadgets)
        results.append(result)

    ranking = rank(
        PolicyAggregates(r.policy, r.normalized.avg, r.normalized.sd, r.normalized.p90)
        for r in results if r.normalized is not None
    )
    return MetricsReport(census(facts, engine), results, ranking)
