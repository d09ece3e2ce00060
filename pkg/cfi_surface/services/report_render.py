"""Rendering metrics as CSV, JSON and Markdown.

Every number is formatted once, in `_policy_rows`, and all three formats print
those strings, so one run's renderings can never disagree. Normalized values are
two-decimal percentages; raw averages are rounded half-up to whole targets,
the way the targets-per-callsite tables print them. A normalized value whose
baseline is zero prints as `n/a`.

Output is a pure function of the report: no timestamps, no paths, rows in
policy order, and `\\n` line endings everywhere.
"""
from __future__ import annotations

from decimal import Decimal
from typing import Dict, List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel

from config.policies import PolicyId
from services.facts_model import ProgramFacts
from services.metrics import MetricsReport, Ranking, round_half_up
from services.policy_engine import PolicyEngine

FORMAT_CSV = "csv"
FORMAT_JSON = "json"
FORMAT_MD = "md"
FORMATS = (FORMAT_CSV, FORMAT_JSON, FORMAT_MD)

NOT_AVAILABLE = "n/a"
NOT_APPLICABLE = "-"


def _dec(value: Optional[Decimal]) -> str:
    return NOT_AVAILABLE if value is None else str(value)


def _whole(value) -> str:
    return str(round_half_up(value, 0))


# --- JSON contracts ---

class CensusModel(BaseModel):
    classes: int
    virtual_classes: int
    functions: int
    virtual_functions: int
    vtables: int
    islands: int
    virtual_callsites: int
    pointer_callsites: int


class DistributionModel(BaseModel):
    n: int
    min: int
    p90: int
    max: int
    median: int
    average: str


class NormalizedModel(BaseModel):
    avg: str
    sd: str
    p90: str
    min: str
    max: str
    median: str


class PolicyResultModel(BaseModel):
    number: int
    policy: str
    label: str
    scope: str
    evaluated: int
    skipped: int
    ctr_total: int
    distribution: DistributionModel
    baseline: str
    baseline_count: int
    normalized: Optional[NormalizedModel] = None
    rtr_total: Optional[int] = None
    rtr_distribution: Optional[DistributionModel] = None
    fcga: Optional[int] = None
    bcga: Optional[int] = None


class RankingModel(BaseModel):
    order: List[str]
    trace: List[str]


class MetricsReportModel(BaseModel):
    census: CensusModel
    results: List[PolicyResultModel]
    ranking: RankingModel


class TargetModel(BaseModel):
    id: str
    name: str
    owning_class: Optional[str]
    source_loc: str


class CallsiteRowModel(BaseModel):
    callsite: str
    kind: str
    source_loc: str
    args: int
    sizes: Dict[str, Optional[int]]
    targets: Optional[Dict[str, List[TargetModel]]] = None


class PerCallsiteModel(BaseModel):
    policies: List[str]
    callsites: List[CallsiteRowModel]


def _dump(model: BaseModel) -> bytes:
    return (model.model_dump_json(indent=2) + "\n").encode("utf-8")


def _csv(frame: pd.DataFrame) -> bytes:
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def _md_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> List[str]:
    lines = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return lines


# --- analyze ---

def _distribution_model(dist) -> DistributionModel:
    return DistributionModel(
        n=dist.n, min=dist.min, p90=dist.p90, max=dist.max, median=dist.median, average=_whole(dist.average),
    )


def report_model(report: MetricsReport) -> MetricsReportModel:
    results = []
    for r in report.results:
        norm = r.normalized
        results.append(PolicyResultModel(
            number=r.policy.number,
            policy=r.policy.value,
            label=r.policy.label,
            scope=r.scope,
            evaluated=r.evaluated,
            skipped=r.skipped,
            ctr_total=r.ctr_total,
            distribution=_distribution_model(r.distribution),
            baseline=r.baseline,
            baseline_count=r.baseline_count,
            normalized=None if norm is None else NormalizedModel(
                avg=_dec(norm.avg), sd=_dec(norm.sd), p90=_dec(norm.p90),
                min=_dec(norm.min), max=_dec(norm.max), median=_dec(norm.median),
            ),
            rtr_total=r.rtr_total,
            rtr_distribution=None if r.rtr_distribution is None else _distribution_model(r.rtr_distribution),
            fcga=r.fcga,
            bcga=r.bcga,
        ))
    return MetricsReportModel(
        census=CensusModel(**report.census._asdict()),
        results=results,
        ranking=ranking_model(report.ranking),
    )


def ranking_model(ranking: Ranking) -> RankingModel:
    return RankingModel(order=[p.value for p in ranking.order], trace=list(ranking.trace))


def _rank_positions(ranking: Ranking) -> Dict[PolicyId, int]:
    return {p: i + 1 for i, p in enumerate(ranking.order)}


def _policy_rows(report: MetricsReport) -> List[Dict[str, str]]:
    model = report_model(report)
    positions = _rank_positions(report.ranking)
    with_rtr = any(r.rtr_total is not None for r in report.results)
    with_gadgets = any(r.fcga is not None for r in report.results)
    rows = []
    for r, m in zip(report.results, model.results):
        norm = m.normalized
        row = {
            "number": str(m.number),
            "policy": m.label,
            "scope": m.scope,
            "callsites": str(m.evaluated),
            "skipped": str(m.skipped),
            "ctr": str(m.ctr_total),
            "min": str(m.distribution.min),
            "90p": str(m.distribution.p90),
            "max": str(m.distribution.max),
            "med": str(m.distribution.median),
            "avg": m.distribution.average,
            "baseline": m.baseline,
            "b": str(m.baseline_count),
            "norm_avg": norm.avg if norm else NOT_AVAILABLE,
            "norm_sd": norm.sd if norm else NOT_AVAILABLE,
            "norm_90p": norm.p90 if norm else NOT_AVAILABLE,
        }
        if with_rtr:
            row["rtr"] = str(m.rtr_total)
        if with_gadgets:
            row["fcga"] = str(m.fcga)
            row["bcga"] = str(m.bcga)
        row["rank"] = str(positions[r.policy]) if r.policy in positions else NOT_AVAILABLE
        rows.append(row)
    return rows


def render_report(report: MetricsReport, fmt: str) -> bytes:
    if fmt == FORMAT_JSON:
        return _dump(report_model(report))
    rows = _policy_rows(report)
    if fmt == FORMAT_CSV:
        return _csv(pd.DataFrame(rows))
    return _report_markdown(report, rows).encode("utf-8")


def _report_markdown(report: MetricsReport, rows: List[Dict[str, str]]) -> str:
    c = report.census
    out = ["# CFI policy report", "", "## Program", ""]
    out += _md_table(
        ["Classes", "Virtual classes", "Functions", "Virtual functions", "vTables", "Islands",
         "Virtual callsites", "Pointer callsites"],
        [[str(v) for v in c]],
    )
    out += ["", "## Legitimate calltargets per callsite", ""]
    out += _md_table(
        ["#", "Policy", "Scope", "Callsites", "Skipped", "CTR", "Min", "90p", "Max", "Med", "Avg"],
        [[r["number"], r["policy"], r["scope"], r["callsites"], r["skipped"], r["ctr"],
          r["min"], r["90p"], r["max"], r["med"], r["avg"]] for r in rows],
    )
    out += ["", "## Normalized against the baseline (%)", ""]
    out += _md_table(
        ["#", "Policy", "Baseline", "B", "Avg", "SD", "90p"],
        [[r["number"], r["policy"], r["baseline"], r["b"], r["norm_avg"], r["norm_sd"], r["norm_90p"]]
         for r in rows],
    )
    if any("rtr" in r for r in rows):
        out += ["", "## Return targets", ""]
        out += _md_table(
            ["#", "Policy", "RTR", "Min", "90p", "Max", "Med", "Avg"],
            [[str(res.policy.number), res.policy.label, str(res.rtr_total),
              str(res.rtr_distribution.min), str(res.rtr_distribution.p90), str(res.rtr_distribution.max),
              str(res.rtr_distribution.median), _whole(res.rtr_distribution.average)]
             for res in report.results],
        )
    if any("fcga" in r for r in rows):
        out += ["", "## Gadget availability", ""]
        out += _md_table(["#", "Policy", "fCGA", "bCGA"], [[r["number"], r["policy"], r["fcga"], r["bcga"]] for r in rows])
    out += ["", "## Ranking", ""]
    out += _ranking_lines(report.ranking, report)
    return "\n".join(out) + "\n"


def _ranking_lines(ranking: Ranking, report: Optional[MetricsReport] = None,
                   averages: Optional[Dict[PolicyId, Decimal]] = None) -> List[str]:
    if averages is None and report is not None:
        averages = {r.policy: r.normalized.avg for r in report.results if r.normalized is not None}
    averages = averages or {}
    lines = [
        f"{i}. {p.label} ({_dec(averages.get(p))})" for i, p in enumerate(ranking.order, 1)
    ] or ["No policy has a normalized average to rank."]
    if ranking.trace:
        lines += ["", "Tie-break trace:", ""] + [f"- {t}" for t in ranking.trace]
    return lines


# --- rank ---

def render_ranking(ranking: Ranking, averages: Dict[PolicyId, Decimal], fmt: str) -> bytes:
    if fmt == FORMAT_JSON:
        return _dump(ranking_model(ranking))
    if fmt == FORMAT_CSV:
        frame = pd.DataFrame([
            {"rank": str(i), "number": str(p.number), "policy": p.label, "avg": _dec(averages.get(p))}
            for i, p in enumerate(ranking.order, 1)
        ], columns=["rank", "number", "policy", "avg"])
        return _csv(frame)
    return ("\n".join(["# CFI policy ranking", ""] + _ranking_lines(ranking, averages=averages)) + "\n").encode("utf-8")


# --- per-callsite ---

def per_callsite_model(facts: ProgramFacts, engine: PolicyEngine, policies: Sequence[PolicyId],
                       scope_all: bool, expand: bool = False) -> PerCallsiteModel:
    callsites = facts.callsites.values() if scope_all else facts.virtual_callsites
    rows = []
    for cs in callsites:
        sizes: Dict[str, Optional[int]] = {}
        targets: Dict[str, List[TargetModel]] = {}
        for policy in policies:
            if (policy.config.virtual_only and not cs.is_virtual) or not engine.applies(policy, cs):
                sizes[policy.value] = None
                continue
            members = engine.evaluate(policy, cs).members
            sizes[policy.value] = len(members)
            if expand:
                targets[policy.value] = [
                    TargetModel(
                        id=fid,
                        name=facts.functions[fid].name,
                        owning_class=facts.functions[fid].owning_class,
                        source_loc=str(facts.functions[fid].source_loc),
                    )
                    for fid in sorted(members)
                ]
        rows.append(CallsiteRowModel(
            callsite=cs.id,
            kind=cs.kind.value,
            source_loc=str(cs.source_loc),
            args=len(cs.args),
            sizes=sizes,
            targets=targets if expand else None,
        ))
    return PerCallsiteModel(policies=[p.value for p in policies], callsites=rows)


def _size(value: Optional[int]) -> str:
    return NOT_APPLICABLE if value is None else str(value)


def render_per_callsite(model: PerCallsiteModel, fmt: str) -> bytes:
    if fmt == FORMAT_JSON:
        return _dump(model)
    policies = [PolicyId(p) for p in model.policies]
    expanded = any(row.targets is not None for row in model.callsites)

    if expanded:
        headers = ["callsite", "policy", "target", "name", "class", "location"]
        rows = [
            [row.callsite, PolicyId(p).label, t.id, t.name, t.owning_class or "", t.source_loc]
            for row in model.callsites for p in model.policies for t in (row.targets or {}).get(p, [])
        ]
    else:
        headers = ["callsite", "kind", "location", "args"] + [f"({p.number}) {p.label}" for p in policies]
        rows = [
            [row.callsite, row.kind, row.source_loc, str(row.args)] + [_size(row.sizes[p.value]) for p in policies]
            for row in model.callsites
        ]

    if fmt == FORMAT_CSV:
        return _csv(pd.DataFrame(rows, columns=headers))
    title = "# Legitimate targets per callsite" if expanded else "# Target set sizes per callsite"
    return ("\n".join([title, ""] + _md_table(headers, rows)) + "\n").encode("utf-8")

