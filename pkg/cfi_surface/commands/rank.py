import click

from commands.analyze import baseline_option
from commands.common import (
    CommandError,
    engine_options,
    facts_option,
    load_facts,
    output_options,
    policy_options,
    read_bytes,
    resolve_policies,
    write_output,
)
from services.facts_io import AggregatesFileError, parse_aggregates
from services.metrics import PolicyAggregates, analyze_program, mean_aggregates, rank as rank_policies
from services.policy_engine import PolicyEngine
from services.report_render import render_ranking


@click.command("rank")
@facts_option(required=False)
@click.option("--aggregates", "aggregates_path", default=None, metavar="PATH",
              help="Rank precomputed normalized Avg/SD/90p instead of analysing facts.")
@policy_options
@baseline_option
@output_options
def rank(facts_path, aggregates_path, policies, scope, virtual_targets_only, bin_types_arity,
         bin_types_overflow, strict_pointers, baseline, fmt, out):
    """Policies from best (smallest normalized average) to worst, with the tie-break trace.

    With --aggregates FILE holding several programs, each policy's numbers are
    averaged across programs (rounded half-up to two places) before ranking.
    """
    if (facts_path is None) == (aggregates_path is None):
        raise click.UsageError("give exactly one of --facts and --aggregates")
    selected = resolve_policies(policies, scope)

    if aggregates_path is not None:
        data = read_bytes(aggregates_path, "aggregates file")
        try:
            programs = parse_aggregates(data)
        except AggregatesFileError as e:
            raise CommandError(f"{aggregates_path}: {e}") from e
        aggregates = [a for a in mean_aggregates(programs) if a.policy in selected]
    else:
        facts = load_facts(facts_path)
        engine = PolicyEngine(facts, engine_options(virtual_targets_only, bin_types_arity, bin_types_overflow, strict_pointers))
        report = analyze_program(facts, selected, engine=engine, scope=scope, baseline=baseline)
        aggregates = [
            PolicyAggregates(r.policy, r.normalized.avg, r.normalized.sd, r.normalized.p90)
            for r in report.results if r.normalized is not None
        ]

    ranking = rank_policies(aggregates)
    write_output(render_ranking(ranking, {a.policy: a.avg for a in aggregates}, fmt), out)

