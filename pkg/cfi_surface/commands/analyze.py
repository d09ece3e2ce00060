import click

from config.policies import BASELINE_ALL_FUNCTIONS, BASELINE_VIRTUAL_FUNCTIONS
from commands.common import (
    engine_options,
    facts_option,
    load_facts,
    load_gadgets,
    output_options,
    policy_options,
    resolve_policies,
    write_output,
)
from services.metrics import BASELINE_AUTO, analyze_program
from services.policy_engine import PolicyEngine
from services.report_render import render_report

BASELINE_CHOICES = [BASELINE_ALL_FUNCTIONS, BASELINE_VIRTUAL_FUNCTIONS, BASELINE_AUTO]


def baseline_option(f):
    return click.option(
        "--baseline", type=click.Choice(BASELINE_CHOICES), default=BASELINE_AUTO, show_default=True,
        help="Normalize against every function, every virtual function, or each policy's own default.",
    )(f)


@click.command("analyze")
@facts_option()
@policy_options
@baseline_option
@output_options
@click.option("--gadgets", "gadgets_path", default=None, metavar="PATH",
              help="Gadget annotations; adds fCGA and bCGA.")
@click.option("--rtr", "with_rtr", is_flag=True, help="Also compute return-target reduction.")
def analyze(facts_path, policies, scope, virtual_targets_only, bin_types_arity, bin_types_overflow,
            strict_pointers, baseline, fmt, out, gadgets_path, with_rtr):
    """Per-policy target counts, normalized scores and the ranking."""
    selected = resolve_policies(policies, scope)
    facts = load_facts(facts_path)
    gadgets = load_gadgets(gadgets_path, facts)
    engine = PolicyEngine(facts, engine_options(virtual_targets_only, bin_types_arity, bin_types_overflow, strict_pointers))
    report = analyze_program(
        facts, selected, engine=engine, scope=scope, baseline=baseline, gadgets=gadgets, with_rtr=with_rtr,
    )
    write_output(render_report(report, fmt), out)
