import click

from commands.common import (
    engine_options,
    facts_option,
    load_facts,
    output_options,
    policy_options,
    resolve_policies,
    write_output,
)
from services.metrics import SCOPE_ALL
from services.policy_engine import PolicyEngine
from services.report_render import per_callsite_model, render_per_callsite


@click.command("per-callsite")
@facts_option()
@policy_options
@output_options
@click.option("--expand", is_flag=True, help="One row per target: id, name, class and source location.")
def per_callsite(facts_path, policies, scope, virtual_targets_only, bin_types_arity, bin_types_overflow,
                 strict_pointers, fmt, out, expand):
    """Target set size per callsite and policy; `-` where a policy does not apply."""
    selected = resolve_policies(policies, scope)
    facts = load_facts(facts_path)
    engine = PolicyEngine(facts, engine_options(virtual_targets_only, bin_types_arity, bin_types_overflow, strict_pointers))
    model = per_callsite_model(facts, engine, selected, scope_all=scope == SCOPE_ALL, expand=expand)
    write_output(render_per_callsite(model, fmt), out)
