import click
from pydantic import ValidationError

from commands.common import write_output
from services.corpus_generator import GeneratorConfig, InfeasibleConfig, generate_corpus
from services.facts_io import write_facts


@click.command("generate")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--classes", "n_classes", type=int, default=20, show_default=True)
@click.option("--functions", "n_free_functions", type=int, default=10, show_default=True,
              help="Free (non-member) functions, on top of the class methods.")
@click.option("--callsites", "n_callsites", type=int, default=100, show_default=True)
@click.option("--max-bases", type=int, default=2, show_default=True)
@click.option("--max-params", type=int, default=4, show_default=True)
@click.option("--p-override", type=float, default=0.5, show_default=True)
@click.option("--p-virtual-callsite", type=float, default=0.7, show_default=True)
@click.option("--p-pure", type=float, default=0.0, show_default=True)
@click.option("--out", default=None, metavar="PATH", help="Write here instead of standard output.")
def generate(seed, n_classes, n_free_functions, n_callsites, max_bases, max_params, p_override,
             p_virtual_callsite, p_pure, out):
    """Write a deterministic synthetic facts file; the summary goes to standard error."""
    try:
        config = GeneratorConfig(
            seed=seed, n_classes=n_classes, n_free_functions=n_free_functions, n_callsites=n_callsites,
            max_bases=max_bases, max_params=max_params, p_override=p_override,
            p_virtual_callsite=p_virtual_callsite, p_pure=p_pure,
        )
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ()))
        raise click.UsageError(f"{field}: {first.get('msg')}") from e
    try:
        facts = generate_corpus(config)
    except InfeasibleConfig as e:
        raise click.UsageError(str(e)) from e

    write_output(write_facts(facts), out)
    click.echo(
        f"seed {seed}: {len(facts.classes)} classes, {len(facts.functions)} functions "
        f"({len(facts.virtual_functions)} virtual), {len(facts.vtables)} vtables, "
        f"{len(facts.callsites)} callsites ({len(facts.virtual_callsites)} virtual)",
        err=True,
    )
