"""Plumbing every command shares: loading inputs, writing outputs, exit codes.

    1  the input is wrong: diagnostics, malformed facts, gadgets or aggregates
    2  the input can't be read or the output can't be written
    3  the invocation is wrong: unknown flags, bad values, conflicting options

Output goes to `--out` or standard output. A file is only replaced once the
whole document has been rendered, via a sibling temporary file and
`os.replace`, so a failed run never leaves a half-written report behind.
"""
import logging
import os
import tempfile
from typing import List, Optional

import click

from config.policies import PolicyId, UnknownPolicy, parse_policy_list
from config.settings import (
    BIN_TYPES_ARITY_CHOICES,
    BIN_TYPES_OVERFLOW_CHOICES,
    STRICT_POINTER_CHOICES,
    no_color,
)
from services.facts_io import FactsFormatError, GadgetFileError, check_gadgets, parse_facts, parse_gadgets
from services.facts_model import GadgetAnnotations, ProgramFacts, validate_facts
from services.metrics import SCOPE_ALL, SCOPE_VIRTUAL
from services.policy_engine import PolicyOptions
from services.report_render import FORMATS, FORMAT_MD
from services.type_expr import MalformedType

logger = logging.getLogger(__name__)

EXIT_INVALID_INPUT = 1
EXIT_IO = 2
EXIT_USAGE = 3


class CommandError(click.ClickException):
    """A failure the user can act on, with the exit code that reports it."""

    def __init__(self, message: str, exit_code: int = EXIT_INVALID_INPUT):
        super().__init__(message)
        self.exit_code = exit_code


def warn(message: str) -> None:
    click.echo(message if no_color() else click.style(message, fg="red"), err=True)


def read_bytes(path: str, what: str) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise CommandError(f"cannot read {what} {path}: {e.strerror or e}", EXIT_IO) from e


def load_facts(path: str) -> ProgramFacts:
    """Read, parse and validate; any diagnostic stops the command."""
    data = read_bytes(path, "facts file")
    try:
        facts = parse_facts(data)
    except (FactsFormatError, MalformedType) as e:
        raise CommandError(f"{path}: {e}") from e
    diagnostics = validate_facts(facts)
    if diagnostics:
        for d in diagnostics:
            warn(f"[{d.code}] {d.subject_id}: {d.message}")
        raise CommandError(f"{path}: {len(diagnostics)} validation problem(s)")
    return facts


def load_gadgets(path: Optional[str], facts: ProgramFacts) -> Optional[GadgetAnnotations]:
    if path is None:
        return None
    data = read_bytes(path, "gadget file")
    try:
        gadgets = parse_gadgets(data)
        check_gadgets(gadgets, facts)
    except GadgetFileError as e:
        raise CommandError(f"{path}: {e}") from e
    return gadgets


def write_output(data: bytes, out: Optional[str]) -> None:
    if out is None:
        click.echo(data, nl=False)
        return
    directory = os.path.dirname(os.path.abspath(out))
    tmp = None
    try:
        with tempfile.NamedTemporaryFile("wb", dir=directory, prefix=".cfi-surface-", delete=False) as f:
            tmp = f.name
            f.write(data)
        os.replace(tmp, out)
    except OSError as e:
        if tmp and os.path.exists(tmp):
            os.unlink(tmp)
        raise CommandError(f"cannot write {out}: {e.strerror or e}", EXIT_IO) from e
    logger.info("Wrote %d bytes to %s", len(data), out)


def resolve_policies(text: str, scope: str) -> List[PolicyId]:
    """The selected policies; virtual-only policies named explicitly can't run over all callsites."""
    try:
        policies = parse_policy_list(text)
    except UnknownPolicy as e:
        raise click.BadParameter(str(e), param_hint="--policies") from e
    if scope == SCOPE_ALL and text.strip().lower() != "all":
        virtual_only = [p for p in policies if p.config.virtual_only]
        if virtual_only:
            names = ", ".join(f"({p.number}) {p.label}" for p in virtual_only)
            raise click.UsageError(f"--scope all: {names} apply to virtual dispatch only")
    return policies


def engine_options(virtual_targets_only: bool, bin_types_arity: Optional[str],
                   bin_types_overflow: Optional[str], strict_pointers: Optional[str]) -> PolicyOptions:
    return PolicyOptions.from_env(
        virtual_targets_only=virtual_targets_only,
        bin_types_arity=bin_types_arity,
        bin_types_overflow=bin_types_overflow,
        strict_pointers=strict_pointers,
    )


# Reusable option groups, applied bottom-up like any click decorator.

def facts_option(required: bool = True):
    return click.option("--facts", "facts_path", required=required, metavar="PATH", help="A .cfifacts.json file.")


def policy_options(f):
    for decorator in reversed([
        click.option("--policies", default="all", show_default=True,
                     help="'all' or a comma-separated list of policy tokens or numbers."),
        click.option("--scope", type=click.Choice([SCOPE_VIRTUAL, SCOPE_ALL]), default=SCOPE_VIRTUAL,
                     show_default=True, help="Which callsites policies (1)-(3) are evaluated on."),
        click.option("--virtual-targets-only", is_flag=True,
                     help="Restrict policies (1)-(4) to virtual targets."),
        click.option("--bin-types-arity", type=click.Choice(BIN_TYPES_ARITY_CHOICES), default=None,
                     help="Bin types arity reading [env CFI_SURFACE_BIN_TYPES_ARITY, default at-most]."),
        click.option("--bin-types-overflow", type=click.Choice(BIN_TYPES_OVERFLOW_CHOICES), default=None,
                     help="Callsites past the register cap [env CFI_SURFACE_BIN_TYPES_OVERFLOW, default cap]."),
        click.option("--strict-pointers", type=click.Choice(STRICT_POINTER_CHOICES), default=None,
                     help="Pointer matching for Strict src types [env CFI_SURFACE_STRICT_POINTERS, default exact]."),
    ]):
        f = decorator(f)
    return f


def output_options(f):
    f = click.option("--out", default=None, metavar="PATH", help="Write here instead of standard output.")(f)
    f = click.option("--format", "fmt", type=click.Choice(FORMATS), default=FORMAT_MD, show_default=True)(f)
    return f
