"""Tunables read from the environment, each with a built-in default.

    CLI flag  >  env var  >  built-in default

The policy switches exist because the published descriptions of two policies
can be read two ways (see `services.policy_engine`); the defaults are the
readings the reports are meant to reproduce, and the alternatives stay one
variable away for anyone comparing against another tool's numbers.
"""
import logging
import os

logger = logging.getLogger(__name__)

BIN_TYPES_ARITY_CHOICES = ("at-most", "at-least")
BIN_TYPES_OVERFLOW_CHOICES = ("cap", "exclude")
STRICT_POINTER_CHOICES = ("exact", "interchangeable")


def _int_env(name: str, default: int, minimum: int = 0) -> int:
    raw = os.environ.get(name, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring %s=%r: not an integer, using %d", name, raw, default)
        return default
    if value < minimum:
        logger.warning("Ignoring %s=%d: below %d, using %d", name, value, minimum, default)
        return default
    return value


def _choice_env(name: str, choices, default: str) -> str:
    raw = os.environ.get(name, "").strip().lower()
    if not raw:
        return default
    if raw not in choices:
        logger.warning("Ignoring %s=%r: expected one of %s, using %s", name, raw, ", ".join(choices), default)
        return default
    return raw


def get_log_level() -> str:
    level = os.environ.get("CFI_SURFACE_LOG_LEVEL", "").strip().upper()
    return level if level in ("DEBUG", "INFO", "WARNING", "ERROR") else "WARNING"


def get_bin_types_max_args() -> int:
    """How many arguments TypeArmor-style analysis can see in registers (x86-64: six)."""
    return _int_env("CFI_SURFACE_BIN_TYPES_MAX_ARGS", 6, minimum=0)


def get_bin_types_arity() -> str:
    return _choice_env("CFI_SURFACE_BIN_TYPES_ARITY", BIN_TYPES_ARITY_CHOICES, "at-most")


def get_bin_types_overflow() -> str:
    return _choice_env("CFI_SURFACE_BIN_TYPES_OVERFLOW", BIN_TYPES_OVERFLOW_CHOICES, "cap")


def get_strict_pointers() -> str:
    return _choice_env("CFI_SURFACE_STRICT_POINTERS", STRICT_POINTER_CHOICES, "exact")


def get_tables_per_class() -> int:
    """Generator guard: non-virtual multiple inheritance doubles tables per level."""
    return _int_env("CFI_SURFACE_TABLES_PER_CLASS", 8, minimum=1)


def get_property_examples() -> int:
    return _int_env("CFI_SURFACE_PROPERTY_EXAMPLES", 60, minimum=1)


def no_color() -> bool:
    # https://no-color.org: present and non-empty disables colour.
    return bool(os.environ.get("NO_COLOR", ""))
