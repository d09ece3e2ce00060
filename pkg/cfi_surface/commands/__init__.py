from . import analyze, per_callsite, generate, rank

__all__ = ["analyze", "per_callsite", "generate", "rank"]
