"""Time a full analysis of one large synthetic program.

    python3 tools/scale_probe.py [classes] [free-functions] [callsites]

Defaults to 10,000 classes, 30,000 free functions and 50,000 callsites, about
the size of a large browser component. Prints the wall time of each stage and
the peak resident memory, which is how the engine's per-key caching was sized.
"""
import os
import resource
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "cfi_surface"))

from config.policies import PolicyId  # noqa: E402
from services.corpus_generator import GeneratorConfig, generate_corpus  # noqa: E402
from services.facts_io import parse_facts, write_facts  # noqa: E402
from services.facts_model import validate_facts  # noqa: E402
from services.metrics import analyze_program  # noqa: E402
from services.policy_engine import PolicyEngine  # noqa: E402
from services.report_render import render_report  # noqa: E402

N_CLASSES = int(sys.argv[1]) if len(sys.argv) > 1 else 10_000
N_FREE = int(sys.argv[2]) if len(sys.argv) > 2 else 30_000
N_CALLSITES = int(sys.argv[3]) if len(sys.argv) > 3 else 50_000

stages = []


def stage(name, fn):
    started = time.perf_counter()
    value = fn()
    stages.append((name, time.perf_counter() - started))
    print(f"  {name:<28} {stages[-1][1]:8.2f} s")
    return value


def peak_rss_mb() -> float:
    # ru_maxrss is KiB on Linux and bytes on macOS.
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return peak / (1024 * 1024) if sys.platform == "darwin" else peak / 1024


def main() -> None:
    config = GeneratorConfig(seed=1, n_classes=N_CLASSES, n_free_functions=N_FREE, n_callsites=N_CALLSITES)
    print(f"{N_CLASSES} classes, {N_FREE} free functions, {N_CALLSITES} callsites\n")

    facts = stage("generate", lambda: generate_corpus(config))
    data = stage("write facts", lambda: write_facts(facts))
    facts = stage("parse facts", lambda: parse_facts(data))
    diagnostics = stage("validate", lambda: validate_facts(facts))
    if diagnostics:
        print(f"\n{len(diagnostics)} diagnostics, first: {diagnostics[0]}")
        sys.exit(1)
    engine = stage("build hierarchies", lambda: PolicyEngine(facts))
    report = stage("evaluate all policies", lambda: analyze_program(facts, list(PolicyId), engine=engine))
    stage("render markdown", lambda: render_report(report, "md"))

    total = sum(seconds for _, seconds in stages)
    print(f"\n  {'total':<28} {total:8.2f} s")
    print(f"  {'peak RSS':<28} {peak_rss_mb():8.0f} MB")
    print(f"  {'facts file':<28} {len(data) / (1024 * 1024):8.1f} MB")
    print(f"  {'distinct target sets':<28} {len(engine._cache) + sum(len(i) for i in engine._index.values()):8d}")


if __name__ == "__main__":
    main()
