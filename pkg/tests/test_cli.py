"""Tests for the cfi-surface command line: outputs, determinism and exit codes."""
import io
import json
import os
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

import pandas as pd
from click.testing import CliRunner

sys.path.insert(0, os.path.dirname(__file__))

from fixtures import golden_path, multiple_inheritance_program, pcall  # noqa: E402
from main import cli  # noqa: E402
from services.facts_io import write_facts  # noqa: E402
from services.facts_model import ProgramFacts  # noqa: E402


@contextmanager
def workspace():
    """A scratch directory for facts files and reports, removed afterwards."""
    with tempfile.TemporaryDirectory(prefix="cfi-surface-test-") as tmp:
        yield Path(tmp)


def _run(*args):
    return CliRunner().invoke(cli, [str(a) for a in args], prog_name="cfi-surface")


def _write(path, data):
    with open(path, "wb") as f:
        f.write(data)
    return str(path)


def _read(path):
    with open(path, "rb") as f:
        return f.read()


def _generated(tmp, seed=3):
    out = tmp / f"seed{seed}.cfifacts.json"
    result = _run("generate", "--seed", seed, "--classes", 25, "--callsites", 60, "--out", out)
    assert result.exit_code == 0, result.output
    return str(out)


def _mixed_program():
    facts = multiple_inheritance_program()
    return ProgramFacts.build(
        facts.classes.values(), facts.functions.values(), facts.vtables.values(),
        list(facts.callsites.values()) + [pcall("ptr0")],
    )


def test_generate_is_deterministic():
    with workspace() as tmp:
        a, b = tmp / "a.json", tmp / "b.json"
        first = _run("generate", "--seed", 42, "--out", a)
        second = _run("generate", "--seed", 42, "--out", b)
        assert first.exit_code == second.exit_code == 0
        assert _read(a) == _read(b)
        assert "seed 42:" in first.output


def test_analyze_is_byte_identical_across_runs():
    with workspace() as tmp:
        facts = _generated(tmp)
        for fmt in ("md", "csv", "json"):
            a, b = tmp / f"a.{fmt}", tmp / f"b.{fmt}"
            assert _run("analyze", "--facts", facts, "--format", fmt, "--out", a).exit_code == 0
            assert _run("analyze", "--facts", facts, "--format", fmt, "--out", b).exit_code == 0
            assert _read(a) == _read(b)


def test_analyze_markdown_matches_golden_report():
    with workspace() as tmp:
        out = tmp / "report.md"
        result = _run("analyze", "--facts", golden_path("minimal.cfifacts.json"), "--out", out)
        assert result.exit_code == 0, result.output
        assert _read(out) == _read(golden_path("minimal.report.md"))


def test_formats_print_the_same_numbers():
    with workspace() as tmp:
        facts = _generated(tmp, seed=8)
        paths = {fmt: tmp / f"r.{fmt}" for fmt in ("md", "csv", "json")}
        for fmt, path in paths.items():
            assert _run("analyze", "--facts", facts, "--format", fmt, "--out", path).exit_code == 0
        doc = json.loads(_read(paths["json"]))
        frame = pd.read_csv(io.BytesIO(_read(paths["csv"])), dtype=str, keep_default_na=False)
        md = _read(paths["md"]).decode("utf-8")
        assert len(doc["results"]) == len(frame) == 8
        for result, (_, row) in zip(doc["results"], frame.iterrows()):
            assert row["number"] == str(result["number"])
            assert row["ctr"] == str(result["ctr_total"])
            if result["normalized"] is not None:
                assert row["norm_avg"] == result["normalized"]["avg"]
                assert f"| {result['normalized']['avg']} |" in md


def test_analyze_with_rtr_and_gadgets():
    with workspace() as tmp:
        facts = _write(tmp / "mi.json", write_facts(multiple_inheritance_program()))
        gadgets = _write(tmp / "g.json", b'{"A::f": {"fwd": true, "ret": true}}')
        out = tmp / "r.json"
        result = _run("analyze", "--facts", facts, "--gadgets", gadgets, "--rtr", "--format", "json", "--out", out)
        assert result.exit_code == 0, result.output
        doc = json.loads(_read(out))
        assert all(r["fcga"] is not None and r["rtr_total"] is not None for r in doc["results"])


def test_unknown_gadget_function_is_invalid_input():
    with workspace() as tmp:
        gadgets = _write(tmp / "g.json", b'{"nope": {"fwd": true}}')
        result = _run("analyze", "--facts", golden_path("minimal.cfifacts.json"), "--gadgets", gadgets)
        assert result.exit_code == 1


def test_scope_all_with_class_policy_is_a_usage_error():
    result = _run("analyze", "--facts", golden_path("minimal.cfifacts.json"),
                  "--scope", "all", "--policies", "sub-hierarchy")
    assert result.exit_code == 3


def test_unknown_policy_is_a_usage_error():
    result = _run("analyze", "--facts", golden_path("minimal.cfifacts.json"), "--policies", "nine")
    assert result.exit_code == 3


def test_missing_facts_file_is_an_io_error():
    with workspace() as tmp:
        result = _run("analyze", "--facts", tmp / "absent.json")
        assert result.exit_code == 2


def test_invalid_facts_report_diagnostics_and_write_nothing():
    with workspace() as tmp:
        doc = json.loads(_read(golden_path("minimal.cfifacts.json")))
        doc["classes"][0]["bases"] = [{"class_id": "Z", "is_virtual_base": False}]
        facts = _write(tmp / "bad.json", json.dumps(doc).encode("utf-8"))
        out = tmp / "report.md"
        result = _run("analyze", "--facts", facts, "--out", out)
        assert result.exit_code == 1
        assert "[DANGLING_CLASS_REF]" in result.output
        assert not out.exists()


def test_malformed_json_is_invalid_input():
    with workspace() as tmp:
        facts = _write(tmp / "bad.json", b"{not json")
        assert _run("analyze", "--facts", facts).exit_code == 1


def test_per_callsite_marks_non_applicable_cells():
    with workspace() as tmp:
        facts = _write(tmp / "mixed.json", write_facts(_mixed_program()))
        out = tmp / "pc.csv"
        result = _run("per-callsite", "--facts", facts, "--scope", "all", "--format", "csv", "--out", out)
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(io.BytesIO(_read(out)), dtype=str, keep_default_na=False).set_index("callsite")
        assert frame.loc["ptr0", "(7) Sub-hierarchy"] == "-"
        assert frame.loc["csA", "(7) Sub-hierarchy"] == "2"
        assert frame.loc["csA", "(8) Strict sub-hierarchy"] == "1"


def test_per_callsite_keeps_strict_src_types_to_virtual_dispatch():
    facts = multiple_inheritance_program()
    named = ProgramFacts.build(
        facts.classes.values(), facts.functions.values(), facts.vtables.values(),
        list(facts.callsites.values()) + [pcall("ptr0", name="f")],
    )
    with workspace() as tmp:
        path = _write(tmp / "named.json", write_facts(named))
        out = tmp / "pc.csv"
        result = _run("per-callsite", "--facts", path, "--scope", "all", "--format", "csv", "--out", out)
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(io.BytesIO(_read(out)), dtype=str, keep_default_na=False).set_index("callsite")
        assert frame.loc["ptr0", "(4) Strict src types"] == "-"
        assert frame.loc["ptr0", "(3) Src types"] != "-"
        assert frame.loc["csA", "(4) Strict src types"] == "1"


def test_per_callsite_expand_lists_targets():
    with workspace() as tmp:
        facts = _write(tmp / "mi.json", write_facts(multiple_inheritance_program()))
        out = tmp / "pc.md"
        result = _run("per-callsite", "--facts", facts, "--policies", "strict-sub-hierarchy", "--expand", "--out", out)
        assert result.exit_code == 0, result.output
        text = _read(out).decode("utf-8")
        assert "| csA | Strict sub-hierarchy | A::f |" in text
        assert "| csA | Strict sub-hierarchy | B::g |" not in text


def test_rank_from_aggregates():
    with workspace() as tmp:
        rows = {
            "1": (55.1, 18.62, 81.8), "2": (11.66, 9.12, 22.19), "3": (11.3, 9.22, 22.19),
            "4": (0.15, 0.25, 0.61), "5": (94.35, 0.0, 94.35), "6": (0.53, 0.77, 1.79),
            "7": (0.17, 0.46, 0.34), "8": (0.17, 0.46, 0.33),
        }
        doc = {k: {"avg": a, "sd": s, "p90": p} for k, (a, s, p) in rows.items()}
        aggregates = _write(tmp / "agg.json", json.dumps(doc).encode("utf-8"))
        out = tmp / "rank.csv"
        result = _run("rank", "--aggregates", aggregates, "--format", "csv", "--out", out)
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(io.BytesIO(_read(out)), dtype=str)
        assert list(frame["number"]) == ["4", "8", "7", "6", "3", "2", "1", "5"]


def test_rank_from_facts():
    with workspace() as tmp:
        facts = _write(tmp / "mi.json", write_facts(multiple_inheritance_program()))
        out = tmp / "rank.md"
        result = _run("rank", "--facts", facts, "--policies", "7,8", "--out", out)
        assert result.exit_code == 0, result.output
        assert "1. Strict sub-hierarchy (50.00)" in _read(out).decode("utf-8")


def test_rank_needs_exactly_one_input():
    assert _run("rank").exit_code == 3
    facts = golden_path("minimal.cfifacts.json")
    assert _run("rank", "--facts", facts, "--aggregates", facts).exit_code == 3


def test_generate_rejects_infeasible_and_bad_configs():
    assert _run("generate", "--classes", 0, "--functions", 0, "--callsites", 5).exit_code == 3
    assert _run("generate", "--max-params", 9).exit_code == 3
    assert _run("generate", "--bogus").exit_code == 3


if __name__ == "__main__":
    tests = [
        test_generate_is_deterministic,
        test_analyze_is_byte_identical_across_runs,
        test_analyze_markdown_matches_golden_report,
        test_formats_print_the_same_numbers,
        test_analyze_with_rtr_and_gadgets,
        test_unknown_gadget_function_is_invalid_input,
        test_scope_all_with_class_policy_is_a_usage_error,
        test_unknown_policy_is_a_usage_error,
        test_missing_facts_file_is_an_io_error,
        test_invalid_facts_report_diagnostics_and_write_nothing,
        test_malformed_json_is_invalid_input,
        test_per_callsite_marks_non_applicable_cells,
        test_per_callsite_keeps_strict_src_types_to_virtual_dispatch,
        test_per_callsite_expand_lists_targets,
        test_rank_from_aggregates,
        test_rank_from_facts,
        test_rank_needs_exactly_one_input,
        test_generate_rejects_infeasible_and_bad_configs,
    ]
    for test in tests:
        test()
        print(f"PASS {test.__name__}")
