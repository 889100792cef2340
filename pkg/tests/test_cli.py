"""The command-line interface, driven in-process through ``main``."""

import pytest

from artifact.io_cli.benchmarks import build_benchmark, references
from artifact.io_cli.cli import main
from artifact.io_cli.formats import serialize_model


def fields(text):
    """The ``key=value`` lines of an output, as a dict."""
    out = {}
    for line in text.splitlines():
        if "=" in line and not line.startswith("#"):
            key, _, value = line.partition("=")
            out[key] = value
    return out


@pytest.fixture
def fig2(tmp_path, capsys):
    prefix = tmp_path / "fig2"
    assert main(["export", "fig2_sticky", "--stickiness", "full", "--policies", str(prefix)]) == 0
    model = tmp_path / "fig2.model"
    model.write_text(capsys.readouterr().out, encoding="utf-8")
    return model, f"{prefix}.agent", f"{prefix}.nature"


BROKEN = """\
[model]
name = broken
initial = s1
play_order = agent_first
stickiness = full

[states]
s1 agent=o nature=o public=o

[actions]
a

[variables]
p = [0, 1]

[transitions]
s1 a -> s1 = 1/2
"""


# ---------------------------------------------------------------------------
# validate / export
# ---------------------------------------------------------------------------


def test_validate_ok(fig2, capsys):
    assert main(["validate", str(fig2[0])]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_reports_row_sum(tmp_path, capsys):
    path = tmp_path / "broken.model"
    path.write_text(BROKEN, encoding="utf-8")
    assert main(["validate", str(path)]) == 1
    assert "row-sum" in capsys.readouterr().out


def test_export_matches_builder(capsys):
    assert main(["export", "appD4_arect", "--order", "nature_first"]) == 0
    assert capsys.readouterr().out == serialize_model(build_benchmark("appD4_arect", play_order="nature_first"))


def test_export_of_unknown_benchmark(capsys):
    assert main(["export", "nope"]) == 2


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def test_evaluate_reference_pair(fig2, capsys):
    model, agent, nature = fig2
    assert main(["evaluate", str(model), "--agent", agent, "--nature", nature, "--horizon", "4"]) == 0
    out = fields(capsys.readouterr().out)
    assert out["value"] == "200/3"
    assert out["decimal"].startswith("66.66")
    assert out["agent_fallbacks"] == "0"


def test_evaluate_flags_fallbacks(fig2, tmp_path, capsys):
    model, _, nature = fig2
    empty = tmp_path / "empty.agent"
    empty.write_text("policy agent deterministic\n", encoding="utf-8")
    assert main(["evaluate", str(model), "--agent", str(empty), "--nature", nature, "--horizon", "4"]) == 0
    captured = capsys.readouterr()
    assert fields(captured.out)["agent_fallbacks"] == "2"
    assert "fallback" in captured.err


def test_evaluate_rejects_swapped_policies(fig2, capsys):
    model, agent, nature = fig2
    assert main(["evaluate", str(model), "--agent", nature, "--nature", agent, "--horizon", "4"]) == 2


def test_missing_file_is_an_input_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "absent.model")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_syntax_error_is_an_input_error(tmp_path, capsys):
    path = tmp_path / "bad.model"
    path.write_text(BROKEN.replace("[actions]", "[actions"), encoding="utf-8")
    assert main(["evaluate", str(path), "--agent", "x", "--nature", "y", "--horizon", "1"]) == 2
    assert "line 10" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# transform / solve / bench
# ---------------------------------------------------------------------------


def test_transform_counts_and_dump(fig2, capsys):
    assert main(["transform", str(fig2[0]), "--horizon", "2", "--dump"]) == 0
    out = capsys.readouterr().out
    counts = fields(out)
    assert int(counts["states"]) == int(counts["agent_states"]) + int(counts["nature_states"])
    assert int(counts["agent_states"]) >= 1
    assert "s1" in out


def test_solve_prints_machine_readable_result(fig2, tmp_path, capsys):
    plot = tmp_path / "bracket.csv"
    assert main(["solve", str(fig2[0]), "--horizon", "4", "--plot-data", str(plot)]) == 0
    out = fields(capsys.readouterr().out)
    assert out["lower"] == out["upper"] == out["value"] == "200/3"
    assert out["gap"] == "0"
    rows = plot.read_text(encoding="utf-8").splitlines()
    assert rows[0] == "round,lower,upper" and len(rows) == 1 + int(out["iterations"])


def test_solve_is_deterministic(fig2, capsys):
    main(["solve", str(fig2[0]), "--horizon", "4", "--policies"])
    first = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("# bracket")]
    main(["solve", str(fig2[0]), "--horizon", "4", "--policies"])
    second = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("# bracket")]
    assert first == second


def test_solve_capacity_exit_code(fig2, capsys):
    assert main(["solve", str(fig2[0]), "--horizon", "4", "--cap", "2"]) == 3
    assert "exceed" in capsys.readouterr().err


def test_bench_fig3(capsys):
    assert main(["bench", "--id", "fig3_order_small"]) == 0
    rows = [l for l in capsys.readouterr().out.splitlines()[1:] if l.strip()]
    assert len(rows) == 2
    assert all(r.endswith("PASS") for r in rows)
    assert {r.split()[3] for r in rows} == {"30", "150"}


def test_bench_without_references(capsys):
    assert main(["bench", "--id", "fig1_rmdp_u1"]) == 0
    assert "no published" in capsys.readouterr().out
    assert references("fig1_rmdp_u1") == []


def test_bench_unknown_id(capsys):
    assert main(["bench", "--id", "fig42"]) == 2
