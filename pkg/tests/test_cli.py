"""End-to-end CLI behavior: artifacts, exit codes, determinism."""

import csv
import json

import pytest

from ddu_planner.cli import main


def run(*argv):
    return main(list(argv))


def test_solve_writes_all_artifacts(tmp_path, capsys):
    rc = run("solve", "tiny2", "--radius", "300", "--out", str(tmp_path))
    assert rc == 0
    for name in ("costs.csv", "production.csv", "capture.csv",
                 "siting.csv", "manifest.json"):
        assert (tmp_path / name).exists(), name
    out = capsys.readouterr().out
    assert "objective 4072096.299336" in out
    with open(tmp_path / "costs.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["category", "annual_cost"]
    assert rows[-1][0] == "total"
    assert float(rows[-1][1]) == pytest.approx(4072096.299336, rel=1e-8)


def test_solve_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("solve", "tiny2", "--radius", "300", "--out", str(a)) == 0
    assert run("solve", "tiny2", "--radius", "300", "--out", str(b)) == 0
    for name in ("costs.csv", "production.csv", "capture.csv",
                 "siting.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_build_writes_model_and_counts(tmp_path):
    rc = run("build", "tiny2", "--radius", "300", "--out", str(tmp_path))
    assert rc == 0
    mps = (tmp_path / "model.mps").read_text()
    assert mps.startswith("NAME")
    with open(tmp_path / "counts.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["tag", "rows", "vars"]
    assert rows[-1][0] == "TOTAL"
    tags = {r[0] for r in rows[1:-1]}
    assert any(t.startswith("dual:") or t.startswith("wred:") for t in tags)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert {e["file"] for e in man["artifacts"]} == {
        "model.mps", "model.lp", "counts.csv"}


def test_compare_csv_has_no_timings(tmp_path):
    rc = run("compare", "tiny2", "--radius", "300", "--out", str(tmp_path))
    assert rc == 0
    with open(tmp_path / "compare.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "mode"
    assert not any("time" in c or "wall" in c for c in rows[0])
    modes = [r[0] for r in rows[1:]]
    assert modes == ["ddu", "diu", "so", "ro"]


def test_verify_passes_on_tiny2(tmp_path, capsys):
    rc = run("verify", "tiny2", "--radius", "300", "--out", str(tmp_path))
    assert rc == 0
    out = capsys.readouterr().out
    assert "0 failures" in out
    with open(tmp_path / "verify.csv") as fh:
        rows = list(csv.reader(fh))
    assert all(r[-1] == "pass" for r in rows[1:])
    checks = {r[0] for r in rows[1:]}
    assert {"transport_r0", "duality_gap", "reduction_objective",
            "plan_oracle", "piecewise_knots"} <= checks


def test_beta_override_changes_plan_economics(tmp_path):
    lo, hi = tmp_path / "lo", tmp_path / "hi"
    assert run("solve", "tiny2", "--radius", "300", "--beta", "0.3",
               "--out", str(lo)) == 0
    assert run("solve", "tiny2", "--radius", "300", "--beta", "0.9",
               "--out", str(hi)) == 0

    def unserved(p):
        with open(p / "costs.csv") as fh:
            return {r[0]: float(r[1]) for r in list(csv.reader(fh))[1:]}

    assert unserved(hi)["unserved_hydrogen"] <= unserved(lo)[
        "unserved_hydrogen"] + 1e-6


def test_exit_code_2_on_bad_input(tmp_path, capsys):
    assert run("solve", "no-such-instance", "--out", str(tmp_path)) == 2
    assert run("solve", "tiny2", "--beta", "1.7", "--out", str(tmp_path)) == 2
    assert run("solve", "tiny2", "--segments", "0", "4",
               "--out", str(tmp_path)) == 2
    capsys.readouterr()


def test_exit_code_3_on_size_guard(tmp_path, capsys):
    rc = run("build", "medium8", "--out", str(tmp_path))
    assert rc == 3
    err = capsys.readouterr().err
    assert "refused" in err


def test_segments_override_survives_build(tmp_path):
    rc = run("build", "tiny2", "--segments", "2", "3", "--out", str(tmp_path))
    assert rc == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config"]["segments"] == [2, 3]
