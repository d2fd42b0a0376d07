import json
import subprocess
import sys

import numpy as np
import pytest

from starjunction.cli import main
from starjunction.graph import GridFunction, Junction, JunctionGrid, sup_norm
from starjunction.io import (
    SchemaError,
    builtin_fixtures,
    export_solution,
    fixture_path,
    fitted_order,
    load_problem,
    load_reference,
    problem_from_dict,
    problem_to_dict,
    read_solution_csv,
    run_convergence,
)
from starjunction.rothe import RotheConfig, solve_parabolic


def heat_doc():
    return json.loads(fixture_path("neumann_heat").read_text())


# ------------------------------------------------------------------ schema


def test_all_fixtures_load():
    names = builtin_fixtures()
    assert {"neumann_heat", "kirchhoff_heat_3edge", "broken_vertex", "zero", "compact_bump_2edge"} <= set(names)
    for name in names:
        p = load_problem(f"builtin:{name}")
        assert p.num_edges >= 1


def test_length_mismatch_points_at_lengths():
    doc = heat_doc()
    doc["junction"]["lengths"] = [1.0, 2.0]
    with pytest.raises(SchemaError) as info:
        problem_from_dict(doc)
    assert info.value.pointer == "/junction/lengths"


def test_illegal_variable_in_sigma():
    doc = heat_doc()
    doc["coefficients"]["sigma"] = ["t + 1"]
    with pytest.raises(SchemaError) as info:
        problem_from_dict(doc)
    assert info.value.pointer == "/coefficients/sigma/0"
    assert "t" in str(info.value)


def test_unknown_top_level_key():
    doc = heat_doc()
    doc["colour"] = "red"
    with pytest.raises(SchemaError) as info:
        problem_from_dict(doc)
    assert info.value.pointer == "/colour"


def test_round_trip():
    for name in builtin_fixtures():
        p = load_problem(f"builtin:{name}")
        q = problem_from_dict(problem_to_dict(p), p.name)
        assert problem_to_dict(q) == problem_to_dict(p)


def test_reference_is_loaded():
    ref = load_reference("builtin:neumann_heat")
    assert len(ref) == 1
    assert float(ref[0](0.0, 0.0)) == pytest.approx(1.0)


# ------------------------------------------------------------------ export


def small_run():
    p = load_problem("builtin:neumann_heat")
    return solve_parabolic(p, RotheConfig(2, JunctionGrid(p.junction, 3)))


def test_export_row_layout(tmp_path):
    p = load_problem("builtin:neumann_heat")
    # the smallest admissible run: N = 3, n = 2 gives 1 edge * 3 snapshots * 3 nodes
    sol = solve_parabolic(p, RotheConfig(2, JunctionGrid(p.junction, 3)))
    out = tmp_path / "a.csv"
    export_solution(sol, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "edge,k,t,x,u,du_dx"
    assert len(lines) == 1 + 9
    assert [tuple(l.split(",")[:2]) for l in lines[1:4]] == [("0", "0")] * 3


def test_export_elliptic_grid_function(tmp_path):
    grid = JunctionGrid(Junction(2, (1.0, 2.0)), 3)
    u = GridFunction.from_callable(grid, lambda i, x: 1 + x)
    out = tmp_path / "g.csv"
    export_solution(u, out)
    assert len(out.read_text().splitlines()) == 1 + 6


def test_export_is_byte_identical_and_round_trips(tmp_path):
    sol = small_run()
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    export_solution(sol, a)
    export_solution(small_run(), b)
    assert a.read_bytes() == b.read_bytes()
    cols = read_solution_csv(a)
    k = cols["k"] == 2
    back = GridFunction.from_flat(sol.grid, cols["u"][k])
    assert sup_norm(back - sol.snapshot(2)) <= 1e-15


def test_export_jsonl(tmp_path):
    out = tmp_path / "a.jsonl"
    export_solution(small_run(), out, "jsonl")
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(rows) == 9
    assert set(rows[0]) == {"edge", "k", "t", "x", "u", "du_dx"}
    with pytest.raises(ValueError):
        export_solution(small_run(), out, "xml")


# ------------------------------------------------------------- convergence


def test_fitted_order_of_exact_power_law():
    h = np.array([0.1, 0.05, 0.025])
    order, resid = fitted_order(h, 3 * h ** 2)
    assert order == pytest.approx(2.0) and resid < 1e-12


def test_zero_problem_has_no_order():
    p = load_problem("builtin:zero")
    rep = run_convergence(p, "dt", [4, 8, 16], 11, "self")
    assert rep.verdict == "NOT-APPLICABLE"
    assert rep.order is None


def test_convergence_ladder_validation():
    p = load_problem("builtin:zero")
    with pytest.raises(ValueError):
        run_convergence(p, "dt", [4, 8], 11)
    with pytest.raises(ValueError):
        run_convergence(p, "dt", [8, 4, 16], 11)
    with pytest.raises(ValueError):
        run_convergence(p, "space", [4, 8, 16], 11)


# --------------------------------------------------------------------- CLI


def test_cli_validate_exit_codes(capsys):
    assert main(["validate", "builtin:neumann_heat"]) == 0
    assert main(["validate", "builtin:broken_vertex"]) == 2
    out = capsys.readouterr().out
    assert "FAIL" in out


def test_cli_schema_error_exit_code(tmp_path, capsys):
    doc = heat_doc()
    doc["junction"]["lengths"] = [1.0, 2.0]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["validate", str(path)]) == 3
    assert "/junction/lengths" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.json")]) == 3


def test_cli_solver_failure_exit_code(tmp_path, capsys):
    doc = heat_doc()
    doc["coefficients"]["vertex_condition"] = "1 + u^2 + 0*p1"
    path = tmp_path / "nosign.json"
    path.write_text(json.dumps(doc))
    assert main(["solve-elliptic", str(path), "--nodes", "21"]) == 1
    assert "SIGN_BRACKET_FAILED" in capsys.readouterr().err


def test_cli_solve_outputs_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["solve-parabolic", "builtin:neumann_heat", "--steps", "8", "--nodes", "21",
                     "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main(["solve-elliptic", "builtin:kirchhoff_linear_2edge", "--nodes", "21",
                 "--out", str(tmp_path / "e.csv")]) == 0
    assert "theta*" in capsys.readouterr().out


def test_cli_estimates_and_truncation(tmp_path):
    js = tmp_path / "est.json"
    assert main(["estimates", "builtin:neumann_heat", "--steps", "16", "--nodes", "41", "--json", str(js)]) == 0
    doc = json.loads(js.read_text())
    assert {e["lemma_id"] for e in doc["entries"]} >= {"lemma_4_1", "lemma_4_2", "prop_4_4"}
    assert main(["truncate-study", "builtin:compact_bump_2edge", "--lengths", "2,4,8",
                 "--window", "1", "--steps", "8", "--spacing", "0.05"]) == 0


def test_cli_convergence(tmp_path):
    js = tmp_path / "conv.json"
    assert main(["convergence", "builtin:neumann_heat", "--kind", "dt", "--ladder", "8,16,32",
                 "--fixed", "101", "--json", str(js)]) == 0
    assert json.loads(js.read_text())["order"] > 0.9
    assert main(["convergence", "builtin:broken_vertex", "--kind", "dt", "--ladder", "4,8,16",
                 "--fixed", "11"]) in (1, 2, 3)


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "starjunction.cli", "validate", "builtin:zero"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
