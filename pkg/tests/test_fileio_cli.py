import json

import numpy as np
import pytest

import mealopt as m
from mealopt.cli import main
from mealopt.errors import SchemaError
from mealopt.fileio import (
    CSV_HEADER,
    load_problem,
    load_trace_columns,
    save_problem,
    save_trace,
)


def catalog_problems():
    cons = m.LinearConstraint([[1.0, -1.0]], [0.0])
    smooth = m.QuadraticSmooth(np.diag([2.0, -2.0]))
    return [
        ("zero", m.Problem(cons, m.Zero())),
        ("quad", m.Problem(cons, m.QuadraticForm(Q=[[1.0, 0.0], [0.0, 2.0]],
                                                 r=[0.1, -0.2], c=0.3))),
        ("box", m.Problem(cons, m.BoxIndicator([-1.0, -np.inf], [1.0, np.inf],
                                               implicit_class=m.ImplicitClass.lipschitz(2.0)),
                          smooth)),
        ("l1", m.Problem(cons, m.L1(weight=0.7), smooth)),
        ("scad", m.Problem(cons, m.SCAD(lam=1.0, a=3.7))),
        ("mcp", m.Problem(cons, m.MCP(lam=0.5, a=4.0))),
        ("pwmin", m.Problem(cons, m.PointwiseMin(pieces=(
            (m.QuadraticForm(Q=[[0.2, 0.0], [0.0, 0.2]]), None),
            (m.QuadraticForm(Q=[[0.1, 0.0], [0.0, 0.1]], c=0.5),
             m.BoxIndicator([-2.0, -2.0], [2.0, 2.0])),
        )))),
    ]


class TestProblemRoundTrip:
    @pytest.mark.parametrize("name,prob", catalog_problems())
    def test_round_trip_values_agree(self, name, prob, tmp_path):
        path = tmp_path / f"{name}.json"
        save_problem(prob, path)
        back = load_problem(path)
        rng = np.random.default_rng(40)
        gamma = 0.4 / max(prob.rho_total, 1.0)
        for _ in range(25):
            x = rng.uniform(-0.9, 0.9, size=2)
            assert back.objective_value(x) == pytest.approx(
                prob.objective_value(x), abs=1e-12)
            np.testing.assert_allclose(back.prox_part.prox(gamma, x),
                                       prob.prox_part.prox(gamma, x), atol=1e-9)

    def test_exp1_round_trip_same_solver_behavior(self, tmp_path):
        prob = m.build_exp1()
        path = tmp_path / "exp1.json"
        save_problem(prob, path)
        back = load_problem(path)
        plan = m.PenaltyPlan.fixed(50.0, 0.25, 1.0)
        init = (np.array([1.0, -1.0]), np.array([1.0, -1.0]), np.zeros(1))
        cfg = m.SolverConfig("meal", plan,
                             subproblem=m.InnerProxGradient(tol=1e-11),
                             stop=m.StopRule(max_iters=10, stat_tol=1e-12,
                                             feas_tol=1e-12))
        t1 = m.run(prob, cfg, init=init)
        t2 = m.run(back, cfg, init=init)
        np.testing.assert_array_equal(t1.column("objective"), t2.column("objective"))
        np.testing.assert_array_equal(t1.column("feasibility"), t2.column("feasibility"))

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"constraint": {"A": [[1.0]]')
        with pytest.raises(SchemaError):
            load_problem(path)

    def test_missing_field_names_context(self, tmp_path):
        path = tmp_path / "missing.json"
        path.write_text(json.dumps({"constraint": {"A": [[1.0]], "b": [0.0]},
                                    "objective": {"prox": {"kind": "l1"}}}))
        with pytest.raises(SchemaError, match="objective.prox.weight"):
            load_problem(path)

    def test_unknown_kind_rejected(self, tmp_path):
        path = tmp_path / "weird.json"
        path.write_text(json.dumps({"constraint": {"A": [[1.0]], "b": [0.0]},
                                    "objective": {"prox": {"kind": "entropy"}}}))
        with pytest.raises(SchemaError, match="unknown prox kind"):
            load_problem(path)


class TestTraceCSV:
    def test_header_fixed(self, tmp_path):
        assert CSV_HEADER == ("k,objective,feasibility,stationarity,lyapunov,"
                              "lambda_norm,xz_gap,wall_time")
        prob = m.Problem(m.LinearConstraint(np.eye(2), np.zeros(2)), m.Zero())
        tr = m.run(prob, m.SolverConfig("meal", m.PenaltyPlan.fixed(1.0, 0.5, 1.0)))
        path = tmp_path / "t.csv"
        save_trace(tr, path)
        assert path.read_text().splitlines()[0] == CSV_HEADER

    def test_round_trip_and_shortest_format(self, tmp_path):
        prob = m.build_exp1()
        cfg = m.SolverConfig("limeal", m.PenaltyPlan.fixed(50.0, 0.5, 1.0),
                             subproblem=m.InnerProxGradient(tol=1e-10),
                             stop=m.StopRule(max_iters=30, stat_tol=1e-8,
                                             feas_tol=1e-8))
        tr = m.run(prob, cfg, init=(np.array([1.0, -1.0]), np.array([1.0, -1.0]),
                                    np.zeros(1)))
        path = tmp_path / "t.csv"
        save_trace(tr, path)
        cols = load_trace_columns(path)
        np.testing.assert_array_equal(cols["objective"], tr.column("objective"))
        np.testing.assert_array_equal(cols["stationarity"], tr.column("stationarity"))


class TestCLI:
    def test_exp1_writes_traces(self, tmp_path, capsys):
        code = main(["exp1", "--output-dir", str(tmp_path), "--max-iters", "600"])
        assert code == 0
        files = sorted(p.name for p in (tmp_path / "exp1").glob("*.csv"))
        assert "summary.csv" in files
        assert "alm_beta50.csv" in files
        assert sum(f.startswith("limeal") for f in files) == 3

    def test_bad_beta_exits_2_and_names_flag(self, tmp_path, capsys):
        prob_path = tmp_path / "p.json"
        save_problem(m.Problem(m.LinearConstraint([[1.0]], [0.0]), m.Zero()), prob_path)
        code = main(["solve", "--input", str(prob_path), "--algorithm", "meal",
                     "--beta", "-1"])
        assert code == 2
        assert "--beta" in capsys.readouterr().err

    def test_unknown_flag_rejected(self, capsys):
        assert main(["exp1", "--frobnicate"]) == 2

    def test_solve_success_and_trace(self, tmp_path):
        prob_path = tmp_path / "p.json"
        save_problem(m.Problem(m.LinearConstraint(np.eye(2), np.zeros(2)), m.Zero()),
                     prob_path)
        code = main(["solve", "--input", str(prob_path), "--algorithm", "meal",
                     "--beta", "1.0", "--output-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "meal_trace.csv").exists()

    def test_solve_nonconvergence_exits_3_trace_still_written(self, tmp_path):
        save_problem(m.build_exp1(), tmp_path / "exp1.json")
        code = main(["solve", "--input", str(tmp_path / "exp1.json"),
                     "--algorithm", "alm", "--beta", "50", "--max-iters", "50",
                     "--output-dir", str(tmp_path)])
        assert code == 3
        assert (tmp_path / "alm_trace.csv").exists()

    def test_schema_error_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        code = main(["solve", "--input", str(bad), "--algorithm", "meal",
                     "--beta", "1.0"])
        assert code == 2

    def test_alpha_target_flow(self, tmp_path):
        # Theorem-style beta selection from the admissible cap
        prob_path = tmp_path / "p.json"
        save_problem(m.Problem(m.LinearConstraint([[1.0, -1.0]], [0.0]), m.Zero()),
                     prob_path)
        code = main(["solve", "--input", str(prob_path), "--algorithm", "meal",
                     "--gamma", "0.5", "--alpha-target", "10.0",
                     "--cap-variant", "meal-a", "--output-dir", str(tmp_path)])
        assert code == 0

    def test_check_passes(self, capsys):
        assert main(["check"]) == 0
        out = capsys.readouterr().out
        assert "all checks passed" in out

    def test_subproblem_path_flag_paper72(self, tmp_path):
        save_problem(m.build_exp2(seed=3, m=2, n=6), tmp_path / "qp.json")
        code = main(["solve", "--input", str(tmp_path / "qp.json"),
                     "--algorithm", "limeal", "--beta", "20", "--gamma", "0.05",
                     "--subproblem-path", "paper72", "--max-iters", "3000",
                     "--output-dir", str(tmp_path)])
        assert code in (0, 3)
        assert (tmp_path / "limeal_trace.csv").exists()

    def test_output_dir_env_var(self, tmp_path, monkeypatch):
        prob_path = tmp_path / "p.json"
        save_problem(m.Problem(m.LinearConstraint(np.eye(2), np.zeros(2)), m.Zero()),
                     prob_path)
        monkeypatch.setenv("MEALOPT_OUT_DIR", str(tmp_path / "envout"))
        code = main(["solve", "--input", str(prob_path), "--algorithm", "meal",
                     "--beta", "1.0"])
        assert code == 0
        assert (tmp_path / "envout" / "meal_trace.csv").exists()

    def test_prox_table(self, tmp_path):
        out = tmp_path / "scad.txt"
        code = main(["prox-table", "--kind", "scad", "--lam", "1.0", "--a", "3.7",
                     "--gamma", "0.5", "--lo", "-2", "--hi", "2", "--step", "0.5",
                     "--output", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("# kind=scad")
        assert len(lines) == 1 + 9
