import dataclasses

import numpy as np
import pytest
import sympy as sym

from stokesdarcy.app import cli
from stokesdarcy.app.cases import (CASES, define_case1, define_case2, define_custom,
                                   define_manufactured, manufactured_exact)
from stokesdarcy.app.runner import (AlgorithmError, ExperimentConfig, compute_errors,
                                    run_algorithm1)
from stokesdarcy.app import tables
from stokesdarcy.app.tables import TableResult, table1, table3
from stokesdarcy.geometry import Rectangle
from stokesdarcy.interface import ReconstructedSolution

from .conftest import disc_for


def test_case1_definition():
    c = define_case1()
    assert c.stokes.tags["top"] == "stress" and c.darcy.tags["bottom"] == "velocity"
    assert c.darcy.tags["left"] == c.darcy.tags["right"] == "pressure"
    assert c.data.g_p(0.0, -0.5) == -0.5
    assert c.neumann_mode == "dirichlet"


def test_case2_definition():
    c = define_case2()
    ux, uy = c.data.g_u(np.array([0.0]), np.array([0.5]))
    assert ux[0] == 0.0 and uy[0] == 0.75
    assert c.neumann_mode == "single-neumann"
    assert all(t in ("velocity", "interface") for t in c.darcy.tags.values())


def test_cavity_is_coupled_neumann():
    assert CASES["cavity"]().neumann_mode == "coupled-neumann"


def test_nonconforming_resolution_rejected():
    with pytest.raises(ValueError):
        dataclasses.replace(define_case1()).cells(0)


def test_manufactured_strong_form_residuals_vanish():
    x, y, mu, K = sym.symbols("x y mu K", positive=True)
    ex = manufactured_exact(mu, K)
    u = sym.Matrix(ex.u_S(x, y))
    p_S = ex.p_S(x, y)
    p_D = ex.p_D(x, y)
    grad = sym.Matrix([[sym.diff(u[i], v) for v in (x, y)] for i in range(2)])
    eps = (grad + grad.T) / 2
    div_eps = sym.Matrix([sym.diff(eps[i, 0], x) + sym.diff(eps[i, 1], y) for i in range(2)])
    f_S = -mu * div_eps + sym.Matrix([sym.diff(p_S, x), sym.diff(p_S, y)])
    assert sym.simplify(f_S) == sym.zeros(2, 1)
    assert sym.simplify(sym.diff(u[0], x) + sym.diff(u[1], y)) == 0
    u_D = sym.Matrix(ex.u_D(x, y))
    assert sym.simplify(u_D + K * sym.Matrix([sym.diff(p_D, x), sym.diff(p_D, y)])) == sym.zeros(2, 1)
    assert sym.simplify(sym.diff(u_D[0], x) + sym.diff(u_D[1], y)) == 0
    # interface y = 1: normal flux continuity and balance of normal stress
    assert sym.simplify((u[1] - u_D[1]).subs(y, 1)) == 0
    assert sym.simplify(u[1].subs(y, 1) - x * (x - 1)) == 0
    normal_stress = (mu * eps[1, 1] - p_S).subs(y, 1)
    assert sym.simplify(normal_stress + p_D.subs(y, 1)) == 0


def test_manufactured_traction_matches_exact_stress():
    x, y = sym.symbols("x y")
    mu, K = 0.7, 1.3
    c = define_manufactured(mu, K)
    ex = c.exact
    u = sym.Matrix(ex.u_S(x, y))
    grad = sym.Matrix([[sym.diff(u[i], v) for v in (x, y)] for i in range(2)])
    sigma = mu * (grad + grad.T) / 2 - ex.p_S(x, y) * sym.eye(2)
    t = sigma @ sym.Matrix([0, 1])
    for px in (0.1, 0.5, 0.9):
        got = c.data.traction(px, 2.0)
        want = [float(t[i].subs({x: px, y: 2.0})) for i in range(2)]
        np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-13)


def _zero_solution(d):
    return ReconstructedSolution(
        u_S=np.zeros(d.spaces.stokes.ndof), p_S=np.zeros(d.stokes_mesh.n_cells),
        u_D=np.zeros(d.darcy_mesh.n_edges), p_D=np.zeros(d.darcy_mesh.n_cells),
        phi=np.zeros(d.op.n), pressure_shift=(0.0, 0.0), multipliers=(0.0, 0.0))


def test_zero_fields_zero_errors():
    d = disc_for("manufactured", 7)
    z = lambda x, y: 0 * x
    zero = dataclasses.replace(manufactured_exact(1, 1), u_S=lambda x, y: (0 * x, 0 * x),
                               u_D=lambda x, y: (0 * x, 0 * x), p_S=z, p_D=z, div_u_D=z)
    e = compute_errors(d, _zero_solution(d), zero)
    assert all(v == 0.0 for v in dataclasses.astuple(e))


def test_pressure_error_first_order():
    errs = []
    for r in (7, 14, 28, 56):
        rep, *_ = run_algorithm1(ExperimentConfig(case="manufactured", resolution=r, tol=1e-10))
        errs.append(rep.errors.pressure)
        assert rep.errors.pressure > 0
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 1.7) & (ratios <= 2.3)), ratios


def test_case1_coarse_report():
    rep, sol, kr, d = run_algorithm1(ExperimentConfig(case="case1", resolution=8))
    assert rep.n_lambda == 15 and rep.n_total == 1042
    assert rep.converged and abs(rep.iterations - 8) <= 3
    assert rep.conservation.passed
    assert {"factorize", "eig", "gmres"} <= set(rep.timings)
    assert len(rep.history) == rep.iterations + 1
    assert "iterations=" in rep.summary()


def test_case2_medium_mesh():
    rep, *_ = run_algorithm1(ExperimentConfig(case="case2", resolution=32))
    assert rep.converged and abs(rep.iterations - 9) <= 3
    assert max(abs(r) for r in rep.multipliers) <= 1e-10


def test_case2_extreme_parameters():
    rep, *_ = run_algorithm1(ExperimentConfig(case="case2", resolution=64, mu=1e4, K=1e-4 / 1e4))
    assert rep.converged and abs(rep.iterations - 10) <= 3


def test_determinism():
    a, *_ = run_algorithm1(ExperimentConfig(case="case2", resolution=16))
    b, *_ = run_algorithm1(ExperimentConfig(case="case2", resolution=16))
    assert a.iterations == b.iterations and a.history == b.history


def test_truncated_run_still_conservative():
    rep, *_ = run_algorithm1(ExperimentConfig(case="case1", resolution=16, max_iter=2))
    assert not rep.converged and rep.iterations == 2
    assert rep.conservation.passed


@pytest.mark.parametrize("precond", ["nn", "none"])
def test_other_preconditioners_run(precond):
    rep, *_ = run_algorithm1(ExperimentConfig(case="case2", resolution=8, precond=precond))
    assert rep.converged and rep.conservation.passed


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(resolution=0)
    with pytest.raises(ValueError):
        ExperimentConfig(mu=-1.0)
    with pytest.raises(ValueError):
        ExperimentConfig(precond="jacobi")


def _half_width_case():
    c = define_case1()
    return define_custom(dict(c.stokes.tags), dict(c.darcy.tags), c.data,
                         stokes_box=Rectangle(0, 0.5, 0, 1), darcy_box=Rectangle(0, 0.5, -1, 0))


def test_failure_reports_stage():
    with pytest.raises(AlgorithmError) as info:
        run_algorithm1(ExperimentConfig(resolution=3), case=_half_width_case())
    assert info.value.stage == "discretize"


def test_mesh_spread():
    res = table1(resolutions=(8, 16, 32))
    for case in ("case1", "case2"):
        its = [res.lookup(case=case, resolution=r).iterations for r in (8, 16, 32)]
        assert max(its) - min(its) <= 3
    assert "n_lambda" in res.text
    csv_text = res.to_csv()
    assert "case" in csv_text.splitlines()[0].split(",")
    assert len(csv_text.splitlines()) == 7


def test_table_records_errors_and_continues(monkeypatch):
    real = tables.run_algorithm1

    def flaky(cfg, **kw):
        if cfg.resolution == 3:
            raise AlgorithmError("discretize", RuntimeError("boom"))
        return real(cfg, **kw)

    monkeypatch.setattr(tables, "run_algorithm1", flaky)
    res = table3(resolutions=(3, 7), pairs=[(1.0, 1.0)])
    assert len(res.entries) == 4
    bad = res.lookup(resolution=3, precond="nn")
    assert bad.error and bad.cell() == "ERR"
    good = res.lookup(resolution=7, precond="spectral")
    assert good.error is None and good.converged
    assert "ERR" in res.text


def test_table_lookup_missing():
    with pytest.raises(KeyError):
        TableResult("x").lookup(case="none")


def test_cli_case1_outputs(tmp_path, capsys):
    csv_path, vtk_path = tmp_path / "r.csv", tmp_path / "f.vtk"
    code = cli.main(["case1", "--resolution", "4", "--csv", str(csv_path), "--vtk", str(vtk_path)])
    assert code == 0
    assert "iterations=" in capsys.readouterr().out
    assert "iterations" in csv_path.read_text().splitlines()[0]
    vtk = vtk_path.read_text()
    assert vtk.startswith("# vtk DataFile Version")
    assert "UNSTRUCTURED_GRID" in vtk and "CELL_TYPES" in vtk
    d = disc_for("case1", 4)
    n_cells = d.stokes_mesh.n_cells + d.darcy_mesh.n_cells
    assert f"CELL_DATA {n_cells}" in vtk


def test_cli_truncation_exit_code(capsys):
    assert cli.main(["case2", "--resolution", "8", "--max-iter", "1"]) == 2


def test_cli_error_exit_code(capsys):
    assert cli.main(["custom", "--resolution", "4", "--stokes-tags",
                     "velocity,velocity,velocity,stress"]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_rejects_nonpositive_parameters(capsys):
    with pytest.raises(SystemExit):
        cli.main(["case1", "--mu", "0"])
    with pytest.raises(SystemExit):
        cli.main(["case1", "--k", "1", "--kappa", "1"])


def test_cli_custom_and_kappa(capsys):
    code = cli.main(["custom", "--resolution", "4", "--darcy-pressure", "0,1,0", "--kappa", "1",
                     "--mu", "2"])
    assert code == 0
    out = capsys.readouterr().out
    assert "custom" in out and "K=0.5" in out


def test_cli_table3_small(tmp_path, capsys):
    p = tmp_path / "t3.csv"
    assert cli.main(["table3", "--resolution", "7", "--csv", str(p)]) == 0
    assert len(p.read_text().splitlines()) == 1 + 9 * 2
