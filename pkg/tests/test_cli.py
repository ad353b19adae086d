import json
import subprocess
import sys
from pathlib import Path

import pytest

from kiteot import cli


def run(tmp, *args):
    return cli.main([*args, "--out", str(tmp)] if "--out" not in args else list(args))


def load(path):
    return json.loads(Path(path).read_text())


@pytest.fixture(scope="module")
def solved_1000(tmp_path_factory):
    d = tmp_path_factory.mktemp("n1000")
    assert cli.main(["solve", "--n-sites", "1000", "--tol-mass", "1e-7", "--out", str(d)]) == cli.EXIT_OK
    return d


def test_solve_four_sites(tmp_path):
    assert run(tmp_path, "solve", "--n-sites", "4") == 0
    plan = load(tmp_path / "plan.json")
    assert plan["n_sites"] == 4 and plan["converged"]
    assert (tmp_path / "cells.svg").read_text().count("<polygon") >= 4


def test_solve_1000_baseline(solved_1000):
    plan = load(solved_1000 / "plan.json")
    assert plan["converged"] and plan["iterations"] <= 30
    assert plan["trace"][-1]["max_relative_mass_error"] <= 1e-7
    assert len(plan["config_hash"]) == 16


def test_missing_output_dir(tmp_path):
    assert cli.main(["solve", "--n-sites", "4", "--out", str(tmp_path / "nope")]) == cli.EXIT_IO


def test_missing_plan(tmp_path):
    assert run(tmp_path, "verify") == cli.EXIT_NOPLAN
    assert run(tmp_path, "conformal") == cli.EXIT_NOPLAN


def test_nonconvergence_exit(tmp_path):
    assert run(tmp_path, "solve", "--n-sites", "200", "--max-iters", "1") == cli.EXIT_NOCONV
    assert load(tmp_path / "plan.json")["converged"] is False


@pytest.mark.parametrize("args", [
    ["solve", "--n-sites", "5"],
    ["solve", "--tol-mass", "2"],
    ["verify", "--checks", "bogus"],
    ["solve", "--unknown-flag"],
    ["frobnicate"],
])
def test_usage_errors(tmp_path, args):
    # argparse errors exit through SystemExit, config errors return the code
    try:
        code = run(tmp_path, *args)
    except SystemExit as e:
        code = e.code
    assert code == cli.EXIT_USAGE


def test_verify_selected_check_only(solved_1000):
    assert cli.main(["verify", "--checks", "ma-residual", "--out", str(solved_1000)]) == 0
    rep = load(solved_1000 / "verify.json")
    assert list(rep["checks"]) == ["ma-residual"]
    assert rep["config_hash"] and rep["checks"]["ma-residual"]["check"]


def test_verify_negative_control(tmp_path):
    assert run(tmp_path, "solve", "--n-sites", "2000", "--no-symmetrize") == 0
    assert run(tmp_path, "verify", "--no-symmetrize", "--n-sites", "2000", "--checks", "symmetry") == cli.EXIT_CHECK
    assert load(tmp_path / "verify.json")["checks"]["symmetry"]["passed"] is False


def test_verify_full_n5000(tmp_path):
    assert run(tmp_path, "solve", "--n-sites", "5000") == 0
    assert run(tmp_path, "verify", "--n-sites", "5000") == 0
    rep = load(tmp_path / "verify.json")
    assert set(rep["checks"]) == set(cli.VERIFY_CHECKS)
    assert all(c["passed"] for c in rep["checks"].values())


@pytest.mark.slow
def test_conformal_n10000(tmp_path):
    assert run(tmp_path, "solve", "--n-sites", "10000") == 0
    assert run(tmp_path, "conformal", "--n-sites", "10000") == 0
    fit = load(tmp_path / "logfit.json")
    assert fit["C"] > 0 and fit["r_squared"] >= 0.98
    rep = load(tmp_path / "conformal.json")
    assert rep["passed"] and "injectivity" in rep["checks"]
    assert (tmp_path / "profile.csv").read_text().startswith("radius,")


def test_conformal_fixture(tmp_path):
    assert run(tmp_path, "conformal", "--fixture", "log3") == 0
    assert load(tmp_path / "logfit.json")["C"] == pytest.approx(3.0, abs=1e-10)


def test_conformal_radius_errors(tmp_path):
    assert run(tmp_path, "conformal", "--r-min", "0.2", "--r-max", "0.1") == cli.EXIT_RADII
    assert run(tmp_path, "conformal", "--fixture", "log3", "--n-radii", "3") == cli.EXIT_RADII


def test_simplex_report(tmp_path):
    assert run(tmp_path, "simplex") == 0
    rep = load(tmp_path / "simplex.json")
    assert rep["checks"]["transition-K"]["details"]["matrix"] == [["-1/1", "0/1"], ["-1/1", "1/1"]]
    assert rep["checks"]["kite-vertices"]["details"]["n01"] == ["1/2", "1/2"]


def test_simplex_with_plan(solved_1000):
    assert cli.main(["simplex", "--out", str(solved_1000)]) == 0
    assert load(solved_1000 / "simplex.json")["checks"]["reduction"]["passed"]


def test_export(solved_1000):
    assert cli.main(["export", "--what", "domains,grid,cells,hessian", "--grid-k", "6", "--out", str(solved_1000)]) == 0
    for name in ("domains.json", "grid_A.csv", "grid_B.csv", "cells.svg", "hessian.csv"):
        assert (solved_1000 / name).stat().st_size > 0
    assert load(solved_1000 / "domains.json")["unshifted"]["singular_image"] == ["2/1", "2/1"]


def test_deterministic_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    for d in (a, b):
        assert cli.main(["solve", "--n-sites", "400", "--seed", "7", "--out", str(d)]) == 0
        assert cli.main(["verify", "--n-sites", "400", "--seed", "7", "--checks", "ma-residual,monotonicity",
                         "--out", str(d)]) in (0, 1)
    assert (a / "plan.json").read_bytes() == (b / "plan.json").read_bytes()
    assert (a / "verify.json").read_bytes() == (b / "verify.json").read_bytes()


def test_config_merge_and_hash(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"n_sites": 8, "seed": 3, "tol_mass": 1e-8}))
    args = cli.build_parser().parse_args(["solve", "--config", str(cfg_file), "--seed", "5"])
    cfg = cli.resolve_config(args)
    assert (cfg.n_sites, cfg.seed, cfg.tol_mass) == (8, 5, 1e-8)
    other = cli.RunConfig(**{**cfg.__dict__, "out": "elsewhere", "threads": 2})
    assert other.hash() == cfg.hash()
    assert cli.RunConfig(**{**cfg.__dict__, "seed": 6}).hash() != cfg.hash()


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n_sitez": 8}))
    assert cli.main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["solve", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == cli.EXIT_USAGE


def test_kite_threads_overrides_flag(monkeypatch):
    monkeypatch.setenv("KITE_THREADS", "1")
    cfg = cli.resolve_config(cli.build_parser().parse_args(["solve", "--threads", "4"]))
    assert cfg.threads == 1
    monkeypatch.setenv("KITE_THREADS", "many")
    with pytest.raises(cli.ConfigError):
        cli.resolve_config(cli.build_parser().parse_args(["solve"]))


def test_threads_cap_runs(tmp_path):
    assert run(tmp_path, "solve", "--n-sites", "4", "--threads", "1") == 0


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "kiteot", "solve", "--n-sites", "4", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "kiteot", "verify", "--out", str(tmp_path / "x")],
                       capture_output=True, text=True)
    assert r.returncode == cli.EXIT_NOPLAN and "not found" in r.stderr
