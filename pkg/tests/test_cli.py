import json
from pathlib import Path

import numpy as np
import pytest

from realftrl import runner
from realftrl.cli import main
from realftrl.io import read_aggregate, read_trial_csv
from realftrl.simulator import fit_loglog
from realftrl.verify import config_path

GRID = """\
name: grid
context: {kind: discrete, points: [[1.0], [-1.0]]}
environment: {regime: stochastic, theta0: [[0.2], [0.8]]}
agent: {id: bobw_real_ftrl, beta1_mode: simple}
horizons: [20, 40, 80]
seeds: {count: 2, base: 0}
output: out
"""


def run_minimal(root):
    assert main(["run", str(config_path("minimal")), "--output-root", str(root), "--workers", "1"]) == 0
    return Path(root) / "runs" / "minimal"


def test_minimal_run_artifacts(tmp_path):
    out = run_minimal(tmp_path)
    assert len(list(out.glob("*_s*.csv"))) == 1
    aggs = list(out.glob("*_aggregate.json"))
    assert len(aggs) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["version"] and len(manifest["config_hash"]) == 64
    assert manifest["cells"][0]["T"] == 100 and manifest["cells"][0]["seed"] == 0
    assert set(manifest["timestamps"]) == {"started", "finished"}
    cols = read_trial_csv(out / manifest["cells"][0]["files"][0])
    assert len(cols["t"]) == 100
    assert read_aggregate(aggs[0])["complete"]


def _strip_wall_clock(doc):
    doc.pop("timestamps", None)
    for c in doc.get("cells", []):
        c.pop("wall_clock", None)
    return doc


def test_rerun_is_byte_identical(tmp_path):
    a = run_minimal(tmp_path / "a")
    b = run_minimal(tmp_path / "b")
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        if name == "manifest.json":
            ja, jb = (json.loads((d / name).read_text()) for d in (a, b))
            assert _strip_wall_clock(ja) == _strip_wall_clock(jb)
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_grid_cell_count(tmp_path):
    cfg = tmp_path / "grid.yaml"
    cfg.write_text(GRID)
    assert main(["run", str(cfg), "--output-root", str(tmp_path), "--workers", "2"]) == 0
    out = tmp_path / "out"
    assert len(list(out.glob("*_s*.csv"))) == 6
    assert len(list(out.glob("*_aggregate.json"))) == 3


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("REALFTRL_OUTPUT_ROOT", str(tmp_path))
    assert main(["run", str(config_path("minimal")), "--workers", "1"]) == 0
    assert (tmp_path / "runs" / "minimal" / "manifest.json").exists()


def test_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(GRID.replace("horizons: [20, 40, 80]", "horizons: [20, -4]"))
    assert main(["run", str(bad)]) == 2
    err = capsys.readouterr().err
    assert f"{bad}:5:" in err and "horizon" in err


def test_partial_failure_keeps_completed_cells(tmp_path, monkeypatch):
    real = runner.run_cell

    def flaky(cfg, T, seed):
        if seed == 1:
            raise RuntimeError("injected")
        return real(cfg, T, seed)

    monkeypatch.setattr(runner, "run_cell", flaky)
    cfg = tmp_path / "grid.yaml"
    cfg.write_text(GRID.replace("[20, 40, 80]", "[20]"))
    assert main(["run", str(cfg), "--output-root", str(tmp_path), "--workers", "1"]) == 1
    out = tmp_path / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    errors = [c for c in manifest["cells"] if "error" in c]
    assert len(errors) == 1 and "injected" in errors[0]["error"]
    assert len(list(out.glob("*_s0.csv"))) == 1
    assert not read_aggregate(next(out.glob("*_aggregate.json")))["complete"]


def test_plotdata_single_seed_curve_matches_csv(tmp_path):
    out = run_minimal(tmp_path)
    agg = next(out.glob("*_aggregate.json"))
    assert main(["plotdata", str(agg), "--mode", "regret-vs-t"]) == 0
    dat = agg.with_name(f"{agg.stem}.regret-vs-t.dat")
    assert dat.exists() and dat.with_suffix(".png").exists()
    rows = np.loadtxt(dat)
    cols = read_trial_csv(next(out.glob("*_s0.csv")))
    np.testing.assert_array_equal(rows[:, 0], cols["t"])
    np.testing.assert_allclose(rows[:, 1], np.cumsum(cols["regret_inst"]), rtol=0, atol=1e-12)
    np.testing.assert_array_equal(rows[:, 1], cols["regret_cum"])
    np.testing.assert_array_equal(rows[:, 2], 0.0)


def test_plotdata_sqrt_and_loglog(tmp_path):
    cfg = tmp_path / "grid.yaml"
    cfg.write_text(GRID)
    assert main(["run", str(cfg), "--output-root", str(tmp_path), "--workers", "1"]) == 0
    aggs = sorted((tmp_path / "out").glob("*_aggregate.json"))
    out = tmp_path / "ll.dat"
    assert main(["plotdata", *map(str, aggs), "--mode", "loglog", "--out", str(out), "--no-figure"]) == 0
    assert not out.with_suffix(".png").exists()
    rows = np.loadtxt(out)
    docs = sorted((read_aggregate(p) for p in aggs), key=lambda d: d["T"])
    np.testing.assert_allclose(rows[:, 0], np.log([20, 40, 80]))
    np.testing.assert_allclose(rows[:, 1], np.log([d["final_mean"] for d in docs]))
    footer = [l for l in out.read_text().splitlines() if l.startswith("# slope")]
    slope, _ = fit_loglog([20, 40, 80], [d["final_mean"] for d in docs])
    assert footer == [f"# slope = {slope!r}"]

    sq = tmp_path / "sq.dat"
    assert main(["plotdata", str(aggs[0]), "--mode", "regret-vs-sqrtT", "--out", str(sq), "--no-figure"]) == 0
    rows = np.loadtxt(sq)
    np.testing.assert_allclose(rows[:, 0] ** 2, np.arange(1, len(rows) + 1))


def test_plotdata_missing_aggregate(tmp_path, capsys):
    assert main(["plotdata", str(tmp_path / "nope.json")]) == 2
    assert "not found" in capsys.readouterr().err


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "realftrl" in capsys.readouterr().out


def test_verify_exit_code_follows_checks(monkeypatch, capsys):
    from realftrl import verify

    outcome = [verify.CheckResult("a", True, "ok"), verify.CheckResult("b", True, "ok")]
    monkeypatch.setattr(verify, "run_suite", lambda level: outcome)
    assert main(["verify", "--level", "quick"]) == 0
    outcome.append(verify.CheckResult("c", False, "self-bounding diagnostic below -3 stderr"))
    assert main(["verify"]) == 1
    assert "2/3 checks passed" in capsys.readouterr().out


def test_quick_suite_levels_are_smaller_than_full():
    from realftrl.verify import LEVELS

    assert LEVELS["full"]["mgr_draws"] == 100_000 and LEVELS["full"]["scaling"]
    assert LEVELS["quick"]["T"] < LEVELS["full"]["T"] and not LEVELS["quick"]["scaling"]
