import json

import numpy as np
import pytest

from jumpsyn.cli import main
from jumpsyn.scenario import bundled_path


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_augment_prints_generator(capsys):
    code, out, _ = run(capsys, "augment", "--scenario", "reference_example", "--json")
    assert code == 0
    kappa = np.array(json.loads(out)["kappa"])
    from oracles import S_TILDE
    np.testing.assert_array_equal(kappa, S_TILDE)


def test_augment_accepts_a_path(capsys):
    code, out, _ = run(capsys, "augment", "--scenario", str(bundled_path("reference_example")))
    assert code == 0 and "-8" in out


def test_validate(capsys):
    code, out, _ = run(capsys, "validate", "--scenario", "stable_demo", "--json")
    assert code == 0 and json.loads(out)["valid"]


def test_missing_scenario_file(capsys, tmp_path):
    code, _, err = run(capsys, "validate", "--scenario", str(tmp_path / "nope.json"))
    assert code == 1 and "not found" in err


def test_bad_scenario_is_reported(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{\"modes\": [")
    code, _, err = run(capsys, "validate", "--scenario", str(p))
    assert code == 1 and "error" in err


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--scenario", "stable_demo", "--frobnicate"])
    assert exc.value.code == 1


def test_synth_reference_is_infeasible(capsys):
    code, out, _ = run(capsys, "synth", "--scenario", "reference_example", "--json")
    doc = json.loads(out)
    assert code == 2 and doc["status"] == "infeasible"
    assert any("Hurwitz" in r or "-gamma^2" in r for r in doc["report"])


def test_synth_as_printed_names_block(capsys):
    code, out, _ = run(capsys, "synth", "--scenario", "reference_example", "--variant", "as-printed")
    assert code == 2 and "+I_n" in out


def test_synth_infeasible_budget(capsys):
    code, _, _ = run(capsys, "synth", "--scenario", "infeasible_budget", "--no-precheck")
    assert code == 2


def test_synth_demo_feasible(capsys, tmp_path):
    code, out, _ = run(capsys, "synth", "--scenario", "stable_demo", "--out", str(tmp_path), "--json",
                       "--dump-sdpa", str(tmp_path / "prog.dat-s"))
    doc = json.loads(out)
    assert code == 0 and doc["status"] == "feasible" and doc["certificate"]["valid"]
    assert json.loads((tmp_path / "synth.json").read_text())["status"] == "feasible"
    assert (tmp_path / "prog.dat-s").read_text().strip()


def test_outputs_not_overwritten(capsys, tmp_path):
    assert run(capsys, "augment", "--scenario", "stable_demo", "--out", str(tmp_path))[0] == 0
    code, _, err = run(capsys, "augment", "--scenario", "stable_demo", "--out", str(tmp_path))
    assert code == 1 and "--force" in err
    assert run(capsys, "augment", "--scenario", "stable_demo", "--out", str(tmp_path), "--force")[0] == 0


def test_analyze_reference_gains(capsys):
    code, out, _ = run(capsys, "analyze", "--scenario", "reference_example", "--gains", "reference",
                       "--kind", "h2", "--json")
    assert code == 2 and json.loads(out)["h2"]["status"] == "infeasible"


def test_analyze_gains_file(capsys, tmp_path):
    p = tmp_path / "K.json"
    p.write_text(json.dumps({"gains": [[[0.0, 0.0]], [[0.0, 0.0]]]}))
    code, out, _ = run(capsys, "analyze", "--scenario", "stable_demo", "--gains", str(p), "--json")
    doc = json.loads(out)
    assert code == 0 and doc["h2"]["status"] == "feasible" and doc["hinf"]["status"] == "feasible"
    p.write_text(json.dumps({"gains": [1.0, 2.0, 3.0]}))
    assert run(capsys, "analyze", "--scenario", "stable_demo", "--gains", str(p))[0] == 1


def test_simulate_requires_out(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--scenario", "stable_demo", "--gains", "from-synth"])
    assert exc.value.code == 1


def _simulate(capsys, outdir, *extra):
    return run(capsys, "simulate", "--scenario", "stable_demo", "--gains", "from-synth", "--runs", "3",
               "--dt", "0.01", "--seed", "5", "--out", str(outdir), *extra)


def test_simulate_writes_csvs(capsys, tmp_path):
    code, _, _ = _simulate(capsys, tmp_path, "--csv-stride", "10")
    assert code == 0
    files = sorted(p.name for p in tmp_path.glob("run_*.csv"))
    assert files == ["run_0000.csv", "run_0001.csv", "run_0002.csv"]
    lines = (tmp_path / "run_0000.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2,u1,z1,z2,y1,y2,r,robs,tau,w1"
    # jump times are inserted into the grid, so there are at least 101 rows
    assert len(lines) >= 1 + 101
    assert float(lines[-1].split(",")[0]) == 10.0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["runs"] == 3 and summary["seed"] == 5


def test_simulate_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _simulate(capsys, a, "--workers", "2")
    _simulate(capsys, b)
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_simulate_figures(capsys, tmp_path):
    code, _, _ = _simulate(capsys, tmp_path, "--figures")
    assert code == 0
    assert {"run0000_x.png", "run0000_z.png", "run0000_y.png", "run0000_modes.png"} <= {
        p.name for p in tmp_path.glob("*.png")}


def test_evaluate(capsys, tmp_path):
    code, out, _ = run(capsys, "evaluate", "--scenario", "stable_demo", "--gains", "from-synth", "--runs", "4",
                       "--dt", "0.01", "--horizons", "2,4,6", "--out", str(tmp_path), "--figures", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["stability"]["verdict"] in ("saturating", "diverging", "inconclusive")
    assert (tmp_path / "state_energy.png").exists()
    code, _, err = run(capsys, "evaluate", "--scenario", "stable_demo", "--gains", "from-synth",
                       "--horizons", "a,b")
    assert code == 1 and "--horizons" in err


def test_from_synth_on_infeasible_scenario(capsys):
    code, _, err = run(capsys, "evaluate", "--scenario", "reference_example", "--gains", "from-synth")
    assert code == 2 and "infeasible" in err
