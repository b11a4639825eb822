import json
import subprocess
import sys

import numpy as np
import pytest

from duallimit.cli import main
from duallimit.identify import synth_dataset, write_dataset
from duallimit.mechanics import FrictionParams
from duallimit.planner import linear_interpolation

CASE3 = {"friction": {"mu_e": 0.6, "mu_p": 0.3, "r_e": 0.02, "r_p": 0.05}, "n_e": 4.0}
REFERENCE = {"n_e": 4.0, "safety": 0.8, "seed": 3, "planner": {"n": 30, "c1": 10, "c2": 1, "k_v": 1.25}}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def case3_cfg(tmp_path):
    return write_json(tmp_path / "case3.json", CASE3)


@pytest.fixture
def ref_cfg(tmp_path):
    return write_json(tmp_path / "ref.json", REFERENCE)


def test_classify(case3_cfg, tmp_path, capsys):
    assert main(["classify", "--config", case3_cfg]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["case"] == "III" and out["n_slip"] == pytest.approx(0.4905)
    assert out["n_stick"] is None
    sym = write_json(tmp_path / "sym.json", {"friction": {"mu_e": 0.5, "mu_p": 0.5, "r_e": 0.03, "r_p": 0.03}})
    assert main(["classify", "--config", sym]) == 0
    assert json.loads(capsys.readouterr().out)["case"] == "I"


@pytest.mark.parametrize("text", ["{", "[]", '{"frictoin": {}}', '{"n_e": "four"}', '{"n_e": -1}',
                                  '{"planner": {"n": 1}}'])
def test_bad_config_exit_2(tmp_path, text):
    p = tmp_path / "bad.json"
    p.write_text(text)
    assert main(["classify", "--config", str(p)]) == 2


def test_missing_config_and_bad_flags():
    assert main(["classify", "--config", "/nonexistent/cfg.json"]) == 2
    assert main(["classify", "--safety", "1.5"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["plan"])  # --goal is required
    assert exc.value.code == 2


def test_kv_grid(case3_cfg, capsys):
    assert main(["kv", "--config", case3_cfg, "--n-min", "3", "--n-max", "9", "--steps", "7"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "n_e,k_v" and len(lines) == 8
    assert float(lines[1].split(",")[1]) == pytest.approx(25.673670804798316, rel=1e-12)


def test_plan_and_simulate(ref_cfg, tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    assert main(["plan", "--config", ref_cfg, "--goal", "0", "-0.01", "-0.7", "--out", str(out)]) == 0
    path = json.loads((out / "path.json").read_text())
    assert len(path) == 30 and path[0] == [0, 0, 0]
    np.testing.assert_allclose(path[-1], [0, -0.01, -0.7], atol=1e-9)
    svg = (out / "path.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg
    assert json.loads((out / "plan_report.json").read_text())["converged"] is True

    assert main(["simulate", "--config", ref_cfg, str(out / "path.json"), "--out", str(out)]) == 0
    term = json.loads((out / "terminal_error.json").read_text())
    assert term["slip_count"] == 0 and term["final_error"] == [0, 0, 0]
    assert term["slip_model"] == "ConeProjection"
    rows = (out / "rollout.csv").read_text().splitlines()
    assert rows[0] == "step,ee_x,ee_y,ee_theta,obj_x,obj_y,obj_theta,slipped" and len(rows) == 31


def test_plan_straight_goal_is_linear(ref_cfg, tmp_path):
    assert main(["plan", "--config", ref_cfg, "--goal", "0.03", "0", "0.02", "--out", str(tmp_path)]) == 0
    path = np.array(json.loads((tmp_path / "path.json").read_text()))
    np.testing.assert_allclose(path, linear_interpolation((0, 0, 0), (0.03, 0, 0.02), 30).waypoints, atol=1e-12)


def test_plan_exit_codes(ref_cfg, tmp_path):
    assert main(["plan", "--config", ref_cfg, "--goal", "0", "0", "1", "--out", str(tmp_path / "nope")]) == 2
    sym = write_json(tmp_path / "sym.json", {"friction": {"mu_e": 0.5, "mu_p": 0.5, "r_e": 0.03, "r_p": 0.03}})
    assert main(["plan", "--config", sym, "--goal", "0", "0", "1", "--out", str(tmp_path)]) == 3
    # below the crossing window there is no physical k_v to plan with
    low = write_json(tmp_path / "low.json", dict(CASE3, n_e=0.1))
    assert main(["plan", "--config", low, "--goal", "0.03", "0", "0.5", "--out", str(tmp_path)]) == 3


def test_simulate_linear_path_slips(ref_cfg, tmp_path):
    p = tmp_path / "lin.json"
    p.write_text(json.dumps(linear_interpolation((0, 0, 0), (0, -0.01, -0.7), 30).tolist()))
    assert main(["simulate", "--config", ref_cfg, str(p), "--out", str(tmp_path)]) == 0
    term = json.loads((tmp_path / "terminal_error.json").read_text())
    assert term["slip_count"] > 0 and abs(term["final_error"][2]) > 0.3


@pytest.mark.parametrize("content", ["", "[]", "{", '[[0, 0]]', '[["a", 0, 0]]'])
def test_simulate_bad_path_exit_2(ref_cfg, tmp_path, content):
    p = tmp_path / "p.json"
    p.write_text(content)
    assert main(["simulate", "--config", ref_cfg, str(p), "--out", str(tmp_path)]) == 2


def test_fit_exit_codes(case3_cfg, tmp_path, capsys):
    params = FrictionParams(0.6, 0.3, 0.02, 0.05)
    data = synth_dataset(params, 120, range(3, 10), 0.0, seed=2)
    write_dataset(tmp_path / "d.csv", data)
    assert main(["fit", "--config", case3_cfg, str(tmp_path / "d.csv"), "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["classification_accuracy"] >= 0.95
    assert (tmp_path / "fit.svg").read_text().count("<circle") == 120

    write_dataset(tmp_path / "one.csv", [r for r in data if not r.label])
    assert main(["fit", "--config", case3_cfg, str(tmp_path / "one.csv"), "--out", str(tmp_path)]) == 4

    text = (tmp_path / "d.csv").read_text().replace("qo0_x", "qo0_X", 1)
    (tmp_path / "typo.csv").write_text(text)
    capsys.readouterr()
    assert main(["fit", "--config", case3_cfg, str(tmp_path / "typo.csv"), "--out", str(tmp_path)]) == 2
    assert "row 1" in capsys.readouterr().err


def test_sweep(ref_cfg, tmp_path):
    probs = write_json(tmp_path / "probs.json", {"generate": {"count": 6, "n_e": [3, 5]}})
    assert main(["sweep", "--config", ref_cfg, probs, "--out", str(tmp_path)]) == 0
    table = (tmp_path / "table.csv").read_text().splitlines()
    assert table[0] == "object,planner,pos_rmse_m,ori_rmse_rad"
    rows = {r.split(",")[1]: r.split(",") for r in table[1:]}
    assert float(rows["proposed"][3]) <= 0.2 * float(rows["linear"][3])
    per_force = (tmp_path / "per_force.csv").read_text().splitlines()
    assert per_force[0].startswith("n_e,") and len(per_force) == 5

    listed = write_json(tmp_path / "list.json", [{"goal": [0.03, 0, 0.6]}, {"goal": [0, 0.02, -0.5], "n_e": 3}])
    assert main(["sweep", "--config", ref_cfg, listed, "--out", str(tmp_path)]) == 0
    empty = write_json(tmp_path / "empty.json", [])
    assert main(["sweep", "--config", ref_cfg, empty, "--out", str(tmp_path)]) == 2


def test_flags_override_config(ref_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    goal = ["--goal", "0.02", "0.0", "0.6"]
    assert main(["plan", "--config", ref_cfg, *goal, "--out", str(a)]) == 0
    assert main(["plan", "--config", ref_cfg, *goal, "--out", str(b), "--safety", "0.5",
                 "--kv-convention", "paper"]) == 0
    rep = json.loads((b / "plan_report.json").read_text())
    assert rep["safety"] == 0.5 and rep["convention"] == "paper"
    assert (a / "path.json").read_text() != (b / "path.json").read_text()


def test_console_entry_point(tmp_path, case3_cfg):
    res = subprocess.run([sys.executable, "-m", "duallimit.cli", "classify", "--config", case3_cfg],
                         capture_output=True, text=True)
    assert res.returncode == 0 and '"case": "III"' in res.stdout
