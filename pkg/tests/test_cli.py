import csv
import json

import numpy as np

from helpers import PLANE_VALUES
from reachavoid.cli import main
from reachavoid.io import bundled_model_path


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_doc(tmp_path, mutate):
    doc = json.loads(bundled_model_path().read_text())
    mutate(doc)
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_validate_bundled(capsys):
    code, out, _ = run(capsys, "validate")
    assert code == 0
    assert out.startswith("valid; δ=1, ε0=0.944444, K̃=19")


def test_validate_overlap(capsys, tmp_path):
    path = write_doc(tmp_path, lambda d: d["obstacles"].update(set=["0", "4"]))
    code, out, _ = run(capsys, "validate", "--model", path)
    assert code == 1
    assert "overlap" in out


def test_validate_missing_kernel_row(capsys, tmp_path):
    path = write_doc(tmp_path, lambda d: d["kernel"].pop("2/beta"))
    code, out, _ = run(capsys, "validate", "--model", path)
    assert code == 1
    assert "('2', 'beta')" in out


def test_validate_unparsable(capsys, tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"states": [1, 2,,]}')
    code, _, err = run(capsys, "validate", "--model", str(path))
    assert code == 1
    assert "model.json:1:" in err


def test_validate_not_separated(capsys):
    code, out, _ = run(capsys, "validate", "--delta", "20")
    assert code == 2
    assert "smaller --delta" in out


def test_bad_flags(capsys):
    assert run(capsys, "solve", "--epsilon", "2")[0] == 1
    assert run(capsys, "solve", "--grid", "1")[0] == 1


def test_solve_writes_csv_and_policy(capsys, tmp_path):
    out_csv = tmp_path / "b1.csv"
    code, out, _ = run(capsys, "solve", "--scenario", "b1", "--out", str(out_csv))
    assert code == 0
    assert f"W(3,0,18) = {PLANE_VALUES['b1'][3]:.6g}" in out
    assert "W(0,0,18) = 0  [obstacle]" in out
    with open(out_csv) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["state", "t", "value"]
    assert len(rows) == 1 + 5 * 721
    policy = json.loads((tmp_path / "b1.policy.json").read_text())
    assert policy["0"]["3"] in ("alpha", "beta", "gamma")


def test_solve_scenario_two_state_one_is_zero(capsys):
    code, out, _ = run(capsys, "solve", "--scenario", "b2", "--grid", "180")
    assert code == 0
    assert "W(1,0,18) = 0  [obstacle]" in out


def test_solve_zero_horizon(capsys):
    code, out, _ = run(capsys, "solve", "--scenario", "b2", "--horizon", "0")
    assert code == 0
    values = [line.split(" = ")[1].split()[0] for line in out.splitlines() if line.startswith("W(")]
    assert values == ["0"] * 4


def test_solve_not_separated(capsys):
    code, _, err = run(capsys, "solve", "--delta", "20")
    assert code == 2
    assert "smaller delta" in err


def test_sweep_all_scenarios(capsys, tmp_path):
    path = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--grid", "180", "--out", str(path))
    assert code == 0
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 5 * 181
    curves = {}
    for r in rows:
        curves.setdefault((r["scenario"], r["state"]), []).append(float(r["value"]))
    for (sc, state), v in curves.items():
        assert np.all(np.diff(v) >= 0)
        if state != "4":
            assert v[0] == 0.0
    assert curves[("b3", "2")][-1] > curves[("b2", "2")][-1]


def test_compare_passes(capsys):
    code, out, _ = run(capsys, "compare", "--scenario", "b2", "--grid", "360",
                       "--episodes", "40000")
    assert code == 0, out
    assert out.rstrip().endswith("all pass")


def test_compare_corrupted_policy_fails(capsys, tmp_path):
    bad = {"0": {s: "gamma" for s in "0123"}}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    code, out, _ = run(capsys, "compare", "--scenario", "b1", "--grid", "360",
                       "--episodes", "40000", "--policy", str(path))
    assert code == 3
    assert "FAIL" in out
