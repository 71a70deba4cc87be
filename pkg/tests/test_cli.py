import json
import os

import numpy as np
import pytest

from speedplan.cli import main
from speedplan.generators import hard_final_instance, reference_instance, unreachable_instance
from speedplan.io import ProfileDocument, save_track, track_from_dict
from speedplan.oracle import is_feasible_point


@pytest.fixture
def ref_track(data_dir):
    return os.path.join(data_dir, "reference_track.json")


def write(tmp_path, name, inst):
    path = str(tmp_path / name)
    save_track(inst, path)
    return path


def run_json(capsys, argv):
    code = main(argv + ["--json"])
    return code, json.loads(capsys.readouterr().out)


def test_validate_ok(capsys, ref_track):
    code, out = run_json(capsys, ["validate", ref_track])
    assert code == 0 and out["all_hold"] is True


def test_validate_missing_field(capsys, tmp_path, ref_track):
    doc = json.load(open(ref_track))
    del doc["vehicle"]["M"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["validate", str(bad)]) == 2
    assert "vehicle.M" in capsys.readouterr().out


def test_validate_not_json(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", str(bad)]) == 2


def test_validate_assumption_failure(capsys, tmp_path):
    path = write(tmp_path, "big_h.json", reference_instance().replace(h=50.0))
    assert main(["validate", path]) == 1
    assert "A3: FAILS" in capsys.readouterr().out


def test_check_reference(capsys, ref_track):
    code, out = run_json(capsys, ["check", ref_track])
    assert code == 0 and out["status"] == "Feasible"
    assert out["z"][1] == pytest.approx(23.7435, abs=1e-4)
    assert out["y"][1] == pytest.approx(8.253401361, abs=1e-8)


def test_check_infeasible_witness(capsys, tmp_path):
    path = write(tmp_path, "n2.json", unreachable_instance())
    code, out = run_json(capsys, ["check", path])
    assert code == 1 and out["status"] == "Infeasible" and out["witness_index"] == 2


def test_check_a3_exit(capsys, tmp_path):
    path = write(tmp_path, "big_h.json", reference_instance().replace(h=50.0))
    assert main(["check", path]) == 3
    assert main(["plan", path]) == 3


def test_tighten(capsys, ref_track, tmp_path):
    code, out = run_json(capsys, ["tighten", ref_track])
    assert code == 0 and out["status"] == "Feasible"
    assert out["u"][1] == pytest.approx(23.7435, abs=1e-4)
    path = write(tmp_path, "n2.json", unreachable_instance())
    code, out = run_json(capsys, ["tighten", path])
    assert code == 1 and out["status"] == "Infeasible"


def test_plan_reference_roundtrip(capsys, ref_track, tmp_path):
    out = tmp_path / "p.json"
    prog = tmp_path / "prog.json"
    assert main(["plan", ref_track, "--out", str(out), "--dump-program", str(prog)]) == 0
    doc = ProfileDocument.load(out)
    inst = track_from_dict(doc.track)
    w = np.array(doc.w)
    assert is_feasible_point(w, inst, tol=1e-9)
    np.testing.assert_allclose(doc.v, np.sqrt(2.0 * w), rtol=1e-12)
    assert doc.status == "exact" and doc.exactness["max_residual"] <= 1e-6
    dumped = json.loads(prog.read_text())
    assert {"objective", "equalities", "inequalities", "cones", "scales"} <= set(dumped)


def test_plan_cvxopt_backend(capsys, ref_track):
    assert main(["plan", ref_track, "--backend", "cvxopt"]) == 0


def test_plan_untightened_hard_final_is_inexact(capsys, tmp_path):
    path = write(tmp_path, "hard.json", hard_final_instance(np.random.default_rng(1), n=60))
    code, out = run_json(capsys, ["plan", path, "--no-tighten"])
    assert code == 4 and out["exactness"]["r"] >= 1
    assert main(["plan", path]) == 0


def test_plan_free_final_not_worse(capsys, tmp_path):
    inst = hard_final_instance(np.random.default_rng(2), n=50)
    path = write(tmp_path, "t.json", inst)
    _, fixed = run_json(capsys, ["plan", path])
    _, free = run_json(capsys, ["plan", path, "--free-final"])
    assert free["objective"]["total"] <= fixed["objective"]["total"] + 1e-7


def test_plan_infeasible(capsys, tmp_path):
    path = write(tmp_path, "n2.json", unreachable_instance())
    assert main(["plan", path]) == 1


def test_oracle(capsys, ref_track):
    code, out = run_json(capsys, ["oracle", ref_track, "--grid", "500"])
    assert code == 0 and out["within_bound"] is True
    assert out["gap"] <= out["grid_error_bound"]


def test_gap_demo(capsys, tmp_path):
    code, out = run_json(capsys, ["gap-demo", "--count", "2", "--write-tracks", str(tmp_path)])
    assert code == 0 and out["all_ok"]
    assert all(r["r"] >= 1 and r["gap"] > 1e-4 for r in out["instances"])
    assert len(os.listdir(tmp_path)) == 2


def test_plot(capsys, data_dir, tmp_path):
    svg = tmp_path / "p.svg"
    assert main(["plot", os.path.join(data_dir, "reference_profile.json"), "--svg", str(svg)]) == 0
    golden = open(os.path.join(data_dir, "reference_profile.svg")).read()
    assert svg.read_text() == golden


def test_plot_malformed(capsys, tmp_path, data_dir):
    doc = json.load(open(os.path.join(data_dir, "reference_profile.json")))
    doc["w"] = doc["w"][:-1]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["plot", str(bad), "--svg", str(tmp_path / "x.svg")]) == 2
    assert main(["plot", str(tmp_path / "missing.json"), "--svg", str(tmp_path / "x.svg")]) == 2


def test_global_flags_either_side(capsys, ref_track):
    assert main(["--tol", "1e-6", "--json", "check", ref_track]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "Feasible"
    assert main(["check", ref_track, "--eps", "1e-9", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "Feasible"


@pytest.mark.parametrize("jobs", ["1", "2"])
def test_batch_exit_is_max(capsys, tmp_path, ref_track, jobs):
    bad = write(tmp_path, "n2.json", unreachable_instance())
    outdir = tmp_path / "out"
    code = main(["plan", ref_track, bad, "--jobs", jobs, "--out", str(outdir), "--json"])
    assert code == 1
    items = json.loads(capsys.readouterr().out)
    assert [i["exit_code"] for i in items] == [0, 1]
    assert (outdir / "reference_track.profile.json").exists()


def test_csv_track_with_base(capsys, data_dir):
    argv = ["check", os.path.join(data_dir, "track.csv"), "--base", os.path.join(data_dir, "track_base.json")]
    assert main(argv) == 0
    assert main(argv[:2]) == 2
