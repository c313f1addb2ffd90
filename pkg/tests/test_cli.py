import json

import pytest

from kinetic_spaces.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and "backend" in out


def test_no_command(capsys):
    assert run(capsys)[0] == 2


def test_structure_check(capsys):
    code, out, _ = run(capsys, "structure", "check", "langevin1")
    assert code == 0
    assert "homogeneous_dimension = 6" in out and "hormander = yes" in out


def test_structure_check_file(capsys, tmp_path):
    p = tmp_path / "op.json"
    p.write_text(json.dumps({"layer_dims": [1, 1], "blocks": [[[0.0]]]}))
    code, _, err = run(capsys, "structure", "check", str(p))
    assert code == 2 and "error" in err


def test_unknown_operator(capsys):
    code, _, err = run(capsys, "structure", "check", "no-such-operator")
    assert code == 2 and "error" in err


def test_kernel_eval(capsys):
    code, out, _ = run(capsys, "kernel", "eval", "langevin1", "--t", "1", "--x", "0.1", "0.2")
    assert code == 0
    gam = float(out.splitlines()[0].split("=")[1])
    assert 0 < gam < 1


def test_kernel_bounds_csv(capsys, tmp_path):
    csv = tmp_path / "k.csv"
    code, out, _ = run(capsys, "kernel", "bounds", "langevin1", "--samples", "8", "--csv", str(csv))
    assert code == 0 and "sup" in out
    assert csv.read_text().splitlines()[0] == "t,x1,x2,gamma,y_gamma,hom_norm,bound_ratio"


def test_norm_compute(capsys, tmp_path):
    csv = tmp_path / "n.csv"
    code, out, _ = run(capsys, "norm", "compute", "langevin1", "gaussian", "--n", "1", "--resolution", "17",
                       "--variant", "full", "--holder", "0.5", "--csv", str(csv))
    assert code == 0 and out
    assert csv.read_text().count("\n") >= 2


def test_bad_function(capsys):
    code, _, err = run(capsys, "norm", "compute", "langevin1", "sombrero")
    assert code == 2 and "unknown function kind" in err


def test_taylor_fit(capsys, tmp_path):
    csv = tmp_path / "t.csv"
    code, out, _ = run(capsys, "taylor", "fit", "langevin1", "gaussian", "--n", "1", "--resolution", "17",
                       "--scales", "0.02,0.04,0.08", "--csv", str(csv))
    assert code == 0 and "slope=" in out
    assert csv.read_text().startswith("scale,value,used")


def test_mollify_rate(capsys):
    code, out, err = run(capsys, "mollify", "rate", "langevin1", "gaussian", "--n", "1", "--eps-grid",
                         "0.1,0.2,0.4,0.8")
    assert code == 0 and out.startswith("scale,value,used") and "slope=" in err


def test_mollify_inverse_requires_m_gt_n(capsys):
    code, _, err = run(capsys, "mollify", "rate", "langevin1", "gaussian", "--n", "2", "--m", "1")
    assert code == 2


def test_lorentz(capsys):
    code, out, _ = run(capsys, "lorentz", "gaussian", "--p", "2", "--q", "2", "--resolution", "41")
    assert code == 0
    lines = dict(line.split(" = ") for line in out.strip().splitlines())
    assert float(lines["L^(2,2)"]) == pytest.approx(float(lines["closed form"]), rel=1e-4)


def test_tartar(capsys):
    code, out, _ = run(capsys, "tartar", "gaussian", "--pstar", "3", "--k-min", "-5", "--k-max", "2",
                       "--resolution", "29")
    assert code == 0 and out.startswith("k,a_k,gap,scaled_gap")


def test_grid_sample_and_slice(capsys, tmp_path):
    f = tmp_path / "g.ksg"
    code, out, _ = run(capsys, "grid", "sample", "langevin1", "gaussian", "--n", "9", "--out", str(f))
    assert code == 0 and "9x9x9" in out
    code, out, _ = run(capsys, "grid", "slice", str(f), "--at", "0,*,0")
    assert code == 0
    rows = out.strip().splitlines()
    assert len(rows) == 10


def test_grid_slice_missing(capsys, tmp_path):
    assert run(capsys, "grid", "slice", str(tmp_path / "none"), "--at", "*,0,0")[0] == 2


def test_lab_list(capsys):
    code, out, _ = run(capsys, "lab", "list-experiments")
    assert code == 0 and "tartar" in out and "scaling" in out


def test_lab_run_and_report(capsys, tmp_path):
    cfg = tmp_path / "lab.json"
    cfg.write_text(json.dumps({"output": str(tmp_path / "from-file"),
                               "experiments": [{"experiment": "structure"}, {"experiment": "lorentz"}]}))
    code, out, _ = run(capsys, "lab", "run", str(cfg))
    assert code == 0 and "structure: PASS" in out
    assert (tmp_path / "from-file" / "summary.json").exists()
    code, out, _ = run(capsys, "lab", "report", str(tmp_path / "from-file"))
    assert code == 0 and "lorentz: PASS" in out


def test_lab_run_bad_config(capsys, tmp_path):
    cfg = tmp_path / "lab.json"
    cfg.write_text(json.dumps({"experiment": "nope"}))
    code, _, err = run(capsys, "lab", "run", str(cfg), "--output", str(tmp_path / "o"))
    assert code == 2 and "unknown experiment" in err
