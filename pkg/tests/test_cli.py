import json
from importlib import resources

import jsonschema
import pytest

from felogit import __version__
from felogit.cli import main
from felogit.montecarlo import DgpConfig, generate
from felogit.panel import write_panel


def schema(name):
    return json.loads(resources.files("felogit").joinpath("schemas", name).read_text())


@pytest.fixture(scope="module")
def panel_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "d.csv"
    write_panel(generate(DgpConfig(2, 2, 400, 1.0, seed=2, reps=1)), path)
    return path


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_qbounds(capsys):
    code, out, _ = run(capsys, "moments", "qbounds", "--m", "1,0.5,0.3")
    assert code == 0
    res = json.loads(out)
    jsonschema.validate(res, schema("qbounds.json"))
    assert res["q_lower"] == pytest.approx(0.18, abs=1e-12)
    assert res["q_upper"] == pytest.approx(0.22, abs=1e-12)


def test_qbounds_outside_space(capsys):
    code, out, err = run(capsys, "moments", "qbounds", "--m", "1,0.5,0.6")
    assert code == 1 and out == "" and "error" in err


def test_project(capsys):
    code, out, _ = run(capsys, "moments", "project", "--m", "1,0.5,0.2", "--n", "1000")
    res = json.loads(out)
    jsonschema.validate(res, schema("project.json"))
    assert res["m_hat"] == pytest.approx([1, 0.5, 0.25]) and res["I_hat"] == 1


def test_fit_chebyshev(capsys, panel_csv):
    code, out, _ = run(capsys, "fit", "--input", str(panel_csv), "--effect", "x1", "--method", "chebyshev", "--ci", "2")
    assert code == 0
    res = json.loads(out)
    jsonschema.validate(res, schema("fit_chebyshev.json"))
    assert res["ci"]["lo"] <= res["delta_hat"] <= res["ci"]["hi"]


def test_fit_chebyshev_ci3(capsys, panel_csv):
    code, out, _ = run(capsys, "fit", "--input", str(panel_csv), "--ci", "3", "--gamma", "0.01", "--delta", "0.04")
    res = json.loads(out)
    jsonschema.validate(res, schema("fit_chebyshev.json"))
    assert res["ci"]["method"] == "CI3" and res["ci"]["level"] == pytest.approx(0.95)


def test_fit_bounds_with_dump(capsys, panel_csv, tmp_path):
    dump = tmp_path / "w.csv"
    out_json = tmp_path / "fit.json"
    code, out, _ = run(capsys, "fit", "--input", str(panel_csv), "--method", "bounds", "--ci", "1",
                       "--level", "0.9", "--dump-weights", str(dump), "--out", str(out_json))
    assert code == 0 and out == ""
    res = json.loads(out_json.read_text())
    jsonschema.validate(res, schema("fit_bounds.json"))
    assert res["lower"] <= res["upper"] and res["ci"]["level"] == pytest.approx(0.9)
    assert len(dump.read_text().splitlines()) == res["n"] + 1


def test_fit_bad_combination(capsys, panel_csv):
    code, _, err = run(capsys, "fit", "--input", str(panel_csv), "--method", "bounds", "--ci", "2")
    assert code == 1 and "pairs" in err


def test_fit_missing_file(capsys, tmp_path):
    code, _, _ = run(capsys, "fit", "--input", str(tmp_path / "none.csv"))
    assert code == 1


def test_fit_bad_level(capsys, panel_csv):
    code, _, _ = run(capsys, "fit", "--input", str(panel_csv), "--level", "0.3")
    assert code == 1


def test_fit_numeric_failure(capsys, tmp_path):
    path = tmp_path / "stay.csv"
    path.write_text("id,t,y,x1\n" + "".join(f"{i},{t},{i % 2},{(i * 7 % 5) / 5}\n" for i in range(30) for t in (1, 2)))
    code, out, err = run(capsys, "fit", "--input", str(path))
    assert code == 2 and out == "" and "numerical" in err


def test_unknown_flag(capsys):
    code, out, err = run(capsys, "fit", "--bogus")
    assert code == 1 and "usage" in err


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and __version__ in out


def test_simulate_deterministic(capsys, tmp_path):
    args = ["simulate", "--dgp", "1", "--T", "2", "--n", "250", "--reps", "10", "--seed", "7"]
    assert main(["--threads", "1", *args, "--out", str(tmp_path / "a.csv")]) == 0
    assert main([*args, "--out", str(tmp_path / "b.csv")]) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert a.startswith(b"dgp,T,n,method,stat,value\n")


def test_simulate_stdout(capsys):
    code, out, _ = run(capsys, "simulate", "--n", "150", "--reps", "2", "--methods", "lpm", "--threads", "1")
    assert code == 0 and out.splitlines()[0] == "dgp,T,n,method,stat,value"


def test_failed_write_leaves_no_file(capsys, tmp_path):
    target = tmp_path / "missing_dir" / "out.json"
    code, _, _ = run(capsys, "moments", "qbounds", "--m", "1,0.5,0.3", "--out", str(target))
    assert code != 0 and not target.exists()
