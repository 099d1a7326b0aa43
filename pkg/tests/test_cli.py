import json
import subprocess
import sys

import jsonschema
import pytest

from modelgeom.cli import main
from modelgeom.serialize import load_schema

SPLICED = ["--family", "spliced-exp-power", "--a", "1", "--p", "3", "--t0", "1"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, schema, *argv):
    code, out, err = run(capsys, *argv)
    data = json.loads(out)
    jsonschema.validate(data, load_schema(schema))
    return code, data


@pytest.fixture(scope="module")
def short_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("tab") / "short.csv"
    rows = ["t,sigma,dsigma"] + [f"{0.1 * i!r},{0.1 * i!r},1.0" for i in range(51)]
    path.write_text("\n".join(rows) + "\n")
    return path


def test_classify_euclidean(capsys):
    code, d = run_json(capsys, "classify", "classify", "-m", "2", "--family", "euclidean")
    assert code == 0
    assert (d["parabolic"], d["stochastically_complete"], d["l1_liouville"]) == ("yes", "yes", "yes")


def test_classify_spliced(capsys):
    code, d = run_json(capsys, "classify", "classify", "-m", "2", *SPLICED)
    assert code == 0
    assert d["stochastically_complete"] == "no" and d["l1_liouville"] == "no"
    assert d["green_mass"]["verdict"] == "convergent"


def test_classify_short_table_is_inconclusive(capsys, short_csv):
    code, d = run_json(capsys, "classify", "classify", "-m", "2", "--family", "tabulated",
                       "--file", str(short_csv))
    assert code == 10
    assert "unknown" in (d["parabolic"], d["stochastically_complete"], d["l1_liouville"])


def test_exit_time_ball(capsys):
    code, d = run_json(capsys, "exit_time", "exit-time", "-m", "3", "--family", "euclidean",
                       "--r", "0", "--R", "1")
    assert code == 0
    assert d["F_R"] == pytest.approx(1 / 6, rel=1e-12)


def test_exit_time_global(capsys):
    code, d = run_json(capsys, "exit_time", "exit-time", "-m", "2", *SPLICED, "--global", "--r", "1")
    assert code == 0
    assert d["F"]["verdict"] == "convergent"
    assert d["conclusion"].startswith("NOT L1-Liouville")


@pytest.mark.parametrize("argv", [
    ["exit-time", "-m", "3", "--r", "2", "--R", "1"],
    ["exit-time", "-m", "3"],
    ["classify"],
    ["classify", "-m", "2", "--family", "nope"],
    ["classify", "-m", "2", "--family", "hyperbolic", "--k", "-1"],
    ["minimal", "--G", "cubic:3"],
    ["simulate", "-m", "2", "--r0", "2", "--R", "1"],
    ["simulate", "-m", "2", "--explosion", "--check"],
    ["example", "two-end", "--sigma1", "hyperbolic:q=1"],
])
def test_usage_errors(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert err.strip()


def test_simulate_check(capsys):
    code, d = run_json(capsys, "simulate", "simulate", "-m", "3", "--family", "euclidean", "--r0", "0",
                       "--R", "1", "--paths", "20000", "--seed", "42", "--check")
    assert code == 0
    assert d["check"]["pass"] is True


def test_simulate_check_fails_outside_band(capsys):
    # a coarse step and a pole guard the size of the ball bias the mean far outside the band
    code, d = run_json(capsys, "simulate", "simulate", "-m", "3", "--family", "euclidean", "--r0", "0",
                       "--R", "1", "--paths", "20000", "--h", "0.05", "--eps", "0.5", "--check")
    assert code == 1
    assert d["check"]["pass"] is False


def test_simulate_explosion(capsys):
    code, d = run_json(capsys, "explosion", "simulate", "-m", "2", *SPLICED, "--r0", "1",
                       "--explosion", "--cap", "50", "--T", "10", "--paths", "2000")
    assert code == 0
    assert d["fraction"] >= 0.99


def test_simulate_trace(capsys, tmp_path):
    trace = tmp_path / "t.csv"
    code, _ = run_json(capsys, "simulate", "simulate", "-m", "2", "--R", "0.5", "--paths", "10",
                       "--h", "1e-3", "--trace", str(trace), "--trace-paths", "2")
    assert code == 0
    assert trace.read_text().startswith("path_index,step,t,r\n")


def _cli(*argv):
    return subprocess.run([sys.executable, "-m", "modelgeom", *argv], capture_output=True)


def test_byte_identical_repeat_runs():
    argv = ["simulate", "-m", "2", "--family", "hyperbolic", "--R", "1", "--paths", "3000", "--seed", "7"]
    a, b = _cli(*argv), _cli(*argv)
    assert a.returncode == b.returncode == 0
    assert a.stdout == b.stdout
    c = _cli(*argv[:-1], "8")
    assert c.stdout != a.stdout


@pytest.fixture(scope="module")
def one_end(tmp_path_factory):
    csv_path = tmp_path_factory.mktemp("one") / "sector.csv"
    code = main(["example", "one-end", *SPLICED, "--sector-csv", str(csv_path),
                 "--output", str(csv_path.with_suffix(".json"))])
    return code, json.loads(csv_path.with_suffix(".json").read_text()), csv_path.read_text()


def test_example_one_end(one_end):
    code, d, csv_text = one_end
    jsonschema.validate(d, load_schema("one_end"))
    assert code == 0
    assert d["certificate"]["min_value"] >= 0.35355339
    assert d["sector_mass_verdict"]["verdict"] == "divergent"
    assert csv_text.splitlines()[0] == "R_cut,mass,lower_bound"
    assert len(csv_text.splitlines()) == 4


def test_example_two_end(capsys, short_csv):
    code, d = run_json(capsys, "two_end", "example", "two-end", "--sigma1", "euclidean",
                       "--sigma2", "spliced-exp-power:a=1,p=3,t0=1")
    assert code == 0 and "hold" in d["conclusion"]
    code, d = run_json(capsys, "two_end", "example", "two-end", "--sigma1", "euclidean",
                       "--sigma2", "euclidean")
    assert code == 1 and "fail" in d["conclusion"]
    code, d = run_json(capsys, "two_end", "example", "two-end", "--sigma1", f"tabulated:{short_csv}",
                       "--sigma2", "spliced-exp-power")
    assert code == 10


@pytest.mark.parametrize("argv,expected", [
    (["--G", "const:0", "-m", "3"], 1),
    (["--G", "const:1", "-m", "2"], 1),
    (["--G", "poly-sq:3t^2", "-m", "2", "--tmax", "12"], 0),
])
def test_minimal(capsys, argv, expected):
    code, d = run_json(capsys, "minimal", "minimal", *argv)
    assert code == expected
    if expected == 0:
        assert d["conclusion"] == "Sigma not L1-Liouville (under theorem hypotheses)"


@pytest.mark.parametrize("argv", [[], ["classify"], ["exit-time"], ["simulate"], ["minimal"],
                                  ["example", "one-end"], ["example", "two-end"]])
def test_help_lists_defaults(capsys, argv):
    code, out, _ = run(capsys, *argv, "--help")
    assert code == 0
    assert "default" in out
    if argv == ["simulate"]:
        for text in ("100000", "0.0001", "50.0", "10.0", "0.001"):
            assert text in out


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[model]\nfamily = hyperbolic\nk = 2.0\n[exit]\nR = 1.0\n")
    code, d = run_json(capsys, "exit_time", "exit-time", "-m", "2", "--config", str(cfg))
    assert code == 0
    assert d["model"]["family"] == "hyperbolic" and d["model"]["k"] == 2.0
    code, d = run_json(capsys, "exit_time", "exit-time", "-m", "2", "--config", str(cfg), "--k", "1.0")
    assert d["model"]["k"] == 1.0
    assert d["R"] == 1.0 and d["r"] == 0.0


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[model]\nfamilly = hyperbolic\n")
    code, _, err = run(capsys, "classify", "-m", "2", "--config", str(cfg))
    assert code == 2
    assert "familly" in err


def test_table_and_csv_formats(capsys):
    code, out, _ = run(capsys, "classify", "-m", "2", "--family", "hyperbolic", "--format", "table")
    assert code == 0
    assert any(line.startswith("parabolic") and line.rstrip().endswith("no") for line in out.splitlines())
    code, out, _ = run(capsys, "classify", "-m", "2", "--family", "hyperbolic", "--format", "csv")
    header, row = out.splitlines()
    assert header.split(",")[0] == "parabolic" and row.split(",")[0] == "no"
