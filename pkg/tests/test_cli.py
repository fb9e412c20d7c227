import json
import subprocess
import sys

import numpy as np
import pytest

from relicmp.cli import ReportDocument, ingest_csv, main
from relicmp.errors import MissingData, NonRectangular, ParseError


def write(path, rows):
    path.write_text("\n".join(",".join(str(v) for v in r) for r in rows) + "\n")
    return str(path)


@pytest.fixture
def groups(tmp_path, rng):
    chol = np.linalg.cholesky(0.4 * np.ones((4, 4)) + 0.6 * np.eye(4))
    a = np.searchsorted([-1.8, -0.6, 0.6, 1.8], rng.normal(size=(25, 4)) @ chol.T)
    b = np.searchsorted([-1.8, -0.6, 0.6, 1.8], rng.normal(size=(30, 4)) @ chol.T)
    c = b[:, :3]
    return (write(tmp_path / "a.csv", a), write(tmp_path / "b.csv", b), write(tmp_path / "c.csv", c))


def run(capsys, *argv):
    with pytest.raises(SystemExit) as exc:
        main(list(argv))
        raise SystemExit(0)
    out = capsys.readouterr()
    return exc.value.code, out.out, out.err


def test_ingest_basic(tmp_path):
    m = ingest_csv(write(tmp_path / "x.csv", [[0, 1], [1, 0]]))
    np.testing.assert_array_equal(m, [[0, 1], [1, 0]])


def test_ingest_errors(tmp_path):
    p = tmp_path / "gap.csv"
    p.write_text("1,2,3\n4,,6\n7,8,NA\n")
    with pytest.raises(MissingData) as exc:
        ingest_csv(str(p))
    assert exc.value.cells == [(2, 2), (3, 3)]
    assert "(row 2, col 2)" in str(exc.value)
    p.write_text("1,2\n3,4,5\n")
    with pytest.raises(NonRectangular):
        ingest_csv(str(p))
    p.write_text("1,2\n3,x\n")
    with pytest.raises(ParseError, match="row 2, col 2"):
        ingest_csv(str(p))


def test_ingest_group_column(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("grp,i1,i2\nb,1,2\na,3,4\nb,5,6\na,7,8\n")
    g = ingest_csv(str(p), header=True, group_col="grp")
    assert list(g) == ["b", "a"]
    np.testing.assert_array_equal(g["b"], [[1, 2], [5, 6]])
    np.testing.assert_array_equal(g["a"], [[3, 4], [7, 8]])
    same = ingest_csv(str(p), header=True, group_col="1")
    np.testing.assert_array_equal(same["a"], g["a"])
    with pytest.raises(ParseError):
        ingest_csv(str(p), header=True, group_col="nope")


def test_compare_report(groups, capsys):
    code, out, err = run(capsys, "compare", groups[0], groups[1], "--method", "permutation",
                         "--replicates", "500", "--seed", "42", "--no-timestamp")
    assert code == 0
    doc = json.loads(out)
    res = doc["results"][0]
    assert res["method"] == "permutation" and res["seed"] == 42
    assert {"p_right", "p_left", "p_two", "ci", "alpha_estimates"} <= set(res)
    assert [g["n"] for g in doc["groups"]] == [25, 30]
    assert doc["timestamp"] is None
    assert ReportDocument.from_json(out).to_json() == out


def test_default_method_and_seed(groups, capsys):
    code, out, err = run(capsys, "compare", groups[0], groups[2], "--replicates", "200")
    assert code == 0
    assert "method: bootstrap" in err and "seed:" in err
    assert json.loads(out)["results"][0]["method"] == "bootstrap"
    assert json.loads(out)["timestamp"] is not None


def test_permutation_with_unequal_items_exits_2(groups, capsys):
    code, out, err = run(capsys, "compare", groups[0], groups[2], "--method", "permutation", "--seed", "1")
    assert code == 2
    reason = json.loads(err.strip().splitlines()[-1])
    assert reason["error"] == "UnequalItemCounts" and "equal number of items" in reason["message"]


def test_io_errors_exit_1(groups, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,\n")
    code, _, err = run(capsys, "compare", str(bad), groups[1], "--seed", "1")
    assert code == 1 and json.loads(err)["error"] == "MissingData"
    code, _, err = run(capsys, "compare", str(tmp_path / "missing.csv"), groups[1])
    assert code == 1 and json.loads(err)["error"] == "IOError"
    code, _, err = run(capsys, "compare", groups[0], "--bogus")
    assert code == 1 and len(err.strip().splitlines()) == 1


def test_statistical_error_exits_2(tmp_path, capsys):
    a = write(tmp_path / "a.csv", [[0, 0], [1, 1], [2, 2]])
    b = write(tmp_path / "b.csv", [[0, 0], [2, 2], [4, 4]])
    code, _, err = run(capsys, "compare", a, b, "--method", "asymptotic")
    assert code == 2 and json.loads(err)["error"] == "ZeroVariance"


def test_csv_format_and_out(groups, tmp_path, capsys):
    out = tmp_path / "r.csv"
    code, stdout, _ = run(capsys, "compare", groups[0], groups[1], "--method", "asymptotic",
                          "--format", "csv", "--out", str(out))
    assert code == 0 and stdout == ""
    header, row = out.read_text().splitlines()
    assert header.startswith("statistic,method") and "ci.lower" in header
    assert row.split(",")[1] == "asymptotic"


def test_other_subcommands(groups, tmp_path, capsys, rng):
    third = write(tmp_path / "third.csv", np.loadtxt(groups[0], delimiter=",").astype(int)[:20])
    code, out, _ = run(capsys, "ksample", *groups[:2], third, "--posthoc", "--adjust", "bonferroni",
                       "--no-timestamp", "--seed", "1", "--replicates", "100")
    assert code == 0 and len(json.loads(out)["results"]) == 4
    x = rng.normal(size=(40, 6)) + rng.normal(size=(40, 1))
    paired = write(tmp_path / "p.csv", x.round(6))
    code, out, _ = run(capsys, "paired", paired, "--k1", "3", "--method", "bootstrap", "--seed", "2",
                       "--replicates", "300", "--no-timestamp")
    assert code == 0 and json.loads(out)["results"][0]["method"] == "bootstrap"
    code, out, _ = run(capsys, "coefficients", groups[0], "--split", "1,2", "--no-timestamp")
    res = json.loads(out)["results"][0]
    assert res["lambda3"] is not None and res["lambda6"] is None
    code, _, err = run(capsys, "compare", groups[0], groups[1], "--coefficient", "lambda6", "--method", "asymptotic")
    assert code == 2 and json.loads(err)["error"] == "MissingErrorVariances"
    code, _, err = run(capsys, "compare", groups[0], groups[0], "--method", "asymptotic")
    assert code == 1 and json.loads(err)["error"] == "InputError"


def test_simulate(tmp_path, capsys):
    out = tmp_path / "rates.csv"
    svg = tmp_path / "rates.svg"
    code, _, _ = run(capsys, "simulate", "--grid", "smoke", "--seed", "7", "--trials", "5",
                     "--replicates", "20", "--out", str(out), "--plot", str(svg))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("condition_id,method,trials,rejections,rate,half_width")
    assert len(lines) == 1 + 2 * 3
    assert svg.exists()


def test_module_entry_point(groups):
    proc = subprocess.run([sys.executable, "-m", "relicmp", "compare", groups[0], groups[1], "--method",
                           "asymptotic", "--no-timestamp"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"][0]["method"] == "asymptotic"


@pytest.mark.parametrize("command", [
    ["compare", "{a}", "{b}", "--method", "permutation", "--replicates", "1500", "--seed", "42"],
    ["compare", "{a}", "{c}", "--method", "bootstrap", "--replicates", "1500", "--seed", "5"],
    ["simulate", "--grid", "smoke", "--trials", "8", "--replicates", "40", "--seed", "9"],
])
def test_byte_identical_across_workers(command, groups, capsys):
    argv = [c.format(a=groups[0], b=groups[1], c=groups[2]) for c in command]
    if argv[0] != "simulate":
        argv.append("--no-timestamp")
    outputs = {run(capsys, *argv, "--workers", str(w))[1] for w in (1, 8)}
    outputs.add(run(capsys, *argv, "--workers", "1")[1])
    assert len(outputs) == 1
