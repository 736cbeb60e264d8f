import csv
import io
import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from gcpverify.cli import CSV_COLUMNS, EXIT_CAP, EXIT_INPUT, main
from gcpverify.cuts import read_cuts
from gcpverify.model import InputBox, Network, Spec, save_problem

from conftest import DATA


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out)


def numbers(doc):
    if isinstance(doc, dict):
        for v in doc.values():
            yield from numbers(v)
    elif isinstance(doc, list):
        for v in doc:
            yield from numbers(v)
    elif isinstance(doc, (int, float)) and not isinstance(doc, bool):
        yield doc


@pytest.fixture
def wide_problem(tmp_path):
    # 24 unstable neurons: beyond the enumeration cap
    n = 24
    w1 = np.ones((n, 1))
    b1 = np.linspace(-0.9, 0.9, n)
    net = Network.from_arrays([w1, np.ones((1, n))], [b1, [0.5]])
    path = tmp_path / "wide.json"
    save_problem(path, net, InputBox([0.0], 1.0), Spec(np.ones(1), 0.0))
    return path


@pytest.mark.parametrize("name, code", [("identity", 0), ("stable", 0), ("relu_shift", 1), ("toy2", 0)])
def test_verify_exit_codes(capsys, name, code):
    got, doc = run_json(capsys, "verify", DATA / f"{name}.json")
    assert got == code
    assert doc["verdict"] == {0: "verified", 1: "falsified"}[code]


def test_falsified_report_has_counterexample(capsys):
    _, doc = run_json(capsys, "verify", DATA / "relu_shift.json")
    x = np.array(doc["counterexample"])
    assert np.all(np.abs(x) <= 1.0)
    assert doc["counterexample_value"] < 0


def test_report_schema_and_finite_numbers(capsys):
    _, doc = run_json(capsys, "verify", DATA / "hard_toy.json", "--cuts", "internal_gomory", "--cut-sync",
                      "--oracle")
    for key in ("problem", "verdict", "bound", "counterexample", "root_bounds", "unstable", "domains",
                "leaf_lps", "cuts_used", "reason", "config", "oracle", "seconds"):
        assert key in doc
    assert set(doc["root_bounds"]) == {"ibp", "crown", "gcp_nocut", "gcp_cut"}
    assert set(doc["seconds"]) >= {"bab", "report"}
    assert all(math.isfinite(v) for v in numbers(doc))
    rb, orc = doc["root_bounds"], doc["oracle"]
    # reported bounds respect the oracle chain
    assert rb["crown"] <= rb["gcp_nocut"] + 1e-9
    assert rb["gcp_nocut"] <= orc["f_lp"]["value"] + 1e-6
    assert rb["gcp_cut"] <= orc["f_lp_cut"]["value"] + 1e-6
    assert orc["f_lp"]["value"] <= orc["f_lp_cut"]["value"] + 1e-9 <= orc["f_star"]["value"] + 2e-6
    assert orc["f_lp"]["value"] == pytest.approx(orc["f_lp_planet"]["value"], abs=1e-6)


def test_hard_toy_cut_run_needs_no_more_domains(capsys):
    _, plain = run_json(capsys, "verify", DATA / "hard_toy.json", "--cuts", "none")
    _, cut = run_json(capsys, "verify", DATA / "hard_toy.json", "--cuts", "internal_gomory", "--cut-sync")
    assert plain["verdict"] == cut["verdict"] == "verified"
    assert cut["domains"] <= plain["domains"]


def test_oracle_examples(capsys):
    code, doc = run_json(capsys, "oracle", DATA / "relu_shift.json")
    assert code == 0
    assert doc["f_star"]["value"] == pytest.approx(-0.5) and doc["f_lp"]["value"] == pytest.approx(-0.5)
    _, doc = run_json(capsys, "oracle", DATA / "stable.json")
    assert doc["f_star"]["value"] == pytest.approx(doc["f_lp"]["value"], abs=1e-9)


def test_oracle_chain_on_toy2_with_cut_file(capsys):
    code, doc = run_json(capsys, "oracle", DATA / "toy2.json", "--cuts", f"file:{DATA / 'toy2_cuts.json'}")
    assert code == 0
    lp, lp_cut, fstar = (doc[k]["value"] for k in ("f_lp", "f_lp_cut", "f_star"))
    assert all(doc[k]["status"] == "optimal" for k in ("f_lp", "f_lp_planet", "f_lp_cut", "f_star"))
    assert lp <= lp_cut <= fstar + 1e-7
    assert lp_cut > lp + 1e-3


def test_oracle_cap_exceeded(capsys, wide_problem):
    code, out, err = run(capsys, "oracle", wide_problem)
    assert code == EXIT_CAP and out == "" and "cap" in err


def test_verify_oracle_beyond_cap_reports_status(capsys, wide_problem):
    code, doc = run_json(capsys, "verify", wide_problem, "--oracle", "--omit-timing")
    assert code in (0, 1, 2)
    assert doc["oracle"]["f_star"] == {"value": None, "status": "cap_exceeded"}


def test_input_errors(capsys, tmp_path):
    code, out, err = run(capsys, "verify", tmp_path / "missing.json")
    assert code == EXIT_INPUT and out == "" and err
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert run(capsys, "verify", bad)[0] == EXIT_INPUT
    assert run(capsys, "verify", DATA / "toy2.json", "--cuts", f"file:{tmp_path / 'nope.json'}")[0] == EXIT_INPUT
    assert run(capsys, "verify", DATA / "toy2.json", "--cuts", f"file:{bad}")[0] == EXIT_INPUT
    assert run(capsys, "verify", DATA / "toy2.json", "--cuts", "sometimes")[0] == EXIT_INPUT


def test_invalid_file_cut_is_dropped(capsys, tmp_path):
    # z <= 0 on an unstable neuron removes integer-feasible points
    cut_file = tmp_path / "bad_cuts.json"
    cut_file.write_text(json.dumps([{"terms": [{"layer": 1, "kind": "z", "neuron": 0, "coef": 1.0}],
                                     "rhs": 0.0}]))
    code, doc = run_json(capsys, "verify", DATA / "toy2.json", "--cuts", f"file:{cut_file}")
    assert code == 0 and doc["cuts_used"] == 0


def test_cuts_command(capsys, tmp_path):
    out = tmp_path / "toy2.cuts.json"
    code, doc = run_json(capsys, "cuts", DATA / "toy2.json", "--out", out)
    assert code == 0
    assert doc["written"] >= 1 and doc["written"] == len(doc["cuts"])
    assert all(c["valid"] is True for c in doc["cuts"])
    for c in doc["cuts"]:
        assert set(c) == {"variables", "layers", "multi_layer", "has_z", "rhs", "valid"}
        assert c["multi_layer"] == (len(c["layers"]) > 1)
    assert len(read_cuts(out)) == doc["written"]


def test_cuts_default_path_and_zero_rounds(capsys, tmp_path):
    problem = tmp_path / "toy2.json"
    shutil.copy(DATA / "toy2.json", problem)
    code, doc = run_json(capsys, "cuts", problem, "--rounds", "0")
    assert code == 0 and doc["written"] == 0
    assert doc["cut_file"] == str(tmp_path / "toy2.cuts.json")
    assert len(read_cuts(tmp_path / "toy2.cuts.json")) == 0


def test_cuts_on_integral_lp(capsys, tmp_path):
    code, doc = run_json(capsys, "cuts", DATA / "stable.json", "--out", tmp_path / "s.json")
    assert code == 0 and doc["generated"] == doc["written"] == 0 and doc["cuts"] == []


def test_emit_lp(capsys, tmp_path):
    path = tmp_path / "root.lp"
    code, _ = run_json(capsys, "verify", DATA / "toy2.json", "--cuts", f"file:{DATA / 'toy2_cuts.json'}",
                       "--emit-lp", path)
    text = path.read_text()
    assert code == 0
    assert "Minimize" in text and "Subject To" in text and text.rstrip().endswith("End")
    # the file cut shows up as an extra row over the post-activation variables
    assert text.count("post_1_0") >= 3


def bench_rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_bench_empty_directory(capsys, tmp_path):
    code, out, _ = run(capsys, "bench", tmp_path)
    assert code == 0 and bench_rows(out) == [list(CSV_COLUMNS)]


def test_bench_three_fixtures(capsys, caplog, tmp_path):
    for name in ("identity", "relu_shift", "toy2"):
        shutil.copy(DATA / f"{name}.json", tmp_path)
    (tmp_path / "junk.json").write_text("[1, 2")
    code, out, _ = run(capsys, "bench", tmp_path, "--omit-timing")
    rows = bench_rows(out)
    assert code == 0 and rows[0] == list(CSV_COLUMNS) and len(rows) == 10
    assert "junk.json" in caplog.text
    assert {r[1] for r in rows[1:]} == {"crown", "gcp_nocut", "gcp_cut"}


def test_bench_suite_cuts_never_need_more_domains(capsys):
    code, out, _ = run(capsys, "bench", DATA / "suite")
    rows = bench_rows(out)[1:]
    by = {(r[0], r[1]): r for r in rows}
    problems = {r[0] for r in rows}
    assert len(rows) == 3 * len(problems) >= 24
    for p in problems:
        nocut, cut = by[(p, "gcp_nocut")], by[(p, "gcp_cut")]
        assert nocut[2] == cut[2]
        if cut[2] == "verified":
            assert int(cut[4]) <= int(nocut[4])


def test_reports_are_byte_identical(capsys):
    args = ("verify", DATA / "hard_toy.json", "--cuts", "none", "--omit-timing", "--seed", "7")
    a = run(capsys, *args)
    b = run(capsys, *args)
    assert a[0] == b[0] and a[1] == b[1]


def test_module_entry_point_separates_streams():
    proc = subprocess.run([sys.executable, "-m", "gcpverify", "verify", str(DATA / "identity.json"), "-v",
                           "--omit-timing"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["verdict"] == "verified"
    assert "INFO" in proc.stderr
