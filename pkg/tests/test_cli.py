import json
import shutil
import subprocess
import sys

import pytest

from ibrsc.cli import EXIT_INPUT, EXIT_NONCONV, EXIT_OK, main
from ibrsc.corpus import data_path


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def copy(work, name):
    dst = work / name
    shutil.copy(data_path(name), dst)
    return str(dst)


def test_validate_ok(work, capsys):
    assert main(["validate", copy(work, "feeder34.json")]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "OK"


def test_validate_reports_broken_network(work, capsys):
    p = work / "broken.json"
    doc = json.loads(data_path("two_bus.json").read_text())
    doc["sources"] = []
    p.write_text(json.dumps(doc))
    assert main(["validate", str(p)]) == EXIT_INPUT
    assert "no-reference-source" in capsys.readouterr().err


def test_missing_file(work, capsys):
    assert main(["validate", "nope.json"]) == EXIT_INPUT
    assert "nope.json" in capsys.readouterr().err


def test_bad_arguments(work):
    assert main(["sc", copy(work, "two_bus.json"), "--bus", "2", "--kind", "XX"]) == EXIT_INPUT


def test_unknown_fault_bus(work, capsys):
    assert main(["sc", copy(work, "two_bus.json"), "--bus", "9", "--kind", "AG"]) == EXIT_INPUT
    assert "'9'" in capsys.readouterr().err


def test_pf_writes_result(work, capsys):
    assert main(["pf", copy(work, "reduced_gfl.json")]) == EXIT_OK
    doc = json.loads((work / "reduced_gfl.pf.json").read_text())
    assert doc["converged"] is True
    assert "wplv" in capsys.readouterr().out


def test_sc_single_phase_fault(work, capsys):
    assert main(["sc", copy(work, "reduced_gfl.json"), "--bus", "3", "--kind", "AG"]) == EXIT_OK
    out = capsys.readouterr().out
    peak = max(float(ln.split()[1]) for ln in out.splitlines() if ln.split()[:1] in (["i_a"], ["i_b"], ["i_c"]))
    assert peak == pytest.approx(1.1, abs=5e-4)
    assert (work / "reduced_gfl.sc.json").exists() and (work / "reduced_gfl.trace.csv").exists()


def test_sweep_all_converge(work, capsys):
    net = copy(work, "reduced_gfl.json")
    scn = copy(work, "reduced_gfl_faults.scenario.json")
    assert main(["sweep", net, scn, "--out-dir", "out"]) == EXIT_OK
    assert {p.name for p in (work / "out").iterdir()} == {"bundle.json", "tables.txt", "trace.csv"}
    assert capsys.readouterr().out.count("converged") == 4


def test_sweep_stressed_exits_nonzero_with_outputs(work, capsys):
    net = copy(work, "all_gfl_stressed.json")
    scn = copy(work, "all_gfl_stressed.scenario.json")
    assert main(["sweep", net, scn, "--out-dir", "out"]) == EXIT_NONCONV
    trace = (work / "out" / "trace.csv").read_text().splitlines()
    assert len(trace) > 1
    bundle = json.loads((work / "out" / "bundle.json").read_text())
    assert any(not r["converged"] for r in bundle["results"])
    assert "FAILED" in capsys.readouterr().out


def test_console_script(work):
    r = subprocess.run([sys.executable, "-m", "ibrsc.cli", "validate", copy(work, "two_bus.json")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "OK"
