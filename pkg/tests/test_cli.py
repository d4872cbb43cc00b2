import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from constlab import boxnorm, cli, parallel
from constlab.boxnorm import FuzzSummary
from constlab.sieve import PrimeTable


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def ap3(tmp_path):
    path = tmp_path / "ap3.json"
    path.write_text(json.dumps({"d": 1, "vectors": [[0], [1], [2]]}))
    return path


def test_sieve_dump(tmp_path, capsys):
    out = tmp_path / "p.bin"
    code, text, _ = run(capsys, "sieve", "--limit", "1e5", "--out", out)
    rep = json.loads(text)
    assert code == 0 and rep["schema"] == 1 and rep["result"]["count"] == 9592
    assert rep["config"]["limit"] == 100000
    assert PrimeTable.load(out).count == 9592


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "sieve", "--limit", "1")[0] == 1
    assert run(capsys, "sieve", "--limit", "1e12")[0] == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1


def test_malformed_shape_names_field(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"d": 1, "vectors": [[0], ["x"]]}))
    code, _, err = run(capsys, "count", "--shape", path, "--limit", 10)
    assert code == 1 and "'vectors'" in err


def test_count_with_hits(ap3, capsys):
    code, text, _ = run(capsys, "count", "--shape", ap3, "--limit", 10, "--list-hits")
    res = json.loads(text)["result"]
    assert code == 0 and res["count"] == 1 and res["hits"] == [{"a": [3], "r": 2}]


def test_count_with_subset_file(tmp_path, capsys):
    shape = tmp_path / "sq.json"
    shape.write_text(json.dumps({"d": 2, "vectors": [[0, 0], [1, 0], [0, 1], [1, 1]]}))
    sub = tmp_path / "a.txt"
    sub.write_text("\n".join(f"{x} {y}" for x in (2, 3, 5, 7) for y in (2, 3, 5, 7)) + "\n")
    code, text, _ = run(capsys, "count", "--shape", shape, "--limit", 7, "--subset", sub)
    assert code == 0 and json.loads(text)["result"]["count"] == 8


def test_wtrick_report(capsys):
    code, text, _ = run(capsys, "wtrick", "--n", "1e5", "--w", 3, "--delta-prime", "1/2", "--dim", 2)
    res = json.loads(text)["result"]
    assert code == 0
    assert (res["W"], res["phi"]) == (6, 2)
    assert len(res["residues"]) == 2 and len(res["weightMeans"]) == 2
    assert res["nPrime"] == 100000 // 12


def test_lf_check_csv(tmp_path, capsys):
    f = tmp_path / "f.json"
    f.write_text(json.dumps({"d": 1, "m": 1, "forms": [[[0], [1]]]}))
    code, text, _ = run(capsys, "lf-check", "--forms", f, "--n", "1e5", "--w", 3, "--kappa", "0.01,0.02",
                        "--lambda", 0.5, "--eps", 0.1)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert code == 0 and list(rows[0]) == ["kappa", "value", "deviation", "terms", "seconds"]
    assert [float(r["kappa"]) for r in rows] == [0.01, 0.02]
    assert all(abs(float(r["value"]) - 1) < 0.5 for r in rows)


def test_lf_check_rejects_duplicate_forms(tmp_path, capsys):
    f = tmp_path / "f.json"
    f.write_text(json.dumps({"d": 1, "m": 2, "forms": [[[1, 0], [1, 0]]]}))
    code, _, err = run(capsys, "lf-check", "--forms", f, "--n", "1e4", "--w", 3)
    assert code == 1 and "coincide" in err


def test_box_norm_and_fuzz(tmp_path, capsys):
    inst = boxnorm.random_instance(np.random.default_rng(1), 2, 3)
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(inst.to_json()))
    code, text, _ = run(capsys, "box-norm", "--instance", path)
    res = json.loads(text)["result"]
    assert code == 0 and res["vonNeumann"]["holds"]
    assert res["fNorm"] == pytest.approx(boxnorm.box_norm(inst, (0, 1)))
    code, text, _ = run(capsys, "von-neumann-fuzz", "--count", 30, "--seed", 4)
    rep = json.loads(text)
    assert code == 0 and rep["seed"] == 4 and rep["result"]["passed"]


def test_fuzz_failure_exits_3(monkeypatch, capsys):
    inst = boxnorm.random_instance(np.random.default_rng(0), 1, 2)
    fake = FuzzSummary(count=1, failures=1, min_slack=-1.0, first_counterexample=inst)
    monkeypatch.setattr(boxnorm, "von_neumann_fuzz", lambda *a, **k: fake)
    code, text, err = run(capsys, "von-neumann-fuzz", "--count", 1)
    assert code == 3 and json.loads(text)["result"]["firstCounterexample"]["n"] == 1


def test_measure(capsys):
    code, text, _ = run(capsys, "measure", "--omega", "0,1;0", "--b0", "(0,0)", "--mode", "superset",
                        "--n", "1e5", "--w", 3, "--kappa", 0.01, "--omega-prime", "0,1;0,1", "--shift", "1,0")
    res = json.loads(text)["result"]
    assert code == 0
    assert 0 < res["value"] <= res["totalMass"]
    assert res["shift"]["withinBound"]
    assert res["compatibility"]["gap"] >= 0


def test_scaling_csv_and_json(ap3, capsys):
    code, text, _ = run(capsys, "scaling", "--shape", ap3, "--grid", "1e3,3e3")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert code == 0 and [int(r["N"]) for r in rows] == [1000, 3000]
    code, text, _ = run(capsys, "scaling", "--shape", ap3, "--grid", "1e3,3e3", "--format", "json")
    assert json.loads(text)["result"]["flatness"] < 3


def test_byte_identical_reports(tmp_path, capsys, monkeypatch):
    out = tmp_path / "r.json"

    def report(*argv):
        run(capsys, *argv, "--out", out)
        return out.read_bytes()

    monkeypatch.setenv("CONSTLAB_THREADS", "1")
    first = report("von-neumann-fuzz", "--count", 25, "--seed", 9)
    monkeypatch.setenv("CONSTLAB_THREADS", "4")
    assert report("von-neumann-fuzz", "--count", 25, "--seed", 9) == first
    first = report("measure", "--omega", "0,1", "--b0", "(0)", "--n", "3e4", "--w", 3)
    assert report("measure", "--omega", "0,1", "--b0", "(0)", "--n", "3e4", "--w", 3) == first


def test_timing_is_opt_in(capsys):
    _, text, _ = run(capsys, "sieve", "--limit", 100)
    assert "wallTime" not in json.loads(text)
    _, text, _ = run(capsys, "sieve", "--limit", 100, "--timing")
    assert json.loads(text)["wallTime"] >= 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "constlab", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "constlab" in res.stdout


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("CONSTLAB_THREADS", "3")
    assert parallel.thread_count() == 3
    monkeypatch.delenv("CONSTLAB_THREADS")
    assert parallel.thread_count() >= 1


def test_map_ordered_is_deterministic():
    items = list(range(50))
    assert parallel.map_ordered(lambda x: x * x, items, threads=4) == [x * x for x in items]
    assert parallel.chunk_ranges(0, 10, 4) == [(0, 3), (4, 7), (8, 10)]
