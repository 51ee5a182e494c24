import csv
import json
import subprocess
import sys

import pytest

from episync import cli
from episync.errors import SingularSystem


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    rc = cli.main(["simulate", "--seed", "7", "--cameras", "4", "-o", str(d / "bundle.json")])
    assert rc == 0
    return d


def test_end_to_end(workdir, capsys):
    d = workdir
    assert cli.main(["pairwise", str(d / "bundle.json"), "-o", str(d / "pw.json")]) == 0
    assert cli.main(["sync", str(d / "pw.json"), "-o", str(d / "sync.json")]) == 0
    capsys.readouterr()
    assert cli.main(["eval", str(d / "sync.json"), "--truth", str(d / "bundle.json"),
                     "--metric", "pct", "-o", str(d / "eval.json")]) == 0
    out = capsys.readouterr().out
    assert "P@100 = 100.00" in out
    report = json.loads((d / "eval.json").read_text())
    assert report["a_at_100"] == 100.0 and report["delta_med_ms"] <= 16.7
    sync = json.loads((d / "sync.json").read_text())
    refs = set(sync["references"].values())
    assert all(v["offset_s"] == 0.0 for v in sync["videos"] if v["id"] in refs)
    # the truth sidecar works as well as the bundle
    assert cli.main(["eval", str(d / "sync.json"), "--truth", str(d / "bundle.truth.json")]) == 0


def test_jobs_do_not_change_bytes(workdir):
    d = workdir
    for jobs in ("1", "4"):
        assert cli.main(["pairwise", str(d / "bundle.json"), "-o", str(d / f"pw{jobs}.json"),
                         "--jobs", jobs]) == 0
        assert cli.main(["sync", str(d / f"pw{jobs}.json"), "-o", str(d / f"s{jobs}.json")]) == 0
    assert (d / "pw1.json").read_bytes() == (d / "pw4.json").read_bytes()
    assert (d / "s1.json").read_bytes() == (d / "s4.json").read_bytes()


def test_global_flags_anywhere(workdir):
    d = workdir
    a = cli.main(["--energy", "algebraic", "pairwise", str(d / "bundle.json"),
                  "-o", str(d / "alg1.json")])
    b = cli.main(["pairwise", str(d / "bundle.json"), "-o", str(d / "alg2.json"),
                  "--energy", "algebraic"])
    assert a == b == 0
    assert (d / "alg1.json").read_bytes() == (d / "alg2.json").read_bytes()
    assert json.loads((d / "alg1.json").read_text())["config"]["energy"] == "algebraic"


def test_landscape_export(workdir):
    d = workdir
    rc = cli.main(["landscape", str(d / "bundle.json"), "cam01", "cam00",
                   "-o", str(d / "ls.csv"), "--svg", str(d / "ls.svg")])
    assert rc == 0
    rows = list(csv.reader((d / "ls.csv").open()))
    assert rows[0] == ["offset_s", "energy", "count"]
    assert len(rows) > 100
    svg = (d / "ls.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_measurements_file_needs_delta(tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"version": "1.0", "kind": "measurements", "measurements": [
        {"video_i": "a", "video_j": "b", "delta_s": 1.0},
        {"video_i": "b", "video_j": "c", "delta_s": 2.0}]}))
    assert cli.main(["sync", str(m), "-o", str(tmp_path / "s.json")]) == 1
    assert cli.main(["sync", str(m), "-o", str(tmp_path / "s.json"), "--huber-delta", "0.05"]) == 0
    s = json.loads((tmp_path / "s.json").read_text())
    assert {v["id"]: v["offset_s"] for v in s["videos"]}["c"] == pytest.approx(3.0)


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["simulate", "-o", "x.json", "--bogus"],
    ["pairwise"],
    ["--jobs", "0", "simulate", "-o", "x.json"],
    ["--theta-prominence", "1.5", "simulate", "-o", "x.json"],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_data_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["pairwise", str(bad), "-o", str(tmp_path / "o.json")]) == 2
    bad.write_text(json.dumps({"version": "1.0", "cameras": [{"fps": 30, "frames": []}],
                               "tracklets": [], "correspondences": []}))
    assert cli.main(["pairwise", str(bad), "-o", str(tmp_path / "o.json")]) == 2
    assert "$.cameras[0].id" in capsys.readouterr().err
    assert cli.main(["pairwise", str(tmp_path / "missing.json"), "-o", "o.json"]) == 2
    # nothing co-visible: infeasible scenario
    assert cli.main(["simulate", "-o", str(tmp_path / "b.json"), "--cameras", "2",
                     "--dropout", "0.999"]) == 2


def test_numerical_failure_exit_3(workdir, monkeypatch, capsys):
    def boom(*a, **k):
        raise SingularSystem("pinned Laplacian is rank deficient")

    monkeypatch.setattr(cli, "solve_irls", boom)
    d = workdir
    cli.main(["pairwise", str(d / "bundle.json"), "-o", str(d / "pw_x.json")])
    assert cli.main(["sync", str(d / "pw_x.json"), "-o", str(d / "s_x.json")]) == 3
    assert "SingularSystem" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "episync", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for sub in ("simulate", "pairwise", "sync", "eval", "landscape"):
        assert sub in r.stdout
