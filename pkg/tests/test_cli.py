import json
import os
import subprocess
import sys

import pytest

from crforge.cli import fixture_names, fixture_text, main

QUADRIC_VARIANTS = """order 5
manifold Q dim 2 codim 1 vars (z, w) { Im(w) - |z|^2 }
map S : Q -> Q { 2 * z, w }
map D : Q -> Q { z, 0 }
"""


@pytest.fixture
def fixture_file(tmp_path):
    def write(name, text=None):
        path = tmp_path / f"{name}.crf"
        path.write_text(fixture_text(name) if text is None else text, encoding="utf-8")
        return str(path)
    return write


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def records(out):
    lines = [json.loads(line) for line in out.splitlines()]
    assert lines[0]["records"] == len(lines) - 1
    return lines[0], lines[1:]


def test_fixtures_are_packaged():
    assert fixture_names() == ["blowup", "hyperplane", "product_model", "quadric"]


def test_json_lines_output(capsys, fixture_file):
    path = fixture_file("quadric")
    code, out, _ = run(capsys, "finite-map", "--input", path, "--map", "A", "--format", "json-lines")
    assert code == 0
    header, recs = records(out)
    assert header["command"] == "finite-map"
    assert header["argv"] == ["finite-map", "--input", path, "--map", "A", "--format", "json-lines"]
    (rec,) = recs
    assert rec["check"] == "finite_map" and rec["verdict"] == "finite"
    assert rec["certificate"]["multiplicity"] == 1
    assert rec["millis"] is None


def test_timing_flag_fills_millis(capsys, fixture_file):
    code, out, _ = run(capsys, "rank", "--input", fixture_file("product_model"), "--map", "H", "--order", "6",
                       "--timing", "--format", "json-lines")
    assert code == 0
    _, recs = records(out)
    assert all(isinstance(r["millis"], float) for r in recs)


def test_failed_check_exits_one(capsys, fixture_file):
    code, out, _ = run(capsys, "check-map", "--input", fixture_file("variants", QUADRIC_VARIANTS), "--map", "S")
    assert code == 1
    assert "FAIL" in out


def test_inconclusive_check_exits_three(capsys, fixture_file):
    code, out, _ = run(capsys, "holo-nondeg", "--input", fixture_file("variants", QUADRIC_VARIANTS),
                       "--map", "D", "--format", "json-lines")
    assert code == 3
    _, recs = records(out)
    assert recs[-1]["verdict"] == "precondition_failed"


@pytest.mark.parametrize("argv", [["bogus"], ["segre"], ["rank", "--input", "QUADRIC"], ["segre", "--order", "0",
                                                                                          "--input", "QUADRIC"]])
def test_usage_errors_exit_two(capsys, fixture_file, argv):
    path = fixture_file("quadric")
    code, _, _ = run(capsys, *[path if a == "QUADRIC" else a for a in argv])
    assert code == 2


def test_order_above_manifest_order_exits_two(capsys, fixture_file):
    code, out, err = run(capsys, "segre", "--input", fixture_file("quadric"), "--order", "11")
    assert code == 2
    assert out == ""
    assert "exceeds the manifest order 10" in err


def test_missing_file_exits_two(capsys, tmp_path):
    code, _, err = run(capsys, "segre", "--input", str(tmp_path / "absent.crf"))
    assert code == 2
    assert "cannot read" in err


def test_parse_errors_report_file_line_and_column(capsys, fixture_file):
    path = fixture_file("bad", "order 3\nmanifold M dim 2 codim 1 vars (z, w) { Im(w) - |z|^3 }\n")
    code, _, err = run(capsys, "normal-form", "--input", path)
    assert code == 2
    assert f"{path}:2:52: only |e|^2 is supported" in err


def test_seed_flag_overrides_environment(capsys, fixture_file, monkeypatch):
    path = fixture_file("quadric")
    argv = ["determine", "--input", path, "--map", "Id", "--order", "6", "--trials", "3", "--format", "json-lines"]
    monkeypatch.setenv("CRFORGE_SEED", "41")
    _, out, _ = run(capsys, *argv)
    assert records(out)[0]["seed"] == 41
    _, out, _ = run(capsys, *argv, "--seed", "5")
    header, recs = records(out)
    assert header["seed"] == 5 and all(r["seed"] == 5 for r in recs)
    _, again, _ = run(capsys, *argv, "--seed", "5")
    assert again == out
    monkeypatch.setenv("CRFORGE_SEED", "nope")
    assert run(capsys, *argv)[0] == 2
    monkeypatch.delenv("CRFORGE_SEED")
    _, out, _ = run(capsys, *argv)
    assert records(out)[0]["seed"] == 0


def test_plot_dir_writes_png(capsys, fixture_file, tmp_path):
    plots = tmp_path / "plots"
    plots.mkdir()
    code, out, _ = run(capsys, "finite-type", "--input", fixture_file("quadric"), "--order", "6",
                       "--plot-dir", str(plots))
    assert code == 0
    written = sorted(p.name for p in plots.iterdir())
    assert written == ["finite-type-Q.png"]
    assert (plots / written[0]).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert f"figure: {plots / written[0]}" in out


@pytest.mark.parametrize("name", ["quadric", "product_model", "blowup", "hyperplane"])
def test_every_command_family_runs_on_fixtures(capsys, fixture_file, name):
    path = fixture_file(name)
    for command in ("check-generic", "normal-form", "segre", "finite-type"):
        code, out, _ = run(capsys, command, "--input", path, "--order", "6", "--format", "json-lines")
        assert code in (0, 1), (command, out)
        records(out)


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest", "--format", "json-lines")
    header, recs = records(out)
    assert code == 0, [r for r in recs if r["verdict"] != "expected"]
    assert recs and all(r["verdict"] == "expected" for r in recs)


def test_console_script_module_entry_point(tmp_path):
    path = tmp_path / "q.crf"
    path.write_text(fixture_text("quadric"), encoding="utf-8")
    proc = subprocess.run([sys.executable, "-m", "crforge.cli", "rank", "--input", str(path), "--map", "A",
                           "--order", "4"], capture_output=True, text=True, env={**os.environ, "CRFORGE_SEED": ""})
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("crforge rank")
