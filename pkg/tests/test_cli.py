import json
import subprocess
import sys

import pytest

from adaptvm import cli, kernel

TRAP = "module t\nproc main nparams 0 entry\nblock b\n  z = const 0\n  o = const 1\n  r = div o z\n  ret r\n"


def run(capsys, *argv):
    code = cli.main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_run_hello(capsys):
    code, out, _ = run(capsys, "run", "hello")
    assert code == 0
    assert out == "main() = 42\n"


def test_trap_exit_code(tmp_path, capsys):
    prog = tmp_path / "t.tm"
    prog.write_text(TRAP)
    code, out, _ = run(capsys, "run", str(prog))
    assert code == cli.EXIT_TRAP
    assert "trap: " in out and "division by zero" in out


def test_explicit_calls(capsys):
    code, out, _ = run(capsys, "run", "deopt_base", "--call", "double:21", "--call", "step:1", "--phases", "none")
    assert code == 0
    assert out.splitlines()[:2] == ["double(21) = 42", "step(1) = 8"]


@pytest.mark.parametrize("argv", [
    ["run"],
    ["run", "no_such_workload"],
    ["run", "hello", "--phases", "cse,warp"],
    ["run", "hello", "--profilers", "psychic"],
    ["run", "hello", "--k", "3"],
    ["run", "hello", "--sim-sleep", "10", "--age-sleep", "5"],
    ["run", "hello", "--assert", "swaps about 1"],
    ["run", "hello", "--assert", "nonsense>=1"],
    ["run", "hello", "--expect-trace", "x", "--mode", "background"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == cli.EXIT_CONFIG


def test_parse_error_exits_2(tmp_path, capsys):
    prog = tmp_path / "bad.tm"
    prog.write_text("module m\nproc p nparams 0\nblock b\n  r = wat\n")
    code, _, err = run(capsys, "run", str(prog))
    assert code == cli.EXIT_CONFIG and "parse error" in err


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"workload": "hotloop", "phases": "none", "seed": 4, "profilers": ["sampling"]}))
    rep = tmp_path / "r.json"
    code, _, _ = run(capsys, "run", "--config", str(cfg), "--seed", "9", "--report", str(rep))
    assert code == 0
    config = json.loads(rep.read_text())["config"]
    assert config["seed"] == 9 and config["phases"] == [] and config["workload"] == "hotloop"
    cfg.write_text(json.dumps({"workload": "hotloop", "colour": "blue"}))
    assert run(capsys, "run", "--config", str(cfg))[0] == cli.EXIT_CONFIG


def test_asserts(capsys):
    code, _, err = run(capsys, "run", "hotloop", "--quiet", "--assert", "swaps>=1", "--assert", "trap==0")
    assert code == 0 and err.count("-> ok") == 2
    code, _, err = run(capsys, "run", "hello", "--assert", "swaps>=1")
    assert code == cli.EXIT_ASSERT and "FAILED" in err


def test_expect_trace_round_trip(tmp_path, capsys):
    trace = tmp_path / "t.txt"
    assert run(capsys, "run", "hotloop", "--quiet", "--trace", str(trace))[0] == 0
    assert run(capsys, "run", "hotloop", "--quiet", "--expect-trace", str(trace))[0] == 0
    lines = trace.read_text().splitlines()
    trace.write_text("\n".join(lines[:-1]) + "\n")
    assert run(capsys, "run", "hotloop", "--quiet", "--expect-trace", str(trace))[0] == cli.EXIT_ASSERT


def test_side_outputs(tmp_path, capsys):
    files = {k: tmp_path / f"{k}.txt" for k in ("report_text", "profile", "history")}
    code, _, _ = run(capsys, "run", "hotloop", "--quiet", "--profilers", "sampling,path",
                     "--report-text", str(files["report_text"]), "--profile-dump", str(files["profile"]),
                     "--history-dump", str(files["history"]))
    assert code == 0
    text = files["report_text"].read_text().splitlines()
    assert "version=1" in text and any(line.startswith("swaps.0.proc=") for line in text)
    assert any(line.startswith("path work ") for line in files["profile"].read_text().splitlines())
    assert " applied " in files["history"].read_text()


def test_report_lines_flatten():
    assert cli.report_lines({"a": {"b": [1, "x"]}, "c": [], "d": None}) == \
        ['a.b.0=1', 'a.b.1="x"', "c=[]", "d=null"]


def test_lookup_semantics():
    rep = {"swaps": [1, 2], "trap": None, "stats": {"main": {"invocations": 1}}, "flag": True}
    assert cli.lookup(rep, "swaps") == 2
    assert cli.lookup(rep, "trap") == 0
    assert cli.lookup(rep, "stats.main.invocations") == 1
    assert cli.lookup(rep, "flag") == 1
    with pytest.raises(KeyError):
        cli.lookup(rep, "stats.nobody")


@pytest.mark.skipif(len(kernel.available()) < 2, reason="compiled kernel not built")
def test_kernels_give_identical_runs(tmp_path, capsys):
    outs = []
    for k in ("cython", "python"):
        t = tmp_path / f"{k}.txt"
        code, out, _ = run(capsys, "run", "hotloop", "--kernel", k, "--trace", str(t))
        assert code == 0
        outs.append((out, t.read_text()))
    assert outs[0] == outs[1]


def test_sim(tmp_path, capsys):
    vec = tmp_path / "v.txt"
    vec.write_text("# comment\n1,1 ; 2,1\n\n5 5 5 ; 5 5 5\n1000, 0 ; 0, 1000\n")
    code, out, _ = run(capsys, "sim", str(vec))
    assert code == 0
    lines = out.splitlines()
    assert lines[0].endswith("no reoptimization")
    assert lines[1].endswith(" stable") and "S=1.000000" in lines[1]
    assert lines[2].endswith(" reoptimize")
    for bad in ("1,2 ; 3\n", "1,2\n", "1,x ; 2,2\n"):
        vec.write_text(bad)
        assert run(capsys, "sim", str(vec))[0] == cli.EXIT_CONFIG


def test_explain(tmp_path, capsys):
    rep = tmp_path / "r.json"
    run(capsys, "run", "deopt_base", "--quiet", "--profilers", "sampling,path",
        "--load-extension", "deopt_ext@iter>=12000", "--report", str(rep))
    code, out, _ = run(capsys, "explain", str(rep))
    assert code == 0
    lines = out.splitlines()
    assert "step:" in lines
    assert any("de-optimization: global handler overwritten, recompiled step" in line for line in lines)
    assert lines[-1].startswith("swaps=")
    run(capsys, "run", "hello", "--phases", "none", "--report", str(rep))
    assert run(capsys, "explain", str(rep))[1].splitlines()[0] == "no optimizations performed"
    rep.write_text("[1, 2]")
    assert run(capsys, "explain", str(rep))[0] == cli.EXIT_CONFIG
    rep.write_text("{}")
    assert run(capsys, "explain", str(rep))[0] == cli.EXIT_CONFIG


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "adaptvm", "run", "hello"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "main() = 42\n"
