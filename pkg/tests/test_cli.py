import json
import subprocess
import sys

import pytest

from pgnniv import cli
from pgnniv import datasets as ds


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_generate_is_deterministic(tmp_path, capsys):
    assert run("generate", "prediction", "--M", 20, "--seed", 7, "--out", tmp_path) == 0
    path = capsys.readouterr().out.strip()
    first = open(path).read()
    assert run("generate", "prediction", "--M", 20, "--seed", 7, "--out", tmp_path) == 0
    assert open(capsys.readouterr().out.strip()).read() == first
    d = ds.load(path)
    assert len(d) == 20 and d.provenance["seed"] == 7


def test_generate_with_noise_to_explicit_file(tmp_path):
    f = tmp_path / "g.txt"
    assert run("generate", "geometry", "--M", 5, "--noise", 0.1, "--file", f) == 0
    d = ds.load(f)
    assert d.input_names == ["q", "l1", "l2"]
    assert d.provenance["perturbations"][0]["noise"] == 0.1


def test_output_root_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert run("generate", "characterization", "--M", 3) == 0
    assert capsys.readouterr().out.startswith(str(tmp_path / "env"))


def test_missing_required_argument_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run("generate", "prediction")
    assert exc.value.code == cli.EXIT_USAGE
    assert "--M" in capsys.readouterr().err


def test_bad_values_are_usage_errors(tmp_path, capsys):
    assert run("generate", "prediction", "--M", 5, "--q-min", 5, "--q-max", 1,
               "--out", tmp_path) == cli.EXIT_USAGE
    assert run("train", "--experiment", "E99", "--out", tmp_path) == cli.EXIT_USAGE
    assert "unknown experiment" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        run("eval", "--experiment", "E3", "--extrapolate", "5-10")
    assert exc.value.code == cli.EXIT_USAGE


def test_train_then_eval(tmp_path, capsys):
    assert run("train", "--experiment", "E3", "--variant", "MB_HW", "--seed", 1,
               "--iterations", 30, "--out", tmp_path) == 0
    run_dir = tmp_path / "runs" / "E3" / "MB_HW__base__s1"
    assert {p.name for p in run_dir.iterdir()} == {"trace.csv", "checkpoint.txt", "run.json"}
    assert len((run_dir / "trace.csv").read_text().splitlines()) == 31
    capsys.readouterr()

    assert run("eval", "--experiment", "E3", "--variant", "MB_HW", "--seed", 1,
               "--out", tmp_path, "--probe-state-relation") == 0
    metrics = json.loads((run_dir / "eval.json").read_text())
    assert "lambda_rel" in metrics
    header = (run_dir / "state_relation.csv").read_text().splitlines()[0]
    assert header.startswith("q,pil1_0,pil1_1,pil1_2")

    assert run("eval", "--experiment", "E3", "--variant", "MB_HW", "--seed", 1,
               "--out", tmp_path, "--extrapolate", "5:10") == 0
    extra = json.loads((run_dir / "eval_5_10.json").read_text())
    assert extra["test"] != metrics["test"]


def test_train_is_reproducible(tmp_path):
    args = ("train", "--experiment", "E1", "--variant", "constrained", "--iterations", 25)
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    rel = "runs/E1/constrained__base__s0/trace.csv"
    assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_train_on_given_dataset(tmp_path):
    f = tmp_path / "d.txt"
    run("generate", "prediction", "--M", 12, "--file", f)
    assert run("train", "--experiment", "E1", "--iterations", 5, "--data", f, "--out", tmp_path) == 0


def test_missing_artifacts(tmp_path, capsys):
    assert run("eval", "--experiment", "E1", "--out", tmp_path) == cli.EXIT_MISSING
    assert "pgnniv train" in capsys.readouterr().err
    assert run("train", "--config", tmp_path / "none.ini", "--out", tmp_path) == cli.EXIT_MISSING
    assert run("train", "--experiment", "E1", "--data", tmp_path / "none.txt") == cli.EXIT_MISSING
    assert run("rebuild", tmp_path) == cli.EXIT_MISSING
    bad = tmp_path / "bad.txt"
    bad.write_text("not a dataset\n")
    assert run("train", "--experiment", "E1", "--data", bad, "--out", tmp_path) == cli.EXIT_MISSING


def test_divergence_exit_code(tmp_path, capsys):
    ini = tmp_path / "hot.ini"
    ini.write_text("[experiment]\nbase = E1\n[train]\nlearning_rate = 5\niterations = 300\n")
    assert run("train", "--config", ini, "--variant", "unconstrained",
               "--out", tmp_path) == cli.EXIT_DIVERGED
    assert "diverged at iteration" in capsys.readouterr().err
    meta = json.loads((tmp_path / "runs" / "E1" / "unconstrained__base__s0" / "run.json").read_text())
    assert meta["diverged_at"] is not None


def test_reproduce_and_rebuild(tmp_path, capsys):
    code = run("reproduce", "E5", "--seeds", 1, "--out", tmp_path)
    out = capsys.readouterr().out
    assert code == 0
    assert "INFO  E5" in out and "summary: 1 experiments, 0 with failures" in out
    report = tmp_path / "reports" / "E5"
    assert (report / "manifest.json").exists()
    assert run("rebuild", report) == 0


def test_reproduce_exits_nonzero_on_failed_check(tmp_path, capsys, monkeypatch):
    from pgnniv.experiments import configs as cfg
    from dataclasses import replace

    def short_e1():
        base = cfg.e1()
        return replace(base, hyper=replace(base.hyper, iterations=20), window=3)

    monkeypatch.setitem(cfg.REGISTRY, "E1", short_e1)
    assert run("reproduce", "E1", "--seeds", 2, "--out", tmp_path) == cli.EXIT_CHECKS
    out = capsys.readouterr().out
    assert "FAIL  convergence acceleration (E1)" in out


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pgnniv.cli", "golden", str(tmp_path / "g.txt")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "g.txt").read_text().startswith("# function")
