"""Exports, command-line interface and the corpus runner."""

import os
import shutil

import numpy as np
import pytest

from spalps import export as export_mod
from spalps.cli import main
from spalps.corpus import corpus_run
from spalps.export import (
    ensemble_to_csv,
    equations_from_json,
    equations_to_json,
    export,
    read_ensemble_csv,
    read_trajectory_csv,
    trajectory_to_csv,
    write_atomic,
)
from spalps.meanfield import evaluate
from spalps.montecarlo import RunConfig, ensemble


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# ---------------------------------------------------------------------------
# Exports.


def test_equations_json_round_trip(ring, dengue):
    for c in (ring, dengue):
        eqs = c.equations
        back = equations_from_json(equations_to_json(eqs))
        assert back.labels == eqs.labels and back.kinds == eqs.kinds
        assert back.rhs == eqs.rhs
        assert np.array_equal(back.init, eqs.init)
        assert back.params == eqs.params
        a = evaluate(eqs, None, 12)
        b = evaluate(back, None, 12)
        assert np.array_equal(a.values(), b.values())


def test_equations_json_rejects_other_documents():
    with pytest.raises(ValueError):
        equations_from_json('{"schema": "other"}')


def test_trajectory_csv_round_trip(ring):
    traj = evaluate(ring.table, ring.init, 7)
    text = trajectory_to_csv(traj)
    assert text.splitlines()[0] == "step,phase,state,location,value"
    back = read_trajectory_csv(text)
    assert back.phases == traj.phases
    assert np.array_equal(back.values(), traj.values())


def test_ensemble_csv_round_trip(ring):
    stats = ensemble(ring.model, ring.space, RunConfig(seed=1, steps=5, replicas=4, scale=2))
    text = ensemble_to_csv(stats)
    assert text.splitlines()[0] == "step,phase,state,location,replica_mean,replica_std,replicas"
    back = read_ensemble_csv(text)
    assert np.array_equal(back.mean, stats.mean) and np.array_equal(back.std, stats.std)
    assert back.replicas == 4 and back.phases == stats.phases


def test_export_dispatch(ring):
    assert export(ring.equations, "text").startswith(b"# t counts")
    with pytest.raises(ValueError):
        export(ring.equations, "csv")


def test_write_atomic_keeps_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "out.txt"
    target.write_text("old")

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(export_mod.os, "replace", boom)
    with pytest.raises(OSError):
        write_atomic(target, "new")
    assert target.read_text() == "old"
    assert os.listdir(tmp_path) == ["out.txt"]


# ---------------------------------------------------------------------------
# Command line.


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and out.strip() == "spalps 0.1.0 (format 1)"


def test_check(capsys, corpus_dir):
    code, out, _ = run(capsys, "check", corpus_dir / "ring.palps")
    assert code == 0 and out.splitlines()[0] == "valid: 7 states, 4 locations"
    code, out, _ = run(capsys, "check", corpus_dir / "dengue.palps")
    assert code == 0 and out.splitlines()[0] == "valid: 16 states, 11 locations"


def test_check_invalid_model(capsys, tmp_path):
    bad = tmp_path / "bad.palps"
    bad.write_text("habitat ring(2)\nspecies a { process A = tick . B }\nsystem { A @ 1 * 1 }\n")
    code, out, err = run(capsys, "check", bad)
    assert code == 1 and out == ""
    assert "error[undefined-constant]" in err and "bad.palps:2:" in err


def test_unreadable_path_is_usage_error(capsys, tmp_path):
    code, _, err = run(capsys, "compile", "--emit", "eqs", tmp_path / "missing.palps")
    assert code == 2 and "cannot read model" in err


def test_usage_errors(capsys, corpus_dir):
    assert run(capsys, "compile", "--emit", "xml", corpus_dir / "ring.palps")[0] == 2
    assert run(capsys)[0] == 2
    code, _, err = run(capsys, "simulate", corpus_dir / "ring.palps", "--param", "zz=1")
    assert code == 2 and "zz" in err
    assert run(capsys, "simulate", corpus_dir / "ring.palps", "--param", "p")[0] == 2
    assert run(capsys, "mc", corpus_dir / "ring.palps", "--replicas", "0")[0] == 2


def test_states(capsys, corpus_dir):
    code, out, _ = run(capsys, "states", corpus_dir / "ring.palps")
    assert code == 0 and out.splitlines()[0].endswith("[head=prob]")


def test_compile_outputs(capsys, corpus_dir, tmp_path):
    code, out, _ = run(capsys, "compile", "--emit", "stt", corpus_dir / "ring.palps")
    assert code == 0 and "R6 [tick] -> R1: 2*q" in out
    code, out, _ = run(capsys, "compile", "--emit", "stt", "--view", "named", corpus_dir / "dengue.palps")
    assert code == 0 and len(out.splitlines()) == 16
    dest = tmp_path / "eqs.json"
    code, out, _ = run(capsys, "compile", "--emit", "json", "--out", dest, corpus_dir / "ring.palps")
    assert code == 0 and out == ""
    assert equations_from_json(dest.read_text()).labels[0] == "R1"


def test_param_override_on_command_line(capsys, corpus_dir):
    _, out, _ = run(capsys, "compile", "--emit", "eqs", "--param", "p=1/4", corpus_dir / "ring.palps")
    assert "# parameters: p = 1/4" in out
    assert "p*R5(t-1)@l" in out


def test_simulate_mc_compare_pipeline(capsys, corpus_dir, tmp_path):
    model = corpus_dir / "ring.palps"
    mf, mc, rep = tmp_path / "mf.csv", tmp_path / "mc.csv", tmp_path / "report.txt"
    assert run(capsys, "simulate", model, "--steps", "10", "--scale", "20", "--out", mf)[0] == 0
    assert run(capsys, "mc", model, "--seed", "4", "--replicas", "30", "--steps", "10",
               "--scale", "20", "--out", mc)[0] == 0
    first = mc.read_bytes()
    assert run(capsys, "mc", model, "--seed", "4", "--replicas", "30", "--steps", "10",
               "--scale", "20", "--out", mc)[0] == 0
    assert mc.read_bytes() == first
    code, out, _ = run(capsys, "compare", "--mf", mf, "--mc", mc, "--out", rep)
    assert code == 0 and out == ""
    assert "# phases aligned" in rep.read_text()


def test_simulate_collapse_ticks(capsys, corpus_dir, tmp_path):
    dest = tmp_path / "t.csv"
    run(capsys, "simulate", corpus_dir / "ring.palps", "--steps", "10", "--collapse-ticks", "--out", dest)
    assert read_trajectory_csv(dest.read_text()).phases == ["init"] + ["tick"] * 4


def test_model_file_not_mutated(capsys, corpus_dir, tmp_path):
    model = tmp_path / "ring.palps"
    shutil.copy(corpus_dir / "ring.palps", model)
    before = model.read_bytes()
    for cmd in (["check"], ["states"], ["compile", "--emit", "stt"], ["simulate", "--steps", "3"]):
        run(capsys, *cmd, model)
    assert model.read_bytes() == before


# ---------------------------------------------------------------------------
# Corpus runner.


def test_corpus_passes(corpus_dir):
    report = corpus_run(corpus_dir)
    assert report.passed, report.render()
    assert [r.name for r in report.results] == ["dengue", "ring"]


def test_corrupted_golden_fails_naming_the_cell(capsys, corpus_dir, tmp_path):
    work = tmp_path / "corpus"
    shutil.copytree(corpus_dir, work)
    golden = work / "golden" / "ring.stt.txt"
    golden.write_text(golden.read_text().replace("R6 [tick] -> R1: 2*q", "R6 [tick] -> R1: 4*q"))
    code, out, _ = run(capsys, "corpus", work)
    assert code == 1
    assert "FAIL ring" in out and "PASS dengue" in out
    assert "-R6 [tick] -> R1: 4*q" in out and "+R6 [tick] -> R1: 2*q" in out


def test_corpus_update_then_pass(capsys, corpus_dir, tmp_path):
    work = tmp_path / "corpus"
    work.mkdir()
    shutil.copy(corpus_dir / "ring.palps", work)
    code, out, _ = run(capsys, "corpus", work)
    assert code == 0 and "no golden" in out
    assert run(capsys, "corpus", work, "--update")[0] == 0
    assert (work / "golden" / "ring.eqs.txt").exists()
    assert run(capsys, "corpus", work)[0] == 0


def test_corpus_missing_dir_is_usage_error(capsys, tmp_path):
    assert run(capsys, "corpus", tmp_path)[0] == 2
