import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from kahler_flow import cli, config, flow, proptest, runner, snapshot


def write_cfg(path, cfg):
    path.write_text(config.serialize(cfg))
    return path


def small_benchmark(**changes):
    base = dict(N=64, T_end=3.0, snapshot_every=4)
    base.update(changes)
    return config.benchmark(1, **base)


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


# exit codes -------------------------------------------------------------------------


def test_fixed_point_run_passes(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "fp.cfg", config.fixed_point(2, N=64))
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "o") == runner.EXIT_OK
    out = capsys.readouterr().out
    assert out.rstrip().endswith("overall pass=true")
    files = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert {"config.echo", "diagnostics.csv", "diagnostics_aux.csv", "verdict.txt"} <= set(files)
    assert (tmp_path / "o" / "verdict.txt").read_text() == out
    assert config.load(tmp_path / "o" / "config.echo").out == str(tmp_path / "o")


def test_flat_refused_then_forced(tmp_path):
    cfg = write_cfg(tmp_path / "flat.cfg", config.RunConfig(family="flat", N=64, T_end=1.0))
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "a") == runner.EXIT_HYPOTHESIS
    assert "hypothesis_negative_hsc pass=false" in (tmp_path / "a" / "verdict.txt").read_text()
    assert not (tmp_path / "a" / "diagnostics.csv").exists()
    code = run_cli("run", "--config", cfg, "--out", tmp_path / "b", "--force")
    assert code not in (runner.EXIT_HYPOTHESIS, runner.EXIT_OK)


@pytest.mark.parametrize(
    "argv",
    [
        ["run"],
        ["run", "--config", "/nonexistent.cfg"],
        ["run", "--config", "BAD"],
        ["bogus"],
        ["proptest", "--samples", "-1"],
        ["proptest", "--seed", "-5"],
        ["proptest", "--seed", str(2**64)],
        ["refine", "--config", "GOOD", "--rungs", "1"],
        ["resume", "--out", "EMPTY"],
    ],
)
def test_config_errors(tmp_path, argv):
    (tmp_path / "bad.cfg").write_text("[grid]\nN = 4\n")
    write_cfg(tmp_path / "good.cfg", config.fixed_point(1, N=32))
    (tmp_path / "empty").mkdir()
    subst = {"BAD": tmp_path / "bad.cfg", "GOOD": tmp_path / "good.cfg", "EMPTY": tmp_path / "empty"}
    assert run_cli(*[subst.get(a, a) for a in argv]) == runner.EXIT_CONFIG


def test_unpositive_initial_metric_is_config_error(tmp_path):
    cfg = write_cfg(tmp_path / "huge.cfg", config.benchmark(1, eps=1e3, N=64))
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "o") == runner.EXIT_CONFIG


def test_corrupted_snapshot_is_numerics_failure(tmp_path):
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path / "b.cfg", small_benchmark(T_end=1.0))
    assert run_cli("run", "--config", cfg, "--out", out) in (runner.EXIT_OK, runner.EXIT_VERDICT)
    path = snapshot.latest(out)
    snap = snapshot.read(path)
    snap.phi[10] = np.nan
    snapshot.atomic_write(path, snapshot.dumps(snap))
    # push the horizon so the resumed run has steps to take
    write_cfg(cfg, small_benchmark(T_end=2.0))
    assert run_cli("resume", "--config", cfg, "--out", out) == runner.EXIT_NUMERICS


def test_positivity_failure_mid_run(tmp_path, monkeypatch):
    real = flow.advance_to

    def failing(state, t):
        if t > 0.6:
            raise flow.PositivityError(7, float(state.s[7]), state.t)
        return real(state, t)

    monkeypatch.setattr(flow, "advance_to", failing)
    cfg = write_cfg(tmp_path / "b.cfg", small_benchmark())
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "o") == runner.EXIT_NUMERICS
    recs = runner.read_tables(tmp_path / "o")
    assert [r.t for r in recs] == [0.0, 0.25, 0.5]
    assert snapshot.read(snapshot.latest(tmp_path / "o")).t == 0.5


# proptest ---------------------------------------------------------------------------


def test_proptest_small_passes(tmp_path, capsys):
    assert run_cli("proptest", "--samples", 40, "--dims", 1, 2, "--out", tmp_path) == runner.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 8 and all("failures=0" in ln for ln in lines)
    assert not (tmp_path / "proptest_replay.json").exists()


def test_proptest_plant_is_caught_and_replayable(tmp_path, capsys):
    code = run_cli("proptest", "--samples", 20, "--suite", "symmetry", "--plant", "--out", tmp_path)
    assert code == runner.EXIT_VERDICT
    assert "failures=1" in capsys.readouterr().out
    doc = json.loads((tmp_path / "proptest_replay.json").read_text())
    assert doc["samples"] == 20 and doc["failures"]
    for f in doc["failures"]:
        assert not proptest.replay(f["instance"], f["suite"])


def test_proptest_vacuous(capsys):
    assert run_cli("proptest", "--samples", 0) == runner.EXIT_OK
    out = capsys.readouterr().out
    assert "vacuous=true" in out and "samples=0" in out


def test_proptest_seed_changes_draws(capsys):
    run_cli("proptest", "--samples", 30, "--suite", "yau", "--dims", 2, "--seed", 1)
    a = capsys.readouterr().out
    run_cli("proptest", "--samples", 30, "--suite", "yau", "--dims", 2, "--seed", "0x1")
    assert capsys.readouterr().out == a


# oracle and refine ------------------------------------------------------------------


def test_oracle_flat_reports_zero_kappa(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "flat.cfg", config.RunConfig(family="flat"))
    assert run_cli("oracle", "--config", cfg, "--s", 0.1, 0.5) == runner.EXIT_OK
    out = capsys.readouterr().out
    assert "kappa_est=0 " in out and "valid=false" in out
    assert out.count("\ns=") == 2


def test_oracle_model_matches_finite_differences(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "m.cfg", config.fixed_point(2))
    assert run_cli("oracle", "--config", cfg) == runner.EXIT_OK
    out = capsys.readouterr().out
    deltas = [float(tok.split("=")[1]) for tok in out.split() if tok.startswith("fd_delta=")]
    assert len(deltas) == 6 and max(deltas) < 1e-6


def test_refine_writes_report(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "r.cfg", config.benchmark(1, N=32, out=str(tmp_path / "o")))
    code = run_cli("refine", "--config", cfg, "--t-probe", 0.5)
    out = capsys.readouterr().out
    assert code in (runner.EXIT_OK, runner.EXIT_VERDICT)
    assert (tmp_path / "o" / "refine.txt").read_text() == out
    rows = out.splitlines()
    assert rows[0].startswith("N,max_phi") and rows[1].startswith("32,") and rows[3].startswith("128,")
    assert "order quantity=max_phi" in out


# outputs ----------------------------------------------------------------------------


def test_svg_plots(tmp_path):
    cfg = write_cfg(tmp_path / "fp.cfg", config.fixed_point(1, N=32, T_end=1.0))
    run_cli("run", "--config", cfg, "--out", tmp_path / "o", "--svg")
    plots = sorted((tmp_path / "o" / "plots").glob("*.svg"))
    assert len(plots) == 10
    assert all(p.read_text().startswith("<svg") for p in plots)


def test_runs_are_deterministic(tmp_path):
    cfg = write_cfg(tmp_path / "b.cfg", small_benchmark())
    for d in ("a", "b"):
        run_cli("run", "--config", cfg, "--out", tmp_path / d)
    for name in ("diagnostics.csv", "diagnostics_aux.csv", "verdict.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_resume_matches_uninterrupted_run(tmp_path):
    cfg = write_cfg(tmp_path / "b.cfg", small_benchmark())
    full = tmp_path / "full"
    run_cli("run", "--config", cfg, "--out", full)
    cut = tmp_path / "cut"
    shutil.copytree(full, cut)
    for p in cut.glob("snapshot_*.state"):
        if snapshot.read(p).t > 1.0:
            p.unlink()
    # drop the later table rows as an interrupted run would have
    lines = (cut / "diagnostics.csv").read_text().splitlines()
    (cut / "diagnostics.csv").write_text("\n".join(lines[:6]) + "\n")
    assert run_cli("resume", "--out", cut) in (runner.EXIT_OK, runner.EXIT_VERDICT)
    for name in ("diagnostics.csv", "diagnostics_aux.csv"):
        assert (cut / name).read_bytes() == (full / name).read_bytes()
    a = snapshot.read(snapshot.latest(full))
    b = snapshot.read(snapshot.latest(cut))
    assert a.t == b.t == 3.0 and a.phi.tobytes() == b.phi.tobytes() and a.steps == b.steps


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "kahler_flow", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("run", "resume", "proptest", "refine", "oracle"):
        assert cmd in proc.stdout
