import shutil
from pathlib import Path

import pandas as pd
import pytest

from marfert.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, run
from marfert.params import DATA_DIR

BASE = str(DATA_DIR / "baseline_2019_2023.txt")
PAST = str(DATA_DIR / "past_2005_2009.txt")


def snapshot(out: Path) -> dict:
    """File bytes of a run; the manifest's wall-clock line is the one non-deterministic field."""
    snap = {}
    for f in sorted(out.iterdir()):
        data = f.read_bytes()
        if f.name == "manifest.txt":
            data = b"\n".join(l for l in data.splitlines() if not l.startswith(b"wall_seconds"))
        snap[f.name] = data
    return snap


@pytest.fixture
def spec(tmp_path):
    shutil.copy(BASE, tmp_path / "base.txt")
    (tmp_path / "t.txt").write_text("single_l_m = 0.52\n")
    (tmp_path / "spec.txt").write_text(
        "params = base.txt\ntargets = t.txt\nfree.alpha_l = 1.5, 3.0\nbudget = 4\nstarts = 2\nseed = 3\n"
    )
    return tmp_path / "spec.txt"


def commands(tmp_path, spec):
    panel = tmp_path / "sim" / "panel.csv"
    return {
        "solve": ["solve", "--params", BASE, "--grid", "5"],
        "simulate": ["simulate", "--params", BASE, "--grid", "5", "--seed", "4", "--agents", "300", "--periods", "30"],
        "event-study": ["event-study", "--panel", str(panel), "--window=-3:5"],
        "calibrate": ["calibrate", "--spec", str(spec), "--grid", "5"],
        "decompose": ["decompose", "--params", BASE, "--counterfactual", PAST, "--grid", "5"],
    }


def test_every_command_is_deterministic(tmp_path, spec):
    cmds = commands(tmp_path, spec)
    for name, argv in cmds.items():
        out = tmp_path / ("sim" if name == "simulate" else name)
        assert run(argv + ["--out", str(out)]) == EXIT_OK, name
        first = snapshot(out)
        assert "manifest.txt" in first and len(first) > 1
        assert run(argv + ["--out", str(out)]) == EXIT_OK, name
        assert snapshot(out) == first, name


def test_solve_outputs(tmp_path):
    out = tmp_path / "o"
    assert run(["solve", "--params", BASE, "--grid", "5", "--out", str(out)]) == EXIT_OK
    m = pd.read_csv(out / "moments.csv")
    assert {"moment", "label", "value"} <= set(m.columns) and len(m) == 23
    d = pd.read_csv(out / "deciles.csv")
    assert list(d.columns) == ["decile", "rate_m", "rate_f"] and len(d) == 10
    text = (out / "manifest.txt").read_text()
    assert "command = solve" in text and "arg.grid = 5" in text and "backend = " in text


def test_usage_errors(tmp_path, capsys):
    assert run([]) == EXIT_USAGE
    assert run(["frobnicate"]) == EXIT_USAGE
    assert run(["simulate", "--params", BASE, "--out", str(tmp_path)]) == EXIT_USAGE  # no seed
    assert run(["event-study", "--panel", "x.csv", "--out", str(tmp_path), "--window", "5:1"]) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_missing_key_is_named(tmp_path, capsys):
    lines = [l for l in Path(BASE).read_text().splitlines() if not l.startswith("theta")]
    bad = tmp_path / "bad.txt"
    bad.write_text("\n".join(lines) + "\n")
    assert run(["solve", "--params", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "theta" in capsys.readouterr().err


def test_config_errors(tmp_path):
    assert run(["solve", "--params", str(tmp_path / "none.txt"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    bad = tmp_path / "bad.txt"
    bad.write_text(Path(BASE).read_text().replace("theta = ", "theta = 1.5 #"))
    assert run(["solve", "--params", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert run(["solve", "--params", BASE, "--grid", "0", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    junk = tmp_path / "junk.csv"
    junk.write_text("a,b\n1,2\n")
    assert run(["event-study", "--panel", str(junk), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_solver_failure_exit(tmp_path, monkeypatch, capsys):
    import marfert.cli as cli
    from marfert.equilibrium import EquilibriumError

    def boom(*args, **kw):
        raise EquilibriumError("matching equilibrium did not converge")

    monkeypatch.setattr(cli, "solve_equilibrium", boom)
    assert run(["solve", "--params", BASE, "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert "did not converge" in capsys.readouterr().err


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(["solve", "--params", BASE, "--out", str(blocker / "sub")]) == EXIT_IO
