import csv
import dataclasses
import io
import shutil
from pathlib import Path

import numpy as np
import pytest

from sirp import cli, formats
from sirp.experiments import REGISTRY
from sirp.games import TwoPlayerGame
from sirp.process_engine import KernelError

FIXTURES = Path(__file__).resolve().parent.parent / "configs" / "fixtures"


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def field(text, key):
    for line in text.splitlines():
        if line.startswith(key + ":"):
            return line.split(":", 1)[1].strip()
    raise KeyError(key)


# --- parsers ---------------------------------------------------------------------


def test_parse_matrix():
    m = formats.parse_matrix("# c\na b\n0.8 0.2 # tail\n\n0.3 0.7\n")
    assert m.states.labels == ("a", "b")
    assert np.allclose(m.matrix, [[0.8, 0.2], [0.3, 0.7]])
    raw = formats.parse_matrix("a b\n1 2\n3 4\n", stochastic=False)
    assert raw.matrix[1, 1] == 4


@pytest.mark.parametrize(
    "text, line",
    [
        ("a b\n0.8 0.2\n0.3 x\n", 3),
        ("a b\n0.8 0.2\n0.3\n", 3),
        ("a b\n0.8 0.2\n0.3 0.7\n1 0\n", 4),
        ("a a\n0.8 0.2\n0.3 0.7\n", 1),
        ("", 0),
    ],
)
def test_parse_matrix_errors_carry_line(text, line):
    with pytest.raises(formats.FormatError) as e:
        formats.parse_matrix(text, "m.txt")
    assert e.value.line == line
    assert str(e.value).startswith(f"m.txt:{line}:")


def test_parse_matrix_rejects_non_stochastic():
    with pytest.raises(formats.FormatError):
        formats.parse_matrix("a b\n0.8 0.3\n0.3 0.7\n")


def test_parse_landscape():
    L = formats.load_landscape(FIXTURES / "path5.txt")
    assert np.array_equal(L.landscape.potential, [0, 3, 1, 2, 0])
    with pytest.raises(formats.FormatError) as e:
        formats.parse_landscape("a b\nV: 0 1\n0.5 0.5\n0.5 0.5\n")
    assert e.value.line == 2
    with pytest.raises(formats.FormatError) as e:
        formats.parse_landscape("a b\nU: 0 1 2\n0.5 0.5\n0.5 0.5\n")
    assert e.value.line == 2


def test_parse_game():
    g = formats.load_game(FIXTURES / "matching.txt")
    assert g.is_zero_sum and g.U1[0, 1] == -1
    g = formats.parse_game("E1: u d\nE2: l r\nU1\n1 0\n0 1\nU2\n0 1\n1 0\n")
    assert g.E1.labels == ("u", "d") and g.U2[0, 1] == 1
    p = formats.parse_game("U1 potential\n1 0\n0 2\n")
    assert p.is_potential


@pytest.mark.parametrize(
    "text, line",
    [
        ("U1\n1 0\n0 1\n", 1),
        ("U1 zero_sum\n1 0\n0 x\n", 3),
        ("U1 zero_sum\n1 0\n0\n", 3),
        ("U1 zero_sum\n1 0\nU2\n1 0\n", 3),
        ("U3\n1\n", 1),
        ("U1 bogus\n1\n", 1),
    ],
)
def test_parse_game_errors_carry_line(text, line):
    with pytest.raises(formats.FormatError) as e:
        formats.parse_game(text, "g.txt")
    assert e.value.line == line


def test_sniff_and_load(tmp_path):
    assert formats.sniff("a b\n1 0\n0 1\n") == "matrix"
    assert formats.sniff("a\nU: 0\n1\n") == "landscape"
    assert formats.sniff("# x\nU1 zero_sum\n0\n") == "game"
    assert isinstance(formats.load(FIXTURES / "matching.txt"), TwoPlayerGame)
    with pytest.raises(formats.FormatError):
        formats.load(tmp_path / "missing.txt")


def test_format_matrix_round_trip():
    M = np.array([[0.1, 0.9], [1 / 3, 2 / 3]])
    m = formats.parse_matrix(formats.format_matrix(M, ["p", "q"]))
    assert np.array_equal(m.matrix, M)


# --- analyze -------------------------------------------------------------------------


def test_analyze_two_state(capsys):
    code, out, _ = run_cli(capsys, "analyze", str(FIXTURES / "two_state.txt"))
    assert code == 0
    assert np.allclose([float(t) for t in field(out, "pi").split()], [0.6, 0.4])
    assert float(field(out, "lambda")) == pytest.approx(0.5)
    assert float(field(out, "|Q|")) == pytest.approx(1.2)


def test_analyze_projector(capsys):
    code, out, _ = run_cli(capsys, "analyze", str(FIXTURES / "projector.txt"))
    assert code == 0
    assert float(field(out, "lambda")) == pytest.approx(1.0)
    # Q = I - Pi has sup norm 1 - min pi
    assert float(field(out, "|Q|")) == pytest.approx(0.8)


def test_analyze_landscape(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "analyze", str(FIXTURES / "path5.txt"), "--betas", "0 1 2")
    assert code == 0
    assert float(field(out, "energy barrier U#")) == 3
    assert float(field(out, "admissible A")) == pytest.approx(0.95 / 6)
    rows = list(csv.DictReader(io.StringIO(out[out.index("beta,"):])))
    assert [float(r["beta"]) for r in rows] == [0, 1, 2]
    lams = [float(r["lambda"]) for r in rows]
    assert lams[0] > lams[1] > lams[2] > 0
    dest = tmp_path / "sweep.csv"
    code, out2, _ = run_cli(capsys, "analyze", str(FIXTURES / "path5.txt"), "--betas", "0 1 2", "--csv", str(dest))
    assert code == 0 and "beta," not in out2
    assert dest.read_text() == out[out.index("beta,"):]


def test_analyze_game(capsys):
    code, out, _ = run_cli(capsys, "analyze", str(FIXTURES / "matching.txt"))
    assert code == 0
    assert float(field(out, "value")) == pytest.approx(-0.5)
    assert float(field(out, "barrier (complete exploration)")) == 0
    assert field(out, "admissible A") == "inf"


def test_analyze_decomposable(capsys, tmp_path):
    p = tmp_path / "id.txt"
    p.write_text("a b\n1 0\n0 1\n")
    code, out, _ = run_cli(capsys, "analyze", str(p))
    assert code == 1
    assert "decomposable: 2 recurrent classes" in out


def test_analyze_errors(capsys, tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("a b\n0.5 0.6\n0.5 0.5\n")
    code, _, err = run_cli(capsys, "analyze", str(p))
    assert code == 2 and "bad.txt:2" in err
    code, _, _ = run_cli(capsys, "analyze", str(FIXTURES / "path5.txt"), "--betas", "-1")
    assert code == 2
    code, _, _ = run_cli(capsys, "analyze", str(FIXTURES / "path5.txt"), "--betas", "a b")
    assert code == 2


# --- run and report ------------------------------------------------------------------


def write_config(tmp_path, body):
    shutil.copytree(FIXTURES, tmp_path / "fixtures")
    cfg = tmp_path / "exp.ini"
    cfg.write_text(body)
    return cfg


A6_SMALL = """[experiment]
name = constant_chain
output = out/a6

[kernel]
matrix = fixtures/chain4.txt

[run]
horizon = {horizon}
replicas = 2
seed = 5
"""


def test_run_pass_and_report(capsys, tmp_path):
    cfg = write_config(tmp_path, A6_SMALL.format(horizon=20_000))
    code, out, _ = run_cli(capsys, "run", str(cfg))
    assert code == 0
    assert "OVERALL PASS" in out
    outdir = tmp_path / "out" / "a6"
    names = sorted(p.name for p in outdir.iterdir())
    assert "summary.csv" in names and "verdict.txt" in names
    assert len([n for n in names if n.endswith(".csv")]) == 3
    code, rep, _ = run_cli(capsys, "report", str(outdir))
    assert code == 0
    assert rep.startswith("experiment: constant_chain (A6)")
    assert rep.strip().endswith("OVERALL PASS")


def test_run_is_idempotent(capsys, tmp_path):
    cfg = write_config(tmp_path, A6_SMALL.format(horizon=5000))
    outdir = tmp_path / "out" / "a6"
    run_cli(capsys, "run", str(cfg))
    first = {p.name: p.read_bytes() for p in outdir.iterdir()}
    run_cli(capsys, "run", str(cfg))
    second = {p.name: p.read_bytes() for p in outdir.iterdir()}
    assert first == second
    assert [p.name for p in (tmp_path / "out").iterdir()] == ["a6"]


def test_run_fail_exit_code(capsys, tmp_path):
    cfg = write_config(tmp_path, A6_SMALL.format(horizon=3))
    code, out, _ = run_cli(capsys, "run", str(cfg))
    assert code == 1
    assert "OVERALL FAIL" in out
    code, _, _ = run_cli(capsys, "report", str(tmp_path / "out" / "a6"))
    assert code == 1


@pytest.mark.parametrize(
    "body",
    [
        A6_SMALL.format(horizon=-5),
        A6_SMALL.format(horizon=100).replace("chain4.txt", "nope.txt"),
        A6_SMALL.format(horizon=100).replace("constant_chain", "no_such_experiment"),
        A6_SMALL.format(horizon=100).replace("[kernel]\nmatrix = fixtures/chain4.txt\n", ""),
        "[experiment\nname = x\n",
    ],
)
def test_config_errors_leave_no_output(capsys, tmp_path, body):
    cfg = write_config(tmp_path, body)
    code, _, err = run_cli(capsys, "run", str(cfg))
    assert code == 2
    assert err.startswith("config error")
    assert not (tmp_path / "out").exists()


def test_decomposable_input_is_a_config_error(capsys, tmp_path):
    cfg = write_config(tmp_path, A6_SMALL.format(horizon=100).replace("chain4.txt", "id.txt"))
    (tmp_path / "fixtures" / "id.txt").write_text("a b\n1 0\n0 1\n")
    code, _, _ = run_cli(capsys, "run", str(cfg))
    assert code == 2
    assert not (tmp_path / "out").exists()


def test_runtime_kernel_error(capsys, tmp_path, monkeypatch):
    def broken(cfg):
        raise KernelError("zero row at step 7")

    monkeypatch.setitem(REGISTRY, "constant_chain", dataclasses.replace(REGISTRY["constant_chain"], runner=broken))
    cfg = write_config(tmp_path, A6_SMALL.format(horizon=100))
    code, _, err = run_cli(capsys, "run", str(cfg))
    assert code == 3 and "zero row" in err
    assert not (tmp_path / "out").exists()


def test_failure_mid_write_keeps_previous_output(capsys, tmp_path, monkeypatch):
    cfg = write_config(tmp_path, A6_SMALL.format(horizon=5000))
    run_cli(capsys, "run", str(cfg))
    outdir = tmp_path / "out" / "a6"
    before = {p.name: p.read_bytes() for p in outdir.iterdir()}

    def boom(self):
        raise OSError("disk full")

    monkeypatch.setattr("sirp.experiments.Verdict.text", boom)
    with pytest.raises(OSError):
        cli.main(["run", str(cfg)])
    after = {p.name: p.read_bytes() for p in outdir.iterdir()}
    assert before == after
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["a6"]


def test_report_errors(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "report", str(tmp_path))
    assert code == 2
    (tmp_path / "summary.csv").write_text("# experiment: nothing\n# target: x\nstatistic,mean,sd,min,max,replicas\n")
    code, _, err = run_cli(capsys, "report", str(tmp_path))
    assert code == 2 and "unknown experiment" in err


def test_every_registered_experiment_has_a_config():
    names = set()
    for p in (FIXTURES.parent).glob("a*.ini"):
        for line in p.read_text().splitlines():
            if line.startswith("name"):
                names.add(line.split("=", 1)[1].strip())
    assert names == set(REGISTRY)
    assert sorted(e.criterion for e in REGISTRY.values()) == sorted(f"A{k}" for k in range(1, 13))
