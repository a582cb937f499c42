import inspect

import pytest

import truncem
from truncem import cli, config
from truncem.cli import run

EXAMPLE_FLAGS = ["--envelope", "paper_example", "--psi-exponent", "2/3", "--delta-star", "1", "--strict-42", "false"]


def body(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def header(path):
    return [ln[2:] for ln in path.read_text().splitlines() if ln.startswith("#")]


def test_stats_header_and_layout(tmp_path):
    out = tmp_path / "s.csv"
    assert run(["stats", "--seed", "1", "--paths", "50", "--T", "1", "--delta", "1e-2", *EXAMPLE_FLAGS, "--out", str(out)]) == 0
    head = header(out)
    assert head[0] == f"truncem {truncem.__version__}"
    assert "command: stats" in head
    assert "seed = 1" in head and "delta = 1e-2" in head and "alpha = 4" in head
    assert any(h.startswith("policy: envelope=paper_example") and "WARNING" in h for h in head)
    assert "kappa(delta=1e-2): 1.8205809258973795" in head
    rows = body(out)
    assert rows[0] == "method,min,mean,sd,kurt,skew,max"
    assert [r.split(",")[0] for r in rows[1:]] == ["TEM", "BEM"]


def test_echoed_header_reproduces_output(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    flags = ["--seed", "4", "--paths", "30", "--T", "0.5", "--delta", "1e-2", "--sigma", "0.7", *EXAMPLE_FLAGS]
    assert run(["price-bond", *flags, "--out", str(first)]) == 0
    assert run(["price-bond", "--config", str(first), "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("sigma = 0.3\npaths = 20\nT = 0.5\ndelta = 1e-2\nenvelope = paper_example\n"
                   "psi_exponent = 2/3\ndelta_star = 1\nstrict_42 = false\n")
    out = tmp_path / "o.csv"
    assert run(["price-lookback", "--config", str(cfg), "--paths", "40", "--seed", "2", "--out", str(out)]) == 0
    head = header(out)
    assert "sigma = 0.3" in head and "paths = 40" in head
    assert body(out)[1].split(",")[4] == "40"


def test_non_nested_steps_exit_1(tmp_path, capsys):
    code = run(["converge", "--deltas", "1e-2,3e-3", "--seed", "1", "--paths", "5", *EXAMPLE_FLAGS])
    assert code == 1
    assert "step sizes must be nested" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv, key",
    [
        (["stats", "--paths", "5"], "seed"),
        (["stats", "--seed", "1", "--alpha", "-1"], "alpha"),
        (["stats", "--seed", "1", "--gamma", "1.1"], "gamma"),
        (["stats", "--seed", "1", "--delta", "3e-3", *EXAMPLE_FLAGS], "delta"),
        (["stats", "--seed", "1", "--delta", "1e-2"], "delta"),
        (["stats", "--seed", "1", "--pool", "weekly", *EXAMPLE_FLAGS], "pool"),
        (["price-lookback", "--seed", "1", "--K", "0", *EXAMPLE_FLAGS], "K"),
        (["example-5-3", "--seed", "1", "--alpha", "5"], "alpha"),
        (["stats", "--seed", "1", "--paths", "1.5"], "paths"),
    ],
)
def test_config_errors_name_the_key(argv, key, capsys):
    assert run(argv) == 1
    err = capsys.readouterr().err
    assert f"config error: {key}:" in err


def test_numerical_failure_exit_2(capsys):
    argv = ["stats", "--scheme", "bem", "--sigma", "100", "--delta", "0.1", "--T", "1", "--paths", "20", "--seed", "1", *EXAMPLE_FLAGS]
    assert run(argv) == 2
    assert "step" in capsys.readouterr().err


def test_initial_segment_file(tmp_path):
    seg = tmp_path / "xi.csv"
    seg.write_text("t,x\n" + "\n".join(f"{-0.02 + 0.01 * k},{0.2 + 0.05 * k}" for k in range(3)) + "\n")
    out = tmp_path / "o.csv"
    argv = ["simulate", "--tau", "0.02", "--T", "0.03", "--delta", "1e-2", "--seed", "3", *EXAMPLE_FLAGS]
    assert run([*argv, "--initial-file", str(seg), "--out", str(out)]) == 0
    rows = body(out)
    assert rows[0] == "k,t,x"
    assert [float(r.split(",")[2]) for r in rows[1:4]] == pytest.approx([0.2, 0.25, 0.3])
    seg.write_text("0.2\n0.3\n")
    assert run([*argv, "--initial-file", str(seg)]) == 1
    seg.write_text("0.2\n0.0\n0.3\n")
    assert run([*argv, "--initial-file", str(seg)]) == 1
    assert run(["converge", "--seed", "1", "--initial-file", str(seg), *EXAMPLE_FLAGS]) == 1


def test_example_bundle_is_fixed():
    assert config.EXAMPLE_5_3["envelope"] == "paper_example"
    assert config.EXAMPLE_5_3["strict_42"] == "false"
    assert run(["example-5-3", "--seed", "1", "--alpha", "4", "--paths", "20", "--out", "/dev/null"]) == 0


def test_cli_cannot_reach_unchecked_params():
    for mod in (cli, config):
        assert "unchecked" not in inspect.getsource(mod)
        assert "_skip_validation" not in inspect.getsource(mod)


def test_plot_data_written(tmp_path):
    out, plot = tmp_path / "o.csv", tmp_path / "p.csv"
    argv = ["exit-prob", "--seed", "1", "--paths", "20", "--T", "1", "--delta", "1e-2", "--k-levels", "1.2,2",
            *EXAMPLE_FLAGS, "--out", str(out), "--plot-data", str(plot)]
    assert run(argv) == 0
    lines = plot.read_text().splitlines()
    assert lines[0] == "x,y" and len(lines) == 3
