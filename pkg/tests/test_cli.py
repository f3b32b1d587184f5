import xml.dom.minidom
from pathlib import Path

import pytest

from goalsplit.cli import main
from goalsplit.config import format_config, preset
from goalsplit.driver import RunConfig, run
from goalsplit.outputs import (
    ESTIMATOR_COLUMNS,
    HISTORY_COLUMNS,
    estimator_csv,
    history_csv,
    read_history_csv,
    read_mesh_dump,
    svg_convergence,
    svg_iterations,
    svg_mesh,
)

SMALL = ["--levels", "2", "--n-init", "8"]


def _files(d: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_empty_history_is_header_only():
    assert history_csv(None) == ",".join(HISTORY_COLUMNS) + "\n"
    assert estimator_csv(None) == ",".join(ESTIMATOR_COLUMNS) + "\n"


def test_single_level_history(experiments):
    p, q = experiments["exp1"]
    hist = run(p, q, RunConfig(L_max=0, n_init=6))
    text = history_csv(hist, 1.0)
    lines = text.splitlines()
    assert len(lines) == 2
    cols = read_history_csv(text)
    assert cols["N"] == [hist.levels[0].N] and cols["J_discrete"] == [hist.levels[0].J_discrete]
    svg = svg_convergence([("x", cols)])
    assert svg.count("<circle") == 2  # one point per curve
    xml.dom.minidom.parseString(svg)


def test_estimator_csv_rows(experiments):
    p, q = experiments["exp1"]
    hist = run(p, q, RunConfig(L_max=1, n_init=6))
    rows = estimator_csv(hist).splitlines()[1:]
    assert len(rows) == sum(r.N for r in hist.levels)
    level, K, nu, mu, comp, cell, left, right, val = rows[0].split(",")
    assert (comp, cell, float(left)) == ("1", "1", 0.0)


def test_preset_run_writes_all_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["--preset", "exp1", "--out", str(out), "--emit-matrices", *SMALL]) == 0
    names = set(_files(out))
    for v in ("euler_goal", "euler_uniform", "cn_goal", "cn_uniform"):
        for suffix in (".csv", "_estimators.csv", "_mesh.txt", "_mesh.svg", "_iterations.svg", "_F_hat.txt",
                       "_F_check.txt", "_G.txt", "_H.txt"):
            assert f"exp1_{v}{suffix}" in names
    conv = (out / "exp1_convergence.svg").read_text()
    assert conv.count("stroke-dasharray") >= 4  # four dashed estimator curves (plus legend entries)
    for name in names:
        if name.endswith(".svg"):
            xml.dom.minidom.parse(str(out / name))


def test_reruns_are_byte_identical(tmp_path):
    args = ["--preset", "exp3", "--scheme", "cn", *SMALL]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_plots_regenerate_from_files(tmp_path):
    assert main(["--preset", "exp2", "--scheme", "euler", "--refine", "goal", "--out", str(tmp_path), *SMALL]) == 0
    label = "exp2_euler_goal"
    cols = read_history_csv((tmp_path / f"{label}.csv").read_text())
    assert svg_iterations([(label, cols)]) == (tmp_path / f"{label}_iterations.svg").read_text()
    assert svg_convergence([(label, cols)]) == (tmp_path / "exp2_convergence.svg").read_text()
    nodes = read_mesh_dump((tmp_path / f"{label}_mesh.txt").read_text())
    assert len(nodes) == 4
    assert svg_mesh(nodes, f"{label} final mesh") == (tmp_path / f"{label}_mesh.svg").read_text()


def test_csv_values_have_full_precision(tmp_path, references):
    assert main(["--preset", "exp1", "--scheme", "euler", "--refine", "uniform", "--out", str(tmp_path), *SMALL]) == 0
    cols = read_history_csv((tmp_path / "exp1_euler_uniform.csv").read_text())
    _, J = references["exp1"]
    for Jd, err in zip(cols["J_discrete"], cols["J_error"]):
        assert err == abs(J - Jd)
    assert cols["N"] == [16, 32, 64]


def test_config_file_and_overrides(tmp_path):
    cfg = preset("exp1")
    path = tmp_path / "exp.toml"
    path.write_text(format_config(cfg))
    out = tmp_path / "o"
    rc = main(["--config", str(path), "--scheme", "euler", "--refine", "goal", "--splitting", "full", "--kmax", "3",
               "--fraction", "0.5", "--out", str(out), *SMALL])
    assert rc == 0
    cols = read_history_csv((out / "exp1_euler_goal.csv").read_text())
    assert cols["K_l"] == [1, 1, 1] and all(nu == 0.0 for nu in cols["nu"])
    assert cols["N"] == [16, 24, 36]


@pytest.mark.parametrize(
    "args,code,fragment",
    [
        (["--config", "missing.toml"], 4, "I/O error"),
        (["--preset", "exp1", "--fraction", "0"], 2, "configuration error"),
        (["--preset", "exp1", "--n-init", "1"], 2, "configuration error"),
    ],
)
def test_error_exit_codes(tmp_path, capsys, args, code, fragment):
    assert main([*args, "--out", str(tmp_path)]) == code
    assert fragment in capsys.readouterr().err


def test_bad_config_file(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[problem]\ninterval = [0, 1]\nmatrix = [[1.0]]\ninitial = [1.0, 2.0]\n[[qoi]]\ntime = 1\ncomponent = 1\n")
    assert main(["--config", str(path), "--out", str(tmp_path)]) == 2
    assert "problem.matrix" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    # a stiff decay that the reference integrator cannot resolve fails its gate
    path = tmp_path / "stiff.toml"
    path.write_text("[problem]\ninterval = [0, 1]\nmatrix = [[1e7]]\ninitial = [1.0]\n[[qoi]]\ntime = 1\ncomponent = 1\n")
    assert main(["--config", str(path), "--out", str(tmp_path), *SMALL]) == 3
    assert "numerical error" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["--preset", "exp9"])
    assert exc.value.code == 2
