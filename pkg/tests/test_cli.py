import numpy as np
import pytest

from pstokes_lab.cli import main
from pstokes_lab.experiments import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    glen_viscosity,
    parse_config,
    read_csv,
    write_csv,
)


def test_default_eps_sweeps():
    cfg = ExperimentConfig()
    assert cfg.resolved_eps("ms") == (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    assert cfg.resolved_eps("glacier") == (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def test_solver_defaults():
    cfg = ExperimentConfig()
    assert cfg.solver_config("ms").warm_start_steps == 5
    assert cfg.solver_config("glacier").warm_start_steps == 0
    assert cfg.replace(method="picard").solver_config("ms").warm_start_steps == 0
    assert cfg.solver_config("ms").line_search is False


def test_glen_viscosity():
    # n = 3: 2^(1/3) A^(-1/3)
    assert np.isclose(glen_viscosity(1e-16), 2 ** (1 / 3) * 1e16 ** (1 / 3), rtol=1e-14)
    assert np.isclose(glen_viscosity(0.5, n=1.0), 2.0)


def test_echo_roundtrip():
    cfg = ExperimentConfig(
        experiment="glacier",
        element="mini",
        eps_list=(1e-3, 2.5e-4),
        lake_interval=None,
        schur="mnu",
        mesh_files=("a.mesh", "b.mesh"),
        line_search=True,
    )
    assert parse_config("\n".join(cfg.echo())) == cfg
    assert parse_config("\n".join(ExperimentConfig().echo())) == ExperimentConfig()


def test_parse_comments_lists_and_case():
    cfg = parse_config("# header\nExperiment = glacier  # trailing\neps_list = 1e-2, 1e-3\nschur = both\n\n")
    assert cfg.experiment == "glacier"
    assert cfg.eps_list == (1e-2, 1e-3)
    assert cfg.schur == ("m", "mnu")


@pytest.mark.parametrize(
    "text, line",
    [
        ("nx = 4\nbogus = 1\n", 2),
        ("nx = four\n", 1),
        ("plots = maybe\n", 1),
        ("nx 4\n", 1),
    ],
)
def test_parse_errors_report_line(text, line):
    with pytest.raises(ConfigError, match=f"line {line}"):
        parse_config(text)


@pytest.mark.parametrize(
    "kw",
    [
        dict(experiment="cavity"),
        dict(element="p1p1"),
        dict(method="secant"),
        dict(schur="diag"),
        dict(eps_list=(1e-2, -1.0)),
        dict(lake_interval=(5.0, 1.0)),
        dict(nx=0),
        dict(cnu_mode="none"),
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_csv_is_deterministic(tmp_path):
    rows = [{c: 0.1 * (i + 1) if c != "schur" else "m" for c in CSV_COLUMNS} for i in range(3)]
    for r in rows:
        r["converged"] = True
        r["nonlinear_iters"] = 4
    a = write_csv(tmp_path / "a.csv", CSV_COLUMNS, rows, ["x = 1"])
    b = write_csv(tmp_path / "b.csv", CSV_COLUMNS, rows, ["x = 1"])
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.startswith("# x = 1\n")
    assert "0.30000000000000004" in text
    back = read_csv(a)
    assert len(back) == 3 and float(back[2]["eps"]) == 0.1 * 3


TINY = "nx = 4\neps_list = 1e-1, 1e-2\nnx_list = 4, 6\n"


def run_cli(tmp_path, name, *args):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY)
    out = tmp_path / name
    code = main([*args, "--config", str(cfg), "--out", str(out)])
    return code, out


def test_cli_ms_tiny(tmp_path, capsys):
    code, out = run_cli(tmp_path, "run1", "ms")
    assert code == 0
    rows = read_csv(out / "ms_report.csv")
    assert len(rows) == 4
    assert {r["schur"] for r in rows} == {"m", "mnu"}
    assert all(r["converged"] == "1" for r in rows)
    assert (out / "ms_m.svg").exists() and (out / "ms_mnu.svg").exists()
    text = (out / "ms_report.csv").read_text()
    assert "# config: nx = 4" in text and "# errors: eps = 0.10000000000000001" in text
    assert "wrote" in capsys.readouterr().out


def test_cli_is_deterministic(tmp_path):
    _, a = run_cli(tmp_path, "a", "ms", "--schur", "mnu")
    _, b = run_cli(tmp_path, "b", "ms", "--schur", "mnu")
    ta = (a / "ms_report.csv").read_text().replace(str(a), "OUT")
    tb = (b / "ms_report.csv").read_text().replace(str(b), "OUT")
    assert ta == tb
    assert (a / "ms_mnu.svg").read_bytes() == (b / "ms_mnu.svg").read_bytes()


def test_cli_overrides(tmp_path):
    code, out = run_cli(tmp_path, "mini", "ms", "--element", "mini", "--method", "picard", "--eps", "0.5")
    assert code == 0
    rows = read_csv(out / "ms_report.csv")
    assert len(rows) == 2 and float(rows[0]["eps"]) == 0.5


def test_cli_infsup_tiny(tmp_path):
    code, out = run_cli(tmp_path, "inf", "infsup", "--eps", "0.1")
    assert code == 0
    rows = read_csv(out / "infsup_report.csv")
    assert [r["mesh"] for r in rows] == ["square_nx4", "square_nx6"]
    assert (out / "infsup.svg").exists()


def test_cli_glacier_tiny(tmp_path):
    cfg = tmp_path / "g.cfg"
    cfg.write_text("n_columns = 16\nn_layers = 3\neps_list = 1e-2\nschur = mnu\n")
    code = main(["glacier", "--config", str(cfg), "--out", str(tmp_path / "g")])
    assert code == 0
    text = (tmp_path / "g" / "glacier_report.csv").read_text()
    assert "# speed: eps = 0.01" in text and "mesh quality" in text


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nx = 4\nfoo = 2\n")
    assert main(["ms", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["ms", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_rejects_bad_eps():
    with pytest.raises(SystemExit):
        main(["ms", "--eps", "0.1,-2"])


def test_cli_nonconvergence_exit_code(tmp_path):
    cfg = tmp_path / "n.cfg"
    cfg.write_text("nx = 4\neps_list = 1e-3\nmax_iters = 1\nwarm_start_steps = 0\nmethod = picard\n")
    assert main(["ms", "--config", str(cfg), "--out", str(tmp_path / "n")]) == 1
