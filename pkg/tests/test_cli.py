import textwrap
from pathlib import Path

from dgcert import cli


def write(tmp_path: Path, body: str, name="run.toml") -> str:
    p = tmp_path / name
    p.write_text(textwrap.dedent(body))
    return str(p)


MINIMAL = """
    [problem]
    manufactured = "zero"
    final_time = 1.0

    [time]
    kind = "uniform"
    slabs = 1
    degree = 0

    [space]
    kind = "uniform"
    exponent = 2
"""

HEAT = """
    [problem]
    manufactured = "sinpi_expdecay"
    final_time = 1.0

    [time]
    kind = "uniform"
    slabs = 4
    degree = 1

    [space]
    kind = "uniform"
    exponent = 4

    [estimator]
    theta_mode = "both"
"""


def test_minimal_zero_config(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    out = tmp_path / "out"
    assert cli.main(["run", cfg, "--out", str(out), "--check"]) == 0
    bounds = (out / "bounds.csv").read_text().splitlines()
    header = bounds[0].split(",")
    row = bounds[1].split(",")
    for col in ("l2x_bound", "linfh_bound", "true_l2x", "true_linfh"):
        assert float(row[header.index(col)]) == 0.0
    assert (out / "indicators.csv").exists()
    assert "check: ok" in (out / "summary.txt").read_text()


def test_malformed_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("not [valid\n")
    assert cli.main(["run", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err
    missing_field = write(tmp_path, MINIMAL.replace('"zero"', '"nonexistent"'), "f.toml")
    assert cli.main(["run", missing_field]) == 2
    err = capsys.readouterr().err
    assert "manufactured" in err
    assert cli.main(["run", str(tmp_path / "absent.toml")]) == 2


def test_run_is_deterministic(tmp_path):
    cfg = write(tmp_path, HEAT)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert cli.main(["run", cfg, "--out", str(out1)]) == 0
    assert cli.main(["run", cfg, "--out", str(out2)]) == 0
    for name in ("indicators.csv", "bounds.csv", "theta_modes.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_theta_mode_both_emits_comparison(tmp_path):
    cfg = write(tmp_path, HEAT)
    out = tmp_path / "out"
    assert cli.main(["run", cfg, "--out", str(out)]) == 0
    rows = (out / "theta_modes.csv").read_text().splitlines()
    assert rows[0] == "n,theta_super,theta_pf,ratio_pf_over_super"
    assert len(rows) == 5
    for line in rows[1:]:
        vals = line.split(",")
        assert float(vals[1]) > 0 and float(vals[2]) > 0


def test_lambda_flag_and_validation(tmp_path, capsys):
    cfg = write(tmp_path, HEAT)
    out = tmp_path / "out"
    assert cli.main(["run", cfg, "--out", str(out), "--lambda", "0.5",
                     "--theta-mode", "super"]) == 0
    bounds = (out / "bounds.csv").read_text().splitlines()
    header = bounds[0].split(",")
    assert float(bounds[1].split(",")[header.index("lambda")]) == 0.5
    assert cli.main(["run", cfg, "--lambda", "1.5"]) == 2


def test_sweep_emits_rate_table(tmp_path):
    cfg = write(tmp_path, HEAT.replace('theta_mode = "both"', 'theta_mode = "super"') + """
    [sweep]
    axis = "tau"
    halvings = 3
    """)
    out = tmp_path / "out"
    assert cli.main(["run", cfg, "--out", str(out)]) == 0
    rows = (out / "rates.csv").read_text().splitlines()
    assert len(rows) == 5  # header + 4 sweep points
    summary = (out / "summary.txt").read_text()
    assert "fitted temporal order (theta accumulation)" in summary
    fitted = float([ln for ln in summary.splitlines()
                    if "theta accumulation" in ln][0].split(":")[1])
    assert abs(fitted - 2.0) <= 0.35  # r = 1


def test_check_tripwire_exits_4(tmp_path, monkeypatch):
    cfg = write(tmp_path, HEAT)
    out = tmp_path / "out"
    monkeypatch.setattr(cli, "EFFECTIVITY_CAP", 1.0)
    assert cli.main(["run", cfg, "--out", str(out), "--check"]) == 4
    summary = (out / "summary.txt").read_text()
    assert "TRIPWIRE" in summary and "effectivity_cap" in summary


def test_solver_failure_exits_3(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, MINIMAL)

    def boom(*a, **k):
        raise RuntimeError("slab solve failed")

    monkeypatch.setattr(cli, "_run_once", boom)
    assert cli.main(["run", cfg]) == 3
    assert "solver failure" in capsys.readouterr().err


def test_explicit_time_and_space_config(tmp_path):
    cfg = write(tmp_path, """
    [problem]
    manufactured = "sinpi_expdecay"
    final_time = 1.0

    [time]
    kind = "explicit"
    nodes = [0.0, 0.25, 1.0]
    degrees = [1, 2]

    [space]
    kind = "explicit"
    cuts = [[0.5], [0.25, 0.5]]
    """)
    out = tmp_path / "out"
    assert cli.main(["run", cfg, "--out", str(out)]) == 0
    rows = (out / "indicators.csv").read_text().splitlines()
    assert len(rows) == 3
    header = rows[0].split(",")
    assert int(rows[1].split(",")[header.index("dim_V")]) == 1
    assert int(rows[2].split(",")[header.index("dim_V")]) == 2


def test_geometric_partition_config(tmp_path):
    cfg = write(tmp_path, """
    [problem]
    manufactured = "rough_ic"
    final_time = 1.0

    [time]
    kind = "geometric"
    slabs = 4
    sigma = 0.25
    degree_slope = 1.0

    [space]
    kind = "uniform"
    exponent = 4
    """)
    out = tmp_path / "out"
    assert cli.main(["run", cfg, "--out", str(out)]) == 0
    rows = (out / "indicators.csv").read_text().splitlines()
    header = rows[0].split(",")
    degs = [int(r.split(",")[header.index("r_n")]) for r in rows[1:]]
    assert degs == [0, 1, 2, 3]
