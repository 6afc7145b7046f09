import json
import logging
import math
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from quadpend import cli
from quadpend.config import (
    ParseError,
    ValidationError,
    dumps,
    from_preset,
    load_config,
    loads,
    save_config,
)
from quadpend.controller import ControllerGains
from quadpend.dynamics import PhysicalParams, hover_state
from quadpend.integrator import IntegratorConfig, simulate
from quadpend.io import COLUMNS, RunSummary, read_trajectory, summarize, write_summary, write_trajectory
from quadpend.plots import render_plots, stick_indices
from quadpend.presets import OMEGA0, R0, X0, XDOT0, preset

# rows of the experiment table, typed in by hand
GOLDEN = {
    1: ((0.70710678, 0, 0.70710678), (0.5, 0, -0.5), (1, 8, 4)),
    2: ((0.70710678, 0, 0.70710678), (0.7, 0, 0.7), (1, 9, 4.4)),
    3: ((0.1, 0.0995, -0.99), (2.2263, 0.25, 0.25), (1, 11, 5)),
    4: ((0, 0, -1), (0, 0, 0), (1, 12, 5)),
    5: ((-0.70710678, 0, 0.70710678), (0.7, 0, 0.7), (1, 9, 4)),
}


@pytest.fixture(scope="module")
def short_log():
    p = preset(4)
    return simulate(p.initial, p.gains, p.params, IntegratorConfig(t_end=0.6))


@pytest.mark.parametrize("pid", sorted(GOLDEN))
def test_presets_match_table(pid):
    y0, yd0, K = GOLDEN[pid]
    p = preset(pid)
    assert p.id == pid
    assert p.y0_table == y0 and p.ydot0_table == yd0
    assert p.gains.as_tuple() == K
    assert abs(np.linalg.norm(p.initial.y) - 1.0) < 1e-15
    assert abs(np.dot(p.initial.y, p.initial.ydot)) < 1e-15
    assert np.array_equal(p.initial.R, R0) and np.array_equal(p.initial.omega, OMEGA0)
    assert np.array_equal(p.initial.x, X0) and np.array_equal(p.initial.xdot, XDOT0)


def test_preset_shared_conditions_and_errors():
    assert np.array_equal(R0, [[0.36, 0.48, -0.8], [-0.8, 0.6, 0.0], [0.48, 0.64, 0.60]])
    assert np.array_equal(OMEGA0, [0.8, -0.3, 0.5])
    assert np.array_equal(X0, [1, 1, 1]) and np.array_equal(XDOT0, [2, 1.5, 1])
    assert preset(4).params == PhysicalParams()
    assert np.array_equal(preset(4).initial.y, [0.0, 0.0, -1.0])
    for bad in (0, 6):
        with pytest.raises(KeyError):
            preset(bad)


def test_preset_corrections_are_logged(caplog):
    with caplog.at_level(logging.WARNING, logger="quadpend.presets"):
        preset(3)
    assert any("normalised" in r.message for r in caplog.records)
    assert any("projected" in r.message for r in caplog.records)


def test_config_defaults_to_preset(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("experiment = 2\n")
    setup = load_config(path)
    ref = from_preset(2)
    assert dumps(setup) == dumps(ref)
    initial, gains, params, cfg = setup
    assert gains.as_tuple() == (1, 9, 4.4) and cfg == IntegratorConfig()
    assert dumps(loads("")) == dumps(from_preset(4))


def test_config_overrides():
    s = loads("""
experiment = 1
[params]
M = 0.5
[gains]
k2 = 6
[integrator]
dt = 0.002
t_end = 1.0
[initial]
y = [0.0, 0.0, -1.0]
ydot = [0.0, 0.0, 0.0]
""")
    assert s.params.M == 0.5 and s.params.m == 0.1
    assert s.gains.as_tuple() == (1, 8, 6)
    assert s.cfg.dt == 0.002 and s.cfg.n_steps == 500
    assert np.array_equal(s.initial.y, [0.0, 0.0, -1.0])
    assert np.array_equal(s.initial.R, R0)


@pytest.mark.parametrize(
    "text,key",
    [
        ("[params]\nM = -1", "params.M"),
        ("[params]\nl = -0.5", "params.l"),
        ("[params]\ninertia = [[1,0,0],[0,-1,0],[0,0,1]]", "params.inertia"),
        ("[gains]\nk1 = 0", "gains.k1"),
        ("[initial]\ny = [0, 0, 1.01]", "initial.y"),
        ("[initial]\ny = [0, 1]", "initial.y"),
        ("[initial]\nR = [[1,0,0],[0,1,0],[0,0,-1]]", "initial.R"),
        ("[integrator]\ndt = 0.5", "integrator.dt"),
        ("[integrator]\nprojection = 1", "integrator.projection"),
        ("[params]\nQ = 1", "params.Q"),
        ("[gains]\nk_d = \"big\"", "gains.k_d"),
        ("bogus = 3", "bogus"),
        ("experiment = 9", "experiment"),
    ],
)
def test_config_validation_names_key(text, key):
    with pytest.raises(ValidationError) as exc:
        loads(text)
    assert exc.value.key == key
    assert key.split(".")[-1] in str(exc.value)


def test_config_small_corrections_accepted():
    s = loads("[initial]\ny = [0.0, 0.0, 1.0005]\nydot = [0.1, 0.0, 0.2]")
    assert abs(np.linalg.norm(s.initial.y) - 1.0) < 1e-15
    assert np.allclose(s.initial.ydot, [0.1, 0.0, 0.0])


def test_config_parse_error(tmp_path):
    with pytest.raises(ParseError):
        loads("[params\nM = 1")
    path = tmp_path / "bin.toml"
    path.write_bytes(b"\xff\xfe")
    with pytest.raises(ParseError):
        load_config(path)


@pytest.mark.parametrize("pid", [1, 2, 3, 4, 5])
def test_config_round_trip_is_fixed_point(tmp_path, pid):
    text = dumps(from_preset(pid))
    assert dumps(loads(text)) == text
    path = tmp_path / "c.toml"
    save_config(loads(text), path)
    assert path.read_text() == text


def test_csv_layout(tmp_path, short_log):
    path = tmp_path / "t.csv"
    write_trajectory(short_log, path)
    header, data = read_trajectory(path)
    assert header == list(COLUMNS)
    assert header[:4] == ["t", "x1", "x2", "x3"] and header[-5:] == ["V1", "V2", "V", "e3_dot_y", "e3_dot_z"]
    assert len(header) == 38
    lines = path.read_text().splitlines()
    assert len(lines) == math.floor(0.6 / 1e-3) + 2
    assert data[0, header.index("e3_dot_y")] == -1.0
    init = preset(4).initial
    assert np.array_equal(data[0, 1:25], init.flat())
    assert data[0, 0] == 0.0


def test_csv_round_trips_doubles(tmp_path, short_log):
    path = tmp_path / "t.csv"
    write_trajectory(short_log, path)
    _, data = read_trajectory(path)
    assert np.array_equal(data[:, header_index("omega1"):header_index("omega3") + 1], short_log.omega)
    assert np.array_equal(data[:, header_index("V")], short_log.V)


def header_index(name):
    return COLUMNS.index(name)


def test_csv_is_byte_deterministic(tmp_path):
    p = preset(1)
    cfg = IntegratorConfig(t_end=0.2)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trajectory(simulate(p.initial, p.gains, p.params, cfg), a)
    write_trajectory(simulate(p.initial, p.gains, p.params, cfg), b)
    assert a.read_bytes() == b.read_bytes()


def test_summary_fields(tmp_path, short_log):
    s = summarize(short_log, experiment=4)
    d = s.as_dict()
    for key in ("final_e3_dot_y", "final_e3_dot_z", "V0", "V_end", "max_positive_dV", "max_drift_y",
                "max_drift_R", "wall_time", "decrease"):
        assert key in d
    assert d["V0"] == pytest.approx(short_log.V[0])
    path = tmp_path / "s.json"
    write_summary([s, s], path)
    back = json.loads(path.read_text())
    assert len(back) == 2 and back[0]["experiment"] == 4
    with pytest.raises(ValueError):
        RunSummary(math.nan, 1, 1, 1, 1, 1, 1, 1, 1, 1)


def test_plots_are_well_formed_svg(tmp_path, short_log):
    paths = render_plots(short_log, tmp_path, prefix="exp4")
    assert [os.path.basename(p) for p in paths] == ["exp4_alignment.svg", "exp4_lyapunov.svg", "exp4_stick.svg"]
    for p in paths:
        root = ET.parse(p).getroot()
        assert root.tag.endswith("svg")


def test_plots_deterministic(tmp_path, short_log):
    a = render_plots(short_log, tmp_path / "a")
    b = render_plots(short_log, tmp_path / "b")
    for x, y in zip(a, b):
        assert open(x, "rb").read() == open(y, "rb").read()


def test_equilibrium_alignment_plot_shows_constant_lines(tmp_path):
    from quadpend.plots import alignment_figure

    log = simulate(hover_state(), ControllerGains(1, 12, 5), PhysicalParams(), IntegratorConfig(t_end=0.3))
    fig = alignment_figure(log)
    lines = fig.axes[0].get_lines()[:2]
    for ln in lines:
        assert np.all(ln.get_ydata() == 1.0)
    render_plots(log, tmp_path)


def test_stick_sampling_period():
    t = np.arange(6501) * 1e-3
    idx = stick_indices(t, 1e-3)
    assert np.allclose(np.diff(t[idx]), 0.25)
    assert len(idx) == 27


def test_experiment4_alignment_enters_band(preset_runs):
    log = preset_runs[4]
    assert 0.95 <= log.e3_dot_y[-1] <= 1.0 and 0.95 <= log.e3_dot_z[-1] <= 1.0


def test_cli_list(capsys):
    assert cli.main(["list"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    assert len(rows) == 5
    assert rows[3].split()[0] == "4" and rows[3].split()[-3:] == ["1", "12", "5"]
    assert rows[1].split()[-3:] == ["1", "9", "4.4"]


def test_cli_run_experiment(tmp_path, capsys):
    out = tmp_path / "t.csv"
    summ = tmp_path / "s.json"
    plots = tmp_path / "plots"
    code = cli.main(["run", "--experiment", "4", "--out", str(out), "--summary", str(summ), "--plots", str(plots)])
    assert code == 0
    assert len(out.read_text().splitlines()) == 6502
    assert json.loads(summ.read_text())["experiment"] == 4
    assert sorted(os.listdir(plots)) == ["exp4_alignment.svg", "exp4_lyapunov.svg", "exp4_stick.svg"]
    assert "experiment 4" in capsys.readouterr().out


def test_cli_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[params]\nl = -0.5\n")
    assert cli.main(["run", "--config", str(bad)]) == 1
    assert "params.l" in capsys.readouterr().err
    bad.write_text("[params\n")
    assert cli.main(["run", "--config", str(bad)]) == 1
    assert cli.main(["run", "--config", str(tmp_path / "missing.toml")]) == 1


def test_cli_usage_errors():
    with pytest.raises(SystemExit) as exc:
        cli.main(["run"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--experiment", "7"])
    assert exc.value.code == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_non_finite_exit_code(tmp_path, capsys):
    cfg = tmp_path / "nan.toml"
    cfg.write_text("[initial]\nomega = [1e308, 1e308, 1e308]\n[integrator]\nt_end = 0.01\n")
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert "non-finite" in capsys.readouterr().err


def test_cli_run_with_overrides(tmp_path):
    cfg = tmp_path / "c.toml"
    save_config(from_preset(1), cfg)
    out = tmp_path / "o.csv"
    assert cli.main(["run", "--config", str(cfg), "--dt", "0.002", "--t-end", "0.1", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 52
    assert cli.main(["run", "--config", str(cfg), "--dt", "0.5"]) == 1


def test_cli_run_all(tmp_path):
    out = tmp_path / "t.csv"
    summ = tmp_path / "s.json"
    assert cli.main(["run", "--all", "--jobs", "2", "--t-end", "0.05", "--out", str(out), "--summary", str(summ)]) == 0
    for pid in range(1, 6):
        assert (tmp_path / f"t_exp{pid}.csv").exists()
    assert [d["experiment"] for d in json.loads(summ.read_text())] == [1, 2, 3, 4, 5]


def test_cli_check(capsys):
    assert cli.main(["check", "--experiment", "4"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] e3.y(end) > 0.95" in out and "[INFO] max positive dV/dt" in out
    assert cli.main(["check", "--experiment", "4", "--t-end", "0.5"]) == 1
