import json
import subprocess
import sys

import pytest

from vibrodyn.cli import (EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_OK, SWEEP_COLUMNS, TRAJECTORY_COLUMNS,
                          ConfigError, auto_truncation, load_spec, main, parse_config, preset_names)

SMALL = """\
# short weak-coupling run
g_eV = 0.025
N = auto
t_end = 300
grid_points = 512
spectrum_window = half-hann
"""


def _write(tmp_path, text, name="small.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("text, line", [
    ("g_eV = 0.025\nbogus = 1\n", 2),
    ("g_eV = 0.025\ng_eV = 0.03\n", 2),
    ("\n\nmode = sideways\n", 3),
    ("gamma_D_eV = -1e-3\n", 1),
    ("N = many\n", 1),
    ("t_end\n", 1),
])
def test_malformed_config_reports_line(text, line):
    with pytest.raises(ConfigError, match=f"line {line}:"):
        parse_config(text)


def test_malformed_config_exits_with_config_code(tmp_path, capsys):
    path = _write(tmp_path, "g_eV = 0.025\nomega_v_eV = 0\n")
    assert main(["run", path, "--output-dir", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG


def test_pure_mode_rejects_thermal_bath():
    with pytest.raises(ConfigError):
        parse_config("mode = pure\nn_v = 0.1\n")


def test_pump_forms():
    assert parse_config("pump_gamma_p0_eV = 1e-2\n").params.pump.shape == "constant"
    p = parse_config("pump_gamma_p0_eV = 1e-2\npump_t0 = 100\n").params.pump
    assert (p.shape, p.t0) == ("rectangular", 100.0)
    assert parse_config("").params.pump.shape == "off"


def test_auto_truncation():
    assert auto_truncation(0.0, 0.025, 0.0) == 1
    assert auto_truncation(0.025, 0.025, 0.0) == 22
    assert auto_truncation(0.0, 0.025, 1.0) >= 27


def test_every_preset_parses():
    names = preset_names()
    assert {"fig1", "fig3", "fig7"} <= set(names)
    for name in names:
        spec = load_spec(name)
        assert spec.resolved["N"] == spec.params.N


def test_presets_command(capsys):
    assert main(["presets", "--show", "fig3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "fig7" in out and "g_eV" in out


def test_run_writes_identical_outputs(tmp_path, capsys):
    path = _write(tmp_path, SMALL)
    outs = []
    for k in range(2):
        d = tmp_path / f"out{k}"
        assert main(["run", path, "--output-dir", str(d)]) == EXIT_OK
        outs.append(d)
    for fname in ("small_trajectory.csv", "small_spectrum.csv"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
    recs = [json.loads((d / "small.json").read_text()) for d in outs]
    for r in recs:
        r["config"].pop("output_dir")
    assert recs[0] == recs[1]
    header = (outs[0] / "small_trajectory.csv").read_text().splitlines()[0]
    assert header == ",".join(TRAJECTORY_COLUMNS)
    rec = json.loads((outs[0] / "small.json").read_text())
    assert rec["config"]["N"] == 22 and rec["config"]["N_auto"] is True
    assert rec["convergence"]["converged"]
    assert rec["t_col"] is not None


def test_underresolved_truncation_exits_3(tmp_path):
    path = _write(tmp_path, "g_eV = 0.05\nN = 4\nt_end = 200\ngrid_points = 256\n", "tiny.cfg")
    assert main(["run", path, "--output-dir", str(tmp_path / "o")]) == EXIT_CONVERGENCE
    rec = json.loads((tmp_path / "o" / "tiny.json").read_text())
    assert rec["convergence"]["converged"] is False


def test_sweep_outputs(tmp_path):
    path = _write(tmp_path, "mode = pure\nsweep_parameter = g\nsweep_values = 0.0, 0.05\n", "sw.cfg")
    out = tmp_path / "o"
    assert main(["sweep", path, "--output-dir", str(out), "--workers", "1"]) == EXIT_OK
    lines = (out / "sw_sweep.csv").read_text().splitlines()
    assert lines[0] == ",".join(SWEEP_COLUMNS)
    assert lines[1].endswith("divergent") and lines[2].endswith("ok")
    assert sorted(p.name for p in (out / "points").iterdir()) == ["sw_000.json", "sw_001.json"]


def test_sweep_without_values_is_config_error(tmp_path):
    assert main(["sweep", _write(tmp_path, "g_eV = 0.025\n"), "--output-dir", str(tmp_path)]) == EXIT_CONFIG


def test_validate_command_passes():
    res = subprocess.run([sys.executable, "-m", "vibrodyn.cli", "validate"],
                         capture_output=True, text=True, timeout=300)
    assert res.returncode == 0, res.stdout + res.stderr
    assert "checks passed" in res.stdout
