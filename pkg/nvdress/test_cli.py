"""Tests for the command-line interface."""

from pathlib import Path

import pytest
from click.testing import CliRunner

from nvdress.cli import EXIT_INVALID, EXIT_NUMERICAL, cli

RESONANT = """\
model:
  levels: {omega_x_mhz: 2900.0, omega_y_mhz: 0.0}
  drive: {omega_d_mhz: 2900.0, power_mw: 100.0, k_rabi_mhz_per_sqrt_mw: 15.8}
  laser: {rabi_x_mhz: 3.0, rabi_y_mhz: 3.0}
  lineshape: {gamma_star_mhz: 15.0, sigma_x_mhz: 20.0, sigma_y_mhz: 20.0}
scan: {min_mhz: -200.0, max_mhz: 200.0, step_mhz: 1.0}
"""

ORACLE = """\
model:
  levels: {omega_x_mhz: 20.0, omega_y_mhz: 0.0}
  laser: {rabi_y_mhz: 3.0}
  lineshape: {gamma_star_mhz: 15.0}
scan: {min_mhz: -30.0, max_mhz: 30.0, step_mhz: 6.0}
"""

DIPOLE = """\
dipole:
  splitting_mhz: 557.0
  field_kv_per_m: 30.0
  field_stderr_kv_per_m: 13.0
  rabi_m_mhz: 9.1
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workdir(runner):
    with runner.isolated_filesystem():
        yield Path.cwd()


def _config(workdir: Path, text: str, name: str = "run.yaml") -> str:
    path = workdir / name
    path.write_text(text)
    return str(path)


class TestSimulatePle:
    """Test the simulate-ple command end to end."""

    def test_writes_result_and_sidecar(self, runner, workdir):
        result = runner.invoke(cli, ["simulate-ple", _config(workdir, RESONANT)])

        assert result.exit_code == 0, result.output
        output = workdir / "run.simulate-ple.csv"
        assert "Wrote run.simulate-ple.csv" in result.output
        lines = output.read_text().splitlines()
        assert lines[0] == "# command=simulate-ple"
        assert "frequency_mhz,intensity" in lines
        assert (workdir / "run.simulate-ple.csv.params.yaml").exists()

    def test_refuses_to_overwrite(self, runner, workdir):
        config = _config(workdir, RESONANT)
        assert runner.invoke(cli, ["simulate-ple", config]).exit_code == 0

        result = runner.invoke(cli, ["simulate-ple", config])
        assert result.exit_code == EXIT_INVALID
        assert "already exists" in result.output

    def test_overwrite_is_byte_identical(self, runner, workdir):
        config = _config(workdir, RESONANT)
        runner.invoke(cli, ["simulate-ple", config, "-o", "out/ple.csv"])
        first = (workdir / "out" / "ple.csv").read_bytes()

        result = runner.invoke(cli, ["simulate-ple", config, "-o", "out/ple.csv", "--overwrite"])
        assert result.exit_code == 0, result.output
        assert (workdir / "out" / "ple.csv").read_bytes() == first

    def test_sidecar_reruns(self, runner, workdir):
        config = _config(workdir, RESONANT)
        runner.invoke(cli, ["simulate-ple", config])
        first = (workdir / "run.simulate-ple.csv").read_text()

        result = runner.invoke(cli, ["simulate-ple", "run.simulate-ple.csv.params.yaml", "-o", "again.csv"])
        assert result.exit_code == 0, result.output
        assert (workdir / "again.csv").read_text() == first

    def test_missing_unit_tag(self, runner, workdir):
        config = _config(workdir, RESONANT.replace("omega_x_mhz", "omega_x"))
        result = runner.invoke(cli, ["simulate-ple", config])
        assert result.exit_code == EXIT_INVALID
        assert "expected 'omega_x_mhz'" in result.output

    def test_broken_invariant(self, runner, workdir):
        config = _config(workdir, RESONANT.replace("gamma_star_mhz: 15.0", "gamma_star_mhz: -1.0"))
        result = runner.invoke(cli, ["simulate-ple", config])
        assert result.exit_code == EXIT_INVALID
        assert "gamma_star" in result.output

    def test_rejects_zero_workers(self, runner, workdir):
        result = runner.invoke(cli, ["simulate-ple", _config(workdir, RESONANT), "--workers", "0"])
        assert result.exit_code == 2


class TestOtherCommands:
    """Test the remaining commands on cheap inputs."""

    def test_estimate_dipole(self, runner, workdir):
        result = runner.invoke(cli, ["estimate-dipole", _config(workdir, DIPOLE)])

        assert result.exit_code == 0, result.output
        assert "mu_debye = " in result.output
        assert "b_perp_ut = " in result.output
        assert "quantity,value,uncertainty" in (workdir / "run.estimate-dipole.csv").read_text()

    def test_estimate_dipole_needs_something(self, runner, workdir):
        result = runner.invoke(cli, ["estimate-dipole", _config(workdir, "seed: 1\n")])
        assert result.exit_code == EXIT_INVALID
        assert "nothing to estimate" in result.output

    def test_dipole_geometry(self, runner, workdir):
        result = runner.invoke(cli, ["dipole-geometry", _config(workdir, "{}\n")])

        assert result.exit_code == 0, result.output
        text = (workdir / "run.dipole-geometry.csv").read_text()
        assert "angle(dp_x,dp_y)" in text

    def test_sweep_power_needs_powers(self, runner, workdir):
        result = runner.invoke(cli, ["sweep-power", _config(workdir, RESONANT)])
        assert result.exit_code == EXIT_INVALID
        assert "scan.powers_mw" in result.output

    def test_oracle_output_independent_of_workers(self, runner, workdir):
        config = _config(workdir, ORACLE)
        single = runner.invoke(cli, ["oracle-validate", config, "-o", "one.csv", "--workers", "1"])
        split = runner.invoke(cli, ["oracle-validate", config, "-o", "three.csv", "--workers", "3"])

        assert single.exit_code == 0, single.output
        assert split.exit_code == 0, split.output
        assert (workdir / "one.csv").read_bytes() == (workdir / "three.csv").read_bytes()

    def test_refused_oracle_step(self, runner, workdir):
        config = _config(workdir, RESONANT + "oracle: {dt_us: 0.001}\n")
        result = runner.invoke(cli, ["oracle-validate", config])
        assert result.exit_code == EXIT_NUMERICAL
        assert "stability limit" in result.output


class TestShowConfig:
    """Test the resolved-config printer."""

    def test_prints_yaml(self, runner, workdir):
        result = runner.invoke(cli, ["show-config", _config(workdir, RESONANT)])
        assert result.exit_code == 0, result.output
        assert "omega_x_mhz: 2900.0" in result.output
        assert "gamma_star_mhz: 15.0" in result.output

    def test_bad_config(self, runner, workdir):
        result = runner.invoke(cli, ["show-config", _config(workdir, "scan: {bogus: 1}\n")])
        assert result.exit_code == EXIT_INVALID
        assert "bogus" in result.output
