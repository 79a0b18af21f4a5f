"""Command implementations behind the CLI.

Each command reads what it needs from a :class:`RunConfig`, computes, and writes one CSV
result plus a ``.params.yaml`` sidecar that re-runs it.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
from scipy.signal import find_peaks

from nvdress.config import get_settings
from nvdress.dressed import optical_resonances
from nvdress.errors import ConfigError
from nvdress.estimation import (
    LITERATURE_DIPOLES,
    dipole_from_splitting,
    dipole_geometry,
    dipole_orientation_spread,
    field_from_magnetic_rabi,
    fit_peak,
    fit_sideband_amplitudes,
    fit_splitting_vs_power,
    load_dipole_table,
    load_response_comparison,
    measure_splitting,
    pair_angle,
)
from nvdress.file_utils import check_output, write_sidecar, write_spectrum, write_sweep, write_table
from nvdress.kinds import TableSchema
from nvdress.lineshape import steady_state_population
from nvdress.model import ModelBundle
from nvdress.oracle import default_step, steady_state_scan
from nvdress.provenance import provenance_header
from nvdress.run_config import RunConfig, load_table
from nvdress.scan import map_ordered
from nvdress.spectra import (
    Spectrum,
    odmr_resonances,
    simulate_odmr,
    simulate_ple,
    sweep_bundles_mw,
    sweep_bundles_power,
)

LOGGER = logging.getLogger("runner")

# Exit status for a run that finished but flagged a non-converged oracle point.
EXIT_NOT_CONVERGED = 3


@dataclass
class RunOutcome:
    """What a command wrote and how the process should exit."""

    output: Path
    exit_code: int = 0
    summary: list[str] = field(default_factory=list)


def homogeneous_reference(bundle: ModelBundle, grid: np.ndarray) -> np.ndarray:
    """Closed-form total excited population without inhomogeneous broadening or PL weighting.

    With no drive the two optical lines are plain power-broadened Lorentzians; otherwise
    the dressed sideband ladder is used.
    """
    drive = bundle.drive
    if drive.omega_d == 0 or (drive.rabi_d == 0 and drive.a_x == 0 and drive.a_y == 0):
        levels, laser, gamma = bundle.levels, bundle.laser, bundle.shape.gamma_star
        return steady_state_population(laser.rabi_x, grid - levels.omega_x, gamma) + steady_state_population(
            laser.rabi_y, grid - levels.omega_y, gamma
        )
    shape = bundle.shape.model_copy(update={"sigma_x": 0.0, "sigma_y": 0.0, "pl_ratio": 1.0})
    flat = bundle.model_copy(update={"shape": shape})
    return simulate_ple(flat, grid).intensity


def _peak_positions(axis: np.ndarray, values: np.ndarray) -> np.ndarray:
    peaks, _ = find_peaks(values, prominence=0.05 * float(np.max(values)))
    return axis[peaks]


def _merge_diagnostics(parts: list[dict[str, Any]]) -> dict[str, Any]:
    return {
        "converged": all(p["converged"] for p in parts),
        "nonconverged_points": [w for p in parts for w in p["nonconverged_points"]],
        "max_trace_error": max(p["max_trace_error"] for p in parts),
        "max_hermiticity_error": max(p["max_hermiticity_error"] for p in parts),
        "min_eigenvalue": min(p["min_eigenvalue"] for p in parts),
    }


class CommandRunner:
    """Runs one command for one configuration."""

    def __init__(self, config: RunConfig, output: Path, overwrite: bool = False, workers: int | None = None):
        self.config = config
        self.output = output
        self.overwrite = overwrite
        self.workers = workers

    def _header(self, command: str, **extra: Any) -> dict[str, str]:
        return provenance_header(command, self.config.echo(), **extra)

    def _begin(self) -> None:
        check_output(self.output, self.overwrite)

    def _finish(self, summary: list[str] | None = None, exit_code: int = 0) -> RunOutcome:
        write_sidecar(self.output, self.config.echo())
        LOGGER.info(f"Wrote {self.output}")
        return RunOutcome(self.output, exit_code, summary or [])

    def simulate_ple(self) -> RunOutcome:
        self._begin()
        spectrum = simulate_ple(self.config.bundle(), self.config.scan.grid(), self.config.scan.n_max)
        write_spectrum(self.output, self._header("simulate-ple", kind="PLE"), spectrum.axis, spectrum.intensity)
        return self._finish()

    def simulate_odmr(self) -> RunOutcome:
        self._begin()
        odmr = self.config.odmr_model()
        drive = self.config.bundle().drive
        antenna = self.config.antenna()
        grid = self.config.scan.grid()
        spectrum = simulate_odmr(odmr, drive, grid, antenna)
        roots = odmr_resonances(odmr, drive, float(grid[0]), float(grid[-1]), antenna)
        listed = " ".join(f"{r.level.value}/{r.transition}@{r.frequency:.3f}" for r in roots)
        header = self._header("simulate-odmr", kind="ODMR", resonances_mhz=listed or "none")
        write_spectrum(self.output, header, spectrum.axis, spectrum.intensity)
        return self._finish([f"ODMR resonances: {listed or 'none'}"])

    def _sweep(self, command: str, column: str, values: list[float], bundles: list[ModelBundle]) -> RunOutcome:
        grid = self.config.scan.grid()
        spectra = map_ordered(
            partial(simulate_ple, grid=grid, n_max=self.config.scan.n_max), bundles, self.workers, label=command
        )
        members = [(s.axis, s.intensity) for s in spectra]
        write_sweep(self.output, self._header(command, kind="PLE"), column, values, members)
        return self._finish()

    def sweep_power(self) -> RunOutcome:
        self._begin()
        powers = self.config.scan.powers()
        if not powers:
            raise ConfigError("missing key scan.powers_mw (or scan.powers_dbm)")
        return self._sweep("sweep-power", "power_mw", powers, sweep_bundles_power(self.config.bundle(), powers))

    def sweep_mw(self) -> RunOutcome:
        self._begin()
        freqs = self.config.scan.drive_frequencies_mhz
        if not freqs:
            raise ConfigError("missing key scan.drive_frequencies_mhz")
        bundles = sweep_bundles_mw(self.config.bundle(), freqs, self.config.antenna())
        return self._sweep("sweep-mw", "omega_d_mhz", freqs, bundles)

    def _measured_or_simulated(self) -> Spectrum:
        fit = self.config.fit
        if fit.data is not None:
            return load_table(self.config.resolve(fit.data), TableSchema.SPECTRUM, fit.data_kind)
        return simulate_ple(self.config.bundle(), self.config.scan.grid(), self.config.scan.n_max)

    def fit_peaks(self) -> RunOutcome:
        self._begin()
        fit = self.config.fit
        if not fit.windows_mhz:
            raise ConfigError("missing key fit.windows_mhz")
        spectrum = self._measured_or_simulated()
        rows, summary = [], []
        for low, high in fit.windows_mhz:
            result = fit_peak(spectrum, (low, high), fit.model)
            rows.append(
                (
                    low,
                    high,
                    result.model.value,
                    result.center,
                    result.stderr["center"],
                    result.fwhm,
                    result.amplitude,
                    result.baseline,
                    result.residual_norm,
                )
            )
            summary.append(f"[{low}, {high}] MHz: center {result.center:.3f} MHz, FWHM {result.fwhm:.3f} MHz")
        columns = (
            "window_low_mhz",
            "window_high_mhz",
            "model",
            "center_mhz",
            "center_stderr_mhz",
            "fwhm_mhz",
            "amplitude",
            "baseline",
            "residual_norm",
        )
        write_table(self.output, self._header("fit-peaks"), columns, rows)
        return self._finish(summary)

    def _synthesized_splittings(self) -> list[tuple[float, float]]:
        bundle = self.config.bundle()
        powers = self.config.scan.powers()
        if not powers:
            raise ConfigError("fit-power-series needs fit.data or scan.powers_mw to synthesize from")
        grid = self.config.scan.grid()
        spectra = map_ordered(
            partial(simulate_ple, grid=grid, n_max=self.config.scan.n_max),
            sweep_bundles_power(bundle, powers),
            self.workers,
            label="fit-power-series",
        )
        samples = []
        for power, spectrum in zip(powers, spectra, strict=True):
            drive = bundle.drive.at_power(power)
            centers = optical_resonances(bundle.levels, drive.rabi_d, drive.omega_d)
            half = max(0.25 * (centers.plus_y - centers.minus_y), 4 * self.config.scan.step_mhz)
            half = min(half, self.config.fit.half_window_mhz)
            measured = measure_splitting(spectrum, (centers.minus_y, centers.plus_y), half, self.config.fit.model)
            samples.append((power, measured.splitting))
        return samples

    def fit_power_series(self) -> RunOutcome:
        self._begin()
        if self.config.fit.data is not None:
            samples = load_table(self.config.resolve(self.config.fit.data), TableSchema.SPLITTING)
        else:
            samples = self._synthesized_splittings()
        result = fit_splitting_vs_power(samples)
        rows = [("slope_mhz_per_sqrt_mw", result.slope, result.stderr)]
        residuals = zip(samples, result.residuals, strict=True)
        rows += [(f"residual_mhz@{p:.9g}mw", float(r), 0.0) for (p, _), r in residuals]
        write_table(self.output, self._header("fit-power-series"), ("quantity", "value", "stderr"), rows)
        return self._finish([f"k = {result.slope:.4f} +/- {result.stderr:.4f} MHz/sqrt(mW)"])

    def fit_sidebands(self) -> RunOutcome:
        self._begin()
        fit = self.config.fit
        if fit.data is None:
            raise ConfigError("missing key fit.data (sideband amplitude table)")
        powers, peaks, table = load_table(self.config.resolve(fit.data), TableSchema.AMPLITUDES)
        if fit.tracked:
            wanted = [(t.branch, t.n) for t in fit.tracked]
            missing = [p for p in wanted if p not in peaks]
            if missing:
                raise ConfigError(f"tracked peaks {missing} are not columns of {fit.data}")
            table = table[:, [peaks.index(p) for p in wanted]]
            peaks = wanted
        result = fit_sideband_amplitudes(powers, peaks, table, self.config.bundle(), fit.initial.params())
        rows = [(name, value, result.stderr[name]) for name, value in result.params.model_dump().items()]
        rows += [("reduced_chi2", result.reduced_chi2, 0.0), ("rms_relative", result.rms_relative, 0.0)]
        write_table(self.output, self._header("fit-sidebands"), ("parameter", "value", "stderr"), rows)
        return self._finish([f"{name} = {value:.4g} +/- {err:.2g}" for name, value, err in rows[:5]])

    def estimate_dipole(self) -> RunOutcome:
        self._begin()
        section = self.config.dipole
        rows = []
        if section.rabi_m_mhz is not None:
            rows.append(("b_perp_ut", field_from_magnetic_rabi(section.rabi_m_mhz), 0.0))
        if section.splitting_mhz is not None and section.field_kv_per_m is not None:
            estimate = dipole_from_splitting(
                section.splitting_mhz,
                section.field_kv_per_m,
                section.splitting_stderr_mhz,
                section.field_stderr_kv_per_m,
            )
            rows.append(("mu_debye", estimate.mu, estimate.uncertainty))
        if section.splitting_mhz is not None and section.field_axial_kv_per_m is not None:
            spread = dipole_orientation_spread(
                section.splitting_mhz,
                section.field_axial_kv_per_m,
                section.field_transverse_kv_per_m,
                section.tilt_deg,
                section.field_axial_stderr_kv_per_m,
                section.samples,
                self.config.require_seed(),
            )
            rows += [
                ("field_along_dipole_kv_per_m", spread.field_mean, spread.field_std),
                ("mu_orientation_debye", spread.mu, (spread.mu_high - spread.mu_low) / 2),
                ("mu_p16_debye", spread.mu_low, 0.0),
                ("mu_p84_debye", spread.mu_high, 0.0),
            ]
        loads = (
            section.closed_magnetic_mhz,
            section.open_magnetic_mhz,
            section.closed_electric_mhz,
            section.open_electric_mhz,
        )
        if all(v is not None for v in loads):
            response = load_response_comparison(*loads)
            rows += [
                ("magnetic_change", response.magnetic_change, 0.0),
                ("electric_change", response.electric_change, 0.0),
                ("ratio_change", response.ratio_change, 0.0),
            ]
        if not rows:
            raise ConfigError("the dipole section names nothing to estimate")
        write_table(self.output, self._header("estimate-dipole"), ("quantity", "value", "uncertainty"), rows)
        return self._finish([f"{name} = {value:.4g}" for name, value, _ in rows])

    def dipole_geometry(self) -> RunOutcome:
        self._begin()
        rows, summary = [], []
        for row in load_dipole_table():
            source = f"embedding strain={row.strain:+.2f}"
            for name, vector in (("dp_y", row.dp_y), ("dp_x", row.dp_x), ("mu_xy", row.mu_xy)):
                geo = dipole_geometry(vector)
                angle = "undefined" if geo.angle_deg is None else geo.angle_deg
                rows.append((source, name, geo.magnitude, geo.parallel, geo.perpendicular, angle))
            angle = pair_angle(row.dp_x, row.dp_y)
            rows.append((source, "angle(dp_x,dp_y)", "", "", "", angle))
            summary.append(f"{source}: |dp| = {dipole_geometry(row.dp_y).magnitude:.2f} D, pair angle {angle:.1f} deg")
        for ref in LITERATURE_DIPOLES:
            parallel = "-".join(f"{v:g}" for v in ref.parallel) if isinstance(ref.parallel, tuple) else ref.parallel
            perpendicular = ref.perpendicular or ""
            rows.append((ref.source, ref.method, "", "" if parallel is None else parallel, perpendicular, ""))
        columns = ("source", "quantity", "magnitude_debye", "parallel_debye", "perpendicular_debye", "angle_deg")
        write_table(self.output, self._header("dipole-geometry"), columns, rows)
        return self._finish(summary)

    def oracle_validate(self) -> RunOutcome:
        self._begin()
        bundle = self.config.bundle()
        grid = self.config.scan.grid()
        integration = self.config.oracle.integration_config()
        if integration.dt_us is None:
            integration = integration.model_copy(update={"dt_us": default_step(bundle, grid)})
        workers = self.workers or get_settings().workers
        chunks = [c for c in np.array_split(grid, workers) if c.size]
        parts = map_ordered(
            partial(steady_state_scan, bundle, config=integration),
            chunks,
            workers,
            label="oracle-validate",
        )
        oracle = np.concatenate([p.intensity for p in parts])
        diagnostics = _merge_diagnostics([p.diagnostics for p in parts])
        reference = homogeneous_reference(bundle, grid)

        scale = float(np.max(reference)) or 1.0
        amplitude_error = float(np.max(np.abs(oracle - reference))) / scale
        analytic_peaks = _peak_positions(grid, reference)
        oracle_peaks = _peak_positions(grid, oracle)
        if analytic_peaks.size and oracle_peaks.size:
            position_error = max(float(np.min(np.abs(oracle_peaks - p))) for p in analytic_peaks)
        else:
            position_error = math.nan

        header = self._header(
            "oracle-validate",
            converged=diagnostics["converged"],
            max_amplitude_error=f"{amplitude_error:.9g}",
            max_position_error_mhz=f"{position_error:.9g}",
            max_trace_error=f"{diagnostics['max_trace_error']:.3g}",
            max_hermiticity_error=f"{diagnostics['max_hermiticity_error']:.3g}",
            min_eigenvalue=f"{diagnostics['min_eigenvalue']:.3g}",
        )
        write_table(
            self.output, header, ("frequency_mhz", "oracle", "analytic"), zip(grid, oracle, reference, strict=True)
        )
        summary = [
            f"max amplitude error {amplitude_error:.3g} (relative to peak)",
            f"max position error {position_error:.3g} MHz",
        ]
        exit_code = 0
        if not diagnostics["converged"]:
            summary.append(f"not converged at {len(diagnostics['nonconverged_points'])} point(s)")
            exit_code = EXIT_NOT_CONVERGED
        return self._finish(summary, exit_code)


COMMANDS = {
    "simulate-ple": CommandRunner.simulate_ple,
    "simulate-odmr": CommandRunner.simulate_odmr,
    "sweep-power": CommandRunner.sweep_power,
    "sweep-mw": CommandRunner.sweep_mw,
    "fit-peaks": CommandRunner.fit_peaks,
    "fit-power-series": CommandRunner.fit_power_series,
    "fit-sidebands": CommandRunner.fit_sidebands,
    "estimate-dipole": CommandRunner.estimate_dipole,
    "dipole-geometry": CommandRunner.dipole_geometry,
    "oracle-validate": CommandRunner.oracle_validate,
}


def run(
    command: str, config: RunConfig, output: Path, overwrite: bool = False, workers: int | None = None
) -> RunOutcome:
    """Run ``command`` and write its artifacts.

    Raises:
        ConfigError: For an unknown command
    """
    try:
        method = COMMANDS[command]
    except KeyError:
        raise ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}") from None
    return method(CommandRunner(config, output, overwrite, workers))
