"""Run configuration files and input tables.

A run config is a YAML mapping of sections. Every physical quantity carries its unit in
the key name (``omega_x_mhz``, ``power_dbm``, ``dt_us``); a key given without its unit
suffix is rejected with a "unit-tag missing" error naming the expected key. Powers given
in dBm are converted to linear mW here and nowhere else.
"""

import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from nvdress.errors import ConfigError, DomainError
from nvdress.estimation import SidebandParams
from nvdress.file_utils import read_delimited
from nvdress.kinds import Branch, MagneticLevel, PeakModel, SpectrumKind, TableSchema
from nvdress.model import ModelBundle, validate_model, violations_from
from nvdress.oracle import IntegrationConfig
from nvdress.spectra import AntennaResponse, EsrDip, OdmrModel, Spectrum
from nvdress.yaml_utils import load_yaml_file

LOGGER = logging.getLogger("run_config")

UNIT_SUFFIXES = ("_mhz_per_sqrt_mw", "_kv_per_m", "_mhz", "_mw", "_dbm", "_deg", "_us", "_debye")

BRANCH_COLUMNS = {"plus": Branch.PLUS, "minus": Branch.MINUS}


def dbm_to_mw(dbm: float) -> float:
    """10^(dBm/10)."""
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0:
        raise DomainError(f"power must be > 0 mW to express in dBm, got {mw}")
    return 10.0 * math.log10(mw)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="before")
    @classmethod
    def check_unit_tags(cls, data: Any) -> Any:
        """Name the expected key when a known key is given without its unit suffix."""
        if not isinstance(data, dict):
            return data
        for key in data:
            if key in cls.model_fields:
                continue
            for suffix in UNIT_SUFFIXES:
                if f"{key}{suffix}" in cls.model_fields:
                    raise ConfigError(f"unit-tag missing on {key!r}; expected {key + suffix!r}")
        return data


class LevelsSection(_Section):
    omega_x_mhz: float
    omega_y_mhz: float
    omega_m_mhz: float | None = None


class DriveSection(_Section):
    omega_d_mhz: float = 0.0
    power_mw: float | None = None
    power_dbm: float | None = None
    k_rabi_mhz_per_sqrt_mw: float = 0.0
    k_stark_x_mhz_per_sqrt_mw: float = 0.0
    k_stark_y_mhz_per_sqrt_mw: float = 0.0
    k_magnetic_mhz_per_sqrt_mw: float = 0.0

    @model_validator(mode="after")
    def check_power(self) -> "DriveSection":
        if self.power_mw is not None and self.power_dbm is not None:
            raise ValueError("give either power_mw or power_dbm, not both")
        return self

    @property
    def linear_power(self) -> float:
        if self.power_dbm is not None:
            return dbm_to_mw(self.power_dbm)
        return self.power_mw or 0.0


class LaserSection(_Section):
    omega_l_mhz: float = 0.0
    rabi_x_mhz: float = 0.0
    rabi_y_mhz: float = 0.0


class LineshapeSection(_Section):
    gamma_star_mhz: float = 15.0
    sigma_x_mhz: float = 0.0
    sigma_y_mhz: float = 0.0
    pl_ratio: float = 1.0


class ModelSection(_Section):
    levels: LevelsSection
    drive: DriveSection = DriveSection()
    laser: LaserSection = LaserSection()
    lineshape: LineshapeSection = LineshapeSection()


class OdmrSection(_Section):
    gamma_star_mhz: float = 2.3
    inhom_width_mhz: float = 48.0
    branches: list[MagneticLevel] = Field(default_factory=lambda: [MagneticLevel.E1])
    omega_m_mhz: dict[MagneticLevel, float] = Field(default_factory=dict)
    weights: dict[MagneticLevel, float] = Field(default_factory=dict)
    esr_dip_depth: float = 0.0
    esr_dip_center_mhz: float = 2870.0
    esr_dip_fwhm_mhz: float = 10.0
    antenna_table: str | None = None
    antenna_reference_dbm: float | None = None


class ScanSection(_Section):
    min_mhz: float | None = None
    max_mhz: float | None = None
    step_mhz: float | None = None
    drive_frequencies_mhz: list[float] = Field(default_factory=list)
    powers_mw: list[float] = Field(default_factory=list)
    powers_dbm: list[float] = Field(default_factory=list)
    n_max: int | None = Field(None, ge=0)

    @model_validator(mode="after")
    def check_grid(self) -> "ScanSection":
        given = [v is not None for v in (self.min_mhz, self.max_mhz, self.step_mhz)]
        if any(given) and not all(given):
            raise ValueError("min_mhz, max_mhz and step_mhz go together")
        if all(given):
            if self.step_mhz <= 0:
                raise ValueError("step_mhz must be > 0")
            if self.max_mhz <= self.min_mhz:
                raise ValueError("max_mhz must exceed min_mhz")
        if self.powers_mw and self.powers_dbm:
            raise ValueError("give either powers_mw or powers_dbm, not both")
        return self

    def grid(self) -> np.ndarray:
        """The frequency grid min, min + step, ..., up to max."""
        if self.min_mhz is None:
            raise ConfigError("missing key scan.min_mhz (with scan.max_mhz and scan.step_mhz)")
        count = int(math.floor((self.max_mhz - self.min_mhz) / self.step_mhz + 1e-9)) + 1
        return self.min_mhz + self.step_mhz * np.arange(count)

    def powers(self) -> list[float]:
        if self.powers_dbm:
            return [dbm_to_mw(p) for p in self.powers_dbm]
        return list(self.powers_mw)


class OracleSection(_Section):
    dt_us: float | None = None
    t_transient_us: float | None = None
    periods: int = 8
    method: str = "rk4"
    drive_phase_deg: float = 0.0

    def integration_config(self) -> IntegrationConfig:
        return IntegrationConfig(
            dt_us=self.dt_us,
            t_transient_us=self.t_transient_us,
            average_periods=self.periods,
            method=self.method,
            drive_phase_deg=self.drive_phase_deg,
        )


class TrackedPeak(_Section):
    branch: Branch
    n: int


class InitialSection(_Section):
    k_stark_x_mhz_per_sqrt_mw: float = 11.7
    k_stark_y_mhz_per_sqrt_mw: float = 19.4
    rabi_x_mhz: float = 11.0
    rabi_y_mhz: float = 6.3
    pl_ratio: float = 3.1

    def params(self) -> SidebandParams:
        return SidebandParams(
            k_stark_x=self.k_stark_x_mhz_per_sqrt_mw,
            k_stark_y=self.k_stark_y_mhz_per_sqrt_mw,
            rabi_x=self.rabi_x_mhz,
            rabi_y=self.rabi_y_mhz,
            pl_ratio=self.pl_ratio,
        )


class FitSection(_Section):
    model: PeakModel = PeakModel.LORENTZIAN
    data: str | None = None
    data_kind: SpectrumKind = SpectrumKind.PLE
    windows_mhz: list[tuple[float, float]] = Field(default_factory=list)
    guesses_mhz: tuple[float, float] | None = None
    half_window_mhz: float = 50.0
    tracked: list[TrackedPeak] = Field(default_factory=list)
    initial: InitialSection = InitialSection()


class DipoleSection(_Section):
    splitting_mhz: float | None = None
    splitting_stderr_mhz: float = 0.0
    field_kv_per_m: float | None = None
    field_stderr_kv_per_m: float = 0.0
    rabi_m_mhz: float | None = None
    field_axial_kv_per_m: float | None = None
    field_axial_stderr_kv_per_m: float = 0.0
    field_transverse_kv_per_m: float = 0.0
    tilt_deg: float = 25.0
    samples: int = Field(100_000, ge=2)
    closed_magnetic_mhz: float | None = None
    open_magnetic_mhz: float | None = None
    closed_electric_mhz: float | None = None
    open_electric_mhz: float | None = None


class RunConfig(_Section):
    """A whole run: model, scan, oracle, fit and dipole sections plus the seed."""

    model: ModelSection | None = None
    odmr: OdmrSection | None = None
    scan: ScanSection = ScanSection()
    oracle: OracleSection = OracleSection()
    fit: FitSection = FitSection()
    dipole: DipoleSection = DipoleSection()
    seed: int | None = Field(None, ge=0, lt=2**64)

    _base_dir: Path = PrivateAttr(default_factory=Path.cwd)

    @model_validator(mode="after")
    def check_odmr_level(self) -> "RunConfig":
        if self.odmr is None:
            return self
        model_level = self.model.levels.omega_m_mhz if self.model is not None else None
        for level in self.odmr.branches:
            if level not in self.odmr.omega_m_mhz and model_level is None:
                raise ConfigError(
                    f"missing key model.levels.omega_m_mhz (or odmr.omega_m_mhz.{level.value}) required for ODMR"
                )
        return self

    def resolve(self, relative: str) -> Path:
        """Resolve a table path relative to the config file's directory."""
        path = Path(relative)
        return path if path.is_absolute() else self._base_dir / path

    def require_model(self) -> ModelSection:
        if self.model is None:
            raise ConfigError("missing section 'model'")
        return self.model

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("missing key 'seed', required for stochastic steps")
        return self.seed

    def bundle(self) -> ModelBundle:
        """The validated model bundle, powers in linear mW.

        Raises:
            ModelValidationError: Listing every violated invariant
        """
        section = self.require_model()
        levels, drive, laser, shape = section.levels, section.drive, section.laser, section.lineshape
        return validate_model(
            {"omega_x": levels.omega_x_mhz, "omega_y": levels.omega_y_mhz, "omega_m": levels.omega_m_mhz},
            {
                "omega_d": drive.omega_d_mhz,
                "power_mw": drive.linear_power,
                "k_rabi": drive.k_rabi_mhz_per_sqrt_mw,
                "k_stark_x": drive.k_stark_x_mhz_per_sqrt_mw,
                "k_stark_y": drive.k_stark_y_mhz_per_sqrt_mw,
                "k_magnetic": drive.k_magnetic_mhz_per_sqrt_mw,
            },
            {"omega_l": laser.omega_l_mhz, "rabi_x": laser.rabi_x_mhz, "rabi_y": laser.rabi_y_mhz},
            {
                "gamma_star": shape.gamma_star_mhz,
                "sigma_x": shape.sigma_x_mhz,
                "sigma_y": shape.sigma_y_mhz,
                "pl_ratio": shape.pl_ratio,
            },
        )

    def odmr_model(self) -> OdmrModel:
        if self.odmr is None:
            raise ConfigError("missing section 'odmr'")
        odmr = self.odmr
        try:
            return OdmrModel(
                levels=self.bundle().levels,
                gamma_star=odmr.gamma_star_mhz,
                inhom_width=odmr.inhom_width_mhz,
                branches=tuple(odmr.branches),
                omega_m=odmr.omega_m_mhz,
                weights=odmr.weights,
                esr_dip=EsrDip(depth=odmr.esr_dip_depth, center=odmr.esr_dip_center_mhz, fwhm=odmr.esr_dip_fwhm_mhz),
            )
        except ValidationError as e:
            raise ConfigError(_describe(e, "odmr.")) from e

    def antenna(self) -> AntennaResponse | None:
        if self.odmr is None or self.odmr.antenna_table is None:
            return None
        antenna = load_table(self.resolve(self.odmr.antenna_table), TableSchema.ANTENNA)
        if self.odmr.antenna_reference_dbm is not None:
            antenna = AntennaResponse(antenna.frequencies, antenna.dbm, self.odmr.antenna_reference_dbm)
        return antenna

    def echo(self) -> dict[str, Any]:
        """Plain-data dump that reloads to an equal config from any directory."""
        data = self.model_dump(mode="json", exclude_none=True)
        if self.odmr is not None and self.odmr.antenna_table is not None:
            data["odmr"]["antenna_table"] = str(self.resolve(self.odmr.antenna_table))
        if self.fit.data is not None:
            data["fit"]["data"] = str(self.resolve(self.fit.data))
        return data


def _describe(error: ValidationError, prefix: str = "") -> str:
    return "; ".join(str(v) for v in violations_from(error, prefix))


def parse_config(data: Any, source: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    """Validate already-loaded config data.

    Raises:
        ConfigError: For unknown keys, missing unit tags, malformed values or missing keys
        ModelValidationError: If the model section breaks a physical invariant
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping of sections")
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_describe(e)}") from e
    config._base_dir = base_dir or Path.cwd()
    if config.model is not None:
        config.bundle()
    return config


def load_config(path: Path) -> RunConfig:
    """Load and validate a run configuration file.

    Raises:
        ConfigError: For a missing file, YAML syntax errors (with line and column) or bad keys
        ModelValidationError: If the model section breaks a physical invariant
    """
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    config = parse_config(load_yaml_file(path), str(path), path.parent)
    LOGGER.debug(f"Loaded config {path}")
    return config


def _column(names: list[str], suffixes: tuple[str, ...], source: Path, index: int) -> str:
    name = names[index]
    if not name.endswith(suffixes):
        raise ConfigError(f"{source}: column {index + 1} ({name!r}) needs a unit tag, one of {', '.join(suffixes)}")
    return name


def _power_column(names: list[str], values: np.ndarray, source: Path) -> np.ndarray:
    name = _column(names, ("_mw", "_dbm"), source, 0)
    return np.array([dbm_to_mw(v) for v in values]) if name.endswith("_dbm") else values


def _check_increasing(axis: np.ndarray, source: Path) -> None:
    if axis.size > 1 and np.any(np.diff(axis) <= 0):
        raise ConfigError(f"{source}: first column must be strictly increasing")


def load_table(path: Path, schema: TableSchema, kind: SpectrumKind = SpectrumKind.PLE) -> Any:
    """Read a measured table.

    ``kind`` labels a spectrum table (PLE over laser detuning, ODMR over drive frequency);
    the other schemas ignore it.

    Schemas:
        antenna: (``*_mhz``, ``*_dbm``) → :class:`AntennaResponse`
        spectrum: (``*_mhz``, intensity) → measured :class:`Spectrum`
        splitting: (``*_mw`` or ``*_dbm``, ``*_mhz``) → list of (power mW, splitting MHz)
        amplitudes: (``*_mw`` or ``*_dbm``, ``plus:<n>``/``minus:<n>``...) → (powers, peaks, table)

    Raises:
        ConfigError: For missing unit tags, a non-monotone axis, NaN or malformed cells
    """
    names, data = read_delimited(path)
    if schema is not TableSchema.AMPLITUDES and len(names) != 2:
        raise ConfigError(f"{path}: expected two columns for a {schema.value} table, got {len(names)}")

    if schema is TableSchema.ANTENNA:
        _column(names, ("_mhz",), path, 0)
        _column(names, ("_dbm",), path, 1)
        _check_increasing(data[:, 0], path)
        return AntennaResponse(data[:, 0], data[:, 1])

    if schema is TableSchema.SPECTRUM:
        _column(names, ("_mhz",), path, 0)
        _check_increasing(data[:, 0], path)
        try:
            return Spectrum(data[:, 0], data[:, 1], kind, params_echo={"source": path.name})
        except DomainError as e:
            raise ConfigError(f"{path}: {e}") from e

    powers = _power_column(names, data[:, 0], path)
    if schema is TableSchema.SPLITTING:
        _column(names, ("_mhz",), path, 1)
        return list(zip(powers.tolist(), data[:, 1].tolist(), strict=True))

    _check_increasing(powers, path)
    peaks = []
    for name in names[1:]:
        branch, _, order = name.partition(":")
        if branch not in BRANCH_COLUMNS or not order.lstrip("-").isdigit():
            raise ConfigError(f"{path}: amplitude column {name!r} must look like plus:<n> or minus:<n>")
        peaks.append((BRANCH_COLUMNS[branch], int(order)))
    return powers.tolist(), peaks, data[:, 1:]
