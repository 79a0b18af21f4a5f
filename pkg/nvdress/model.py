"""Core domain types, unit conventions and power-to-coupling conversion.

All frequencies are ordinary frequencies in MHz and all powers are linear mW. The factor
2π only appears inside the time-domain oracle, where absolute time enters.
"""

from collections.abc import Mapping
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from nvdress.errors import DomainError, ModelValidationError, Violation

# Default homogeneous rates (MHz) for the two regimes.
PLE_GAMMA_STAR = 15.0
ODMR_GAMMA_STAR = 2.3


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class LevelDiagram(_Frozen):
    """Eigenfrequencies of the working states."""

    omega_0: float = Field(0.0, description="Ground reference |0>, fixed at 0 MHz")
    omega_x: float = Field(..., description="|E_x> frequency (MHz)")
    omega_y: float = Field(..., description="|E_y> frequency (MHz)")
    omega_m: float | None = Field(None, description="Magnetic ES level |E_m> for ODMR (MHz)")

    @field_validator("omega_0")
    @classmethod
    def check_reference(cls, v: float) -> float:
        """The reference level is pinned to zero."""
        if v != 0.0:
            raise ValueError("omega_0 is the reference and must be 0")
        return v

    @model_validator(mode="after")
    def check_labeling(self) -> "LevelDiagram":
        """E_x is labeled as the upper strain-split level."""
        if self.omega_x < self.omega_y:
            raise ValueError("omega_x must be >= omega_y (transverse splitting is non-negative by labeling)")
        return self

    @property
    def splitting(self) -> float:
        """Transverse strain splitting δ⊥ = ω_x − ω_y."""
        return self.omega_x - self.omega_y


class DriveField(_Frozen):
    """Microwave tone and its power-to-coupling slopes (MHz/√mW)."""

    omega_d: float = Field(..., ge=0, description="Drive frequency (MHz)")
    power_mw: float = Field(0.0, ge=0, description="Delivered power (mW, linear)")
    k_rabi: float = Field(0.0, ge=0, description="Electric Rabi slope Ωd/√P")
    k_stark_x: float = Field(0.0, ge=0, description="Stark slope A_x/√P")
    k_stark_y: float = Field(0.0, ge=0, description="Stark slope A_y/√P")
    k_magnetic: float = Field(0.0, ge=0, description="Magnetic Rabi slope Ω_m/√P")

    @property
    def rabi_d(self) -> float:
        return coupling_from_power(self.k_rabi, self.power_mw)

    @property
    def a_x(self) -> float:
        return coupling_from_power(self.k_stark_x, self.power_mw)

    @property
    def a_y(self) -> float:
        return coupling_from_power(self.k_stark_y, self.power_mw)

    @property
    def rabi_m(self) -> float:
        return coupling_from_power(self.k_magnetic, self.power_mw)

    def at_power(self, power_mw: float) -> "DriveField":
        """Return a copy of this drive at another power."""
        return DriveField.model_validate({**self.model_dump(), "power_mw": power_mw})

    def at_frequency(self, omega_d: float) -> "DriveField":
        """Return a copy of this drive at another frequency."""
        return DriveField.model_validate({**self.model_dump(), "omega_d": omega_d})


class LaserField(_Frozen):
    """Resonant laser relative to the optical reference."""

    omega_l: float = Field(0.0, description="Laser frequency relative to the optical reference (MHz)")
    rabi_x: float = Field(0.0, ge=0, description="Optical Rabi frequency Ω_x (MHz)")
    rabi_y: float = Field(0.0, ge=0, description="Optical Rabi frequency Ω_y (MHz)")


class LineshapeParams(_Frozen):
    """Homogeneous rate, inhomogeneous widths and branch brightness."""

    gamma_star: float = Field(PLE_GAMMA_STAR, ge=0, description="Homogeneous rate γ* (MHz)")
    sigma_x: float = Field(0.0, ge=0, description="Gaussian std of the E_x line (MHz)")
    sigma_y: float = Field(0.0, ge=0, description="Gaussian std of the E_y line (MHz)")
    pl_ratio: float = Field(1.0, ge=0, description="PL brightness of E_y relative to E_x")


class ModelBundle(_Frozen):
    """A validated set of levels, fields and lineshape parameters."""

    levels: LevelDiagram
    drive: DriveField
    laser: LaserField = LaserField()
    shape: LineshapeParams = LineshapeParams()

    def with_drive(self, drive: DriveField) -> "ModelBundle":
        return self.model_copy(update={"drive": drive})


def coupling_from_power(slope: float, power: ArrayLike) -> Any:
    """Convert a power (mW) to a coupling (MHz) through a √P slope.

    Args:
        slope: Coupling per √mW, non-negative
        power: Linear power in mW, scalar or array, non-negative

    Returns:
        ``slope * sqrt(power)`` with the shape of ``power``

    Raises:
        DomainError: If either input is negative
    """
    if slope < 0:
        raise DomainError(f"coupling slope must be >= 0, got {slope}")
    p = np.asarray(power, dtype=float)
    if np.any(p < 0) or np.any(np.isnan(p)):
        raise DomainError(f"power must be >= 0 mW, got {power}")
    result = slope * np.sqrt(p)
    return float(result) if result.ndim == 0 else result


def optical_rabi_from_laser_power(rabi_ref: float, power: float, power_ref: float) -> float:
    """Scale an optical Rabi frequency measured at ``power_ref`` to another laser power."""
    if power_ref <= 0:
        raise DomainError(f"reference laser power must be > 0, got {power_ref}")
    if rabi_ref < 0 or power < 0:
        raise DomainError("optical Rabi frequency and laser power must be >= 0")
    return rabi_ref * (power / power_ref) ** 0.5


def _as_input(section: Any) -> Any:
    # Dump models so that instances built with model_construct are re-checked too.
    return section.model_dump() if isinstance(section, BaseModel) else section


def validate_model(
    levels: LevelDiagram | Mapping[str, Any],
    drive: DriveField | Mapping[str, Any],
    laser: LaserField | Mapping[str, Any],
    shape: LineshapeParams | Mapping[str, Any],
) -> ModelBundle:
    """Check every invariant of the four sections and return the bundle.

    Raises:
        ModelValidationError: Listing every violation across all sections
    """
    raw = {
        "levels": _as_input(levels),
        "drive": _as_input(drive),
        "laser": _as_input(laser),
        "shape": _as_input(shape),
    }
    try:
        return ModelBundle.model_validate(raw)
    except ValidationError as e:
        raise ModelValidationError(violations_from(e)) from e


def violations_from(error: ValidationError, prefix: str = "") -> list[Violation]:
    """Flatten a pydantic ValidationError into violations."""
    violations = []
    for err in error.errors():
        path = ".".join(str(part) for part in err["loc"])
        violations.append(Violation(field=f"{prefix}{path}", value=err.get("input"), message=err["msg"]))
    return violations
