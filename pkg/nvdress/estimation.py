"""Inverse problems: peak fits, splitting regression, the sideband-amplitude fit and dipole arithmetic."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cache
from importlib import resources
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from pydantic import Field
from scipy.optimize import least_squares
from scipy.signal import find_peaks
from scipy.special import voigt_profile

from nvdress.errors import DomainError, FitError
from nvdress.kinds import Branch, PeakModel
from nvdress.lineshape import GAUSSIAN_FWHM_PER_SIGMA, measured_fwhm, voigt_fwhm_estimate
from nvdress.model import ModelBundle, _Frozen
from nvdress.spectra import Spectrum, tracked_peak_amplitudes
from nvdress.yaml_utils import load_yaml_text

LOGGER = logging.getLogger("estimation")

PLANCK = 6.62607015e-34  # J s
DEBYE = 3.33564e-30  # C m
GAMMA_E = 28.024  # MHz/mT

MIN_WINDOW_SAMPLES = 7
MAX_ITERATIONS = 200
FTOL = 1e-10
XTOL = 1e-10
GTOL = 1e-8
DIFF_STEP = 1e-6
# Singular values below this fraction of the largest mark an unidentifiable parameter.
RANK_TOLERANCE = 1e-10
# Parameters this close to their zero lower bound are exempt from the rank check.
AT_BOUND_TOLERANCE = 1e-3

PEAK_PARAMETERS = {
    PeakModel.GAUSSIAN: ("center", "sigma", "amplitude", "baseline"),
    PeakModel.LORENTZIAN: ("center", "fwhm", "amplitude", "baseline"),
    PeakModel.VOIGT: ("center", "sigma", "fwhm_lorentz", "amplitude", "baseline"),
}

SIDEBAND_PARAMETERS = ("k_stark_x", "k_stark_y", "rabi_x", "rabi_y", "pl_ratio")


def _gaussian(x, center, sigma, amplitude, baseline):
    return amplitude * np.exp(-0.5 * ((x - center) / sigma) ** 2) + baseline


def _lorentzian(x, center, fwhm, amplitude, baseline):
    return amplitude / (1.0 + 4.0 * ((x - center) / fwhm) ** 2) + baseline


def _voigt(x, center, sigma, fwhm_lorentz, amplitude, baseline):
    sigma = max(abs(sigma), 1e-9)
    gamma = max(abs(fwhm_lorentz) / 2, 1e-9)
    return amplitude * voigt_profile(x - center, sigma, gamma) / voigt_profile(0.0, sigma, gamma) + baseline


PEAK_FUNCTIONS = {PeakModel.GAUSSIAN: _gaussian, PeakModel.LORENTZIAN: _lorentzian, PeakModel.VOIGT: _voigt}


@dataclass(frozen=True)
class PeakFit:
    """Best-fit single peak on a constant baseline."""

    model: PeakModel
    params: dict[str, float]
    stderr: dict[str, float]
    residual_norm: float
    nfev: int

    @property
    def center(self) -> float:
        return self.params["center"]

    @property
    def amplitude(self) -> float:
        return self.params["amplitude"]

    @property
    def baseline(self) -> float:
        return self.params["baseline"]

    @property
    def width(self) -> float | tuple[float, float]:
        """Gaussian σ, Lorentzian FWHM, or the Voigt pair (σ, Lorentzian FWHM)."""
        if self.model is PeakModel.GAUSSIAN:
            return self.params["sigma"]
        if self.model is PeakModel.LORENTZIAN:
            return self.params["fwhm"]
        return (self.params["sigma"], self.params["fwhm_lorentz"])

    @property
    def fwhm(self) -> float:
        if self.model is PeakModel.GAUSSIAN:
            return GAUSSIAN_FWHM_PER_SIGMA * self.params["sigma"]
        if self.model is PeakModel.LORENTZIAN:
            return self.params["fwhm"]
        return voigt_fwhm_estimate(self.params["fwhm_lorentz"], self.params["sigma"])

    def evaluate(self, x: ArrayLike) -> np.ndarray:
        names = PEAK_PARAMETERS[self.model]
        return PEAK_FUNCTIONS[self.model](np.asarray(x, dtype=float), *(self.params[n] for n in names))


def _standard_errors(jac: np.ndarray, residuals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dof = max(residuals.size - jac.shape[1], 1)
    variance = float(residuals @ residuals) / dof
    covariance = np.linalg.pinv(jac.T @ jac) * variance
    return np.sqrt(np.clip(np.diag(covariance), 0.0, None)), covariance


def fit_peak(spectrum: Spectrum, window: tuple[float, float], model: PeakModel = PeakModel.LORENTZIAN) -> PeakFit:
    """Fit one peak plus a constant baseline inside ``window``.

    Starts from the window's maximum (lowest frequency on ties), its half-max width and
    its range, and runs Levenberg-Marquardt least squares.

    Raises:
        FitError: For too few samples, a flat or edge-peaked window, a multi-modal window
            or non-convergence
    """
    low, high = sorted(window)
    mask = (spectrum.axis >= low) & (spectrum.axis <= high)
    x, y = spectrum.axis[mask], spectrum.intensity[mask]
    if x.size < MIN_WINDOW_SAMPLES:
        raise FitError(f"window [{low}, {high}] MHz holds {x.size} samples; at least {MIN_WINDOW_SAMPLES} are needed")

    bottom, top = float(np.min(y)), float(np.max(y))
    span = top - bottom
    if span <= 1e-12 * max(1.0, abs(top)):
        raise FitError(f"window [{low}, {high}] MHz is flat; no peak to fit")
    peaks, _ = find_peaks(y, height=bottom + span / 2, prominence=0.1 * span)
    if peaks.size > 1:
        raise FitError(
            f"window [{low}, {high}] MHz holds {peaks.size} maxima above half range at "
            f"{', '.join(f'{x[p]:.1f}' for p in peaks)} MHz; narrow the window"
        )
    top_index = int(np.argmax(y))
    if peaks.size == 0 or top_index in (0, x.size - 1):
        raise FitError(f"window [{low}, {high}] MHz has no interior local maximum")

    try:
        width0 = measured_fwhm(x, y)
    except DomainError:
        width0 = (high - low) / 4
    center0 = float(x[top_index])
    if model is PeakModel.GAUSSIAN:
        p0 = [center0, width0 / GAUSSIAN_FWHM_PER_SIGMA, span, bottom]
    elif model is PeakModel.LORENTZIAN:
        p0 = [center0, width0, span, bottom]
    else:
        p0 = [center0, 0.5 * width0 / GAUSSIAN_FWHM_PER_SIGMA, 0.5 * width0, span, bottom]

    func = PEAK_FUNCTIONS[model]
    result = least_squares(
        lambda p: func(x, *p) - y,
        p0,
        method="lm",
        x_scale="jac",
        ftol=FTOL,
        xtol=XTOL,
        gtol=GTOL,
        diff_step=DIFF_STEP,
        max_nfev=MAX_ITERATIONS * (len(p0) + 1),
    )
    if result.status <= 0:
        raise FitError(f"{model.value} fit in [{low}, {high}] MHz did not converge: {result.message}")

    names = PEAK_PARAMETERS[model]
    values = np.array(result.x, dtype=float)
    for i, name in enumerate(names):
        if name in ("sigma", "fwhm", "fwhm_lorentz"):
            values[i] = abs(values[i])
    errors, _ = _standard_errors(result.jac, result.fun)
    fit = PeakFit(
        model=model,
        params=dict(zip(names, (float(v) for v in values), strict=True)),
        stderr=dict(zip(names, (float(e) for e in errors), strict=True)),
        residual_norm=float(np.linalg.norm(result.fun)),
        nfev=int(result.nfev),
    )
    LOGGER.debug(f"{model.value} fit: center {fit.center:.3f} MHz, FWHM {fit.fwhm:.3f} MHz, nfev {fit.nfev}")
    return fit


@dataclass(frozen=True)
class SlopeFit:
    """Regression through the origin of splitting against √P."""

    slope: float
    stderr: float
    residuals: np.ndarray


def fit_splitting_vs_power(samples: Sequence[tuple[float, float]]) -> SlopeFit:
    """Least-squares slope k in splitting = k·√P.

    Args:
        samples: (power in mW, splitting in MHz) pairs

    Raises:
        DomainError: For fewer than 3 samples or non-positive powers
    """
    if len(samples) < 3:
        raise DomainError(f"need at least 3 (power, splitting) samples, got {len(samples)}")
    data = np.asarray(samples, dtype=float)
    powers, splittings = data[:, 0], data[:, 1]
    if np.any(powers <= 0):
        raise DomainError("powers must be > 0")
    root = np.sqrt(powers)
    norm = float(root @ root)
    slope = float(root @ splittings) / norm
    residuals = splittings - slope * root
    variance = float(residuals @ residuals) / (len(samples) - 1)
    return SlopeFit(slope=slope, stderr=math.sqrt(variance / norm), residuals=residuals)


@dataclass(frozen=True)
class SplittingMeasurement:
    splitting: float
    stderr: float
    lower: PeakFit
    upper: PeakFit


def measure_splitting(
    spectrum: Spectrum,
    guesses: tuple[float, float],
    half_window: float,
    model: PeakModel = PeakModel.LORENTZIAN,
) -> SplittingMeasurement:
    """Fit two peaks around ``guesses`` and return their separation."""
    low_guess, high_guess = sorted(guesses)
    if half_window <= 0:
        raise DomainError("half_window must be > 0")
    lower = fit_peak(spectrum, (low_guess - half_window, low_guess + half_window), model)
    upper = fit_peak(spectrum, (high_guess - half_window, high_guess + half_window), model)
    stderr = math.hypot(lower.stderr["center"], upper.stderr["center"])
    return SplittingMeasurement(upper.center - lower.center, stderr, lower, upper)


class SidebandParams(_Frozen):
    """Free parameters of the sideband-amplitude fit, defaulting to the published values."""

    k_stark_x: float = Field(11.7, ge=0, description="A_x/√P (MHz/√mW)")
    k_stark_y: float = Field(19.4, ge=0, description="A_y/√P (MHz/√mW)")
    rabi_x: float = Field(11.0, ge=0, description="Optical Rabi Ω_x (MHz)")
    rabi_y: float = Field(6.3, ge=0, description="Optical Rabi Ω_y (MHz)")
    pl_ratio: float = Field(3.1, ge=0, description="E_y/E_x PL brightness")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in SIDEBAND_PARAMETERS])

    @classmethod
    def from_array(cls, values: ArrayLike) -> "SidebandParams":
        return cls(**dict(zip(SIDEBAND_PARAMETERS, (float(v) for v in values), strict=True)))


def sideband_bundle(template: ModelBundle, params: SidebandParams) -> ModelBundle:
    """Combine the fixed parts of ``template`` with the free sideband parameters."""
    data = template.model_dump()
    data["drive"].update(k_stark_x=params.k_stark_x, k_stark_y=params.k_stark_y)
    data["laser"].update(rabi_x=params.rabi_x, rabi_y=params.rabi_y)
    data["shape"].update(pl_ratio=params.pl_ratio)
    return ModelBundle.model_validate(data)


@dataclass(frozen=True)
class SidebandFit:
    """Result of the multi-peak amplitude fit."""

    params: SidebandParams
    stderr: dict[str, float]
    covariance: np.ndarray
    reduced_chi2: float
    rms_relative: float
    nfev: int
    residuals: np.ndarray = field(repr=False)


def _check_identifiable(jac: np.ndarray, values: np.ndarray) -> None:
    free = values > AT_BOUND_TOLERANCE
    if not np.any(free):
        return
    scaled = jac[:, free] * values[free]
    names = [name for name, keep in zip(SIDEBAND_PARAMETERS, free, strict=True) if keep]
    _, singular, vt = np.linalg.svd(scaled, full_matrices=False)
    largest = singular[0] if singular.size else 0.0
    for i, value in enumerate(singular):
        if largest == 0 or value < RANK_TOLERANCE * largest:
            culprit = names[int(np.argmax(np.abs(vt[i])))]
            raise FitError(
                f"Jacobian is rank deficient; parameter {culprit!r} is not identifiable from the tracked peaks",
                parameter=culprit,
            )


def fit_sideband_amplitudes(
    powers: Sequence[float],
    peaks: Sequence[tuple[Branch, int]],
    amplitudes: ArrayLike,
    template: ModelBundle,
    initial: SidebandParams | None = None,
) -> SidebandFit:
    """Fit Stark slopes, optical Rabi frequencies and PL ratio to tracked peak amplitudes.

    ``template`` fixes the level diagram, the drive frequency, the electric Rabi slope and
    the line widths; the forward model is :func:`nvdress.spectra.tracked_peak_amplitudes`.

    Args:
        powers: Drive powers (mW), at least 4
        peaks: Tracked (branch, n) ladder entries, at least 6
        amplitudes: Measured heights, shape ``(len(powers), len(peaks))``
        template: Bundle holding the fixed parameters
        initial: Starting point; defaults to the published values

    Raises:
        DomainError: For too few powers or peaks, or a mis-shaped table
        FitError: For non-convergence or an unidentifiable parameter (named)
    """
    if len(powers) < 4 or len(peaks) < 6:
        raise DomainError(f"need >= 6 tracked peaks across >= 4 powers, got {len(peaks)} across {len(powers)}")
    data = np.asarray(amplitudes, dtype=float)
    if data.shape != (len(powers), len(peaks)):
        raise DomainError(f"amplitude table has shape {data.shape}, expected {(len(powers), len(peaks))}")
    start = (initial or SidebandParams()).as_array()

    def residuals(values: np.ndarray) -> np.ndarray:
        model = tracked_peak_amplitudes(sideband_bundle(template, SidebandParams.from_array(values)), powers, peaks)
        return (model - data).ravel()

    result = least_squares(
        residuals,
        start,
        method="trf",
        bounds=(0.0, np.inf),
        x_scale="jac",
        ftol=FTOL,
        xtol=XTOL,
        gtol=GTOL,
        diff_step=DIFF_STEP,
        max_nfev=MAX_ITERATIONS * (start.size + 1),
    )
    if result.status <= 0:
        raise FitError(f"sideband amplitude fit did not converge: {result.message}")
    _check_identifiable(result.jac, result.x)

    errors, covariance = _standard_errors(result.jac, result.fun)
    dof = max(result.fun.size - start.size, 1)
    fit = SidebandFit(
        params=SidebandParams.from_array(result.x),
        stderr=dict(zip(SIDEBAND_PARAMETERS, (float(e) for e in errors), strict=True)),
        covariance=covariance,
        reduced_chi2=float(result.fun @ result.fun) / dof,
        rms_relative=float(np.linalg.norm(result.fun) / max(np.linalg.norm(data), 1e-300)),
        nfev=int(result.nfev),
        residuals=result.fun.reshape(data.shape),
    )
    LOGGER.info(f"Sideband fit: {fit.params.model_dump()} (rms {fit.rms_relative:.2e}, nfev {fit.nfev})")
    return fit


def field_from_magnetic_rabi(rabi_m: float, gamma_e: float = GAMMA_E) -> float:
    """Transverse microwave field B⊥ (μT) from a ground-state magnetic Rabi frequency (MHz)."""
    if rabi_m < 0:
        raise DomainError(f"rabi_m must be >= 0, got {rabi_m}")
    if gamma_e <= 0:
        raise DomainError("gamma_e must be > 0")
    return rabi_m / gamma_e * 1000.0


@dataclass(frozen=True)
class DipoleEstimate:
    """Transition dipole from a measured splitting and an estimated field."""

    mu: float
    splitting_mhz: float
    field_kv_per_m: float
    uncertainty: float = 0.0


def dipole_from_splitting(
    splitting: float, field_kv_per_m: float, splitting_stderr: float = 0.0, field_stderr: float = 0.0
) -> DipoleEstimate:
    """μ = h·splitting / field, in Debye.

    Args:
        splitting: Electric Rabi splitting (MHz)
        field_kv_per_m: Field along the dipole (kV/m)
        splitting_stderr: Standard error of the splitting, propagated linearly
        field_stderr: Standard error of the field, propagated linearly

    Raises:
        DomainError: For a non-positive field or a negative splitting
    """
    if field_kv_per_m <= 0:
        raise DomainError(f"field must be > 0 kV/m, got {field_kv_per_m}")
    if splitting < 0:
        raise DomainError(f"splitting must be >= 0 MHz, got {splitting}")
    mu = PLANCK * splitting * 1e6 / (field_kv_per_m * 1e3) / DEBYE
    relative = 0.0
    if splitting > 0:
        relative = math.hypot(splitting_stderr / splitting, field_stderr / field_kv_per_m)
    return DipoleEstimate(mu=mu, splitting_mhz=splitting, field_kv_per_m=field_kv_per_m, uncertainty=mu * relative)


@dataclass(frozen=True)
class OrientationSpread:
    """Field along the dipole and the implied dipole, over random dipole azimuths."""

    field_mean: float
    field_std: float
    mu: float
    mu_low: float
    mu_high: float
    samples: int
    seed: int


def dipole_orientation_spread(
    splitting: float,
    field_axial_kv_per_m: float,
    field_transverse_kv_per_m: float = 0.0,
    tilt_deg: float = 25.0,
    field_axial_stderr: float = 0.0,
    samples: int = 100_000,
    seed: int = 0,
) -> OrientationSpread:
    """Monte Carlo over the azimuth of a dipole tilted ``tilt_deg`` from the NV axis.

    The field along the dipole is |E∥ cos t + E⊥ sin t cos φ| with φ uniform. The reported
    dipole uses the mean projected field; ``mu_low``/``mu_high`` are the 16th and 84th
    percentiles of the per-sample dipole.
    """
    if samples < 2:
        raise DomainError("need at least 2 samples")
    if field_axial_stderr < 0 or field_transverse_kv_per_m < 0:
        raise DomainError("field components and their stderr must be >= 0")
    rng = np.random.default_rng(seed)
    tilt = math.radians(tilt_deg)
    azimuth = rng.uniform(0.0, 2 * math.pi, samples)
    axial = field_axial_kv_per_m
    if field_axial_stderr > 0:
        axial = rng.normal(field_axial_kv_per_m, field_axial_stderr, samples)
    projected = np.abs(axial * math.cos(tilt) + field_transverse_kv_per_m * math.sin(tilt) * np.cos(azimuth))
    field_mean = float(np.mean(projected))
    usable = projected[projected > 0]
    if usable.size == 0 or field_mean <= 0:
        raise DomainError("the projected field vanishes for every sample")
    per_sample = PLANCK * splitting * 1e6 / (usable * 1e3) / DEBYE
    return OrientationSpread(
        field_mean=field_mean,
        field_std=float(np.std(projected)),
        mu=dipole_from_splitting(splitting, field_mean).mu,
        mu_low=float(np.percentile(per_sample, 16)),
        mu_high=float(np.percentile(per_sample, 84)),
        samples=samples,
        seed=seed,
    )


@dataclass(frozen=True)
class LoadResponse:
    """Relative change of the magnetic and electric Rabi frequencies between two loads."""

    magnetic_change: float
    electric_change: float

    @property
    def ratio_change(self) -> float:
        """Relative change of the magnetic-to-electric ratio."""
        return (1 + self.magnetic_change) / (1 + self.electric_change) - 1


def load_response_comparison(
    closed_magnetic: float, open_magnetic: float, closed_electric: float, open_electric: float
) -> LoadResponse:
    """Compare Rabi frequencies measured with two antenna loads."""
    if min(closed_magnetic, closed_electric) <= 0:
        raise DomainError("closed-load Rabi frequencies must be > 0")
    return LoadResponse(
        magnetic_change=open_magnetic / closed_magnetic - 1,
        electric_change=open_electric / closed_electric - 1,
    )


@dataclass(frozen=True)
class DipoleVector:
    """Dipole components (Debye) along (strain, ⟨−1,2,−1⟩, NV axis)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise DomainError(f"dipole components must be finite, got {(self.x, self.y, self.z)}")

    @classmethod
    def of(cls, components: Sequence[float]) -> "DipoleVector":
        if len(components) != 3:
            raise DomainError(f"a dipole has 3 components, got {len(components)}")
        return cls(*(float(c) for c in components))

    @property
    def components(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.components))


@dataclass(frozen=True)
class DipoleGeometry:
    magnitude: float
    parallel: float
    perpendicular: float
    angle_deg: float | None  # None for the zero vector


def dipole_geometry(v: DipoleVector) -> DipoleGeometry:
    """Magnitude, NV-axis and transverse components, and angle to the NV axis."""
    magnitude = v.norm
    angle = None if magnitude == 0 else math.degrees(math.acos(max(-1.0, min(1.0, v.z / magnitude))))
    return DipoleGeometry(
        magnitude=magnitude,
        parallel=v.z,
        perpendicular=math.hypot(v.x, v.y),
        angle_deg=angle,
    )


def pair_angle(v1: DipoleVector, v2: DipoleVector) -> float:
    """Angle between two dipoles in degrees.

    Raises:
        DomainError: If either vector is zero
    """
    n1, n2 = v1.norm, v2.norm
    if n1 == 0 or n2 == 0:
        raise DomainError("pair angle is undefined for a zero vector")
    cosine = float(v1.components @ v2.components) / (n1 * n2)
    return math.degrees(math.acos(max(-1.0, min(1.0, cosine))))


@dataclass(frozen=True)
class DipoleTableRow:
    """Ab-initio dipoles at one strain (units of 1e-2 %)."""

    strain: float
    dp_y: DipoleVector
    dp_x: DipoleVector
    mu_xy: DipoleVector


@dataclass(frozen=True)
class LiteratureDipole:
    source: str
    parallel: float | tuple[float, float] | None
    perpendicular: float | None
    method: str
    parallel_error: float | None = None
    perpendicular_error: float | None = None


@cache
def _dipole_data() -> dict[str, Any]:
    text = resources.files("nvdress").joinpath("data", "dipoles.yaml").read_text(encoding="utf-8")
    return load_yaml_text(text, "nvdress/data/dipoles.yaml")


def load_dipole_table() -> list[DipoleTableRow]:
    """The bundled ab-initio dipole table, ordered by strain."""
    rows = [
        DipoleTableRow(
            strain=float(row["strain"]),
            dp_y=DipoleVector.of(row["dp_y"]),
            dp_x=DipoleVector.of(row["dp_x"]),
            mu_xy=DipoleVector.of(row["mu_xy"]),
        )
        for row in _dipole_data()["rows"]
    ]
    return sorted(rows, key=lambda r: r.strain)


def _literature() -> tuple[LiteratureDipole, ...]:
    out = []
    for row in _dipole_data()["literature"]:
        parallel = row["parallel"]
        out.append(
            LiteratureDipole(
                source=row["source"],
                parallel=tuple(parallel) if isinstance(parallel, list) else parallel,
                perpendicular=row.get("perpendicular"),
                method=row["method"],
                parallel_error=row.get("parallel_error"),
                perpendicular_error=row.get("perpendicular_error"),
            )
        )
    return tuple(out)


LITERATURE_DIPOLES = _literature()
