"""Homogeneous and inhomogeneous lineshapes.

The homogeneous line is the RWA Lindblad steady state of a driven two-level system,

    ρ₁₁ = W² / (4Δ_R² + 2W² + γ*²),

a Lorentzian in Δ_R of FWHM √(2W² + γ*²). Spectral diffusion adds a Gaussian of std σ by
direct convolution.
"""

import math
import warnings

import numpy as np
from numpy.typing import ArrayLike
from pydantic import Field
from scipy import special

from nvdress.errors import DegenerateLineWarning, DomainError, ResolutionWarning
from nvdress.model import _Frozen

GAUSSIAN_FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
# Gaussian kernel support, in standard deviations.
KERNEL_HALF_WIDTH = 6.0
# Internal quadrature spacing as a fraction of the narrowest width.
QUADRATURE_FRACTION = 0.1
# Cap on the number of kernel evaluations held in memory at once.
_BLOCK_ELEMENTS = 2_000_000
# Longer kernels (homogeneous width far below sigma) switch to the closed-form Voigt.
MAX_KERNEL_POINTS = 20_001


class PeakShape(_Frozen):
    """One Voigt peak: a power-broadened Lorentzian smeared by a Gaussian."""

    center: float = Field(..., description="Resonance center (MHz)")
    rabi_w: float = Field(0.0, ge=0, description="Effective Rabi frequency W (MHz)")
    gamma_star: float = Field(0.0, ge=0, description="Homogeneous rate γ* (MHz)")
    sigma: float = Field(0.0, ge=0, description="Gaussian std (MHz)")
    amplitude_scale: float = Field(1.0, ge=0, description="Multiplier on ρ₁₁")


def _scalar_or_array(values: np.ndarray):
    return float(values) if values.ndim == 0 else values


def steady_state_population(rabi_w: ArrayLike, detuning_r: ArrayLike, gamma_star: ArrayLike):
    """Excited-state population of the driven two-level steady state.

    Args:
        rabi_w: Rabi frequency W (MHz), non-negative
        detuning_r: Laser detuning Δ_R from the resonance (MHz)
        gamma_star: Homogeneous rate γ* (MHz), non-negative

    Returns:
        ρ₁₁ in [0, ½], broadcast over the inputs. The 0/0 point returns 0 and emits a
        :class:`DegenerateLineWarning`.
    """
    w = np.asarray(rabi_w, dtype=float)
    d = np.asarray(detuning_r, dtype=float)
    g = np.asarray(gamma_star, dtype=float)
    if np.any(w < 0) or np.any(g < 0):
        raise DomainError("rabi_w and gamma_star must be >= 0")
    num = w**2
    den = 4 * d**2 + 2 * num + g**2
    num, den = np.broadcast_arrays(num, den)
    degenerate = den == 0
    if np.any(degenerate):
        message = "steady_state_population evaluated at W = gamma* = detuning = 0"
        warnings.warn(message, DegenerateLineWarning, stacklevel=2)
    out = np.divide(num, den, out=np.zeros(den.shape), where=~degenerate)
    return _scalar_or_array(out)


def lorentzian_fwhm(rabi_w: float, gamma_star: float) -> float:
    """Power-broadened homogeneous FWHM √(2W² + γ*²)."""
    if rabi_w < 0 or gamma_star < 0:
        raise DomainError("rabi_w and gamma_star must be >= 0")
    return math.sqrt(2 * rabi_w**2 + gamma_star**2)


def voigt_fwhm_estimate(lorentz_fwhm: float, sigma: float) -> float:
    """Approximate Voigt FWHM from its Lorentzian FWHM and Gaussian std (Olivero-Longbothum)."""
    gauss_fwhm = GAUSSIAN_FWHM_PER_SIGMA * sigma
    return 0.5346 * lorentz_fwhm + math.sqrt(0.2166 * lorentz_fwhm**2 + gauss_fwhm**2)


def check_grid(grid: ArrayLike) -> np.ndarray:
    """Return ``grid`` as a 1-D float array, rejecting non-increasing axes."""
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("grid must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(x)):
        raise DomainError("grid contains non-finite values")
    if x.size > 1 and np.any(np.diff(x) <= 0):
        raise DomainError("grid must be strictly increasing")
    return x


def resolution_limit(peak: PeakShape) -> float:
    """Coarsest grid spacing that still resolves ``peak``."""
    lorentz = lorentzian_fwhm(peak.rabi_w, peak.gamma_star)
    candidates = [peak.gamma_star, peak.sigma, voigt_fwhm_estimate(lorentz, peak.sigma) / 10]
    positive = [c for c in candidates if c > 0]
    return min(positive) if positive else math.inf


def _warn_if_coarse(x: np.ndarray, peak: PeakShape) -> None:
    if x.size < 2:
        return
    spacing = float(np.max(np.diff(x)))
    limit = resolution_limit(peak)
    if spacing > limit:
        warnings.warn(
            f"grid spacing {spacing:.3g} MHz is coarser than {limit:.3g} MHz for the peak at {peak.center:.3f} MHz",
            ResolutionWarning,
            stacklevel=3,
        )


def _closed_form_voigt(peak: PeakShape, x: np.ndarray) -> np.ndarray:
    # ρ₁₁ = (W²/4)·(π/h)·Cauchy(Δ; h) with h the half width at half maximum.
    hwhm = lorentzian_fwhm(peak.rabi_w, peak.gamma_star) / 2
    area = peak.amplitude_scale * math.pi * peak.rabi_w**2 / (4 * hwhm)
    return area * special.voigt_profile(x - peak.center, peak.sigma, hwhm)


def voigt_profile(peak: PeakShape, grid: ArrayLike) -> np.ndarray:
    """Evaluate a Voigt peak on ``grid``.

    The Lorentzian ρ₁₁ is convolved with a normalized Gaussian of std ``peak.sigma`` by
    direct quadrature on a uniform internal grid (spacing a tenth of the narrowest width,
    kernel truncated at ±6σ). σ = 0 returns the Lorentzian itself. When the homogeneous
    width is so far below σ that the kernel would exceed ``MAX_KERNEL_POINTS``, the
    Faddeeva-based :func:`scipy.special.voigt_profile` is used instead.

    Raises:
        DomainError: If ``grid`` is not strictly increasing
    """
    x = check_grid(grid)
    _warn_if_coarse(x, peak)
    if peak.rabi_w == 0:
        return np.zeros_like(x)

    def lorentz(detuning: np.ndarray) -> np.ndarray:
        return peak.amplitude_scale * steady_state_population(peak.rabi_w, detuning, peak.gamma_star)

    if peak.sigma == 0:
        return np.asarray(lorentz(x - peak.center), dtype=float)

    homogeneous = peak.gamma_star if peak.gamma_star > 0 else lorentzian_fwhm(peak.rabi_w, peak.gamma_star)
    step = min(homogeneous, peak.sigma) * QUADRATURE_FRACTION
    half = math.ceil(KERNEL_HALF_WIDTH * peak.sigma / step)
    if 2 * half + 1 > MAX_KERNEL_POINTS:
        return _closed_form_voigt(peak, x)
    offsets = np.arange(-half, half + 1) * step
    weights = np.exp(-0.5 * (offsets / peak.sigma) ** 2)
    weights /= weights.sum()

    out = np.empty_like(x)
    rows = max(1, _BLOCK_ELEMENTS // offsets.size)
    for start in range(0, x.size, rows):
        block = x[start : start + rows, None] - peak.center - offsets[None, :]
        out[start : start + rows] = lorentz(block) @ weights
    return out


def gaussian_smooth(axis: ArrayLike, values: ArrayLike, fwhm: float) -> np.ndarray:
    """Smooth ``values`` along an ascending, possibly non-uniform ``axis`` with a Gaussian.

    Each output point is a trapezoid-weighted Gaussian average of the samples, normalized
    over the samples actually present so the edges are not pulled down.
    """
    x = check_grid(axis)
    y = np.asarray(values, dtype=float)
    if y.shape != x.shape:
        raise DomainError("axis and values must have the same length")
    if fwhm < 0:
        raise DomainError(f"fwhm must be >= 0, got {fwhm}")
    if fwhm == 0 or x.size < 2:
        return y.copy()

    sigma = fwhm / GAUSSIAN_FWHM_PER_SIGMA
    dx = np.empty_like(x)
    dx[1:-1] = (x[2:] - x[:-2]) / 2
    dx[0] = (x[1] - x[0]) / 2
    dx[-1] = (x[-1] - x[-2]) / 2

    out = np.empty_like(y)
    rows = max(1, _BLOCK_ELEMENTS // x.size)
    for start in range(0, x.size, rows):
        kernel = np.exp(-0.5 * ((x[start : start + rows, None] - x[None, :]) / sigma) ** 2) * dx[None, :]
        out[start : start + rows] = (kernel @ y) / kernel.sum(axis=1)
    return out


def measured_fwhm(axis: ArrayLike, values: ArrayLike) -> float:
    """Full width at half maximum of the tallest peak, from interpolated half-max crossings.

    The half level sits halfway between the minimum and the maximum of ``values``.

    Raises:
        DomainError: If the peak is flat or not bracketed by half-max crossings
    """
    x = check_grid(axis)
    y = np.asarray(values, dtype=float)
    top = int(np.argmax(y))
    low, high = float(np.min(y)), float(y[top])
    if high <= low:
        raise DomainError("flat curve has no FWHM")
    half = low + (high - low) / 2

    left = top
    while left > 0 and y[left] > half:
        left -= 1
    right = top
    while right < y.size - 1 and y[right] > half:
        right += 1
    if y[left] > half or y[right] > half:
        raise DomainError("peak is not bracketed by half-maximum crossings")

    x_left = np.interp(half, [y[left], y[left + 1]], [x[left], x[left + 1]])
    x_right = np.interp(half, [y[right], y[right - 1]], [x[right], x[right - 1]])
    return float(x_right - x_left)
