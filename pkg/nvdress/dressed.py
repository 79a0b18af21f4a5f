"""Closed-form dressed-state algebra for the microwave-driven E_x/E_y pair.

The drive mixes E_x and E_y into dressed states |±⟩ with quasi-energies ω±; the optical
resonances then sit at the frame offsets (ω_x + ω_y ± ω_d)/2 plus ω±. A diagonal Stark
modulation at ω_d turns each dressed resonance into a Bessel-weighted sideband comb.

Angles: ``DressedFrame.theta`` is atan2(|Ωd|, Δ), with

    |+⟩ = sin(θ/2)|E_x⟩ + cos(θ/2)|E_y⟩,    |−⟩ = cos(θ/2)|E_x⟩ − sin(θ/2)|E_y⟩.

The Stark and sideband formulas are written in the complementary branch angle φ = π − θ,
for which the + branch is the one resonant at ω₊ˣ + nω_d and the − branch the one at
ω₋ʸ + nω_d.
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import jv

from nvdress.errors import DomainError, RwaValidityWarning
from nvdress.kinds import Branch
from nvdress.model import DriveField, LaserField, LevelDiagram

LOGGER = logging.getLogger("dressed")

# Above this |A₊,₋|/(2ω₊) the neglected cross-coupling matters.
VALIDITY_LIMIT = 0.2
BESSEL_TAIL_TOLERANCE = 1e-10


@dataclass(frozen=True)
class DressedFrame:
    """Mixing angle and quasi-energies of the dressed E_x/E_y pair."""

    theta: float
    omega_plus: float
    omega_minus: float
    detuning: float

    @property
    def generalized_rabi(self) -> float:
        return self.omega_plus - self.omega_minus

    @property
    def branch_angle(self) -> float:
        """Complementary angle φ = π − θ used by the Stark and sideband formulas."""
        return math.pi - self.theta

    def x_fraction(self, branch: Branch) -> float:
        """E_x weight of a dressed state."""
        half = self.theta / 2
        return math.sin(half) ** 2 if branch is Branch.PLUS else math.cos(half) ** 2

    def y_fraction(self, branch: Branch) -> float:
        """E_y weight of a dressed state."""
        return 1.0 - self.x_fraction(branch)


@dataclass(frozen=True)
class OpticalResonances:
    """The four dressed optical resonance centers (MHz)."""

    plus_x: float
    minus_x: float
    plus_y: float
    minus_y: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.plus_x, self.minus_x, self.plus_y, self.minus_y)


@dataclass(frozen=True)
class StarkAmplitudes:
    """Diagonal Stark amplitudes seen by the dressed states."""

    a_plus: float
    a_minus: float
    a_cross: float


@dataclass(frozen=True)
class LadderEntry:
    """One optical resonance of the sideband comb."""

    branch: Branch
    n: int
    center: float
    eff_rabi: float
    x_fraction: float
    y_fraction: float

    @property
    def branch_weights(self) -> tuple[float, float]:
        return (self.x_fraction, self.y_fraction)


@dataclass(frozen=True)
class SidebandLadder:
    """Enumerated sideband resonances on both dressed branches."""

    entries: tuple[LadderEntry, ...]
    a_plus: float
    a_minus: float
    a_cross: float
    validity_ratio: float
    frame: DressedFrame
    omega_d: float
    n_max: int

    def entry(self, branch: Branch, n: int) -> LadderEntry:
        """Look up the entry for ``(branch, n)``.

        Raises:
            KeyError: If the ladder was truncated below ``|n|``
        """
        for item in self.entries:
            if item.branch is branch and item.n == n:
                return item
        raise KeyError(f"no ladder entry ({branch.value}, {n}); ladder holds |n| <= {self.n_max}")

    def branch_entries(self, branch: Branch) -> list[LadderEntry]:
        return [item for item in self.entries if item.branch is branch]


def generalized_rabi(rabi_d: float, detuning: float) -> float:
    """√(Ωd² + Δ²)."""
    return math.hypot(rabi_d, detuning)


def mixing(rabi_d: float, detuning: float) -> DressedFrame:
    """Dressed frame of a drive with Rabi frequency ``rabi_d`` detuned by ``detuning``.

    Args:
        rabi_d: Electric Rabi frequency Ωd (MHz), non-negative
        detuning: Δ = ω_d − (ω_x − ω_y) (MHz)

    Returns:
        The frame with θ = atan2(Ωd, Δ) and ω± = ±½√(Ωd² + Δ²)

    Raises:
        DomainError: If ``rabi_d`` is negative
    """
    if rabi_d < 0:
        raise DomainError(f"rabi_d must be >= 0, got {rabi_d}")
    half = 0.5 * generalized_rabi(rabi_d, detuning)
    return DressedFrame(theta=math.atan2(rabi_d, detuning), omega_plus=half, omega_minus=-half, detuning=detuning)


def frame_offsets(levels: LevelDiagram, omega_d: float) -> tuple[float, float]:
    """The x and y frame offsets (ω_x + ω_y ± ω_d)/2."""
    total = levels.omega_x + levels.omega_y
    return (total + omega_d) / 2, (total - omega_d) / 2


def optical_resonances(levels: LevelDiagram, rabi_d: float, omega_d: float) -> OpticalResonances:
    """Laser frequencies of the four dressed optical resonances."""
    frame = mixing(rabi_d, omega_d - levels.splitting)
    offset_x, offset_y = frame_offsets(levels, omega_d)
    return OpticalResonances(
        plus_x=offset_x + frame.omega_plus,
        minus_x=offset_x + frame.omega_minus,
        plus_y=offset_y + frame.omega_plus,
        minus_y=offset_y + frame.omega_minus,
    )


def stark_amplitudes(a_x: float, a_y: float, theta: float) -> StarkAmplitudes:
    """Project the diagonal Stark modulation onto the dressed states."""
    cos2 = math.cos(theta / 2) ** 2
    sin2 = math.sin(theta / 2) ** 2
    return StarkAmplitudes(
        a_plus=a_x * cos2 + a_y * sin2,
        a_minus=a_x * sin2 + a_y * cos2,
        a_cross=(a_y - a_x) * math.sin(theta) / 2,
    )


def default_n_max(argument: float) -> int:
    """Sideband truncation for Bessel argument ``argument`` = A/ω_d.

    Starts at ceil(a) + 5 (at least 2) and grows while the dropped tail of Σ J_n² still
    exceeds the tail tolerance.
    """
    a = abs(argument)
    n_max = max(2, math.ceil(a) + 5)
    while True:
        tail_orders = np.arange(n_max + 1, n_max + 4)
        tail = 2.0 * float(np.sum(jv(tail_orders, a) ** 2))
        if tail < BESSEL_TAIL_TOLERANCE:
            return n_max
        n_max += 1


def sideband_ladder(
    levels: LevelDiagram, laser: LaserField, drive: DriveField, n_max: int | None = None
) -> SidebandLadder:
    """Enumerate the sideband comb on both dressed branches.

    Args:
        levels: Level diagram
        laser: Optical Rabi frequencies
        drive: Microwave drive; ``omega_d`` must be positive
        n_max: Largest |n| kept; defaults to :func:`default_n_max`

    Returns:
        Entries for |n| <= n_max with their centers and effective Rabi frequencies

    Raises:
        DomainError: For ω_d = 0 or a negative ``n_max``
    """
    omega_d = drive.omega_d
    if omega_d <= 0:
        raise DomainError("omega_d must be > 0 for the sideband ladder (Bessel argument A/omega_d diverges)")
    if n_max is not None and n_max < 0:
        raise DomainError(f"n_max must be >= 0, got {n_max}")

    frame = mixing(drive.rabi_d, omega_d - levels.splitting)
    phi = frame.branch_angle
    stark = stark_amplitudes(drive.a_x, drive.a_y, phi)

    if frame.omega_plus > 0:
        validity = abs(stark.a_cross) / (2 * frame.omega_plus)
    else:
        validity = 0.0 if stark.a_cross == 0 else math.inf
    if validity > VALIDITY_LIMIT:
        warnings.warn(
            f"dressed cross-coupling ratio {validity:.3g} exceeds {VALIDITY_LIMIT}; neglecting A+- is inaccurate",
            RwaValidityWarning,
            stacklevel=2,
        )

    arg_plus = stark.a_plus / omega_d
    arg_minus = stark.a_minus / omega_d
    if n_max is None:
        n_max = default_n_max(max(arg_plus, arg_minus))

    ns = np.arange(-n_max, n_max + 1)
    c = math.cos(phi / 2)
    s = math.sin(phi / 2)
    rabi_plus = laser.rabi_x * c * jv(ns, arg_plus) + laser.rabi_y * s * jv(ns + 1, arg_plus)
    rabi_minus = laser.rabi_y * c * jv(ns, arg_minus) - laser.rabi_x * s * jv(ns - 1, arg_minus)

    offset_x, offset_y = frame_offsets(levels, omega_d)
    x_plus = frame.x_fraction(Branch.PLUS)
    x_minus = frame.x_fraction(Branch.MINUS)

    entries = []
    for i, n in enumerate(ns):
        entries.append(
            LadderEntry(
                branch=Branch.PLUS,
                n=int(n),
                center=offset_x + frame.omega_plus + n * omega_d,
                eff_rabi=float(rabi_plus[i]),
                x_fraction=x_plus,
                y_fraction=1.0 - x_plus,
            )
        )
    for i, n in enumerate(ns):
        entries.append(
            LadderEntry(
                branch=Branch.MINUS,
                n=int(n),
                center=offset_y + frame.omega_minus + n * omega_d,
                eff_rabi=float(rabi_minus[i]),
                x_fraction=x_minus,
                y_fraction=1.0 - x_minus,
            )
        )

    LOGGER.debug(
        f"Ladder: theta={frame.theta:.4f} A+={stark.a_plus:.3f} A-={stark.a_minus:.3f} n_max={n_max} "
        f"validity={validity:.3g}"
    )
    return SidebandLadder(
        entries=tuple(entries),
        a_plus=stark.a_plus,
        a_minus=stark.a_minus,
        a_cross=stark.a_cross,
        validity_ratio=validity,
        frame=frame,
        omega_d=omega_d,
        n_max=n_max,
    )


def protected_shift(eps_perp: ArrayLike, rabi_d: float):
    """Shift of a resonantly driven line under a transverse perturbation ε⊥.

    With ω_x → ω_x + ε⊥ and ω_y → ω_y − ε⊥ at a resonant baseline, each dressed line moves by
    (√(Ωd² + 4ε⊥²) − Ωd)/2, which is ε⊥²/Ωd to leading order.

    Raises:
        DomainError: If ``rabi_d`` is not positive
    """
    if rabi_d <= 0:
        raise DomainError(f"protected_shift needs a driven line (rabi_d > 0), got {rabi_d}")
    eps = np.asarray(eps_perp, dtype=float)
    # Rationalized form, free of cancellation at small ε⊥.
    shift = 2 * eps**2 / (np.sqrt(rabi_d**2 + 4 * eps**2) + rabi_d)
    return float(shift) if shift.ndim == 0 else shift
