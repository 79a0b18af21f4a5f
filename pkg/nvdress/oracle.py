"""Brute-force time-domain master-equation oracle.

States live on {|0⟩, |E_x⟩, |E_y⟩}. Frequencies enter as 2π × MHz and time is in μs. The
laser couples |0⟩ to both excited states, the microwave drive couples E_x to E_y and
modulates their energies, and each excited state decays to |0⟩ at rate 2πγ*.

Integration happens in the frame rotating at the laser frequency on the excited
manifold, an exact unitary change of frame that leaves populations untouched and makes
the generator periodic in the drive period. The density matrix is carried in row-major
vectorized form, where the Lindblad generator is a 9×9 matrix.
"""

import logging
import math
import time
from dataclasses import dataclass

import humanfriendly
import numpy as np
from numpy.typing import ArrayLike
from pydantic import Field

from nvdress.errors import DomainError, NumericalError
from nvdress.kinds import SpectrumKind
from nvdress.lineshape import check_grid
from nvdress.model import ModelBundle, _Frozen
from nvdress.spectra import Spectrum

LOGGER = logging.getLogger("oracle")

TWO_PI = 2.0 * math.pi
DIM = 3
GROUND, EX, EY = 0, 1, 2

TRACE_TOLERANCE = 1e-8
HERMITICITY_TOLERANCE = 1e-10
EIGENVALUE_FLOOR = -1e-8
CONVERGENCE_TOLERANCE = 1e-4
# Default step: this many steps per period of the fastest frequency.
STEPS_PER_FASTEST_PERIOD = 100
# Steps coarser than 1/(STABILITY_FACTOR·f_max) are refused.
STABILITY_FACTOR = 50
# Transient length in units of 1/γ* (μs per MHz).
TRANSIENT_RATE_UNITS = 10.0
# Surrogate period, in steps, when the drive is static.
STATIC_PERIOD_STEPS = 200

_IDENTITY = np.eye(DIM, dtype=complex)


def _projector(i: int, j: int) -> np.ndarray:
    op = np.zeros((DIM, DIM), dtype=complex)
    op[i, j] = 1.0
    return op


@dataclass(frozen=True)
class DensityMatrix:
    """3×3 density matrix over {|0⟩, |E_x⟩, |E_y⟩}."""

    matrix: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.shape != (DIM, DIM):
            raise DomainError(f"density matrix must be {DIM}x{DIM}, got {rho.shape}")
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def pure(cls, index: int) -> "DensityMatrix":
        return cls(_projector(index, index))

    @classmethod
    def ground(cls) -> "DensityMatrix":
        return cls.pure(GROUND)

    @property
    def trace_error(self) -> float:
        return abs(complex(np.trace(self.matrix)) - 1.0)

    @property
    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    @property
    def min_eigenvalue(self) -> float:
        hermitian = (self.matrix + self.matrix.conj().T) / 2
        return float(np.min(np.linalg.eigvalsh(hermitian)))

    @property
    def excited_population(self) -> float:
        return float(self.matrix[EX, EX].real + self.matrix[EY, EY].real)

    def violations(self) -> list[str]:
        """Describe every broken density-matrix invariant."""
        problems = []
        if self.trace_error > TRACE_TOLERANCE:
            problems.append(f"trace off by {self.trace_error:.3g}")
        if self.hermiticity_error > HERMITICITY_TOLERANCE:
            problems.append(f"non-Hermitian by {self.hermiticity_error:.3g}")
        if self.min_eigenvalue < EIGENVALUE_FLOOR:
            problems.append(f"eigenvalue {self.min_eigenvalue:.3g} below {EIGENVALUE_FLOOR}")
        return problems


class IntegrationConfig(_Frozen):
    """Step size, transient and averaging window of the oracle."""

    dt_us: float | None = Field(None, gt=0, description="Step (μs); default 1/(100·f_max)")
    t_transient_us: float | None = Field(None, gt=0, description="Transient (μs); default 10/γ*")
    average_periods: int = Field(8, ge=2, description="Drive periods in the averaging window")
    method: str = Field("rk4", pattern="^rk4$", description="Fixed-step integrator")
    drive_phase_deg: float = Field(0.0, description="Drive phase at t = 0")
    sample_every: int = Field(1, ge=1, description="Store every n-th step of a trajectory")

    @property
    def drive_phase(self) -> float:
        return math.radians(self.drive_phase_deg)


@dataclass(frozen=True)
class Trajectory:
    """Stored samples of an integration, in the laser frame."""

    times: np.ndarray
    states: np.ndarray
    dt: float

    @property
    def excited_population(self) -> np.ndarray:
        return self.states[:, EX, EX].real + self.states[:, EY, EY].real

    def population(self, index: int) -> np.ndarray:
        return self.states[:, index, index].real

    def state(self, i: int) -> DensityMatrix:
        return DensityMatrix(self.states[i])

    @property
    def max_trace_error(self) -> float:
        return float(np.max(np.abs(np.trace(self.states, axis1=1, axis2=2) - 1.0)))

    @property
    def max_hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.states - np.conj(np.swapaxes(self.states, 1, 2)))))


@dataclass
class _Generator:
    """Lindblad generator split into a static batch and a periodic drive part."""

    static: np.ndarray  # (N, 9, 9)
    drive_lower: np.ndarray  # coefficient of e^{-iα}
    drive_upper: np.ndarray  # coefficient of e^{+iα}
    stark: np.ndarray  # coefficient of cos α
    omega_d: float
    phase: float
    f_max: float

    def at(self, t: float) -> np.ndarray:
        alpha = TWO_PI * self.omega_d * t + self.phase
        periodic = (
            np.exp(-1j * alpha) * self.drive_lower
            + np.exp(1j * alpha) * self.drive_upper
            + math.cos(alpha) * self.stark
        )
        return self.static + periodic[None]


def _left(op: np.ndarray) -> np.ndarray:
    # vec(A ρ) = (A ⊗ I) vec(ρ) for row-major vec; batched over leading axes.
    return np.einsum("...ij,kl->...ikjl", op, _IDENTITY).reshape(op.shape[:-2] + (DIM * DIM, DIM * DIM))


def _right(op: np.ndarray) -> np.ndarray:
    # vec(ρ B) = (I ⊗ Bᵀ) vec(ρ).
    return np.einsum("ij,...lk->...ikjl", _IDENTITY, op).reshape(op.shape[:-2] + (DIM * DIM, DIM * DIM))


def _commutator(hamiltonian: np.ndarray) -> np.ndarray:
    return -1j * (_left(hamiltonian) - _right(hamiltonian))


def _dissipator(rate: float) -> np.ndarray:
    total = np.zeros((DIM * DIM, DIM * DIM), dtype=complex)
    for excited in (EX, EY):
        jump = _projector(GROUND, excited)
        jump_dag = jump.conj().T
        number = jump_dag @ jump
        total += np.kron(jump, jump.conj()) - 0.5 * _left(number) - 0.5 * _right(number)
    return rate * total


def _laser_coupling(bundle: ModelBundle) -> np.ndarray:
    op = np.zeros((DIM, DIM), dtype=complex)
    op[EX, GROUND] = op[GROUND, EX] = 0.5 * bundle.laser.rabi_x
    op[EY, GROUND] = op[GROUND, EY] = 0.5 * bundle.laser.rabi_y
    return TWO_PI * op


def build_hamiltonian(bundle: ModelBundle, t: float, drive_phase: float = 0.0) -> np.ndarray:
    """Lab-frame Hamiltonian H(t) in rad/μs.

    H = H₀ + H_L(t) + H_d(t) + H_P(t) with
    H₀ = diag(0, ω_x, ω_y),
    H_L = ½Ω_x|E_x⟩⟨0|e^{−iω_L t} + ½Ω_y|E_y⟩⟨0|e^{−iω_L t} + h.c.,
    H_d = ½Ωd|E_x⟩⟨E_y|e^{−i(ω_d t + φ)} + h.c. and
    H_P = (A_x|E_x⟩⟨E_x| + A_y|E_y⟩⟨E_y|) cos(ω_d t + φ), every frequency times 2π.
    """
    levels, drive, laser = bundle.levels, bundle.drive, bundle.laser
    h = np.zeros((DIM, DIM), dtype=complex)
    h[EX, EX] = levels.omega_x
    h[EY, EY] = levels.omega_y

    laser_phase = np.exp(-1j * TWO_PI * laser.omega_l * t)
    h[EX, GROUND] = 0.5 * laser.rabi_x * laser_phase
    h[EY, GROUND] = 0.5 * laser.rabi_y * laser_phase
    h[GROUND, EX] = np.conj(h[EX, GROUND])
    h[GROUND, EY] = np.conj(h[EY, GROUND])

    alpha = TWO_PI * drive.omega_d * t + drive_phase
    h[EX, EY] = 0.5 * drive.rabi_d * np.exp(-1j * alpha)
    h[EY, EX] = np.conj(h[EX, EY])
    h[EX, EX] += drive.a_x * math.cos(alpha)
    h[EY, EY] += drive.a_y * math.cos(alpha)
    return TWO_PI * h


def fastest_frequency(bundle: ModelBundle, omega_ls: ArrayLike) -> float:
    """Conservative bound (MHz) on the fastest frequency of the laser-frame generator."""
    levels, drive, laser, shape = bundle.levels, bundle.drive, bundle.laser, bundle.shape
    wl = np.atleast_1d(np.asarray(omega_ls, dtype=float))
    detuning = float(np.max(np.abs(np.concatenate([levels.omega_x - wl, levels.omega_y - wl]))))
    return (
        detuning
        + drive.omega_d
        + drive.rabi_d / 2
        + (laser.rabi_x + laser.rabi_y) / 2
        + max(drive.a_x, drive.a_y)
        + shape.gamma_star
    ) or 1.0


def default_step(bundle: ModelBundle, omega_ls: ArrayLike) -> float:
    """Default RK4 step (μs) for a scan over ``omega_ls``.

    Split scans should fix this once for the whole grid and pass it as ``dt_us``, so every
    part integrates with the same step.
    """
    return 1.0 / (STEPS_PER_FASTEST_PERIOD * fastest_frequency(bundle, omega_ls))


def _generator(bundle: ModelBundle, omega_ls: np.ndarray, phase: float) -> _Generator:
    levels, drive = bundle.levels, bundle.drive
    n = omega_ls.size
    hamiltonians = np.zeros((n, DIM, DIM), dtype=complex)
    hamiltonians[:, EX, EX] = TWO_PI * (levels.omega_x - omega_ls)
    hamiltonians[:, EY, EY] = TWO_PI * (levels.omega_y - omega_ls)
    hamiltonians += _laser_coupling(bundle)[None]
    static = _commutator(hamiltonians) + _dissipator(TWO_PI * bundle.shape.gamma_star)[None]

    lower = TWO_PI * 0.5 * drive.rabi_d * _projector(EX, EY)
    stark = TWO_PI * (drive.a_x * _projector(EX, EX) + drive.a_y * _projector(EY, EY))
    return _Generator(
        static=static,
        drive_lower=_commutator(lower),
        drive_upper=_commutator(lower.conj().T),
        stark=_commutator(stark),
        omega_d=drive.omega_d,
        phase=phase,
        f_max=fastest_frequency(bundle, omega_ls),
    )


def _step_size(gen: _Generator, config: IntegrationConfig) -> float:
    limit = 1.0 / (STABILITY_FACTOR * gen.f_max)
    if config.dt_us is None:
        return 1.0 / (STEPS_PER_FASTEST_PERIOD * gen.f_max)
    if config.dt_us > limit:
        raise NumericalError(
            f"dt = {config.dt_us:.3g} us exceeds the stability limit 1/(50 f_max) = {limit:.3g} us "
            f"(f_max = {gen.f_max:.1f} MHz)"
        )
    return config.dt_us


def _rk4_step(gen: _Generator, t: float, h: float, y: np.ndarray) -> np.ndarray:
    l1 = gen.at(t)
    l2 = gen.at(t + h / 2)
    l3 = gen.at(t + h)
    k1 = l1 @ y
    k2 = l2 @ (y + 0.5 * h * k1)
    k3 = l2 @ (y + 0.5 * h * k2)
    k4 = l3 @ (y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(rho.shape[:-2] + (DIM * DIM,))


def _unvec(y: np.ndarray) -> np.ndarray:
    return y.reshape(y.shape[:-1] + (DIM, DIM))


def integrate(
    bundle: ModelBundle, config: IntegrationConfig, rho0: DensityMatrix, duration_us: float
) -> Trajectory:
    """Fixed-step RK4 evolution of ρ from ``rho0`` for ``duration_us``.

    The step is ``config.dt_us`` (or 1/(100·f_max)), shrunk slightly so an integer number
    of steps spans the duration. States are stored every ``config.sample_every`` steps and
    at the end, in the laser frame.

    Raises:
        DomainError: If ``rho0`` is not a valid density matrix or the duration is not positive
        NumericalError: If the step exceeds the stability limit
    """
    problems = rho0.violations()
    if problems:
        raise DomainError(f"initial state is not a density matrix: {'; '.join(problems)}")
    if duration_us <= 0:
        raise DomainError("duration must be > 0")

    gen = _generator(bundle, np.array([bundle.laser.omega_l]), config.drive_phase)
    dt = _step_size(gen, config)
    steps = math.ceil(duration_us / dt)
    h = duration_us / steps

    y = _vec(rho0.matrix)[None, :, None]
    times, states = [0.0], [rho0.matrix.copy()]
    for i in range(steps):
        y = _rk4_step(gen, i * h, h, y)
        if (i + 1) % config.sample_every == 0 or i + 1 == steps:
            times.append((i + 1) * h)
            states.append(_unvec(y[0, :, 0]).copy())
    LOGGER.debug(f"Integrated {steps} steps of {h:.3g} us (f_max {gen.f_max:.1f} MHz)")
    return Trajectory(times=np.array(times), states=np.array(states), dt=h)


def _period_propagators(gen: _Generator, period: float, dt: float) -> tuple[np.ndarray, np.ndarray, int]:
    """One-period propagator and its time average, batched over the grid."""
    steps = math.ceil(period / dt)
    steps += steps % 2  # Simpson needs an even count
    h = period / steps
    n = gen.static.shape[0]
    prop = np.broadcast_to(np.eye(DIM * DIM, dtype=complex), (n, DIM * DIM, DIM * DIM)).copy()
    accumulated = prop.copy()
    for i in range(steps):
        prop = _rk4_step(gen, i * h, h, prop)
        weight = 1.0 if i + 1 == steps else (4.0 if (i + 1) % 2 else 2.0)
        accumulated += weight * prop
    average = accumulated * (h / 3.0) / period
    return prop, average, steps


def _matrix_power(prop: np.ndarray, exponent: int) -> np.ndarray:
    result = np.broadcast_to(np.eye(prop.shape[-1], dtype=complex), prop.shape).copy()
    base = prop
    while exponent:
        if exponent & 1:
            result = base @ result
        base = base @ base
        exponent >>= 1
    return result


def steady_state_scan(bundle: ModelBundle, grid: ArrayLike, config: IntegrationConfig | None = None) -> Spectrum:
    """Homogeneous PLE spectrum from the period-averaged steady state at every laser frequency.

    The system starts in |0⟩, is propagated stroboscopically past the transient, and the
    excited population is averaged over ``config.average_periods`` drive periods. Two
    consecutive period averages differing by more than 1e−4 relative mark a point as not
    converged; ``diagnostics["converged"]`` is False if any point is.

    Raises:
        DomainError: For γ* = 0 or a transient shorter than 10/γ*
        NumericalError: For a refused step or a state that breaks the density-matrix invariants
    """
    config = config or IntegrationConfig()
    omega_ls = check_grid(grid)
    gamma = bundle.shape.gamma_star
    if gamma <= 0:
        raise DomainError("the oracle steady state needs gamma_star > 0")
    minimum_transient = TRANSIENT_RATE_UNITS / gamma
    t_transient = config.t_transient_us if config.t_transient_us is not None else minimum_transient
    if t_transient < minimum_transient * (1 - 1e-12):
        raise DomainError(f"t_transient {t_transient:.3g} us is shorter than 10/gamma* = {minimum_transient:.3g} us")

    started = time.monotonic()
    gen = _generator(bundle, omega_ls, config.drive_phase)
    dt = _step_size(gen, config)
    if bundle.drive.omega_d > 0:
        period = 1.0 / bundle.drive.omega_d
    else:
        period = STATIC_PERIOD_STEPS * dt
    prop, average, steps = _period_propagators(gen, period, dt)
    transient_periods = math.ceil(t_transient / period)

    y = _matrix_power(prop, transient_periods) @ _vec(DensityMatrix.ground().matrix)[None, :, None]
    settled = [DensityMatrix(_unvec(y[i, :, 0])) for i in range(omega_ls.size)]

    window = np.empty((config.average_periods, omega_ls.size))
    for j in range(config.average_periods):
        mean_rho = _unvec((average @ y)[:, :, 0])
        window[j] = mean_rho[:, EX, EX].real + mean_rho[:, EY, EY].real
        y = prop @ y

    last, previous = window[-1], window[-2]
    scale = np.maximum(np.abs(last), 1e-12)
    converged = np.abs(last - previous) <= CONVERGENCE_TOLERANCE * scale
    populations = window.mean(axis=0)

    problems = [(i, p) for i, rho in enumerate(settled) for p in rho.violations()]
    if problems:
        i, problem = problems[0]
        raise NumericalError(f"steady state at omega_L = {omega_ls[i]:.3f} MHz: {problem}")
    if np.any(populations < EIGENVALUE_FLOOR):
        raise NumericalError("negative steady-state population")

    diagnostics = {
        "converged": bool(np.all(converged)),
        "nonconverged_points": [float(w) for w in omega_ls[~converged]],
        "max_trace_error": max(rho.trace_error for rho in settled),
        "max_hermiticity_error": max(rho.hermiticity_error for rho in settled),
        "min_eigenvalue": min(rho.min_eigenvalue for rho in settled),
        "dt_us": period / steps,
        "steps_per_period": steps,
        "transient_periods": transient_periods,
        "f_max_mhz": gen.f_max,
    }
    if not diagnostics["converged"]:
        LOGGER.warning(f"{int(np.sum(~converged))} of {omega_ls.size} oracle points did not converge")
    LOGGER.info(
        f"Oracle scan of {omega_ls.size} points: {steps} steps/period, {transient_periods} transient periods, "
        f"{humanfriendly.format_timespan(time.monotonic() - started)}"
    )
    return Spectrum(
        omega_ls,
        np.clip(populations, 0.0, None),
        SpectrumKind.PLE,
        params_echo=bundle.model_dump(mode="json"),
        diagnostics=diagnostics,
    )
