"""Tests for the time-domain master-equation oracle.

Grids are small; stroboscopic propagation keeps every scan here well under a minute.
"""

import numpy as np
import pytest

from nvdress.dressed import sideband_ladder
from nvdress.errors import DomainError, NumericalError
from nvdress.kinds import Branch
from nvdress.lineshape import steady_state_population
from nvdress.model import validate_model
from nvdress.oracle import (
    EX,
    EY,
    GROUND,
    DensityMatrix,
    IntegrationConfig,
    build_hamiltonian,
    default_step,
    fastest_frequency,
    integrate,
    steady_state_scan,
)
from nvdress.spectra import intensity_at


@pytest.fixture
def undriven():
    return validate_model(
        {"omega_x": 2900.0, "omega_y": 0.0},
        {"omega_d": 0.0},
        {"rabi_x": 3.0, "rabi_y": 3.0},
        {"gamma_star": 15.0},
    )


@pytest.fixture
def stark_modulated():
    # A_y/ω_d = 564/470 = 1.2, no E_x/E_y mixing and no light on E_x.
    return validate_model(
        {"omega_x": 2900.0, "omega_y": 0.0},
        {"omega_d": 470.0, "power_mw": 1.0, "k_stark_y": 564.0},
        {"rabi_x": 0.0, "rabi_y": 3.0},
        {"gamma_star": 15.0},
    )


@pytest.fixture
def compact():
    return validate_model(
        {"omega_x": 20.0, "omega_y": 0.0},
        {"omega_d": 0.0},
        {"omega_l": 0.0, "rabi_x": 0.0, "rabi_y": 3.0},
        {"gamma_star": 15.0},
    )


class TestDensityMatrix:
    """Test density-matrix invariants."""

    def test_ground_is_valid(self):
        rho = DensityMatrix.ground()
        assert rho.violations() == []
        assert rho.excited_population == 0.0

    def test_excited_population(self):
        assert DensityMatrix.pure(EX).excited_population == 1.0
        assert DensityMatrix.pure(EY).excited_population == 1.0

    def test_reports_broken_invariants(self):
        bad = np.diag([0.5, 0.7, -0.3]).astype(complex)
        bad[0, 1] = 0.1
        problems = DensityMatrix(bad).violations()
        assert any("trace" in p for p in problems)
        assert any("Hermitian" in p for p in problems)
        assert any("eigenvalue" in p for p in problems)

    def test_wrong_shape(self):
        with pytest.raises(DomainError):
            DensityMatrix(np.eye(2))


class TestHamiltonian:
    """Test the lab-frame Hamiltonian."""

    @pytest.mark.parametrize("t", [0.0, 1.3e-3, 0.25])
    def test_hermitian(self, stark_modulated, t):
        h = build_hamiltonian(stark_modulated, t, drive_phase=0.4)
        np.testing.assert_allclose(h, h.conj().T, atol=1e-12)

    def test_diagonal_at_rest(self, undriven):
        h = build_hamiltonian(undriven, 0.0)
        assert h[EX, EX].real == pytest.approx(2 * np.pi * 2900.0)
        assert h[EY, EY].real == pytest.approx(0.0)

    def test_fastest_frequency_covers_detuning(self, undriven):
        assert fastest_frequency(undriven, [-60.0, 60.0]) > 2960.0


class TestIntegrate:
    """Test the fixed-step trajectory."""

    def test_relaxes_to_steady_state(self, compact):
        trajectory = integrate(compact, IntegrationConfig(sample_every=10), DensityMatrix.ground(), 1.0)
        assert trajectory.times[-1] == pytest.approx(1.0)
        assert trajectory.excited_population[-1] == pytest.approx(steady_state_population(3.0, 0.0, 15.0), rel=1e-3)
        assert trajectory.max_trace_error < 1e-10
        assert trajectory.max_hermiticity_error < 1e-10
        assert trajectory.state(-1).violations() == []

    def test_rejects_invalid_start(self, compact):
        with pytest.raises(DomainError, match="density matrix"):
            integrate(compact, IntegrationConfig(), DensityMatrix(np.zeros((3, 3))), 1.0)

    def test_spontaneous_decay(self):
        """With no fields, E_y decays into the ground state with a 10.5 ns lifetime."""
        dark = validate_model(
            {"omega_x": 20.0, "omega_y": 0.0}, {"omega_d": 0.0}, {}, {"gamma_star": 1.0 / (2 * np.pi * 0.0105)}
        )
        rho0 = DensityMatrix.pure(EY)
        trajectory = integrate(dark, IntegrationConfig(sample_every=10), rho0, 0.05)
        expected = np.exp(-trajectory.times / 0.0105)
        np.testing.assert_allclose(trajectory.population(EY), expected, rtol=1e-6)
        np.testing.assert_allclose(trajectory.population(GROUND), 1 - expected, atol=1e-8)

    def test_rabi_oscillation_without_decay(self):
        rabi_y = 3.0
        closed = validate_model(
            {"omega_x": 20.0, "omega_y": 0.0}, {"omega_d": 0.0}, {"omega_l": 0.0, "rabi_y": rabi_y}, {"gamma_star": 0.0}
        )
        trajectory = integrate(closed, IntegrationConfig(sample_every=5), DensityMatrix.ground(), 2 / rabi_y)
        expected = np.sin(np.pi * rabi_y * trajectory.times) ** 2
        np.testing.assert_allclose(trajectory.population(EY), expected, atol=1e-6)
        assert trajectory.population(EY)[-1] == pytest.approx(0.0, abs=1e-6)
        assert trajectory.max_trace_error < 1e-10

    def test_rejects_coarse_step(self, compact):
        with pytest.raises(NumericalError, match="stability"):
            integrate(compact, IntegrationConfig(dt_us=0.1), DensityMatrix.ground(), 1.0)


class TestSteadyStateScan:
    """Test oracle spectra against the closed forms."""

    def test_homogeneous_lineshape(self, undriven):
        grid = -60.0 + 0.6 * np.arange(200)
        spectrum = steady_state_scan(undriven, grid)
        expected = steady_state_population(3.0, grid, 15.0) + steady_state_population(3.0, grid - 2900.0, 15.0)
        np.testing.assert_allclose(spectrum.intensity, expected, rtol=0.01)
        diagnostics = spectrum.diagnostics
        assert diagnostics["converged"]
        assert diagnostics["nonconverged_points"] == []
        assert diagnostics["max_trace_error"] < 1e-8
        assert diagnostics["max_hermiticity_error"] < 1e-10
        assert diagnostics["min_eigenvalue"] > -1e-8

    def test_halving_the_step(self, undriven):
        grid = np.linspace(-30.0, 30.0, 7)
        dt = 1.0 / (100 * fastest_frequency(undriven, grid))
        coarse = steady_state_scan(undriven, grid, IntegrationConfig(dt_us=dt))
        fine = steady_state_scan(undriven, grid, IntegrationConfig(dt_us=dt / 2))
        np.testing.assert_allclose(fine.intensity, coarse.intensity, rtol=0, atol=1e-6)

    def test_split_grid_matches_whole_grid(self, compact):
        grid = np.linspace(-30.0, 30.0, 7)
        config = IntegrationConfig(dt_us=default_step(compact, grid))
        whole = steady_state_scan(compact, grid, config).intensity
        parts = [steady_state_scan(compact, part, config).intensity for part in np.array_split(grid, 3)]
        np.testing.assert_allclose(np.concatenate(parts), whole, rtol=1e-12, atol=0)

    def test_drive_phase_invariance(self, stark_modulated):
        grid = [-470.0, 0.0, 470.0]
        reference = steady_state_scan(stark_modulated, grid).intensity
        shifted = steady_state_scan(stark_modulated, grid, IntegrationConfig(drive_phase_deg=90.0)).intensity
        np.testing.assert_allclose(shifted, reference, rtol=0, atol=1e-4 * reference.max())

    def test_sideband_comb(self, stark_modulated):
        orders = range(-2, 3)
        ladder = sideband_ladder(stark_modulated.levels, stark_modulated.laser, stark_modulated.drive)
        centers = np.array([ladder.entry(Branch.MINUS, n).center for n in orders])
        np.testing.assert_allclose(centers, [470.0 * n for n in orders], atol=1e-9)

        offsets = np.arange(-6.0, 7.0, 1.0)
        grid = (centers[:, None] + offsets[None, :]).ravel()
        spectrum = steady_state_scan(stark_modulated, grid)
        assert spectrum.diagnostics["converged"]
        local = spectrum.intensity.reshape(len(centers), offsets.size)

        # Peak positions within 1 MHz of the ladder centers.
        assert np.all(np.abs(offsets[np.argmax(local, axis=1)]) <= 1.0)

        oracle = local[:, offsets.size // 2]
        closed = intensity_at(stark_modulated, centers)
        middle = len(centers) // 2
        np.testing.assert_allclose(oracle / oracle[middle], closed / closed[middle], rtol=0.1)

    def test_requires_homogeneous_rate(self, undriven):
        still = undriven.model_copy(update={"shape": undriven.shape.model_copy(update={"gamma_star": 0.0})})
        with pytest.raises(DomainError, match="gamma_star"):
            steady_state_scan(still, [0.0, 1.0])

    def test_rejects_short_transient(self, undriven):
        with pytest.raises(DomainError, match="transient"):
            steady_state_scan(undriven, [0.0, 1.0], IntegrationConfig(t_transient_us=0.01))

    def test_rejects_coarse_step(self, undriven):
        with pytest.raises(NumericalError):
            steady_state_scan(undriven, [0.0, 1.0], IntegrationConfig(dt_us=1e-3))
