"""Tests for PLE and ODMR spectrum synthesis."""

import math

import numpy as np
import pytest
from scipy.signal import find_peaks

from nvdress.dressed import optical_resonances, protected_shift, sideband_ladder
from nvdress.errors import DomainError
from nvdress.kinds import Branch, MagneticLevel, SpectrumKind
from nvdress.lineshape import steady_state_population
from nvdress.model import DriveField, LevelDiagram, validate_model
from nvdress.spectra import (
    AntennaResponse,
    EsrDip,
    OdmrModel,
    Spectrum,
    intensity_at,
    mw_frequency_sweep,
    odmr_resonances,
    power_sweep_ple,
    protection_ensemble,
    simulate_odmr,
    simulate_ple,
    sweep_bundles_mw,
    sweep_bundles_power,
    tracked_peak_amplitudes,
)


@pytest.fixture
def resonant_bundle():
    # Ωd = 15.8·√100 = 158 MHz, resonant with δ⊥ = 2900 MHz.
    return validate_model(
        {"omega_x": 2900.0, "omega_y": 0.0},
        {"omega_d": 2900.0, "power_mw": 100.0, "k_rabi": 15.8},
        {"rabi_x": 3.0, "rabi_y": 3.0},
        {"gamma_star": 15.0, "sigma_x": 20.0, "sigma_y": 20.0},
    )


@pytest.fixture
def odmr():
    return OdmrModel(levels=LevelDiagram(omega_x=2900.0, omega_y=0.0, omega_m=-2700.0))


@pytest.fixture
def odmr_drive():
    return DriveField(omega_d=2800.0, power_mw=100.0, k_rabi=15.8, k_magnetic=0.288)


@pytest.fixture
def rippled_antenna():
    freqs = np.arange(2000.0, 3505.0, 5.0)
    return AntennaResponse(freqs, 28.0 + 6.0 * np.sin(2 * np.pi * freqs / 60.0))


class TestSpectrum:
    """Test the spectrum container."""

    def test_rejects_negative_intensity(self):
        with pytest.raises(DomainError, match=">= 0"):
            Spectrum(np.array([0.0, 1.0]), np.array([1.0, -0.1]), SpectrumKind.PLE)

    def test_rejects_nan(self):
        with pytest.raises(DomainError, match="NaN"):
            Spectrum(np.array([0.0, 1.0]), np.array([1.0, math.nan]), SpectrumKind.PLE)

    def test_rejects_length_mismatch(self):
        with pytest.raises(DomainError):
            Spectrum(np.array([0.0, 1.0]), np.array([1.0]), SpectrumKind.PLE)

    def test_window(self):
        spectrum = Spectrum(np.arange(10.0), np.arange(10.0), SpectrumKind.ODMR)
        window = spectrum.window(2.0, 4.0)
        np.testing.assert_array_equal(window.axis, [2.0, 3.0, 4.0])
        assert window.kind is SpectrumKind.ODMR


class TestSimulatePle:
    """Test PLE synthesis from the sideband ladder."""

    def test_autler_townes_pairs(self, resonant_bundle):
        grid = np.arange(-300.0, 3201.0, 1.0)
        spectrum = simulate_ple(resonant_bundle, grid)
        peaks, _ = find_peaks(spectrum.intensity, prominence=0.1 * spectrum.intensity.max())
        np.testing.assert_allclose(grid[peaks], [-79.0, 79.0, 2821.0, 2979.0], atol=1.0)
        assert spectrum.kind is SpectrumKind.PLE
        assert spectrum.params_echo["drive"]["omega_d"] == 2900.0

    def test_intensity_at_matches_grid(self, resonant_bundle):
        grid = np.arange(-300.0, 301.0, 1.0)
        spectrum = simulate_ple(resonant_bundle, grid)
        points = [79.0, -79.0, 0.0, 79.0]
        expected = [spectrum.intensity[np.searchsorted(grid, p)] for p in points]
        np.testing.assert_allclose(intensity_at(resonant_bundle, points), expected, rtol=1e-12)

    def test_pl_ratio_scales_y_branch(self, resonant_bundle):
        # Far off resonance the − branch is almost pure E_y.
        detuned = resonant_bundle.with_drive(resonant_bundle.drive.at_frequency(1000.0))
        brighter = detuned.model_copy(update={"shape": detuned.shape.model_copy(update={"pl_ratio": 3.0})})
        centers = optical_resonances(detuned.levels, detuned.drive.rabi_d, 1000.0)
        ratio = intensity_at(brighter, [centers.minus_y])[0] / intensity_at(detuned, [centers.minus_y])[0]
        assert ratio == pytest.approx(3.0, rel=0.02)


class TestPleCovariance:
    """Test symmetries and convergence of the synthesized PLE spectrum."""

    @pytest.fixture
    def sideband_bundle(self):
        # A = 564 MHz at ω_d = 470 MHz.
        return validate_model(
            {"omega_x": 2900.0, "omega_y": 0.0},
            {"omega_d": 470.0, "power_mw": 1.0, "k_stark_y": 564.0},
            {"rabi_x": 3.0, "rabi_y": 3.0},
            {"gamma_star": 15.0, "sigma_x": 20.0, "sigma_y": 20.0},
        )

    def test_level_shift_translates_spectrum(self, sideband_bundle):
        shift = 250.0
        grid = np.arange(-1000.0, 4001.0, 1.0)
        moved = sideband_bundle.model_copy(
            update={"levels": sideband_bundle.levels.model_copy(update={"omega_x": 2900.0 + shift, "omega_y": shift})}
        )
        base = simulate_ple(sideband_bundle, grid)
        shifted = simulate_ple(moved, grid + shift)
        np.testing.assert_allclose(shifted.intensity, base.intensity, rtol=1e-9, atol=1e-12)

    def test_truncation_converged(self, sideband_bundle):
        grid = np.arange(-5500.0, 8501.0, 2.0)
        n_max = sideband_ladder(
            sideband_bundle.levels, sideband_bundle.laser, sideband_bundle.drive
        ).n_max
        default = simulate_ple(sideband_bundle, grid)
        wider = simulate_ple(sideband_bundle, grid, n_max=n_max + 3)
        assert np.max(np.abs(wider.intensity - default.intensity)) < 1e-6

    def test_doubled_power_matches_antenna_gain(self, resonant_bundle):
        grid = np.arange(-300.0, 301.0, 1.0)
        gain_db = 10 * math.log10(2.0)
        antenna = AntennaResponse(np.array([2800.0, 3000.0]), np.array([20.0 + gain_db] * 2), reference_dbm=20.0)
        through_antenna = sweep_bundles_mw(resonant_bundle, [2900.0], antenna)[0]
        doubled = resonant_bundle.with_drive(resonant_bundle.drive.at_power(200.0))

        assert through_antenna.drive.power_mw == pytest.approx(200.0)
        np.testing.assert_allclose(
            simulate_ple(through_antenna, grid).intensity, simulate_ple(doubled, grid).intensity, rtol=1e-9, atol=1e-12
        )

    def test_three_db_is_nearly_double(self, resonant_bundle):
        antenna = AntennaResponse(np.array([2800.0, 3000.0]), np.array([23.0, 23.0]), reference_dbm=20.0)
        bundle = sweep_bundles_mw(resonant_bundle, [2900.0], antenna)[0]
        assert bundle.drive.power_mw == pytest.approx(200.0, rel=3e-3)
        assert bundle.drive.rabi_d == pytest.approx(resonant_bundle.drive.rabi_d * math.sqrt(2.0), rel=2e-3)


class TestSweeps:
    """Test power and drive-frequency sweeps."""

    def test_power_sweep_bundles(self, resonant_bundle):
        bundles = sweep_bundles_power(resonant_bundle, [25.0, 100.0, 400.0])
        assert [b.drive.rabi_d for b in bundles] == pytest.approx([79.0, 158.0, 316.0])

    def test_power_sweep_rejects_descending(self, resonant_bundle):
        with pytest.raises(DomainError):
            sweep_bundles_power(resonant_bundle, [100.0, 25.0])

    def test_power_sweep_spectra(self, resonant_bundle):
        grid = np.arange(-300.0, 301.0, 1.0)
        spectra = power_sweep_ple(resonant_bundle, [50.0, 200.0], grid)
        assert len(spectra) == 2
        assert all(s.axis.size == grid.size for s in spectra)

    def test_mw_sweep_applies_antenna(self, resonant_bundle):
        antenna = AntennaResponse(np.array([2800.0, 3000.0]), np.array([20.0, 30.0]), reference_dbm=20.0)
        bundles = sweep_bundles_mw(resonant_bundle, [2800.0, 3000.0], antenna)
        assert bundles[0].drive.power_mw == pytest.approx(100.0)
        assert bundles[1].drive.power_mw == pytest.approx(1000.0)
        assert bundles[1].drive.omega_d == 3000.0

    def test_mw_sweep_spectra(self, resonant_bundle):
        grid = np.arange(-300.0, 301.0, 2.0)
        spectra = mw_frequency_sweep(resonant_bundle, [2850.0, 2900.0, 2950.0], grid)
        assert len(spectra) == 3

    def test_mw_sweep_rejects_zero_frequency(self, resonant_bundle):
        with pytest.raises(DomainError):
            sweep_bundles_mw(resonant_bundle, [0.0])

    def test_tracked_amplitudes_shape(self, resonant_bundle):
        peaks = [(Branch.PLUS, -1), (Branch.MINUS, 0), (Branch.PLUS, 0)]
        table = tracked_peak_amplitudes(resonant_bundle, [50.0, 100.0], peaks)
        assert table.shape == (2, 3)
        assert np.all(table > 0)


class TestAntennaResponse:
    """Test the delivered-power correction."""

    def test_reference_defaults_to_mean(self):
        antenna = AntennaResponse(np.array([1.0, 2.0, 3.0]), np.array([10.0, 20.0, 30.0]))
        assert antenna.reference_dbm == pytest.approx(20.0)
        assert antenna.gain(2.0) == pytest.approx(1.0)
        assert antenna.gain(3.0) == pytest.approx(10.0)

    def test_linear_in_db(self):
        antenna = AntennaResponse(np.array([0.0, 10.0]), np.array([0.0, 10.0]), reference_dbm=0.0)
        assert antenna.gain(5.0) == pytest.approx(10.0**0.5)

    def test_refuses_extrapolation(self):
        antenna = AntennaResponse(np.array([1.0, 2.0]), np.array([0.0, 0.0]))
        with pytest.raises(DomainError, match="extrapolation"):
            antenna.gain(2.5)

    def test_rejects_unsorted_table(self):
        with pytest.raises(DomainError):
            AntennaResponse(np.array([2.0, 1.0]), np.array([0.0, 0.0]))


class TestOdmr:
    """Test dressed ODMR synthesis and its analytic resonances."""

    def test_resonances_split_by_dressing(self, odmr, odmr_drive):
        roots = odmr_resonances(odmr, odmr_drive, 2500.0, 3100.0)
        assert [r.transition for r in roots] == ["y-", "y+"]
        assert roots[0].frequency == pytest.approx(2675.03, abs=0.01)
        assert roots[1].frequency == pytest.approx(2824.97, abs=0.01)
        # Upper branch couples more weakly.
        assert roots[1].rabi_w < roots[0].rabi_w

    def test_resonances_solve_matching_condition(self, odmr, odmr_drive):
        for root in odmr_resonances(odmr, odmr_drive, 2500.0, 3100.0):
            f = root.frequency
            half = 0.5 * math.hypot(odmr_drive.rabi_d, f - 2900.0)
            sign = 1 if root.transition == "y+" else -1
            assert 1.5 * f - 4150.0 == pytest.approx(sign * half, abs=1e-6)

    def test_peak_finder_matches_roots(self, odmr, odmr_drive):
        grid = np.arange(2500.0, 3100.5, 0.5)
        spectrum = simulate_odmr(odmr, odmr_drive, grid)
        peaks, _ = find_peaks(spectrum.intensity, prominence=0.05 * spectrum.intensity.max())
        roots = [r.frequency for r in odmr_resonances(odmr, odmr_drive, 2500.0, 3100.0)]
        assert len(peaks) == 2
        np.testing.assert_allclose(grid[peaks], roots, atol=5.0)
        assert spectrum.intensity[peaks[1]] < spectrum.intensity[peaks[0]]

    def test_more_power_widens_the_split(self, odmr, odmr_drive):
        low = odmr_resonances(odmr, odmr_drive, 2500.0, 3100.0)
        high = odmr_resonances(odmr, odmr_drive.at_power(200.0), 2500.0, 3100.0)
        assert high[1].frequency - high[0].frequency > low[1].frequency - low[0].frequency

    def test_antenna_ripple_replicates_resonances(self, odmr, odmr_drive, rippled_antenna):
        roots = odmr_resonances(odmr, odmr_drive, 2500.0, 3100.0, rippled_antenna)
        counts = {}
        for root in roots:
            counts[root.transition] = counts.get(root.transition, 0) + 1
        assert max(counts.values()) >= 2

    def test_undriven_resonances_are_bare_lines(self, odmr, odmr_drive):
        # Bare E_m → E_y at ω_y − ω_m = 2700 and E_m → E_x at ω_x − ω_m = 5600 MHz.
        undriven = odmr_drive.model_copy(update={"k_rabi": 0.0})
        roots = odmr_resonances(odmr, undriven, 2500.0, 6000.0)
        assert [r.frequency for r in roots] == pytest.approx([2700.0, 5600.0], abs=1e-6)
        assert [r.rabi_w for r in roots] == pytest.approx([undriven.rabi_m] * 2)

    def test_undriven_two_photon_root_has_no_weight(self, odmr, odmr_drive):
        # ω_d = (ω_x − ω_m)/2 solves the y+ condition but |+⟩ is pure E_x there.
        undriven = odmr_drive.model_copy(update={"k_rabi": 0.0})
        roots = odmr_resonances(odmr, undriven, 2500.0, 6000.0)
        assert all(abs(r.frequency - 2800.0) > 1.0 for r in roots)

        model = odmr.model_copy(update={"inhom_width": 0.0})
        grid = np.arange(2500.0, 6000.5, 0.5)
        spectrum = simulate_odmr(model, undriven, grid)
        bare = sum(steady_state_population(undriven.rabi_m, grid - line, model.gamma_star) for line in (2700.0, 5600.0))
        np.testing.assert_allclose(spectrum.intensity, bare, rtol=1e-9, atol=1e-15)

    def test_weak_drive_approaches_bare_lines(self, odmr, odmr_drive):
        weak = odmr_drive.model_copy(update={"k_rabi": 1e-3})
        roots = odmr_resonances(odmr, weak, 2500.0, 6000.0)
        strong = [r for r in roots if r.rabi_w > 1e-3 * weak.rabi_m]
        assert [r.frequency for r in strong] == pytest.approx([2700.0, 5600.0], abs=1e-3)
        assert all(r.rabi_w < 1e-4 * weak.rabi_m for r in roots if r not in strong)

    def test_esr_dip_overlay(self, odmr, odmr_drive):
        grid = np.arange(2500.0, 3100.5, 0.5)
        plain = simulate_odmr(odmr, odmr_drive, grid)
        dipped = simulate_odmr(odmr.model_copy(update={"esr_dip": EsrDip(depth=0.01)}), odmr_drive, grid)
        at = np.searchsorted(grid, 2870.0)
        assert dipped.intensity[at] - plain.intensity[at] == pytest.approx(0.01)

    def test_missing_magnetic_level(self, odmr_drive):
        model = OdmrModel(levels=LevelDiagram(omega_x=2900.0, omega_y=0.0))
        with pytest.raises(DomainError, match="omega_m"):
            simulate_odmr(model, odmr_drive, np.arange(2500.0, 2600.0))

    def test_per_branch_level_overrides(self, odmr_drive):
        model = OdmrModel(
            levels=LevelDiagram(omega_x=2900.0, omega_y=0.0),
            branches=(MagneticLevel.E1, MagneticLevel.E2),
            omega_m={MagneticLevel.E1: -2700.0, MagneticLevel.E2: -2650.0},
        )
        assert [t[1] for t in model.transitions()] == [-2700.0, -2650.0]


class TestProtection:
    """Test the transverse-noise protection of a resonantly driven line."""

    @pytest.fixture
    def eps(self):
        return np.geomspace(1.0, 50.0, 20)

    def test_driven_shift_is_quadratic(self, eps):
        levels = LevelDiagram(omega_x=2900.0, omega_y=0.0)
        base = optical_resonances(levels, 557.0, 2900.0).plus_x
        shifts = [
            optical_resonances(LevelDiagram(omega_x=2900.0 + e, omega_y=-e), 557.0, 2900.0).plus_x - base
            for e in eps
        ]
        exponent = np.polyfit(np.log(eps), np.log(shifts), 1)[0]
        assert exponent == pytest.approx(2.0, abs=0.05)
        np.testing.assert_allclose(shifts, protected_shift(eps, 557.0), rtol=1e-6)

    def test_undriven_shift_is_linear(self, eps):
        base = optical_resonances(LevelDiagram(omega_x=2900.0, omega_y=0.0), 0.0, 2900.0).minus_y
        shifts = [
            abs(optical_resonances(LevelDiagram(omega_x=2900.0 + e, omega_y=-e), 0.0, 2900.0).minus_y - base)
            for e in eps
        ]
        exponent = np.polyfit(np.log(eps), np.log(shifts), 1)[0]
        assert exponent == pytest.approx(1.0, abs=0.01)

    def test_ensemble_narrows_the_line(self):
        result = protection_ensemble(557.0, undriven_fwhm=98.0, samples=20_000, seed=7)
        assert result.undriven_fwhm == pytest.approx(98.0, rel=0.05)
        assert result.driven_fwhm < result.undriven_fwhm
        assert result.narrowing == pytest.approx(98.0 / 62.0, rel=0.3)

    def test_ensemble_is_seeded(self):
        first = protection_ensemble(557.0, samples=2000, seed=3)
        second = protection_ensemble(557.0, samples=2000, seed=3)
        assert first == second

    def test_ensemble_rejects_bad_share(self):
        with pytest.raises(DomainError):
            protection_ensemble(557.0, longitudinal_share=1.5)
