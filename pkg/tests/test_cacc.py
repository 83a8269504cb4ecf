"""Tests for CACC, its analytic split and the high-pass filters."""

import math

import numpy as np
import pytest

from upsense.cacc import (
    FilterDesignError,
    analytic_xi,
    cacc,
    cutoff_for_paths,
    cutoff_from_dynamics,
    decompose_cacc,
    dc_region_energy,
    highpass_butterworth,
    highpass_mean_subtraction,
    input_error,
    reference_by_power,
    select_reference_index_n0,
    spectrum_2d,
    split_input_error,
)
from upsense.models import CaccGrid, ModelValidationError, DEFAULT_CUTOFF, PathParams, RxGrid
from upsense.scenario import generate_offsets, generate_symbols, make_rng, simulate, synthesize_rx

from tests.scenes import los, one_target_scene, small_config, two_target_scene


def constant_grid(value: complex = 1 + 1j, shape=(3, 16, 16)) -> CaccGrid:
    return CaccGrid(rho=np.full(shape, value), antennas=np.arange(1, shape[0] + 1), reference=0)


class TestCacc:
    """Tests for the cross-antenna cross-correlation."""

    def test_shape_and_antennas(self):
        """CACC keeps N - 1 rows, without the reference."""
        cfg = small_config()
        rx, _ = simulate(cfg, two_target_scene(cfg), make_rng(1))
        grid = cacc(rx, 2)
        assert grid.rho.shape == (3, 64, 64)
        assert grid.antennas.tolist() == [0, 1, 3]
        assert grid.lags.tolist() == [-2, -1, 1]

    def test_offsets_cancel(self):
        """With random offsets the noiseless CACC equals the offset-free analytic sum."""
        cfg = small_config()
        paths = two_target_scene(cfg)
        rx, _ = simulate(cfg, paths, make_rng(2))
        parts = decompose_cacc(cfg, paths)
        np.testing.assert_allclose(cacc(rx).rho, parts.total(), atol=1e-10)

    def test_los_only_is_constant(self):
        """A LOS-only scene gives |alpha_0|^2 e^{j lag Omega_0} everywhere."""
        cfg = small_config()
        path = los(gain=2.0)
        rx, _ = simulate(cfg, [path], make_rng(3))
        grid = cacc(rx)
        expected = 4.0 * np.exp(1j * grid.lags * path.spatial_freq)
        np.testing.assert_allclose(grid.rho, np.broadcast_to(expected[:, None, None], grid.rho.shape),
                                   atol=1e-10)

    def test_symbols_cancel(self):
        """Two symbol draws over the same offsets give the same CACC."""
        cfg = small_config()
        paths = two_target_scene(cfg)
        rng = make_rng(9)
        offsets = generate_offsets(cfg, rng)
        first = synthesize_rx(cfg, paths, offsets, generate_symbols(cfg, rng), rng)
        second = synthesize_rx(cfg, paths, offsets, generate_symbols(cfg, rng), rng)
        assert not np.allclose(first.y, second.y)
        np.testing.assert_allclose(cacc(first).rho, cacc(second).rho, atol=1e-10)
        xi_first = highpass_butterworth(cacc(first))
        xi_second = highpass_butterworth(cacc(second))
        np.testing.assert_allclose(xi_first.rho, xi_second.rho, atol=1e-10)

    def test_auto_reference(self):
        """'auto' picks the strongest antenna."""
        y = np.ones((3, 4, 4), dtype=complex)
        y[1] *= 3
        rx = RxGrid(y)
        assert reference_by_power(rx) == 1
        assert cacc(rx, "auto").reference == 1

    def test_reference_outside_array(self):
        """A reference index outside the array should raise."""
        rx = RxGrid(np.ones((2, 4, 4), dtype=complex))
        with pytest.raises(ModelValidationError, match="reference antenna"):
            cacc(rx, 5)


class TestDecomposition:
    """Tests for the four-term split of the CACC output."""

    def test_terms_add_up(self):
        """rho1 + rho2 + rho3 + rho4 is the noiseless CACC."""
        cfg = small_config()
        paths = two_target_scene(cfg)
        parts = decompose_cacc(cfg, paths)
        rx, _ = simulate(cfg, paths, make_rng(4))
        np.testing.assert_allclose(parts.total(), cacc(rx).rho, atol=1e-10)

    def test_cross_target_term_is_weak(self):
        """The variant NLOS x NLOS term sits below rho3 + rho4 by at least the LOS/NLOS gap."""
        cfg = small_config()
        parts = decompose_cacc(cfg, two_target_scene(cfg))
        weak = np.mean(np.abs(parts.rho2_tilde) ** 2)
        strong = np.mean(np.abs(parts.xi) ** 2)
        assert 10 * math.log10(strong / weak) >= cfg.los_nlos_gap_db

    def test_no_targets(self):
        """Without targets xi is zero."""
        cfg = small_config()
        assert not np.any(analytic_xi(cfg, [los()]).rho)


class TestHighpass:
    """Tests for the high-pass stage."""

    def test_butterworth_removes_constant(self):
        """A constant grid filters to zero."""
        xi = highpass_butterworth(constant_grid())
        assert np.max(np.abs(xi.rho)) < 1e-6

    def test_mean_subtraction_removes_constant(self):
        """Mean subtraction also removes a constant grid."""
        xi = highpass_mean_subtraction(constant_grid(), 8)
        assert np.max(np.abs(xi.rho)) < 1e-12

    def test_filter_beats_raw_cacc(self):
        """The filtered output is closer to the analytic xi than the raw CACC."""
        cfg = small_config()
        paths = two_target_scene(cfg)
        rx, _ = simulate(cfg, paths, make_rng(5))
        grid = cacc(rx)
        oracle = analytic_xi(cfg, paths)
        assert input_error(highpass_butterworth(grid), oracle) < 0.25 * input_error(grid, oracle)

    def test_filters_are_linear(self):
        """Both filters map a x + b y to a hp(x) + b hp(y)."""
        rng = make_rng(10)
        shape = (3, 16, 16)
        antennas = np.arange(1, 4)
        x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        y = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        a, b = 0.7 - 1.2j, -2.0 + 0.5j
        grids = [CaccGrid(rho=v, antennas=antennas, reference=0) for v in (x, y, a * x + b * y)]
        for highpass in (
            lambda g: highpass_butterworth(g, (0.3, 0.4)),
            lambda g: highpass_mean_subtraction(g, 4),
        ):
            hx, hy, combined = (highpass(g).rho for g in grids)
            np.testing.assert_allclose(combined, a * hx + b * hy, atol=1e-10)

    def test_butterworth_beats_mean_subtraction(self):
        """On a noiseless one-target scene the Butterworth error is at most the mean-subtraction one."""
        cfg = small_config()
        paths = one_target_scene(cfg)
        rx, _ = simulate(cfg, paths, make_rng(11))
        grid = cacc(rx)
        oracle = analytic_xi(cfg, paths)
        butterworth = input_error(highpass_butterworth(grid), oracle)
        mean_subtraction = input_error(highpass_mean_subtraction(grid, 8), oracle)
        assert butterworth <= mean_subtraction

    def test_bad_cutoff(self):
        """Cut-offs outside (0, pi) should raise."""
        with pytest.raises(FilterDesignError, match="cut-off"):
            highpass_butterworth(constant_grid(), (0.0, 0.1))
        with pytest.raises(FilterDesignError, match="cut-off"):
            highpass_butterworth(constant_grid(), (0.1, math.pi))

    def test_bad_order(self):
        """A non-positive order should raise."""
        with pytest.raises(FilterDesignError, match="order"):
            highpass_butterworth(constant_grid(), order=0)

    def test_window_too_long(self):
        """A mean window longer than M should raise."""
        with pytest.raises(FilterDesignError, match="window"):
            highpass_mean_subtraction(constant_grid(), 17)


class TestCutoff:
    """Tests for the automatic cut-off rule."""

    def test_from_dynamics(self):
        """omega_f = pi T_A |f| and omega_tau = pi dtau / T."""
        cfg = small_config()
        omega_f, omega_tau = cutoff_from_dynamics(cfg, 100.0, 0.2e-6)
        assert omega_f == pytest.approx(math.pi * 0.1)
        assert omega_tau == pytest.approx(math.pi * 0.1)

    def test_clamped_inside_open_interval(self):
        """Zero dynamics still give a valid cut-off."""
        omega_f, omega_tau = cutoff_from_dynamics(small_config(), 0.0, 0.0)
        assert 0 < omega_f < math.pi
        assert 0 < omega_tau < math.pi

    def test_for_paths_uses_slowest_target(self):
        """The smallest |f_D| and relative delay set the cut-off."""
        cfg = small_config()
        paths = two_target_scene(cfg)
        slow = min(abs(p.doppler) for p in paths if not p.is_los)
        assert cutoff_for_paths(cfg, paths)[0] == pytest.approx(math.pi * cfg.packet_interval * slow)

    def test_los_only_scene(self):
        """Without targets the default cut-off is returned."""
        assert cutoff_for_paths(small_config(), [los()]) == DEFAULT_CUTOFF


class TestReferenceSelection:
    """Tests for n0 selection by low-pass energy."""

    def test_two_antennas(self):
        """With N = 2 the only choice is antenna 1."""
        cfg = small_config(num_antennas=2)
        rx, _ = simulate(cfg, two_target_scene(cfg), make_rng(6))
        assert select_reference_index_n0(cacc(rx)) == 1

    def test_cancelling_lag(self):
        """The antenna where the invariant terms cancel is selected."""
        cfg = small_config()
        omega = 0.3
        paths = [
            los(omega=omega),
            PathParams(gain=1.0, delay=20e-9 + 8 * cfg.symbol_period / 64,
                       doppler=8 / (64 * cfg.packet_interval), spatial_freq=omega + math.pi / 2),
        ]
        rx, _ = simulate(cfg, paths, make_rng(7))
        assert select_reference_index_n0(cacc(rx)) == 2

    def test_dc_energy_of_constant(self):
        """A constant slice has all its energy in the DC bin."""
        values = np.ones((8, 8))
        assert dc_region_energy(values) == pytest.approx(64.0 ** 2)


class TestDiagnostics:
    """Tests for the 2D spectrum and the input error."""

    def test_spectrum_peaks_at_target_bin(self):
        """A bin-centred exponential shows up at its Doppler and delay bins."""
        m = np.arange(16)
        g = np.arange(32)
        wave = np.exp(2j * np.pi * (3 * m[:, None] / 16 - 5 * g[None, :] / 32))
        grid = CaccGrid(rho=wave[None], antennas=np.array([1]), reference=0)
        spectrum = spectrum_2d(grid, 1)
        i, j = np.unravel_index(np.argmax(spectrum.magnitude), spectrum.magnitude.shape)
        assert spectrum.doppler_bins[i] == 3
        assert spectrum.delay_bins[j] == 5

    def test_input_error_shape_mismatch(self):
        """Grids of different shape should raise."""
        with pytest.raises(ModelValidationError, match="shape mismatch"):
            input_error(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))

    def test_split_adds_up_without_noise(self):
        """With a noiseless input the noise share is zero."""
        cfg = small_config()
        paths = two_target_scene(cfg)
        rx, _ = simulate(cfg, paths, make_rng(8))
        xi = highpass_butterworth(cacc(rx))
        split = split_input_error(xi, xi, analytic_xi(cfg, paths))
        assert split.noise == 0.0
        assert split.total == pytest.approx(split.interference)
