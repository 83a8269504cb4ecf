"""Tests for the reference-selection objective and the error predictors."""

import math

import numpy as np
import pytest

from upsense.analysis import (
    best_n0,
    cacc_entry_variance,
    cmatrix_sample_index,
    empirical_psi_variance,
    mirrored_sample_index,
    predict_parameter_error,
    predict_report,
    psi_variance,
    reference_objective,
)
from upsense.aoa import assemble_Cmatrix
from upsense.cacc import analytic_xi, cacc, decompose_cacc
from upsense.mirrored_music import (
    assemble_P,
    basis_p,
    basis_p_derivative,
    estimate_delay_doppler,
    resolve_mirror,
)
from upsense.models import PathParams, XiGrid
from upsense.scenario import make_rng, simulate
from upsense.subspace import SubspaceError, svd_left

from tests.scenes import (
    OMEGA_LOS,
    TAU_LOS,
    los,
    one_target_scene,
    small_aoa,
    small_config,
    small_mirror,
    two_target_scene,
)


class TestReferenceObjective:
    """Tests for the antenna-selection objective."""

    def test_single_path(self):
        """One unit-power path gives 1 at every lag."""
        assert reference_objective([los()], 3) == pytest.approx(1.0)

    def test_cancelling_pair(self):
        """Two equal paths a quarter turn apart cancel at lag 2."""
        paths = [los(omega=0.3), PathParams(1.0, 1e-7, 10.0, 0.3 + math.pi / 2)]
        assert reference_objective(paths, 2) == pytest.approx(0.0, abs=1e-12)
        assert best_n0(paths, np.array([1, 2, 3])) == 2

    def test_reference_shifts_lag(self):
        """Lags are measured from the reference antenna."""
        paths = [los(omega=0.3), PathParams(1.0, 1e-7, 10.0, 0.3 + math.pi / 2)]
        assert best_n0(paths, np.array([0, 2, 3]), reference=1) == 3


class TestPsiVariance:
    """Tests for the closed-form perturbation variances."""

    def test_los_only_has_no_residual(self):
        """Without targets only the noise term remains."""
        psi = psi_variance([los()], 1, 0.1)
        assert psi.delta_xi == 0.0
        assert psi.total == pytest.approx(4 * 1.0 * 0.1)

    def test_two_targets(self):
        """delta_xi sums the cross products of distinct NLOS powers."""
        cfg = small_config()
        psi = psi_variance(two_target_scene(cfg), 1, 0.0)
        assert psi.delta_xi == pytest.approx(0.02)
        assert psi.total == pytest.approx(0.08)

    def test_cacc_entry_variance(self):
        """2 S sigma^2 + sigma^4 per entry, doubled by mirroring."""
        cfg = small_config()
        paths = one_target_scene(cfg)
        plain = cacc_entry_variance(paths, 0.1, mirrored=False)
        assert plain == pytest.approx(2 * 1.1 * 0.1 + 0.01)
        assert cacc_entry_variance(paths, 0.1) == pytest.approx(2 * plain)

    def test_empirical_matches_closed_form(self):
        """Monte-Carlo |Psi|^2 of the mirrored matrix agrees with the entry model."""
        cfg = small_config(noise_variance=0.1)
        paths = one_target_scene(cfg)
        measured = empirical_psi_variance(cfg, paths, small_mirror(p=31), 20, make_rng(3))
        assert measured == pytest.approx(cacc_entry_variance(paths, 0.1), rel=0.2)

    def test_closed_form_total_within_3db(self):
        """4 delta_xi + 4 delta_n0 sigma^2 tracks the measured |Psi|^2 within 3 dB."""
        cfg = small_config(noise_variance=0.1)
        paths = two_target_scene(cfg)
        for n0 in (1, 2, 3):
            mirror = small_mirror(p=31, n0=n0)
            measured = empirical_psi_variance(cfg, paths, mirror, 10, make_rng(n0))
            total = psi_variance(paths, n0, 0.1).total
            assert abs(10 * math.log10(measured / total)) < 3


class TestPredictors:
    """Tests for the first-order error predictor."""

    def _doppler_setup(self):
        cfg = small_config()
        paths = one_target_scene(cfg)
        xi = analytic_xi(cfg, paths)
        mirror = resolve_mirror(xi, small_mirror())
        decomposition = svd_left(assemble_P(xi, mirror), 1)
        doppler = paths[1].doppler
        return (
            decomposition,
            basis_p(doppler, mirror.p, cfg.packet_interval),
            basis_p_derivative(doppler, mirror.p, cfg.packet_interval),
        )

    def test_linear_in_psi_variance(self):
        """Doubling the entry variance doubles the prediction."""
        decomposition, p0, p1 = self._doppler_setup()
        one = predict_parameter_error(decomposition, p0, p1, 1.0)
        two = predict_parameter_error(decomposition, p0, p1, 2.0)
        assert one > 0
        assert two == pytest.approx(2 * one)

    def test_derivative_in_signal_space(self):
        """A derivative with no null-space part should raise."""
        matrix = np.eye(3)[:, :2]
        decomposition = svd_left(matrix, 2)
        e1 = np.array([1.0, 0.0, 0.0])
        with pytest.raises(SubspaceError, match="null-space component"):
            predict_parameter_error(decomposition, e1, e1, 1.0)

    def test_report_values(self):
        """A noisy two-target scene gives finite positive predictions."""
        cfg = small_config(noise_variance=0.01)
        report = predict_report(cfg, two_target_scene(cfg), small_mirror(), small_aoa())
        assert 0 < report.predicted_var_doppler < math.inf
        assert 0 < report.predicted_var_delay < math.inf
        assert 0 < report.predicted_var_aoa < math.inf
        assert report.delta_xi == pytest.approx(0.02)

    def test_report_without_aoa(self):
        """The AoA prediction is NaN without AoA settings."""
        cfg = small_config(noise_variance=0.01)
        report = predict_report(cfg, one_target_scene(cfg), small_mirror())
        assert math.isnan(report.predicted_var_aoa)

    def test_report_los_only(self):
        """A LOS-only scene predicts zero delay and Doppler error."""
        cfg = small_config(noise_variance=0.01)
        report = predict_report(cfg, [los()], small_mirror())
        assert report.predicted_var_delay == 0.0
        assert report.predicted_var_doppler == 0.0

    def test_more_noise_predicts_more_error(self):
        """The predicted Doppler variance grows with sigma^2."""
        quiet = small_config(noise_variance=0.001)
        loud = small_config(noise_variance=0.1)
        paths = one_target_scene(quiet)
        low = predict_report(quiet, paths, small_mirror()).predicted_var_doppler
        high = predict_report(loud, paths, small_mirror()).predicted_var_doppler
        assert high > low

    def test_distinct_samples_match_independent_entries(self):
        """An index naming a separate sample per entry changes nothing."""
        decomposition, p0, p1 = self._doppler_setup()
        shape = (len(p0), decomposition.right_singulars.shape[0])
        index = np.arange(shape[0] * shape[1]).reshape(shape)
        plain = predict_parameter_error(decomposition, p0, p1, 1.0)
        assert predict_parameter_error(decomposition, p0, p1, 1.0, index) == pytest.approx(plain)

    def test_shared_samples_add_coherently(self):
        """Copies of one sample in several entries weigh in as their summed weight."""
        decomposition, p0, p1 = self._doppler_setup()
        shape = (len(p0), decomposition.right_singulars.shape[0])
        single = predict_parameter_error(decomposition, p0, p1, 1.0, np.zeros(shape, dtype=int))
        plain = predict_parameter_error(decomposition, p0, p1, 1.0)
        assert single != pytest.approx(plain)

    def test_mirrored_sample_index(self):
        """Entry (i, j) sums series positions j + i and j + P - i."""
        index = mirrored_sample_index(3, 6)
        assert index.shape == (2, 4, 3)
        assert index[0].tolist() == [[0, 1, 2], [1, 2, 3], [2, 3, 4], [3, 4, 5]]
        assert index[1].tolist() == [[3, 4, 5], [2, 3, 4], [1, 2, 3], [0, 1, 2]]

    def test_cmatrix_sample_index(self):
        """Every C entry points at the xi sample it was copied from."""
        cfg = small_config()
        xi = analytic_xi(cfg, two_target_scene(cfg))
        aoa_cfg = small_aoa()
        index = cmatrix_sample_index(xi, aoa_cfg)
        np.testing.assert_allclose(xi.rho.ravel()[index[0]], assemble_Cmatrix(xi, aoa_cfg))


class TestPredictorAgainstSimulation:
    """Monte-Carlo check of the first-order predictor."""

    TRIALS = 100

    def test_doppler_and_delay_within_3db(self):
        """Simulated delay and Doppler MSE sit within 3 dB of the prediction."""
        cfg = small_config(noise_variance=0.01)
        paths = one_target_scene(cfg)
        mirror = small_mirror(n0=2, m0=5, g0=5)
        report = predict_report(cfg, paths, mirror)
        truth = paths[1]

        rng = make_rng(11)
        doppler_errors, delay_errors = [], []
        for _ in range(self.TRIALS):
            rx, offsets = simulate(cfg, paths, rng)
            grid = cacc(rx, 0)
            parts = decompose_cacc(cfg, paths, offsets, 0)
            xi = XiGrid.like(grid, grid.rho - (parts.rho1 + parts.rho2_bar)[:, None, None])
            estimate = estimate_delay_doppler(xi, OMEGA_LOS, TAU_LOS, cfg, mirror, 1).targets[0]
            doppler_errors.append(estimate.doppler - truth.doppler)
            delay_errors.append(estimate.delay_rel - (truth.delay - TAU_LOS))

        doppler_db = 10 * math.log10(np.mean(np.square(doppler_errors)) / report.predicted_var_doppler)
        delay_db = 10 * math.log10(np.mean(np.square(delay_errors)) / report.predicted_var_delay)
        assert abs(doppler_db) < 3
        assert abs(delay_db) < 3
