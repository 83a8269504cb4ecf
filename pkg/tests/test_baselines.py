"""Tests for the conventional MUSIC and AMS reference estimators."""

import numpy as np
import pytest

from upsense.baselines import (
    Axis,
    actual_gain_matrix,
    ams_estimate,
    ams_transform,
    conventional_estimate,
    conventional_music,
    fold_estimates,
    hankel_columns,
)
from upsense.cacc import analytic_xi, decompose_cacc
from upsense.mirrored_music import estimate_delay_doppler, folded_count
from upsense.models import CaccGrid, ModelValidationError, OffsetTrace, SymbolGrid
from upsense.scenario import make_rng, simulate, synthesize_rx

from tests.scenes import (
    OMEGA_LOS,
    TAU_LOS,
    by_delay,
    delay_step,
    doppler_step,
    los,
    offset_free_config,
    one_target_scene,
    small_config,
    small_mirror,
    two_target_scene,
)


class TestHelpers:
    """Tests for the Hankel matrix and the folding rule."""

    def test_hankel_columns(self):
        """Column j is the slice starting at sample j."""
        matrix = hankel_columns(np.arange(6), 2)
        assert matrix.shape == (3, 4)
        assert matrix[:, 1].tolist() == [1, 2, 3]

    def test_fold_drops_mirrors(self):
        """-x folds onto x and is kept once."""
        folded = fold_estimates(np.array([0.3, -0.3, 0.1, -0.11]), 2, 0.02)
        assert folded.tolist() == pytest.approx([0.3, 0.1])

    def test_fold_keeps_fewer(self):
        """When everything folds together fewer than count remain."""
        assert len(fold_estimates(np.array([0.2, -0.2]), 2, 0.01)) == 1


class TestConventional:
    """Tests for conventional MUSIC on the xi slices."""

    def test_doppler_axis(self):
        """2L signed peaks fold onto the L Doppler magnitudes."""
        cfg = small_config()
        xi = analytic_xi(cfg, two_target_scene(cfg))
        result = conventional_music(xi, Axis.DOPPLER, 2, small_mirror(), cfg)
        step = doppler_step(cfg)
        assert len(result.peaks) == 4
        assert sorted(result.folded) == pytest.approx([3 * step, 5 * step], abs=1e-3 * step)
        assert result.evaluations == 2 * folded_count(32)

    def test_delay_axis(self):
        """The delay search finds both relative delays."""
        cfg = small_config()
        xi = analytic_xi(cfg, two_target_scene(cfg))
        result = conventional_music(xi, Axis.DELAY, 2, small_mirror(), cfg)
        step = delay_step(cfg)
        assert sorted(result.folded) == pytest.approx([2 * step, 4 * step], abs=1e-3 * step)

    def test_window_too_short(self):
        """A window below 2L should raise."""
        cfg = small_config()
        xi = analytic_xi(cfg, two_target_scene(cfg))
        with pytest.raises(ModelValidationError, match="too short"):
            conventional_music(xi, Axis.DOPPLER, 2, small_mirror(p=3), cfg)

    def test_estimate_matches_mirrored(self):
        """On a noiseless on-grid scene both estimators agree, at twice the candidates."""
        cfg = small_config()
        xi = analytic_xi(cfg, two_target_scene(cfg))
        conventional = conventional_estimate(xi, OMEGA_LOS, TAU_LOS, cfg, small_mirror(), 2)
        mirrored = estimate_delay_doppler(xi, OMEGA_LOS, TAU_LOS, cfg, small_mirror(), 2)
        assert conventional.candidate_evaluations == 2 * mirrored.candidate_evaluations
        for a, b in zip(by_delay(conventional), by_delay(mirrored)):
            assert a.delay_rel == pytest.approx(b.delay_rel, abs=1e-3 * delay_step(cfg))
            assert a.doppler == pytest.approx(b.doppler, abs=1e-3 * doppler_step(cfg))

    def test_los_only(self):
        """A zero xi is flagged and empty."""
        cfg = small_config()
        estimates = conventional_estimate(
            analytic_xi(cfg, [los()]), OMEGA_LOS, TAU_LOS, cfg, small_mirror(), 2
        )
        assert len(estimates) == 0
        assert "los_only" in estimates.flags


class TestAms:
    """Tests for the add-minus suppression baseline."""

    def test_transform_identities(self):
        """A + B = 2y and xi^AMS = A_n conj(B_ref)."""
        cfg = small_config(noise_variance=0.01)
        rx, _ = simulate(cfg, two_target_scene(cfg), make_rng(1))
        ams = ams_transform(rx, reference=1)
        np.testing.assert_allclose(ams.minus + ams.plus, 2 * rx.y)
        assert ams.xi.antennas.tolist() == [0, 2, 3]
        np.testing.assert_allclose(ams.xi.rho[0], ams.minus[0] * np.conj(ams.plus[1]))

    def test_static_scene_is_suppressed(self):
        """With constant symbols and no offsets a LOS-only grid vanishes."""
        cfg = offset_free_config()
        rx = synthesize_rx(cfg, [los()], OffsetTrace.zeros(cfg.num_packets),
                           SymbolGrid.ones(cfg.num_packets, cfg.num_subcarriers), make_rng(0))
        ams = ams_transform(rx)
        assert np.max(np.abs(ams.minus)) < 1e-12
        estimates = ams_estimate(ams, TAU_LOS, cfg, small_mirror(), 1)
        assert "los_only" in estimates.flags

    def test_estimate_runs_on_noisy_scene(self):
        """AMS returns at most L estimates and counts both searches."""
        cfg = small_config(noise_variance=0.01)
        rx, _ = simulate(cfg, one_target_scene(cfg), make_rng(2))
        estimates = ams_estimate(ams_transform(rx), TAU_LOS, cfg, small_mirror(), 1)
        assert len(estimates) <= 1
        assert estimates.candidate_evaluations == 4 * folded_count(32)

    def test_actual_gain_prefers_actual_sign(self):
        """The actual component adds up at the target's own signed Doppler."""
        cfg = small_config()
        paths = one_target_scene(cfg)
        parts = decompose_cacc(cfg, paths)
        grid = CaccGrid(rho=parts.rho4, antennas=parts.antennas, reference=parts.reference)
        target = paths[1]
        delay = np.array([target.delay - TAU_LOS])
        gains = actual_gain_matrix(grid, np.array([target.doppler, -target.doppler]), delay,
                                   OMEGA_LOS, cfg)
        assert gains.shape == (2, 1)
        assert gains[0, 0] > 5 * gains[1, 0]
