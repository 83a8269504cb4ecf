"""Tests for scenario synthesis and the domain models it validates."""

import math

import numpy as np
import pytest

from upsense.models import (
    CfoModel,
    EstimateSet,
    ExperimentSpec,
    ModelValidationError,
    OffsetTrace,
    PathParams,
    Resolution,
    RxGrid,
    ScenarioConfig,
    SymbolGrid,
    TargetEstimate,
    TimingOffsetModel,
    los_path,
    nlos_paths,
    validate_paths,
)
from upsense.scenario import (
    generate_offsets,
    generate_symbols,
    make_rng,
    random_paths,
    simulate,
    steering,
    synthesize_rx,
)

from tests.scenes import los, offset_free_config, small_config, target, two_target_scene


class TestScenarioConfig:
    """Tests for ScenarioConfig validation and derived values."""

    def test_desk_default(self):
        """The default configuration is the desk-scale one."""
        cfg = ScenarioConfig.desk_default()
        assert cfg.shape == (4, 128, 256)
        assert cfg.symbol_period == pytest.approx(2e-6)
        assert cfg.packet_interval == 1e-3

    def test_single_antenna_rejected(self):
        """N < 2 should raise."""
        with pytest.raises(ModelValidationError, match="num_antennas"):
            ScenarioConfig(num_antennas=1)

    def test_cp_longer_than_symbol_rejected(self):
        """T_C must be shorter than the symbol period."""
        with pytest.raises(ModelValidationError, match="cp_period"):
            ScenarioConfig(cp_period=3e-6)

    def test_negative_noise_rejected(self):
        """Negative noise variance should raise."""
        with pytest.raises(ModelValidationError, match="noise_variance"):
            ScenarioConfig(noise_variance=-1.0)

    def test_with_snr(self):
        """SNR is referenced to the LOS power."""
        cfg = ScenarioConfig().with_snr(20.0, los_power=4.0)
        assert cfg.noise_variance == pytest.approx(0.04)
        assert cfg.snr_db(4.0) == pytest.approx(20.0)

    def test_noiseless_snr_is_infinite(self):
        """Zero noise gives infinite SNR."""
        assert ScenarioConfig().snr_db() == math.inf


class TestPathParams:
    """Tests for PathParams and path-list validation."""

    def test_from_angle(self):
        """Omega = 2 pi (d / lambda) cos(theta)."""
        path = PathParams.from_angle(1.0, 1e-7, 10.0, aoa=math.pi / 3, antenna_spacing=0.5)
        assert path.spatial_freq == pytest.approx(math.pi * 0.5)
        assert path.angle(0.5) == pytest.approx(math.pi / 3)

    def test_angle_outside_range_rejected(self):
        """AoA must lie strictly inside (0, pi)."""
        with pytest.raises(ModelValidationError, match="aoa"):
            PathParams.from_angle(1.0, 0.0, 0.0, aoa=0.0, antenna_spacing=0.5)

    def test_los_and_nlos_split(self):
        """los_path and nlos_paths split the list."""
        paths = two_target_scene(small_config())
        assert los_path(paths).is_los
        assert len(nlos_paths(paths)) == 2

    def test_missing_los(self):
        """A list without LOS path should raise."""
        cfg = small_config()
        with pytest.raises(ModelValidationError, match="exactly one LOS"):
            validate_paths(cfg, [target(1e-7, 10.0, 1.0)])

    def test_two_los_paths(self):
        """Two LOS paths should raise."""
        with pytest.raises(ModelValidationError, match="exactly one LOS"):
            validate_paths(small_config(), [los(), los()])

    def test_moving_los(self):
        """The LOS path must not have a Doppler."""
        moving = PathParams(1.0, 0.0, 5.0, 0.0, is_los=True)
        with pytest.raises(ModelValidationError, match="zero Doppler"):
            validate_paths(small_config(), [moving])

    def test_delay_beyond_cp(self):
        """Delays must stay inside the cyclic prefix."""
        cfg = small_config()
        with pytest.raises(ModelValidationError, match="path 1"):
            validate_paths(cfg, [los(), target(cfg.cp_period, 10.0, 1.0)])


class TestEstimateSet:
    """Tests for EstimateSet helpers."""

    def test_with_aoas_copies(self):
        """with_aoas should fill AoAs without touching the original."""
        estimates = EstimateSet([TargetEstimate(1e-7, 1.2e-7, 50.0, 3.0)], {"x"}, 10)
        result = estimates.with_aoas([0.5], [Resolution.RESOLVED])
        assert result.targets[0].aoa == 0.5
        assert result.targets[0].resolution is Resolution.RESOLVED
        assert estimates.targets[0].aoa is None
        assert result.flags == {"x"}
        assert result.candidate_evaluations == 10


class TestExperimentSpec:
    """Tests for ExperimentSpec validation."""

    def test_zero_trials(self):
        """trials must be positive."""
        with pytest.raises(ModelValidationError, match="trials"):
            ExperimentSpec(trials=0)

    def test_empty_sweep(self):
        """An empty sweep should raise."""
        with pytest.raises(ModelValidationError, match="sweep"):
            ExperimentSpec(sweep_values=())

    def test_fixed_paths_validated(self):
        """Fixed paths are checked against the scenario."""
        with pytest.raises(ModelValidationError):
            ExperimentSpec(scenario=small_config(), paths=(target(1e-7, 1.0, 1.0),))


class TestOffsets:
    """Tests for generate_offsets."""

    def test_timing_offsets_bounded(self):
        """Timing offsets lie in [0, to_max_fraction * T_C)."""
        cfg = small_config()
        offsets = generate_offsets(cfg, make_rng(1))
        assert len(offsets) == cfg.num_packets
        assert np.all(offsets.timing_offset >= 0)
        assert np.all(offsets.timing_offset < cfg.to_max_fraction * cfg.cp_period)

    def test_constant_cfo(self):
        """A constant CFO is one draw within +-ppm of the carrier."""
        cfg = small_config()
        offsets = generate_offsets(cfg, make_rng(2))
        assert np.all(offsets.cfo == offsets.cfo[0])
        assert abs(offsets.cfo[0]) <= cfg.cfo_ppm * 1e-6 * cfg.carrier_freq

    def test_random_walk_cfo_moves(self):
        """A random-walk CFO changes from packet to packet."""
        offsets = generate_offsets(small_config(), make_rng(3), cfo_model=CfoModel.RANDOM_WALK)
        assert np.unique(offsets.cfo).size > 1

    def test_offsets_disabled(self):
        """The none models give all-zero traces."""
        offsets = generate_offsets(offset_free_config(), make_rng(4))
        assert not np.any(offsets.timing_offset)
        assert not np.any(offsets.cfo)

    def test_trace_lengths_must_match(self):
        """OffsetTrace rejects traces of different length."""
        with pytest.raises(ModelValidationError):
            OffsetTrace(np.zeros(3), np.zeros(4))


class TestSynthesis:
    """Tests for symbols, steering and the received grid."""

    def test_symbols_unit_modulus(self):
        """QPSK symbols have unit modulus."""
        symbols = generate_symbols(small_config(), make_rng(5))
        np.testing.assert_allclose(np.abs(symbols.x), 1.0)

    def test_steering(self):
        """Steering phase grows linearly with the lag."""
        np.testing.assert_allclose(steering(0.5, np.arange(3)), np.exp(0.5j * np.arange(3)))

    def test_single_los_path_grid(self):
        """Without offsets and with unit symbols a LOS grid is alpha e^{jn Omega} e^{-j2pi g tau/T}."""
        cfg = offset_free_config()
        path = los(gain=2.0)
        rx = synthesize_rx(
            cfg, [path], OffsetTrace.zeros(cfg.num_packets),
            SymbolGrid.ones(cfg.num_packets, cfg.num_subcarriers), make_rng(0),
        )
        g = np.arange(cfg.num_subcarriers)
        expected = 2.0 * np.exp(1j * 2 * path.spatial_freq) * np.exp(
            -2j * np.pi * g * path.delay / cfg.symbol_period
        )
        np.testing.assert_allclose(rx.y[2, 5], expected)

    def test_noise_power(self):
        """Noise-only entries have the configured variance."""
        cfg = small_config(noise_variance=0.5)
        tiny = [los(gain=1e-9)]
        rx, _ = simulate(cfg, tiny, make_rng(6))
        assert np.mean(np.abs(rx.y) ** 2) == pytest.approx(0.5, rel=0.05)

    def test_wrong_offset_length(self):
        """An offset trace of the wrong length should raise."""
        cfg = small_config()
        with pytest.raises(ModelValidationError, match="offset trace"):
            synthesize_rx(cfg, [los()], OffsetTrace.zeros(3),
                          SymbolGrid.ones(cfg.num_packets, cfg.num_subcarriers), make_rng(0))

    def test_rxgrid_must_be_3d(self):
        """RxGrid rejects non 3-D arrays."""
        with pytest.raises(ModelValidationError, match="3-D"):
            RxGrid(np.zeros((4, 4)))

    def test_simulate_reproducible(self):
        """The same seed gives the same grid."""
        cfg = small_config(noise_variance=0.1)
        paths = two_target_scene(cfg)
        first, _ = simulate(cfg, paths, make_rng(11))
        second, _ = simulate(cfg, paths, make_rng(11))
        np.testing.assert_array_equal(first.y, second.y)

    def test_grid_matches_entrywise_sum(self):
        """Every y_n[m, g] is the sum over paths written out entry by entry."""
        cfg = small_config()
        paths = two_target_scene(cfg)
        rng = make_rng(12)
        offsets = generate_offsets(cfg, rng)
        symbols = generate_symbols(cfg, rng)
        rx = synthesize_rx(cfg, paths, offsets, symbols, rng)

        expected = np.zeros(cfg.shape, dtype=complex)
        for n in range(cfg.num_antennas):
            for m in range(cfg.num_packets):
                slow_offset = cfg.packet_interval * offsets.cfo[m]
                for g in range(cfg.num_subcarriers):
                    total = 0j
                    for p in paths:
                        total += (
                            p.gain
                            * np.exp(1j * n * p.spatial_freq)
                            * np.exp(2j * np.pi * m * (cfg.packet_interval * p.doppler + slow_offset))
                            * np.exp(-2j * np.pi * g * (p.delay + offsets.timing_offset[m])
                                     / cfg.symbol_period)
                        )
                    expected[n, m, g] = total * symbols.x[m, g]
        np.testing.assert_allclose(rx.y, expected, atol=1e-10)


class TestRandomPaths:
    """Tests for random scene drawing."""

    def test_scene_shape(self):
        """One LOS path plus the requested targets."""
        cfg = small_config()
        paths = random_paths(cfg, 3, make_rng(8))
        assert len(paths) == 4
        assert sum(p.is_los for p in paths) == 1
        validate_paths(cfg, paths)

    def test_scene_ranges(self):
        """Targets lie behind the LOS path and inside the Doppler bound."""
        cfg = small_config()
        for seed in range(10):
            paths = random_paths(cfg, 3, make_rng(seed), max_doppler=300.0)
            tau0 = los_path(paths).delay
            for path in nlos_paths(paths):
                assert path.delay >= tau0
                assert abs(path.doppler) <= 300.0
                assert path.power == pytest.approx(0.1)

    def test_impossible_gap(self):
        """A delay gap no draw can meet should raise."""
        with pytest.raises(ModelValidationError, match="could not draw"):
            random_paths(small_config(), 3, make_rng(0), min_delay_gap=1e-6, max_tries=20)
