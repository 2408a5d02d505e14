"""Tests for the pulsed down-conversion pair source."""

import numpy as np
import pytest

from afclink import events
from afclink.source import (
    PUMP_BOTH_ARMS,
    PUMP_EARLY_ONLY,
    PairEmission,
    SourceConfig,
    cycle_rng,
    emit_photon_events,
    sample_cycle,
)


class TestSourceConfig:
    def test_defaults(self):
        cfg = SourceConfig()
        assert cfg.mean_pairs_per_pulse == pytest.approx(0.016)
        assert cfg.rep_period_ps == 12_500
        assert cfg.bin_separation_ps == 1_400
        assert cfg.pump_mode == PUMP_BOTH_ARMS
        assert cfg.pump_phase == 0.0
        assert cfg.depolarizing_noise == 0.0

    def test_negative_mu_rejected(self):
        with pytest.raises(ValueError):
            SourceConfig(mean_pairs_per_pulse=-0.01)

    def test_bins_must_fit_in_period(self):
        with pytest.raises(ValueError):
            SourceConfig(rep_period_ps=2_500, bin_separation_ps=1_400)

    def test_high_mu_warns(self):
        with pytest.warns(UserWarning):
            SourceConfig(mean_pairs_per_pulse=0.7)

    def test_bad_pump_mode(self):
        with pytest.raises(ValueError):
            SourceConfig(pump_mode="SIDEWAYS")

    def test_noise_bounds(self):
        with pytest.raises(ValueError):
            SourceConfig(depolarizing_noise=1.5)


class TestSampleCycle:
    def test_deterministic_given_seed(self):
        cfg = SourceConfig(mean_pairs_per_pulse=0.3)
        a = [sample_cycle(cfg, cycle_rng(99, c), c) for c in range(200)]
        b = [sample_cycle(cfg, cycle_rng(99, c), c) for c in range(200)]
        assert [len(x) for x in a] == [len(x) for x in b]
        for pairs_a, pairs_b in zip(a, b):
            for pa, pb in zip(pairs_a, pairs_b):
                assert (pa.cycle, pa.pair_id) == (pb.cycle, pb.pair_id)

    def test_poisson_mean(self):
        cfg = SourceConfig(mean_pairs_per_pulse=0.1)
        rng = np.random.default_rng(5)
        n = 50_000
        total = sum(len(sample_cycle(cfg, rng, c)) for c in range(n))
        mean = total / n
        sigma = np.sqrt(0.1 / n)
        assert abs(mean - 0.1) < 4.0 * sigma

    def test_pair_fields(self):
        cfg = SourceConfig(pump_phase=0.3)
        rng = np.random.default_rng(1)
        pairs = []
        cycle = 0
        while len(pairs) < 5:
            pairs.extend(sample_cycle(cfg, rng, cycle))
            cycle += 1
        for pair in pairs:
            assert isinstance(pair, PairEmission)
            expected = np.array([1.0, 0.0, 0.0, np.exp(2j * 0.3)]) / np.sqrt(2.0)
            assert np.allclose(pair.joint_state.amplitudes, expected, atol=1e-12)

    def test_early_only_is_single_mode(self):
        cfg = SourceConfig(pump_mode=PUMP_EARLY_ONLY)
        rng = np.random.default_rng(2)
        pairs = []
        cycle = 0
        while not pairs:
            pairs = sample_cycle(cfg, rng, cycle)
            cycle += 1
        assert pairs[0].joint_state is None
        assert pairs[0].single_mode


class TestEmitPhotonEvents:
    def test_two_events_per_pair(self):
        cfg = SourceConfig()
        pairs = [
            PairEmission(cycle=4, pair_id=0, joint_state=None),
            PairEmission(cycle=9, pair_id=1, joint_state=None),
        ]
        evs = emit_photon_events(pairs, cfg)
        assert len(evs) == 4
        channels = {(e.pair_id, e.channel) for e in evs}
        assert (0, events.SIGNAL_794) in channels
        assert (0, events.IDLER_1535) in channels
        assert (1, events.SIGNAL_794) in channels
        assert (1, events.IDLER_1535) in channels

    def test_timestamps_on_cycle_grid(self):
        cfg = SourceConfig()
        pairs = [PairEmission(cycle=7, pair_id=0, joint_state=None)]
        for ev in emit_photon_events(pairs, cfg):
            assert ev.timestamp_ps == 7 * 12_500

    def test_bins_follow_pump_mode(self):
        both = SourceConfig()
        early = SourceConfig(pump_mode=PUMP_EARLY_ONLY)
        from afclink.linalg import bell_phi_plus

        pair_super = [PairEmission(cycle=0, pair_id=0, joint_state=bell_phi_plus())]
        pair_single = [PairEmission(cycle=0, pair_id=0, joint_state=None)]
        for ev in emit_photon_events(pair_super, both):
            assert ev.bin == events.BIN_SUPERPOSED
        for ev in emit_photon_events(pair_single, early):
            assert ev.bin == events.BIN_EARLY

    def test_origin_is_pair(self):
        cfg = SourceConfig()
        pairs = [PairEmission(cycle=0, pair_id=0, joint_state=None)]
        for ev in emit_photon_events(pairs, cfg):
            assert ev.origin == events.ORIGIN_PAIR
            assert ev.memory_outcome == events.OUTCOME_NONE


class TestChannelBalance:
    def test_equal_counts_per_channel_property(self):
        # Photons are created strictly in pairs: before any loss stage the
        # stream holds one 794 nm event per 1535 nm event, whatever the pump
        # mode or brightness.
        for case in range(1000):
            rng = np.random.default_rng(10_000 + case)
            mu = float(rng.uniform(0.05, 0.45))
            mode = PUMP_BOTH_ARMS if case % 2 == 0 else PUMP_EARLY_ONLY
            cfg = SourceConfig(mean_pairs_per_pulse=mu, pump_mode=mode)
            pairs = []
            for cycle in range(20):
                pairs.extend(sample_cycle(cfg, rng, cycle))
            evs = emit_photon_events(pairs, cfg)
            n_signal = sum(1 for e in evs if e.channel == events.SIGNAL_794)
            n_idler = sum(1 for e in evs if e.channel == events.IDLER_1535)
            assert n_signal == n_idler == len(pairs)


class TestStreamDeterminism:
    def test_event_stream_bytes_identical(self, tmp_path):
        from afclink.detection import events_to_csv

        def stream(path):
            cfg = SourceConfig(mean_pairs_per_pulse=0.3)
            evs = []
            for cycle in range(500):
                evs.extend(
                    emit_photon_events(sample_cycle(cfg, cycle_rng(7, cycle), cycle), cfg)
                )
            events_to_csv(evs, path)
            return path.read_bytes()

        assert stream(tmp_path / "a.csv") == stream(tmp_path / "b.csv")


class TestCycleRng:
    def test_streams_differ_by_cycle(self):
        a = cycle_rng(3, 0).random(4)
        b = cycle_rng(3, 1).random(4)
        assert not np.allclose(a, b)

    def test_streams_reproducible(self):
        assert np.allclose(cycle_rng(3, 5).random(8), cycle_rng(3, 5).random(8))
