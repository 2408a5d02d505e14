"""Tests for comb construction, fitting, recall efficiency and echo spectra.

Oracles: the device-efficiency formula is re-evaluated inline from its
definition; echo delays are checked against 1/spacing arithmetic; the comb
fit is checked as a synthetic round trip.
"""

import math

import numpy as np
import pytest

from afclink import events
from afclink.errors import FitError
from afclink.memory import (
    CombSpectrum,
    MemoryConfig,
    build_comb,
    comb_from_csv,
    comb_to_csv,
    device_efficiency,
    echo_response,
    fit_comb,
    apply_memory,
)


def era_comb(**overrides):
    kwargs = dict(
        delta_mhz=166.0,
        finesse=2.0,
        background_od=0.1,
        tooth_od=2.0,
        bandwidth_ghz=8.0,
        grid_step_mhz=2.0,
    )
    kwargs.update(overrides)
    return build_comb(**kwargs)


class TestBuildComb:
    def test_tooth_count_and_storage_time(self):
        comb = era_comb()
        assert comb.tooth_count == 48  # floor(8000 / 166)
        assert comb.storage_time_ns == pytest.approx(1000.0 / 166.0, abs=1e-9)
        assert comb.storage_time_ns == pytest.approx(6.02, abs=0.01)

    def test_long_storage_comb(self):
        comb = build_comb(31.0, 2.0, 0.0, 2.0, bandwidth_ghz=10.0, grid_step_mhz=1.0)
        assert comb.storage_time_ns == pytest.approx(32.26, abs=0.01)
        assert comb.tooth_count == 322

    def test_profile_levels(self):
        comb = era_comb()
        # d0 + d1 on a tooth center; the floor sits above d0 because finesse-2
        # teeth overlap (exp(-4 ln 2) ~ 6% of each neighbor at the midpoint).
        assert comb.od.max() == pytest.approx(2.1, abs=0.02)
        assert comb.od.min() >= 0.1 - 1e-9
        sharp = era_comb(finesse=8.0, grid_step_mhz=4.0)
        assert sharp.od.min() == pytest.approx(0.1, abs=0.01)

    def test_grid_spans_bandwidth(self):
        comb = era_comb()
        assert comb.detuning_mhz[0] == pytest.approx(-4000.0)
        assert comb.detuning_mhz[-1] == pytest.approx(4000.0)
        steps = np.diff(comb.detuning_mhz)
        assert np.allclose(steps, steps[0], atol=1e-9)

    def test_grid_step_precondition(self):
        # Gaussian teeth need >= 4 samples per FWHM: step <= delta/(4F).
        with pytest.raises(ValueError):
            era_comb(grid_step_mhz=30.0)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            era_comb(finesse=1.0)
        with pytest.raises(ValueError):
            era_comb(tooth_od=-0.5)
        with pytest.raises(ValueError):
            era_comb(background_od=-0.1)
        with pytest.raises(ValueError):
            era_comb(bandwidth_ghz=0.1)

    def test_modulation_alternates_teeth(self):
        comb = build_comb(31.0, 2.0, 0.0, 2.0, 10.0, 1.0, modulation_depth=0.5)
        # Tallest teeth reach d1*(1+m); mean tooth height stays d1.
        assert comb.od.max() == pytest.approx(3.0, abs=0.03)
        with pytest.raises(ValueError):
            build_comb(31.0, 2.0, 0.0, 2.0, 10.0, 1.0, modulation_depth=1.5)


class TestDeviceEfficiency:
    def test_reference_point(self):
        assert device_efficiency(0.0, 2.0, 2.0) == pytest.approx(0.0639, abs=5e-5)

    def test_hand_evaluated_grid(self):
        # Five-point check against the literal formula, to 1e-12.
        grid = [
            (0.0, 2.0, 2.0),
            (0.1, 1.5, 2.5),
            (0.3, 4.0, 3.0),
            (0.0, 8.0, 4.0),
            (0.05, 2.5, 2.0),
        ]
        for d0, d1, f in grid:
            expected = (d1 / f) ** 2 * math.exp(-d1 / f) * math.exp(-7.0 / f**2) * math.exp(-d0)
            assert device_efficiency(d0, d1, f) == pytest.approx(expected, abs=1e-12)

    def test_background_only_attenuates(self):
        base = device_efficiency(0.0, 2.0, 2.0)
        assert device_efficiency(1.0, 2.0, 2.0) == pytest.approx(base * math.exp(-1.0), rel=1e-12)

    def test_interior_maximum_in_tooth_od(self):
        # At fixed finesse the efficiency peaks at d1 = 2F.
        for f in (2.0, 3.0, 5.0):
            d1_grid = np.linspace(0.05, 6.0 * f, 4000)
            vals = [device_efficiency(0.0, d1, f) for d1 in d1_grid]
            best = d1_grid[int(np.argmax(vals))]
            assert best == pytest.approx(2.0 * f, abs=0.02 * f)

    def test_domain_validation(self):
        with pytest.raises(ValueError):
            device_efficiency(-0.1, 2.0, 2.0)
        with pytest.raises(ValueError):
            device_efficiency(0.0, -2.0, 2.0)
        with pytest.raises(ValueError):
            device_efficiency(0.0, 2.0, 0.9)

    def test_background_monotone_decreasing_property(self):
        rng = np.random.default_rng(29)
        for _ in range(1000):
            d1 = float(rng.uniform(0.2, 8.0))
            f = float(rng.uniform(1.1, 10.0))
            a, b = np.sort(rng.uniform(0.0, 3.0, size=2))
            if b - a < 1e-6:
                continue
            lo = device_efficiency(b, d1, f)
            hi = device_efficiency(a, d1, f)
            assert lo < hi
            assert lo == pytest.approx(hi * math.exp(a - b), rel=1e-9)

    def test_tooth_od_stationary_at_twice_finesse_property(self):
        # The derivative in d1 vanishes at d1 = 2F: check by central
        # differences, and that nearby points sit strictly below the peak.
        rng = np.random.default_rng(37)
        for _ in range(1000):
            f = float(rng.uniform(1.1, 10.0))
            h = 1e-5 * f
            peak = device_efficiency(0.0, 2.0 * f, f)
            fd = (
                device_efficiency(0.0, 2.0 * f + h, f)
                - device_efficiency(0.0, 2.0 * f - h, f)
            ) / (2.0 * h)
            assert abs(fd) <= 1e-6 * peak / f
            assert device_efficiency(0.0, 1.9 * f, f) < peak
            assert device_efficiency(0.0, 2.1 * f, f) < peak


class TestEchoResponse:
    def test_clean_comb_dominant_delay(self):
        comb = build_comb(31.0, 2.0, 0.1, 2.0, 10.0, 1.0)
        echoes = echo_response(comb)
        assert len(echoes) >= 1
        dominant = max(echoes, key=lambda e: e[1])
        # One FFT bin is 1000/(n*step) ~ 0.1 ns here.
        assert dominant[0] == pytest.approx(1000.0 / 31.0, abs=0.11)
        assert dominant[1] == pytest.approx(1.0)

    def test_modulated_comb_half_and_double_delays(self):
        comb = build_comb(31.0, 2.0, 0.0, 2.0, 10.0, 1.0, modulation_depth=0.4)
        echoes = echo_response(comb, rel_threshold=0.02)
        delays = np.array([d for d, _ in echoes])
        fundamental = 1000.0 / 31.0
        for target in (fundamental / 2.0, fundamental, 2.0 * fundamental):
            assert np.min(np.abs(delays - target)) <= 0.11, f"no echo near {target:.2f} ns"

    def test_clean_comb_has_no_half_delay(self):
        comb = build_comb(31.0, 2.0, 0.1, 2.0, 10.0, 1.0)
        echoes = echo_response(comb, rel_threshold=0.02)
        delays = np.array([d for d, _ in echoes])
        half = 0.5 * 1000.0 / 31.0
        assert np.min(np.abs(delays - half)) > 1.0

    def test_short_storage_comb(self):
        comb = era_comb()
        echoes = echo_response(comb)
        dominant = max(echoes, key=lambda e: e[1])
        # 8 GHz span at 2 MHz steps: one FFT bin is 0.125 ns.
        assert dominant[0] == pytest.approx(1000.0 / 166.0, abs=0.13)

    def test_dominant_echo_at_inverse_spacing_property(self):
        rng = np.random.default_rng(41)
        for _ in range(1000):
            delta = float(rng.uniform(40.0, 400.0))
            finesse = float(rng.uniform(1.5, 4.0))
            step = 0.9 * delta / (4.0 * finesse)
            comb = build_comb(
                delta,
                finesse,
                float(rng.uniform(0.0, 0.3)),
                float(rng.uniform(0.5, 3.0)),
                bandwidth_ghz=4.0,
                grid_step_mhz=step,
            )
            echoes = echo_response(comb)
            assert echoes
            dominant = max(echoes, key=lambda e: e[1])
            bin_ns = 1000.0 / (comb.od.shape[0] * comb.grid_step_mhz)
            assert abs(dominant[0] - 1000.0 / delta) <= bin_ns + 1e-9


class TestStorageTimeUnits:
    def test_inverse_spacing_round_trip_property(self):
        # tau[ns] * Delta[MHz] = 1000, i.e. tau * Delta = 1 in SI units.
        rng = np.random.default_rng(23)
        det = np.linspace(-50.0, 50.0, 41)
        od = np.ones(41)
        for _ in range(1000):
            delta = float(rng.uniform(1.0, 1000.0))
            comb = CombSpectrum(det, od, delta, 2.0, 0.0, 1.0)
            tau_s = comb.storage_time_ns * 1e-9
            delta_hz = comb.delta_mhz * 1e6
            assert tau_s * delta_hz == pytest.approx(1.0, rel=1e-12)


class TestFitComb:
    def test_synthetic_round_trip(self):
        comb = era_comb()
        fit = fit_comb(comb.detuning_mhz, comb.od)
        assert fit.delta_mhz == pytest.approx(166.0, rel=0.01)
        assert fit.finesse == pytest.approx(2.0, rel=0.01)
        assert fit.background_od == pytest.approx(0.1, abs=0.01 * 2.0)
        assert fit.tooth_od == pytest.approx(2.0, rel=0.01)

    def test_round_trip_with_noise(self):
        comb = build_comb(31.0, 3.0, 0.2, 1.5, 10.0, 1.0)
        rng = np.random.default_rng(42)
        noisy = np.clip(comb.od + rng.normal(0.0, 0.01, comb.od.shape), 0.0, None)
        fit = fit_comb(comb.detuning_mhz, noisy)
        assert fit.delta_mhz == pytest.approx(31.0, rel=0.01)
        assert fit.finesse == pytest.approx(3.0, rel=0.05)
        assert fit.tooth_od == pytest.approx(1.5, rel=0.05)

    def test_flat_input_rejected(self):
        det = np.linspace(-4000.0, 4000.0, 2001)
        with pytest.raises(FitError):
            fit_comb(det, np.full_like(det, 0.7))

    def test_mismatched_arrays_rejected(self):
        with pytest.raises(ValueError):
            fit_comb(np.arange(10.0), np.arange(9.0))


class TestCombCsv:
    def test_round_trip(self, tmp_path):
        comb = era_comb()
        path = tmp_path / "comb.csv"
        comb_to_csv(comb, path)
        text = path.read_text()
        assert text.splitlines()[0] == "detuning_MHz,optical_depth"
        det, od = comb_from_csv(path)
        assert np.allclose(det, comb.detuning_mhz, atol=1e-6)
        assert np.allclose(od, comb.od, atol=1e-9)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.0,1.0\n1.0,2.0\n")
        with pytest.raises(ValueError):
            comb_from_csv(path)


class TestMemoryConfig:
    def test_from_comb_probabilities(self):
        comb = era_comb()
        cfg = MemoryConfig.from_comb(comb, coupling_efficiency=0.2)
        labels, probs = cfg.outcome_table()
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(probs >= 0.0)
        # Transmission through the mean optical depth, then coupling loss.
        expected_trans = math.exp(-float(np.mean(comb.od))) * 0.2
        assert cfg.transmitted_probability == pytest.approx(expected_trans, rel=1e-9)
        # The primary echo carries the full device efficiency.
        eta = device_efficiency(0.1, 2.0, 2.0)
        assert cfg.recall_probabilities[cfg.primary_echo_index] == pytest.approx(
            eta * 0.2, rel=1e-6
        )

    def test_inconsistent_probabilities_rejected(self):
        with pytest.raises(ValueError):
            MemoryConfig(
                coupling_efficiency=1.0,
                device_efficiency=0.9,
                mean_od=0.0,
                echo_delays=((32.0, 1.0), (16.0, 0.9)),
            )

    def test_coupling_bounds(self):
        with pytest.raises(ValueError):
            MemoryConfig(
                coupling_efficiency=1.2,
                device_efficiency=0.01,
                mean_od=1.0,
                echo_delays=((32.0, 1.0),),
            )


class TestApplyMemory:
    def make_config(self):
        return MemoryConfig(
            coupling_efficiency=0.5,
            device_efficiency=0.4,
            mean_od=1.0,
            echo_delays=((32.0, 1.0), (16.0, 0.25)),
        )

    def make_event(self):
        return events.PhotonEvent(
            cycle=3,
            channel=events.SIGNAL_794,
            timestamp_ps=3 * 12_500,
            bin=events.BIN_SUPERPOSED,
            origin=events.ORIGIN_PAIR,
            pair_id=7,
        )

    def test_outcome_frequencies(self):
        cfg = self.make_config()
        rng = np.random.default_rng(2024)
        n = 40_000
        counts = {}
        for _ in range(n):
            out = apply_memory(self.make_event(), cfg, rng)
            counts[out.memory_outcome] = counts.get(out.memory_outcome, 0) + 1
        labels, probs = cfg.outcome_table()
        for label, p in zip(labels, probs):
            observed = counts.get(label, 0) / n
            sigma = math.sqrt(p * (1.0 - p) / n)
            assert abs(observed - p) < 5.0 * sigma + 1e-12, label

    def test_outcome_frequencies_million_trials(self):
        cfg = self.make_config()
        rng = np.random.default_rng(90_210)
        n = 1_000_000
        base = self.make_event()
        counts = {}
        for _ in range(n):
            out = apply_memory(base, cfg, rng)
            counts[out.memory_outcome] = counts.get(out.memory_outcome, 0) + 1
        labels, probs = cfg.outcome_table()
        for label, p in zip(labels, probs):
            observed = counts.get(label, 0) / n
            sigma = math.sqrt(p * (1.0 - p) / n)
            assert abs(observed - p) < 4.0 * sigma + 1e-12, label

    def test_timestamps_and_tags(self):
        cfg = self.make_config()
        rng = np.random.default_rng(11)
        base = self.make_event()
        saw = set()
        for _ in range(5000):
            out = apply_memory(base, cfg, rng)
            saw.add(out.memory_outcome)
            if out.memory_outcome == events.OUTCOME_TRANSMITTED:
                assert out.timestamp_ps == base.timestamp_ps
                assert out.origin == events.ORIGIN_PAIR
            elif out.memory_outcome == events.recalled_token(0):
                assert out.timestamp_ps == base.timestamp_ps + 32_000
                assert out.origin == events.ORIGIN_PAIR
            elif out.memory_outcome == events.recalled_token(1):
                assert out.timestamp_ps == base.timestamp_ps + 16_000
                # Secondary echoes are tagged as spurious.
                assert out.origin == events.ORIGIN_SPURIOUS_ECHO
        assert events.OUTCOME_TRANSMITTED in saw
        assert events.OUTCOME_LOST in saw
        assert events.recalled_token(0) in saw

    def test_lost_partner_keeps_qubit_fields(self):
        cfg = self.make_config()
        rng = np.random.default_rng(0)
        out = apply_memory(self.make_event(), cfg, rng)
        assert out.pair_id == 7
        assert out.bin == events.BIN_SUPERPOSED


class TestCombSpectrumValidation:
    def test_negative_od_rejected(self):
        with pytest.raises(ValueError):
            CombSpectrum(
                detuning_mhz=np.linspace(-10, 10, 21),
                od=np.linspace(-1, 1, 21),
                delta_mhz=5.0,
                finesse=2.0,
                background_od=0.0,
                tooth_od=1.0,
            )

    def test_finesse_above_one_required(self):
        with pytest.raises(ValueError):
            CombSpectrum(
                detuning_mhz=np.linspace(-10, 10, 21),
                od=np.ones(21),
                delta_mhz=5.0,
                finesse=0.8,
                background_od=0.0,
                tooth_od=1.0,
            )
