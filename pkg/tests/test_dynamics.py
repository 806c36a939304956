"""HFC onset detection, onset-peak statistics, compressor, DRC grid search."""

import numpy as np
import pytest

from conftest import SR, burst_train, noise, sine
from mixnorm.core import StereoWaveform, db_to_linear
from mixnorm.dynamics import (
    CompressorSettings,
    compress,
    detect_onsets,
    mel_filterbank,
    normalize_drc,
    onset_peak_stats,
    peak_normalize,
)
from mixnorm.errors import DataError


def click_train(times_amps, duration=6.0, sr=SR) -> StereoWaveform:
    x = np.zeros(int(duration * sr))
    for t, amp in times_amps:
        x[int(round(t * sr))] = amp
    return StereoWaveform(x, x.copy(), sr)


class TestMelFilterbank:
    def test_shape_and_nonnegativity(self):
        bank = mel_filterbank(128, 2048, SR)
        assert bank.shape == (128, 1025)
        assert bank.min() >= 0.0
        assert np.all(bank.max(axis=1) > 0.0)

    def test_16_bands(self):
        bank = mel_filterbank(16, 2048, SR)
        assert bank.shape == (16, 1025)


class TestDetectOnsets:
    def test_silence_empty(self):
        assert detect_onsets(StereoWaveform.silence(SR * 2)) == []

    def test_single_click_located(self):
        w = click_train([(1.0, 0.8)], duration=2.0)
        onsets = detect_onsets(w)
        assert len(onsets) == 1
        assert abs(onsets[0] - 1.0) <= 512 / SR + 1e-9

    def test_click_train_count(self):
        w = click_train([(0.5 + 0.5 * i, 0.7) for i in range(10)])
        assert len(detect_onsets(w)) == 10

    def test_click_train_16_mel_bands(self):
        w = click_train([(0.5 + 0.5 * i, 0.7) for i in range(10)])
        assert len(detect_onsets(w, mel_bands=16)) == 10

    def test_steady_sine_no_onsets(self):
        w = StereoWaveform(sine(440.0, 3.0, amplitude=0.5),
                           sine(440.0, 3.0, amplitude=0.5))
        assert detect_onsets(w) == []


class TestOnsetPeakStats:
    def test_single_onset_half_amplitude(self):
        w = click_train([(1.0, 0.5)], duration=2.0)
        stats = onset_peak_stats(w, [1.0])
        assert stats.peak_levels == [pytest.approx(-6.0206, abs=1e-3)]
        assert stats.mu == pytest.approx(-6.0206, abs=1e-3)
        assert stats.sigma == 0.0

    def test_top_75th_percentile(self):
        # peaks {-6,-8,-10,-20}: the bottom quartile (-20) is dropped
        levels = [-6.0, -8.0, -10.0, -20.0]
        w = click_train([(0.5 * (i + 1), db_to_linear(db))
                         for i, db in enumerate(levels)], duration=3.0)
        stats = onset_peak_stats(w, [0.5 * (i + 1) for i in range(4)])
        kept = np.array([-6.0, -8.0, -10.0])
        assert stats.mu == pytest.approx(-8.0, abs=1e-3)
        assert stats.sigma == pytest.approx(kept.std(), abs=1e-3)

    def test_no_onsets_sentinel(self):
        stats = onset_peak_stats(StereoWaveform.silence(SR), [])
        assert not stats.has_transients
        assert stats.mu is None and stats.sigma is None

    def test_window_capped_at_100ms(self):
        # a second, louder event 150 ms after the onset must not be counted
        x = np.zeros(SR)
        x[int(0.2 * SR)] = 0.25
        x[int(0.35 * SR)] = 1.0
        w = StereoWaveform(x, x.copy())
        stats = onset_peak_stats(w, [0.2])
        assert stats.peak_levels == [pytest.approx(-12.04, abs=0.01)]


class TestCompressor:
    def test_ratio_one_identity_bit_exact(self):
        rng = np.random.default_rng(81)
        w = StereoWaveform(noise(rng, 1.0, amplitude=0.5), noise(rng, 1.0, amplitude=0.5))
        out = compress(w, CompressorSettings(-20.0, 1.0, 5.0, 100.0))
        assert np.array_equal(out.left, w.left)
        assert np.array_equal(out.right, w.right)

    def test_below_threshold_identity(self):
        rng = np.random.default_rng(82)
        w = StereoWaveform(noise(rng, 1.0, amplitude=0.01), noise(rng, 1.0, amplitude=0.01))
        out = compress(w, CompressorSettings(-20.0, 8.0, 5.0, 100.0))
        assert np.array_equal(out.left, w.left)

    def test_static_curve_steady_sine(self):
        tone = sine(997.0, 2.0, amplitude=db_to_linear(-6.0))
        w = StereoWaveform(tone, tone.copy())
        out = compress(w, CompressorSettings(-20.0, 4.0, 0.001, 400.0))
        peak_db = 20 * np.log10(np.abs(out.left[SR:]).max())
        assert peak_db == pytest.approx(-16.5, abs=0.2)

    def test_level_monotone(self):
        rng = np.random.default_rng(83)
        x = noise(rng, 0.5, amplitude=0.3)
        settings = CompressorSettings(-25.0, 6.0, 2.0, 80.0)
        peaks = []
        for gain_db in (-12.0, -6.0, 0.0, 6.0):
            w = StereoWaveform(x, x.copy()).scaled(db_to_linear(gain_db))
            peaks.append(compress(w, settings).peak())
        assert all(b >= a for a, b in zip(peaks, peaks[1:]))

    def test_soft_knee_between_hard_curves(self):
        tone = sine(500.0, 1.0, amplitude=db_to_linear(-18.0))
        w = StereoWaveform(tone, tone.copy())
        hard = compress(w, CompressorSettings(-20.0, 4.0, 0.001, 400.0)).peak()
        soft = compress(w, CompressorSettings(-20.0, 4.0, 0.001, 400.0, knee_db=12.0)).peak()
        assert soft <= w.peak()
        assert soft != hard

    def test_invalid_settings(self):
        with pytest.raises(DataError, match="ratio"):
            CompressorSettings(-20.0, 0.5, 5.0, 100.0)
        with pytest.raises(DataError, match="positive"):
            CompressorSettings(-20.0, 4.0, 0.0, 100.0)


class TestPeakNormalize:
    def test_per_channel_targets(self):
        rng = np.random.default_rng(84)
        w = StereoWaveform(noise(rng, 0.5, amplitude=0.7), noise(rng, 0.5, amplitude=0.1))
        out = peak_normalize(w, -10.0)
        assert 20 * np.log10(np.abs(out.left).max()) == pytest.approx(-10.0, abs=1e-4)
        assert 20 * np.log10(np.abs(out.right).max()) == pytest.approx(-10.0, abs=1e-4)

    def test_silent_channel_untouched(self):
        rng = np.random.default_rng(85)
        left = noise(rng, 0.5, amplitude=0.7)
        w = StereoWaveform(left, np.zeros_like(left))
        out = peak_normalize(w, -10.0)
        assert np.all(out.right == 0.0)

    def test_linked_mode(self):
        rng = np.random.default_rng(86)
        w = StereoWaveform(noise(rng, 0.5, amplitude=0.7), noise(rng, 0.5, amplitude=0.1))
        out = peak_normalize(w, -10.0, per_channel=False)
        assert 20 * np.log10(out.peak()) == pytest.approx(-10.0, abs=1e-4)
        balance = np.abs(out.right).max() / np.abs(out.left).max()
        original = np.abs(w.right).max() / np.abs(w.left).max()
        assert balance == pytest.approx(original, rel=1e-6)


def percussive_stem(rng, spread_db: float, duration: float = 5.0) -> StereoWaveform:
    """Burst train over a sustained bed; the bed keeps the compressor's
    gain engaged between hits so deeper grid settings can actually lower
    the onset peaks (isolated clicks would escape the attack time)."""
    peaks = tuple(-11.0 - spread_db * rng.uniform(0.0, 1.0, 8))
    src = burst_train(rng, duration, 0.45, peaks)
    src = src + noise(rng, duration, amplitude=db_to_linear(-22.0))
    return peak_normalize(StereoWaveform(src, src.copy()), -10.0)


class TestNormalizeDrc:
    def test_under_bound_passthrough(self):
        rng = np.random.default_rng(87)
        w = percussive_stem(rng, spread_db=8.0)
        result = normalize_drc(w, peak_mu=-5.0, peak_sigma=1.0,
                               attack_ms=10.0, release_ms=180.0)
        assert result.settings is None
        assert result.satisfied
        assert result.waveform is w

    def test_no_transients_passthrough(self):
        w = StereoWaveform.silence(SR * 2)
        result = normalize_drc(w, -20.0, 1.0, 10.0, 180.0)
        assert result.settings is None and result.waveform is w

    def test_missing_corpus_stats_passthrough(self):
        rng = np.random.default_rng(88)
        w = percussive_stem(rng, spread_db=2.0)
        result = normalize_drc(w, None, None, 10.0, 180.0)
        assert result.settings is None and result.waveform is w

    def test_bound_reached_and_remeasured(self):
        rng = np.random.default_rng(89)
        w = percussive_stem(rng, spread_db=1.0)
        bound_mu, bound_sigma = -14.0, 1.0
        result = normalize_drc(w, bound_mu, bound_sigma, 10.0, 180.0)
        assert result.settings is not None
        assert result.satisfied
        assert result.stats_after.mu <= bound_mu + bound_sigma
        assert result.stats_after.mu <= result.stats_before.mu

    def test_deterministic(self):
        rng = np.random.default_rng(90)
        w = percussive_stem(rng, spread_db=1.0)
        a = normalize_drc(w, -14.0, 1.0, 10.0, 180.0)
        b = normalize_drc(w, -14.0, 1.0, 10.0, 180.0)
        assert a.settings == b.settings
        assert np.array_equal(a.waveform.left, b.waveform.left)

    def test_mildest_first_order(self):
        from mixnorm.config import DrcSettings
        grid = DrcSettings()
        assert grid.thresholds()[0] == -10.0 and grid.thresholds()[-1] == -40.0
        assert grid.ratios()[0] == 4.0 and grid.ratios()[-1] == 20.0
