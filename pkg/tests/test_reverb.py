"""RT60 estimation, shelved send reverb, stochastic augmentation."""

import json

import numpy as np
import pytest
from scipy.signal import freqz

from conftest import SR, exponential_ir, make_ir_library, noise
from mixnorm.core import StemSet, StereoWaveform, write_audio
from mixnorm.errors import DataError
from mixnorm.reverb import (
    ImpulseResponseEntry,
    ReverbSendConfig,
    _shelf_coefficients,
    augment_reverb,
    estimate_rt60,
    load_ir_library,
    reverb_send,
    shelf_chain,
    stem_rng,
)


def unit_impulse_ir(n=4096) -> ImpulseResponseEntry:
    x = np.zeros(n)
    x[0] = 1.0
    return ImpulseResponseEntry(StereoWaveform(x, x.copy()), rt60=2.5, name="delta")


class TestRt60:
    @pytest.mark.parametrize("rt", [0.8, 2.0, 3.5])
    def test_constructed_decay(self, rt):
        rng = np.random.default_rng(101)
        ir = exponential_ir(rng, rt)
        assert estimate_rt60(ir) == pytest.approx(rt, rel=0.1)

    def test_level_invariance(self):
        rng = np.random.default_rng(102)
        ir = exponential_ir(rng, 2.0)
        half = StereoWaveform(ir.left * 0.5, ir.right * 0.5)
        assert estimate_rt60(half) == pytest.approx(estimate_rt60(ir), rel=1e-9)

    def test_unit_impulse_rejected(self):
        x = np.zeros(SR)
        x[0] = 1.0
        with pytest.raises(DataError, match="RT estimation"):
            estimate_rt60(StereoWaveform(x, x.copy()))

    def test_too_short_rejected(self):
        with pytest.raises(DataError, match="0.1 s"):
            estimate_rt60(StereoWaveform.silence(1000))


class TestShelves:
    @pytest.mark.parametrize("high", [False, True])
    def test_minus_30_db_shelf(self, high):
        b, a = _shelf_coefficients(-30.0, 1000.0, SR, high=high)
        freqs = np.array([40.0, 12000.0])
        _, response = freqz(b, a, worN=freqs, fs=SR)
        mags_db = 20 * np.log10(np.abs(response))
        shelved, passband = (mags_db[1], mags_db[0]) if high else (mags_db[0], mags_db[1])
        assert shelved == pytest.approx(-30.0, abs=1.5)
        assert passband == pytest.approx(0.0, abs=1.0)

    def test_chain_cuts_both_ends(self):
        rng = np.random.default_rng(103)
        x = noise(rng, 1.0, amplitude=0.1)
        cfg = ReverbSendConfig(600.0, 8000.0)
        out = shelf_chain(StereoWaveform(x, x.copy()), cfg)
        spectrum_in = np.abs(np.fft.rfft(x))
        spectrum_out = np.abs(np.fft.rfft(out.left.astype(np.float64)))
        freqs = np.fft.rfftfreq(x.size, 1 / SR)
        low = (freqs > 50) & (freqs < 200)
        mid = (freqs > 1500) & (freqs < 5000)
        high = (freqs > 14000)
        assert 20 * np.log10(spectrum_out[low].mean() / spectrum_in[low].mean()) < -20
        assert abs(20 * np.log10(spectrum_out[mid].mean() / spectrum_in[mid].mean())) < 3
        assert 20 * np.log10(spectrum_out[high].mean() / spectrum_in[high].mean()) < -20


class TestReverbSend:
    def test_wet_gain_zero_bit_exact(self):
        rng = np.random.default_rng(104)
        w = StereoWaveform(noise(rng, 1.0), noise(rng, 1.0))
        out = reverb_send(w, unit_impulse_ir(), ReverbSendConfig(600.0, 8000.0, wet_gain=0.0))
        assert out is w

    def test_unit_impulse_equals_shelved_copy(self):
        rng = np.random.default_rng(105)
        w = StereoWaveform(noise(rng, 1.0, amplitude=0.05), noise(rng, 1.0, amplitude=0.05))
        cfg = ReverbSendConfig(600.0, 8000.0, wet_gain=1.0)
        out = reverb_send(w, unit_impulse_ir(), cfg)
        shelved = shelf_chain(w, cfg)
        wet = np.stack([out.left - w.left, out.right - w.right])
        expected = np.stack([shelved.left, shelved.right])
        assert np.abs(wet - expected).max() < 1e-5

    def test_send_linearity(self):
        rng = np.random.default_rng(106)
        w = StereoWaveform(noise(rng, 1.0, amplitude=0.02), noise(rng, 1.0, amplitude=0.02))
        ir = make_ir_library()[0]
        cfg1 = ReverbSendConfig(600.0, 8000.0, wet_gain=0.5)
        cfg2 = ReverbSendConfig(600.0, 8000.0, wet_gain=1.0)
        wet1 = reverb_send(w, ir, cfg1).channels() - w.channels()
        wet2 = reverb_send(w, ir, cfg2).channels() - w.channels()
        assert np.abs(wet2 - 2.0 * wet1).max() < 1e-5

    def test_peak_safety(self):
        rng = np.random.default_rng(107)
        w = StereoWaveform(noise(rng, 0.5, amplitude=0.9), noise(rng, 0.5, amplitude=0.9))
        ir = make_ir_library()[0]
        out = reverb_send(w, ir, ReverbSendConfig(600.0, 8000.0, wet_gain=4.0))
        assert out.peak() <= 1.0 + 1e-6

    def test_rate_mismatch_rejected(self):
        rng = np.random.default_rng(108)
        w = StereoWaveform(noise(rng, 0.5), noise(rng, 0.5), 48000)
        with pytest.raises(DataError, match="does not match"):
            reverb_send(w, unit_impulse_ir(), ReverbSendConfig(600.0, 8000.0))

    def test_config_validation(self):
        with pytest.raises(DataError, match="below"):
            ReverbSendConfig(9000.0, 8000.0)


def _song(seed=109) -> StemSet:
    rng = np.random.default_rng(seed)
    stems = {k: StereoWaveform(noise(rng, 1.5, amplitude=0.05),
                               noise(rng, 1.5, amplitude=0.05))
             for k in ("vocals", "drums", "bass", "other")}
    return StemSet(stems, "testsong")


class TestAugment:
    def test_drums_and_bass_untouched(self, ir_library):
        song = _song()
        out, manifest = augment_reverb(song, ir_library, "train", seed=5)
        assert out.stems["drums"] is song.stems["drums"]
        assert out.stems["bass"] is song.stems["bass"]
        assert set(manifest) == {"vocals", "other"}

    def test_seed_determinism(self, ir_library):
        song = _song()
        a, _ = augment_reverb(song, ir_library, "train", seed=5)
        b, _ = augment_reverb(song, ir_library, "train", seed=5)
        c, _ = augment_reverb(song, ir_library, "train", seed=6)
        assert np.array_equal(a.stems["vocals"].left, b.stems["vocals"].left)
        assert not np.array_equal(a.stems["vocals"].left, c.stems["vocals"].left)

    def test_inference_applies_two_sends(self, ir_library):
        song = _song()
        out, manifest = augment_reverb(song, ir_library, "inference", seed=5)
        assert [s["stage"] for s in manifest["vocals"]] == ["pre_reverb", "reverb"]
        pre_rts = [s["ir_rt60_s"] for s in manifest["vocals"] if s["stage"] == "pre_reverb"]
        assert 1.0 <= pre_rts[0] <= 1.5
        energy_in = float(np.sum(song.stems["vocals"].channels() ** 2))
        energy_out = float(np.sum(out.stems["vocals"].channels() ** 2))
        assert energy_out >= energy_in

    def test_missing_pool_names_range(self, ir_library):
        long_only = [e for e in ir_library if e.rt60 >= 2.0]
        song = _song()
        with pytest.raises(DataError, match=r"\[1, 1.5\]"):
            augment_reverb(song, long_only, "inference", seed=5)

    def test_invalid_mode(self, ir_library):
        with pytest.raises(DataError, match="mode"):
            augment_reverb(_song(), ir_library, "test", seed=5)

    def test_rng_streams_independent(self):
        a = stem_rng(1, "song", "vocals", "reverb").integers(1 << 30)
        b = stem_rng(1, "song", "other", "reverb").integers(1 << 30)
        c = stem_rng(1, "song", "vocals", "pre_reverb").integers(1 << 30)
        assert len({int(a), int(b), int(c)}) == 3


class TestIrLibrary:
    def test_load_estimates_and_caches(self, tmp_path):
        rng = np.random.default_rng(110)
        for i, rt in enumerate((1.2, 2.5)):
            write_audio(tmp_path / f"ir{i}.wav", exponential_ir(rng, rt), 32)
        entries = load_ir_library(tmp_path, SR)
        assert len(entries) == 2
        assert entries[0].rt60 == pytest.approx(1.2, rel=0.1)
        cache = json.loads((tmp_path / "rt60_cache.json").read_text())
        assert len(cache) == 2
        again = load_ir_library(tmp_path, SR)
        assert [e.rt60 for e in again] == [e.rt60 for e in entries]

    def test_skips_bad_irs(self, tmp_path, caplog):
        rng = np.random.default_rng(111)
        write_audio(tmp_path / "good.wav", exponential_ir(rng, 2.0), 32)
        x = np.zeros(SR)
        x[0] = 1.0
        write_audio(tmp_path / "delta.wav", StereoWaveform(x, x.copy()), 32)
        entries = load_ir_library(tmp_path, SR)
        assert [e.name for e in entries] == ["good.wav"]

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_ir_library(tmp_path / "nope", SR)
